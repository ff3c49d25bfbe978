//! Inference-only evaluation of a [`PolicyModel`].
//!
//! Activations are kept channel-last and every layer up to the second dense
//! one is computed by scattering the non-zero inputs through transposed
//! weights. Encoded states are mostly zeros and about half of the hidden
//! units are clipped by the ReLU, so this skips most of the work. Results
//! agree with [`super::logits`] up to floating-point reassociation.

use super::{NetworkArch, PolicyModel, K};
use crate::factory::EncodedState;

#[derive(Clone, Debug)]
pub struct InferenceNet {
    arch: NetworkArch,
    /// `[c][ky][kx][f]`
    conv1: Vec<f64>,
    bias1: Vec<f64>,
    /// `[c][ky][kx][f]`
    conv2: Vec<f64>,
    bias2: Vec<f64>,
    /// `[input in channel-last order][out]`
    fc1: Vec<f64>,
    bias3: Vec<f64>,
    /// `[out][in]`
    fc2: Vec<f64>,
    bias4: Vec<f64>,
    fc3: Vec<f64>,
    bias5: Vec<f64>,
}

/// Reusable activation buffers.
#[derive(Clone, Debug, Default)]
pub struct Scratch {
    a1: Vec<f64>,
    a2: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    out: Vec<f64>,
}

fn transpose_kernel(w: &[f64], filters: usize, channels: usize) -> Vec<f64> {
    let mut t = vec![0.0; w.len()];
    for f in 0..filters {
        for c in 0..channels {
            for k in 0..K * K {
                t[(c * K * K + k) * filters + f] = w[(f * channels + c) * K * K + k];
            }
        }
    }
    t
}

/// `out[(oy*ow+ox)*F + f] += v * w[(c,ky,kx)][f]` for every non-zero input.
#[allow(clippy::too_many_arguments)]
fn scatter_conv(
    value: f64,
    c: usize,
    y: usize,
    x: usize,
    oh: usize,
    ow: usize,
    filters: usize,
    w: &[f64],
    out: &mut [f64],
) {
    for ky in 0..K {
        if y < ky || y - ky >= oh {
            continue;
        }
        let oy = y - ky;
        for kx in 0..K {
            if x < kx || x - kx >= ow {
                continue;
            }
            let ox = x - kx;
            let wk = &w[(c * K * K + ky * K + kx) * filters..][..filters];
            let dst = &mut out[(oy * ow + ox) * filters..][..filters];
            for (d, &wt) in dst.iter_mut().zip(wk) {
                *d += value * wt;
            }
        }
    }
}

impl InferenceNet {
    pub fn new(model: &PolicyModel) -> Self {
        let a = model.arch;
        let off = a.offsets();
        let lay = a.layers();
        let p = &model.weights;
        let slice = |i: usize| (&p[off[i].0..off[i].1], &p[off[i].1..off[i].1 + lay[i].3]);
        let [f1, f2] = a.conv_filters;
        let (w1, b1) = slice(0);
        let (w2, b2) = slice(1);
        let (w3, b3) = slice(2);
        let (w4, b4) = slice(3);
        let (w5, b5) = slice(4);

        let (h2, wd2) = a.conv2_out();
        let flat = a.flat_len();
        let d1 = a.fc[0];
        // Dense weights are [out][in] with `in` in (f, y, x) order.
        let mut fc1 = vec![0.0; flat * d1];
        for o in 0..d1 {
            for f in 0..f2 {
                for pix in 0..h2 * wd2 {
                    fc1[(pix * f2 + f) * d1 + o] = w3[o * flat + f * h2 * wd2 + pix];
                }
            }
        }
        InferenceNet {
            arch: a,
            conv1: transpose_kernel(w1, f1, a.input_channels),
            bias1: b1.to_vec(),
            conv2: transpose_kernel(w2, f2, f1),
            bias2: b2.to_vec(),
            fc1,
            bias3: b3.to_vec(),
            fc2: w4.to_vec(),
            bias4: b4.to_vec(),
            fc3: w5.to_vec(),
            bias5: b5.to_vec(),
        }
    }

    pub fn arch(&self) -> NetworkArch {
        self.arch
    }

    /// Pre-softmax outputs. The input shape must match the architecture.
    pub fn logits<'s>(&self, input: &EncodedState, s: &'s mut Scratch) -> &'s [f64] {
        let a = &self.arch;
        debug_assert_eq!(input.shape(), a.input_shape());
        let (h, w) = (a.input_height, a.input_width);
        let (h1, w1) = a.conv1_out();
        let (h2, w2) = a.conv2_out();
        let [f1, f2] = a.conv_filters;

        s.a1.clear();
        for _ in 0..h1 * w1 {
            s.a1.extend_from_slice(&self.bias1);
        }
        for c in 0..a.input_channels {
            let plane = &input.values[c * h * w..(c + 1) * h * w];
            for (i, &v) in plane.iter().enumerate() {
                if v != 0.0 {
                    scatter_conv(v, c, i / w, i % w, h1, w1, f1, &self.conv1, &mut s.a1);
                }
            }
        }

        s.a2.clear();
        for _ in 0..h2 * w2 {
            s.a2.extend_from_slice(&self.bias2);
        }
        for pix in 0..h1 * w1 {
            let (y, x) = (pix / w1, pix % w1);
            for c in 0..f1 {
                let v = s.a1[pix * f1 + c];
                if v > 0.0 {
                    scatter_conv(v, c, y, x, h2, w2, f2, &self.conv2, &mut s.a2);
                }
            }
        }

        let d1 = a.fc[0];
        s.h1.clear();
        s.h1.extend_from_slice(&self.bias3);
        for (i, &v) in s.a2.iter().enumerate() {
            if v > 0.0 {
                for (d, &wt) in s.h1.iter_mut().zip(&self.fc1[i * d1..(i + 1) * d1]) {
                    *d += v * wt;
                }
            }
        }
        s.h1.iter_mut().for_each(|v| *v = v.max(0.0));

        s.h2.clear();
        for (o, b) in self.bias4.iter().enumerate() {
            let row = &self.fc2[o * d1..(o + 1) * d1];
            let z = b + row.iter().zip(&s.h1).map(|(w, x)| w * x).sum::<f64>();
            s.h2.push(z.max(0.0));
        }

        let d2 = a.fc[1];
        s.out.clear();
        for (o, b) in self.bias5.iter().enumerate() {
            let row = &self.fc3[o * d2..(o + 1) * d2];
            s.out.push(b + row.iter().zip(&s.h2).map(|(w, x)| w * x).sum::<f64>());
        }
        &s.out
    }

    /// Argmax action index; ties go to the lowest index.
    pub fn action(&self, input: &EncodedState, s: &mut Scratch) -> usize {
        super::argmax(self.logits(input, s))
    }
}

#[cfg(test)]
mod tests {
    use super::super::{init_weights, logits, tests::random_model};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn agrees_with_reference_path() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let arch = NetworkArch::for_grid(rng.gen_range(1..=4), rng.gen_range(3..=7), rng.gen_range(3..=7));
            let model = if seed % 2 == 0 { random_model(arch, seed) } else { init_weights(arch, seed) };
            let net = InferenceNet::new(&model);
            let (c, h, w) = arch.input_shape();
            // Sparse non-negative inputs like encoded states, plus some negatives.
            let values = (0..c * h * w)
                .map(|_| if rng.gen_bool(0.3) { rng.gen_range(-1.0..3.0) } else { 0.0 })
                .collect();
            let x = EncodedState { channels: c, height: h, width: w, values };
            let mut s = Scratch::default();
            let fast = net.logits(&x, &mut s).to_vec();
            let slow = logits(&model, &x).unwrap();
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{fast:?} vs {slow:?}");
            }
        }
    }
}
