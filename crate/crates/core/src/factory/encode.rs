use super::{DomainSpec, GridState};

/// Channel-major network input: channel 0 holds task counts, channel 1 the
/// normalized time `t/H`, channel `1 + i` the one-hot position of robot `i`
/// (robots counted from 1).
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedState {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl EncodedState {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn at(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.values[(channel * self.height + row) * self.width + col]
    }

    pub fn channel(&self, channel: usize) -> &[f64] {
        let plane = self.height * self.width;
        &self.values[channel * plane..(channel + 1) * plane]
    }
}

pub fn encode_state(state: &GridState, spec: &DomainSpec) -> EncodedState {
    let (h, w) = (state.height(), state.width());
    let plane = h * w;
    let n = state.robots().len();
    let mut values = vec![0.0; (n + 2) * plane];
    for (v, &t) in values[..plane].iter_mut().zip(state.task_grid()) {
        *v = t as f64;
    }
    let time = state.time_step() as f64 / spec.horizon as f64;
    values[plane..2 * plane].iter_mut().for_each(|v| *v = time);
    for (i, &cell) in state.robots().iter().enumerate() {
        values[(2 + i) * plane + state.index(cell)] = 1.0;
    }
    EncodedState { channels: n + 2, height: h, width: w, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factory::{initial_state, parse_domain_config, Cell};

    const TWO: &str = "[grid]\nwidth=6\nheight=4\nhorizon=10\nmove_success=0.9\nact_success=1\n[robots]\n1,0,0\n2,3,5\n[tasks]\n1,2,2\n[spawns]\nevents=0,0\n";

    #[test]
    fn shape_and_channels() {
        let spec = parse_domain_config(TWO).unwrap();
        let s = initial_state(&spec);
        let e = encode_state(&s, &spec);
        assert_eq!(e.shape(), (4, 4, 6));
        assert_eq!(e.at(0, 1, 2), 2.0);
        for ch in 2..4 {
            assert_eq!(e.channel(ch).iter().sum::<f64>(), 1.0);
        }
        assert!(e.channel(1).iter().all(|&v| v == 0.0));
        assert_eq!(e.at(3, 3, 5), 1.0);
        let end = encode_state(&s.with_time_step(10).with_robot(0, Cell::new(2, 2)), &spec);
        assert!(end.channel(1).iter().all(|&v| v == 1.0));
        assert_eq!(end.at(2, 2, 2), 1.0);
    }
}
