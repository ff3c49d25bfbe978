//! Binary model files.
//!
//! Layout: `ABCNN`, version byte, ten little-endian `u32` header fields
//! (input channels, height, width, conv filters x2, dense sizes x3,
//! generation, agent id), `u64` seed, `u64` parameter count, then the
//! parameters as little-endian `f64`.

use super::{NetworkArch, PolicyModel, TrainingMeta};

const MAGIC: &[u8; 5] = b"ABCNN";
const VERSION: u8 = 1;
const HEADER_LEN: usize = 6 + 10 * 4 + 8 + 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelFormatError {
    #[error("not a model file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated model file: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("parameter count {found} does not match the architecture's {expected}")]
    ParamCountMismatch { expected: usize, found: usize },
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("invalid architecture in header: {0}")]
    InvalidArch(String),
}

pub fn save_model(model: &PolicyModel) -> Vec<u8> {
    let a = &model.arch;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * model.weights.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    for v in [
        a.input_channels,
        a.input_height,
        a.input_width,
        a.conv_filters[0],
        a.conv_filters[1],
        a.fc[0],
        a.fc[1],
        a.fc[2],
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&model.meta.generation.to_le_bytes());
    out.extend_from_slice(&model.meta.agent.to_le_bytes());
    out.extend_from_slice(&model.meta.seed.to_le_bytes());
    out.extend_from_slice(&(model.weights.len() as u64).to_le_bytes());
    for w in &model.weights {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

pub fn load_model(bytes: &[u8]) -> Result<PolicyModel, ModelFormatError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(ModelFormatError::BadMagic);
    }
    if bytes.len() < 6 {
        return Err(ModelFormatError::Truncated { expected: HEADER_LEN, actual: bytes.len() });
    }
    if bytes[5] != VERSION {
        return Err(ModelFormatError::UnsupportedVersion(bytes[5]));
    }
    if bytes.len() < HEADER_LEN {
        return Err(ModelFormatError::Truncated { expected: HEADER_LEN, actual: bytes.len() });
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[6 + 4 * i..10 + 4 * i].try_into().unwrap());
    let u64_at = |pos: usize| u64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap());
    let h: Vec<usize> = (0..8).map(|i| u32_at(i) as usize).collect();
    let arch = NetworkArch {
        input_channels: h[0],
        input_height: h[1],
        input_width: h[2],
        conv_filters: [h[3], h[4]],
        fc: [h[5], h[6], h[7]],
    };
    arch.validate().map_err(|e| ModelFormatError::InvalidArch(e.to_string()))?;
    let meta = TrainingMeta { generation: u32_at(8), agent: u32_at(9), seed: u64_at(46) };
    let count = u64_at(54) as usize;
    let expected = arch.param_count();
    if count != expected {
        return Err(ModelFormatError::ParamCountMismatch { expected, found: count });
    }
    let total = HEADER_LEN + 8 * count;
    if bytes.len() < total {
        return Err(ModelFormatError::Truncated { expected: total, actual: bytes.len() });
    }
    if bytes.len() > total {
        return Err(ModelFormatError::TrailingBytes(bytes.len() - total));
    }
    let weights = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(PolicyModel { arch, weights, meta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_weights;
    use proptest::prelude::*;

    fn model() -> PolicyModel {
        let mut m = init_weights(NetworkArch::for_grid(2, 4, 6), 9);
        m.meta = TrainingMeta { generation: 3, agent: 1, seed: 0xDEAD_BEEF };
        m
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let m = model();
        let back = load_model(&save_model(&m)).unwrap();
        assert_eq!(back.arch, m.arch);
        assert_eq!(back.meta, m.meta);
        let a: Vec<u64> = m.weights.iter().map(|w| w.to_bits()).collect();
        let b: Vec<u64> = back.weights.iter().map(|w| w.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn corrupted_magic() {
        let mut bytes = save_model(&model());
        bytes[..6].copy_from_slice(b"XXXXXX");
        assert_eq!(load_model(&bytes), Err(ModelFormatError::BadMagic));
    }

    #[test]
    fn wrong_version() {
        let mut bytes = save_model(&model());
        bytes[5] = 2;
        assert_eq!(load_model(&bytes), Err(ModelFormatError::UnsupportedVersion(2)));
    }

    #[test]
    fn truncated_mid_weights() {
        let bytes = save_model(&model());
        let cut = bytes.len() - 100;
        match load_model(&bytes[..cut]) {
            Err(ModelFormatError::Truncated { expected, actual }) => {
                assert_eq!(expected, bytes.len());
                assert_eq!(actual, cut);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn param_count_mismatch() {
        let mut bytes = save_model(&model());
        bytes[54..62].copy_from_slice(&7u64.to_le_bytes());
        assert!(matches!(load_model(&bytes), Err(ModelFormatError::ParamCountMismatch { found: 7, .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn roundtrip_random_models(seed in any::<u64>(), agents in 1usize..5, h in 3usize..8, w in 3usize..8,
                                   generation in any::<u32>(), agent in any::<u32>()) {
            let mut m = init_weights(NetworkArch::for_grid(agents, h, w), seed);
            m.meta = TrainingMeta { generation, agent, seed };
            let back = load_model(&save_model(&m)).unwrap();
            prop_assert_eq!(save_model(&back), save_model(&m));
        }
    }
}
