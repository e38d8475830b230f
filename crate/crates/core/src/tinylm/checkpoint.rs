//! Checkpoint file: `TLMW0001`, the seven config fields as little-endian u32 in
//! declaration order, then every parameter as a little-endian f32 in the
//! storage order documented in `params`.

use std::path::Path;

use super::{ModelConfig, PositionEncoding, TinyLm};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TLMW0001";
const HEADER_LEN: usize = 8 + 7 * 4;

impl<T: Scalar> TinyLm<T> {
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let c = self.config();
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.n_params());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        for v in [
            c.n_layers,
            c.d_model,
            c.n_heads,
            c.d_ff,
            c.vocab_size,
            c.max_seq_len,
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&c.position_encoding.code().to_le_bytes());
        for p in self.params() {
            out.extend_from_slice(&p.as_f32().to_le_bytes());
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Truncated("checkpoint shorter than its magic".into()));
        }
        if &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic {
                found: String::from_utf8_lossy(&bytes[..8]).into_owned(),
                expected: String::from_utf8_lossy(CHECKPOINT_MAGIC).into_owned(),
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated("checkpoint header".into()));
        }
        let field = |i: usize| {
            let o = 8 + 4 * i;
            u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"))
        };
        let config = ModelConfig {
            n_layers: field(0) as usize,
            d_model: field(1) as usize,
            n_heads: field(2) as usize,
            d_ff: field(3) as usize,
            vocab_size: field(4) as usize,
            max_seq_len: field(5) as usize,
            position_encoding: PositionEncoding::from_code(field(6))?,
        };
        config.validate()?;
        let n = super::params::Layout::new(&config).total;
        let body = &bytes[HEADER_LEN..];
        if body.len() != 4 * n {
            return Err(Error::Truncated(format!(
                "expected {} parameter bytes, found {}",
                4 * n,
                body.len()
            )));
        }
        let params = body
            .chunks_exact(4)
            .map(|b| T::lit(f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64))
            .collect();
        TinyLm::from_params(config, params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_checkpoint_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tinylm::SuppressionMask;

    fn model() -> TinyLm<f32> {
        let c = ModelConfig {
            n_layers: 2,
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            vocab_size: 9,
            max_seq_len: 6,
            position_encoding: Default::default(),
        };
        TinyLm::init(c, 5).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let bytes = m.to_checkpoint_bytes();
        let back = TinyLm::<f32>::from_checkpoint_bytes(&bytes).unwrap();
        assert_eq!(back.to_checkpoint_bytes(), bytes);
        let toks = [0, 3, 8, 1];
        let a = m.forward(&toks, None, &SuppressionMask::empty()).unwrap().0;
        let b = back
            .forward(&toks, None, &SuppressionMask::empty())
            .unwrap()
            .0;
        assert_eq!(a, b);
    }

    #[test]
    fn header_layout() {
        let bytes = model().to_checkpoint_bytes();
        assert_eq!(&bytes[..8], b"TLMW0001");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[24..28].try_into().unwrap()), 9);
        assert_eq!(u32::from_le_bytes(bytes[32..36].try_into().unwrap()), 0);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let mut bytes = model().to_checkpoint_bytes();
        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(
            TinyLm::<f32>::from_checkpoint_bytes(truncated),
            Err(Error::Truncated(_))
        ));
        bytes[7] = b'9';
        assert!(matches!(
            TinyLm::<f32>::from_checkpoint_bytes(&bytes),
            Err(Error::BadMagic { .. })
        ));
    }
}
