use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PositionEncoding {
    #[default]
    LearnedAbsolute,
}

impl PositionEncoding {
    pub fn code(self) -> u32 {
        match self {
            PositionEncoding::LearnedAbsolute => 0,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(PositionEncoding::LearnedAbsolute),
            other => Err(Error::Invalid(format!(
                "unknown position encoding code {other}"
            ))),
        }
    }
}

/// Dimensions of the decoder-only model. Field order is the checkpoint header order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    #[serde(default)]
    pub position_encoding: PositionEncoding,
}

impl ModelConfig {
    /// The desk-scale default: 4 layers, width 128, 4 heads, FFN width 256.
    pub fn desk(vocab_size: usize, max_seq_len: usize) -> Self {
        ModelConfig {
            n_layers: 4,
            d_model: 128,
            n_heads: 4,
            d_ff: 256,
            vocab_size,
            max_seq_len,
            position_encoding: PositionEncoding::LearnedAbsolute,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_layers", self.n_layers),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("vocab_size", self.vocab_size),
            ("max_seq_len", self.max_seq_len),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
            if v > u32::MAX as usize {
                return Err(Error::Config(format!("{name} does not fit in u32")));
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }
}
