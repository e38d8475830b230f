//! Flat parameter storage. Every tensor lives in one contiguous buffer in the
//! fixed checkpoint order:
//!
//! ```text
//! tok_emb   [vocab, d_model]
//! pos_emb   [max_seq_len, d_model]
//! per layer:
//!   attn_norm [d_model]
//!   wq, wk, wv, wo [d_model, d_model]
//!   ffn_norm  [d_model]
//!   w_gate    [d_model, d_ff]
//!   w_up      [d_model, d_ff]
//!   w_down    [d_ff, d_model]
//! final_norm [d_model]
//! w_out      [d_model, vocab]
//! ```
//!
//! Matrices are stored input-major (`[in, out]`, row-major), so neuron column
//! `c` of a projection is output coordinate `c`.

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSlots {
    pub attn_norm: Slot,
    pub wq: Slot,
    pub wk: Slot,
    pub wv: Slot,
    pub wo: Slot,
    pub ffn_norm: Slot,
    pub w_gate: Slot,
    pub w_up: Slot,
    pub w_down: Slot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub tok_emb: Slot,
    pub pos_emb: Slot,
    pub layers: Vec<LayerSlots>,
    pub final_norm: Slot,
    pub w_out: Slot,
    pub total: usize,
}

impl Layout {
    pub fn new(c: &ModelConfig) -> Self {
        let mut off = 0;
        let mut slot = |rows: usize, cols: usize| {
            let s = Slot {
                offset: off,
                rows,
                cols,
            };
            off += rows * cols;
            s
        };
        let (d, f) = (c.d_model, c.d_ff);
        let tok_emb = slot(c.vocab_size, d);
        let pos_emb = slot(c.max_seq_len, d);
        let layers = (0..c.n_layers)
            .map(|_| LayerSlots {
                attn_norm: slot(1, d),
                wq: slot(d, d),
                wk: slot(d, d),
                wv: slot(d, d),
                wo: slot(d, d),
                ffn_norm: slot(1, d),
                w_gate: slot(d, f),
                w_up: slot(d, f),
                w_down: slot(f, d),
            })
            .collect();
        let final_norm = slot(1, d);
        let w_out = slot(d, c.vocab_size);
        Layout {
            tok_emb,
            pos_emb,
            layers,
            final_norm,
            w_out,
            total: off,
        }
    }

    /// All slots in storage order, tagged with a readable name.
    pub fn named_slots(&self) -> Vec<(String, Slot)> {
        let mut v = vec![
            ("tok_emb".to_string(), self.tok_emb),
            ("pos_emb".to_string(), self.pos_emb),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            for (n, s) in [
                ("attn_norm", l.attn_norm),
                ("wq", l.wq),
                ("wk", l.wk),
                ("wv", l.wv),
                ("wo", l.wo),
                ("ffn_norm", l.ffn_norm),
                ("w_gate", l.w_gate),
                ("w_up", l.w_up),
                ("w_down", l.w_down),
            ] {
                v.push((format!("layers.{i}.{n}"), s));
            }
        }
        v.push(("final_norm".to_string(), self.final_norm));
        v.push(("w_out".to_string(), self.w_out));
        v
    }
}

pub(crate) fn view2<T>(buf: &[T], s: Slot) -> ArrayView2<'_, T> {
    ArrayView2::from_shape((s.rows, s.cols), &buf[s.range()]).expect("slot matches layout")
}

pub(crate) fn view1<T>(buf: &[T], s: Slot) -> ArrayView1<'_, T> {
    ArrayView1::from(&buf[s.range()])
}

pub(crate) fn view2_mut<T>(buf: &mut [T], s: Slot) -> ArrayViewMut2<'_, T> {
    ArrayViewMut2::from_shape((s.rows, s.cols), &mut buf[s.range()]).expect("slot matches layout")
}

pub(crate) fn view1_mut<T>(buf: &mut [T], s: Slot) -> ArrayViewMut1<'_, T> {
    ArrayViewMut1::from(&mut buf[s.range()])
}

/// Decoder-only transformer with SwiGLU feed-forward blocks and RMS norms,
/// no biases anywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyLm<T> {
    config: ModelConfig,
    layout: Layout,
    params: Vec<T>,
}

impl<T: Scalar> TinyLm<T> {
    /// Seeded initialization. Projections use N(0, 1/fan_in); the residual
    /// writers (`wo`, `w_down`) are further scaled by 1/sqrt(2 * n_layers).
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::init_scaled(config, seed, 1.0)
    }

    /// Same as [`TinyLm::init`] with every random tensor multiplied by `scale`.
    pub fn init_scaled(config: ModelConfig, seed: u64, scale: f64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![T::zero(); layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let resid = 1.0 / ((2 * config.n_layers) as f64).sqrt();
        let mut fill = |params: &mut [T], s: Slot, std: f64| {
            let normal = Normal::new(0.0, std * scale).expect("finite std");
            for p in &mut params[s.range()] {
                *p = T::lit(normal.sample(&mut rng));
            }
        };
        let d = config.d_model as f64;
        let f = config.d_ff as f64;
        fill(&mut params, layout.tok_emb, 1.0);
        fill(&mut params, layout.pos_emb, 0.1);
        for l in &layout.layers {
            for s in [l.attn_norm, l.ffn_norm] {
                params[s.range()].fill(T::one());
            }
            fill(&mut params, l.wq, d.powf(-0.5));
            fill(&mut params, l.wk, d.powf(-0.5));
            fill(&mut params, l.wv, d.powf(-0.5));
            fill(&mut params, l.wo, d.powf(-0.5) * resid);
            fill(&mut params, l.w_gate, d.powf(-0.5));
            fill(&mut params, l.w_up, d.powf(-0.5));
            fill(&mut params, l.w_down, f.powf(-0.5) * resid);
        }
        params[layout.final_norm.range()].fill(T::one());
        fill(&mut params, layout.w_out, d.powf(-0.5));
        Ok(TinyLm {
            config,
            layout,
            params,
        })
    }

    /// Build from a flat buffer in storage order.
    pub fn from_params(config: ModelConfig, params: Vec<T>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(crate::error::Error::Invalid(format!(
                "expected {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        Ok(TinyLm {
            config,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Convert to another scalar type (e.g. `f32` weights into an `f64` model).
    pub fn cast<U: Scalar>(&self) -> TinyLm<U> {
        TinyLm {
            config: self.config,
            layout: self.layout.clone(),
            params: self.params.iter().map(|p| U::lit(p.as_f64())).collect(),
        }
    }

    pub(crate) fn mat(&self, s: Slot) -> ArrayView2<'_, T> {
        view2(&self.params, s)
    }

    pub(crate) fn vec(&self, s: Slot) -> ArrayView1<'_, T> {
        view1(&self.params, s)
    }

    pub fn mat_mut(&mut self, s: Slot) -> ArrayViewMut2<'_, T> {
        view2_mut(&mut self.params, s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_covers_buffer_without_gaps() {
        let c = ModelConfig {
            n_layers: 2,
            d_model: 8,
            n_heads: 2,
            d_ff: 12,
            vocab_size: 11,
            max_seq_len: 5,
            position_encoding: Default::default(),
        };
        let layout = Layout::new(&c);
        let mut next = 0;
        for (_, s) in layout.named_slots() {
            assert_eq!(s.offset, next);
            next += s.len();
        }
        assert_eq!(next, layout.total);
        let per_layer = 2 * 8 + 4 * 64 + 3 * 8 * 12;
        assert_eq!(layout.total, 11 * 8 + 5 * 8 + 2 * per_layer + 8 + 8 * 11);
    }

    #[test]
    fn init_is_seeded() {
        let c = ModelConfig::desk(50, 8);
        let a = TinyLm::<f32>::init(c, 3).unwrap();
        let b = TinyLm::<f32>::init(c, 3).unwrap();
        let d = TinyLm::<f32>::init(c, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, d);
    }
}
