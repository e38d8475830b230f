//! Forward pass over a packed batch of sequences.
//!
//! Sequences are concatenated row-wise into one `[rows, d_model]` matrix so
//! every projection is a single GEMM; only attention looks at sequence
//! boundaries. A [`Probe`] sees every projection output right after its matrix
//! multiply and before anything consumes it, which is where suppression and
//! recording happen.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use super::neuron::{CompiledMask, NeuronKind, NeuronTapSpec, SuppressionMask};
use super::TinyLm;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub(crate) const RMS_EPS: f64 = 1e-5;

/// Concatenated token sequences; `starts` has one extra trailing entry.
#[derive(Debug, Clone)]
pub(crate) struct Packed {
    pub tokens: Vec<u32>,
    pub starts: Vec<usize>,
}

impl Packed {
    pub fn new<S: AsRef<[u32]>>(seqs: &[S]) -> Self {
        let mut tokens = Vec::new();
        let mut starts = Vec::with_capacity(seqs.len() + 1);
        for s in seqs {
            starts.push(tokens.len());
            tokens.extend_from_slice(s.as_ref());
        }
        starts.push(tokens.len());
        Packed { tokens, starts }
    }

    pub fn n_seqs(&self) -> usize {
        self.starts.len() - 1
    }

    pub fn rows(&self) -> usize {
        self.tokens.len()
    }

    pub fn span(&self, i: usize) -> (usize, usize) {
        (self.starts[i], self.starts[i + 1])
    }

    /// Row index of the last token of each sequence.
    pub fn last_rows(&self) -> Vec<usize> {
        (0..self.n_seqs()).map(|i| self.starts[i + 1] - 1).collect()
    }

    pub fn validate(&self, vocab: usize, max_len: usize) -> Result<()> {
        for i in 0..self.n_seqs() {
            let (a, b) = self.span(i);
            if a == b {
                return Err(Error::EmptyPrompt);
            }
            if b - a > max_len {
                return Err(Error::SequenceTooLong {
                    len: b - a,
                    max: max_len,
                });
            }
        }
        if let Some(&id) = self.tokens.iter().find(|&&t| t as usize >= vocab) {
            return Err(Error::TokenOutOfVocab { id, vocab });
        }
        Ok(())
    }
}

pub(crate) trait Probe<T> {
    fn visit(&mut self, layer: usize, kind: NeuronKind, out: &mut Array2<T>);
}

/// The unhooked path: the compiler removes every visit.
pub(crate) struct NoProbe;

impl<T> Probe<T> for NoProbe {
    #[inline(always)]
    fn visit(&mut self, _: usize, _: NeuronKind, _: &mut Array2<T>) {}
}

/// Zeroes masked columns, then records the (post-override) outputs.
pub(crate) struct MaskTap<'a, T> {
    pub mask: &'a CompiledMask,
    pub tap: Option<&'a NeuronTapSpec>,
    pub recorded: Vec<(usize, NeuronKind, Array2<T>)>,
}

impl<T: Scalar> Probe<T> for MaskTap<'_, T> {
    fn visit(&mut self, layer: usize, kind: NeuronKind, out: &mut Array2<T>) {
        for &c in self.mask.columns(layer, kind) {
            out.column_mut(c).fill(T::zero());
        }
        if self.tap.is_some_and(|t| t.records(kind)) {
            self.recorded.push((layer, kind, out.clone()));
        }
    }
}

/// Intermediates of one block, kept for backprop.
pub(crate) struct LayerCache<T> {
    pub x_in: Array2<T>,
    pub r1: Array1<T>,
    pub h1: Array2<T>,
    pub q: Array2<T>,
    pub k: Array2<T>,
    pub v: Array2<T>,
    /// Per (sequence, head): row-major `n x n` causal attention weights.
    pub probs: Vec<Vec<T>>,
    pub ctx: Array2<T>,
    pub x_mid: Array2<T>,
    pub r2: Array1<T>,
    pub h2: Array2<T>,
    pub g: Array2<T>,
    pub u: Array2<T>,
    pub act: Array2<T>,
}

pub(crate) struct ForwardOut<T> {
    pub layers: Vec<LayerCache<T>>,
    pub x_final: Array2<T>,
    pub r_final: Array1<T>,
    /// Final-norm output, `[rows, d_model]`.
    pub h_final: Array2<T>,
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[inline]
pub(crate) fn silu<T: Scalar>(x: T) -> T {
    x * sigmoid(x)
}

/// Row-wise RMS norm. Returns the normalized matrix and `1/rms` per row.
pub(crate) fn rms_norm<T: Scalar>(x: &Array2<T>, gain: ArrayView1<T>) -> (Array2<T>, Array1<T>) {
    let d = T::lit(x.ncols() as f64);
    let eps = T::lit(RMS_EPS);
    let r: Array1<T> = x
        .rows()
        .into_iter()
        .map(|row| {
            let ms = row.iter().fold(T::zero(), |acc, &v| acc + v * v) / d;
            T::one() / (ms + eps).sqrt()
        })
        .collect();
    let mut h = x.clone();
    Zip::from(h.rows_mut()).and(&r).for_each(|mut row, &ri| {
        Zip::from(&mut row)
            .and(&gain)
            .for_each(|v, &g| *v = *v * ri * g);
    });
    (h, r)
}

/// Causal multi-head attention over each packed sequence.
pub(crate) fn attention<T: Scalar>(
    q: &Array2<T>,
    k: &Array2<T>,
    v: &Array2<T>,
    packed: &Packed,
    n_heads: usize,
) -> (Array2<T>, Vec<Vec<T>>) {
    let d = q.ncols();
    let dh = d / n_heads;
    let scale = T::lit(1.0 / (dh as f64).sqrt());
    let mut ctx = Array2::<T>::zeros(q.raw_dim());
    let mut probs = Vec::with_capacity(packed.n_seqs() * n_heads);
    for sidx in 0..packed.n_seqs() {
        let (a, b) = packed.span(sidx);
        let n = b - a;
        for h in 0..n_heads {
            let cols = h * dh..(h + 1) * dh;
            let qh = q.slice(s![a..b, cols.clone()]);
            let kh = k.slice(s![a..b, cols.clone()]);
            let vh = v.slice(s![a..b, cols.clone()]);
            let mut p = vec![T::zero(); n * n];
            for i in 0..n {
                let row = &mut p[i * n..i * n + i + 1];
                let qi = qh.row(i);
                let mut max = T::neg_infinity();
                for (j, slot) in row.iter_mut().enumerate() {
                    let sc = qi.dot(&kh.row(j)) * scale;
                    *slot = sc;
                    if sc > max {
                        max = sc;
                    }
                }
                let mut sum = T::zero();
                for slot in row.iter_mut() {
                    *slot = (*slot - max).exp();
                    sum += *slot;
                }
                for slot in row.iter_mut() {
                    *slot /= sum;
                }
                let mut out = ctx.slice_mut(s![a + i, cols.clone()]);
                for (j, &pij) in row.iter().enumerate() {
                    Zip::from(&mut out)
                        .and(&vh.row(j))
                        .for_each(|o, &vv| *o += pij * vv);
                }
            }
            probs.push(p);
        }
    }
    (ctx, probs)
}

impl<T: Scalar> TinyLm<T> {
    fn embed(&self, packed: &Packed) -> Array2<T> {
        let d = self.config().d_model;
        let tok = self.mat(self.layout().tok_emb);
        let pos = self.mat(self.layout().pos_emb);
        let mut x = Array2::<T>::zeros((packed.rows(), d));
        for sidx in 0..packed.n_seqs() {
            let (a, b) = packed.span(sidx);
            for (p, row) in (a..b).enumerate() {
                let t = packed.tokens[row] as usize;
                Zip::from(x.row_mut(row))
                    .and(&tok.row(t))
                    .and(&pos.row(p))
                    .for_each(|o, &e, &pe| *o = e + pe);
            }
        }
        x
    }

    fn block<P: Probe<T>>(
        &self,
        layer: usize,
        x: Array2<T>,
        packed: &Packed,
        probe: &mut P,
        with_ffn: bool,
    ) -> (Array2<T>, LayerCache<T>) {
        let w = &self.layout().layers[layer];
        let (h1, r1) = rms_norm(&x, self.vec(w.attn_norm));
        let mut q = h1.dot(&self.mat(w.wq));
        probe.visit(layer, NeuronKind::AttnQ, &mut q);
        let mut k = h1.dot(&self.mat(w.wk));
        probe.visit(layer, NeuronKind::AttnK, &mut k);
        let mut v = h1.dot(&self.mat(w.wv));
        probe.visit(layer, NeuronKind::AttnV, &mut v);
        let (ctx, probs) = attention(&q, &k, &v, packed, self.config().n_heads);
        let mut o = ctx.dot(&self.mat(w.wo));
        probe.visit(layer, NeuronKind::AttnO, &mut o);
        let x_mid = &x + &o;

        let (h2, r2) = rms_norm(&x_mid, self.vec(w.ffn_norm));
        let (g, u, act, x_out) = if with_ffn {
            let mut g = h2.dot(&self.mat(w.w_gate));
            probe.visit(layer, NeuronKind::Gate, &mut g);
            let mut u = h2.dot(&self.mat(w.w_up));
            probe.visit(layer, NeuronKind::Up, &mut u);
            let mut act = g.clone();
            Zip::from(&mut act)
                .and(&u)
                .for_each(|a, &uu| *a = silu(*a) * uu);
            let mut dn = act.dot(&self.mat(w.w_down));
            probe.visit(layer, NeuronKind::Down, &mut dn);
            let x_out = &x_mid + &dn;
            (g, u, act, x_out)
        } else {
            let empty = Array2::zeros((0, 0));
            (empty.clone(), empty.clone(), empty, x_mid.clone())
        };
        let cache = LayerCache {
            x_in: x,
            r1,
            h1,
            q,
            k,
            v,
            probs,
            ctx,
            x_mid,
            r2,
            h2,
            g,
            u,
            act,
        };
        (x_out, cache)
    }

    pub(crate) fn run<P: Probe<T>>(
        &self,
        packed: &Packed,
        probe: &mut P,
        keep_cache: bool,
        with_ffn: bool,
    ) -> ForwardOut<T> {
        let mut x = self.embed(packed);
        let mut layers = Vec::new();
        for layer in 0..self.config().n_layers {
            let (next, cache) = self.block(layer, x, packed, probe, with_ffn);
            if keep_cache {
                layers.push(cache);
            }
            x = next;
        }
        let (h_final, r_final) = rms_norm(&x, self.vec(self.layout().final_norm));
        ForwardOut {
            layers,
            x_final: x,
            r_final,
            h_final,
        }
    }

    pub(crate) fn project_rows(&self, h_final: &Array2<T>, rows: &[usize]) -> Array2<T> {
        let sel = h_final.select(Axis(0), rows);
        sel.dot(&self.mat(self.layout().w_out))
    }

    pub(crate) fn unembed(&self, h_final: ArrayView2<T>) -> Array2<T> {
        h_final.dot(&self.mat(self.layout().w_out))
    }

    /// Masked, optionally tapped forward pass over a packed batch. Returns the
    /// final hidden states and one tap record per sequence.
    #[allow(clippy::type_complexity)]
    pub(crate) fn forward_packed(
        &self,
        packed: &Packed,
        tap: Option<&NeuronTapSpec>,
        mask: &SuppressionMask,
    ) -> Result<(Array2<T>, Option<Vec<TapRecord<T>>>)> {
        packed.validate(self.config().vocab_size, self.config().max_seq_len)?;
        let compiled = mask.compile(self.config())?;
        let mut probe = MaskTap {
            mask: &compiled,
            tap,
            recorded: Vec::new(),
        };
        let out = self.run(packed, &mut probe, false, true);
        let records = tap.map(|_| split_records(probe.recorded, packed));
        Ok((out.h_final, records))
    }

    /// Logits at every position of one sequence, with optional recording and
    /// suppression. With an empty mask this equals the unhooked forward pass
    /// bit for bit.
    pub fn forward(
        &self,
        tokens: &[u32],
        tap: Option<&NeuronTapSpec>,
        mask: &SuppressionMask,
    ) -> Result<(Array2<T>, Option<TapRecord<T>>)> {
        let packed = Packed::new(&[tokens]);
        let (h, records) = self.forward_packed(&packed, tap, mask)?;
        Ok((
            self.unembed(h.view()),
            records.map(|mut r| r.pop().expect("one sequence")),
        ))
    }

    /// Logits through the unhooked path (no probe code compiled in).
    pub fn logits(&self, tokens: &[u32]) -> Result<Array2<T>> {
        let packed = Packed::new(&[tokens]);
        packed.validate(self.config().vocab_size, self.config().max_seq_len)?;
        let out = self.run(&packed, &mut NoProbe, false, true);
        Ok(self.unembed(out.h_final.view()))
    }

    /// Reference attention-only model: the same weights with every FFN block
    /// removed from the residual stream.
    pub fn logits_without_ffn(&self, tokens: &[u32]) -> Result<Array2<T>> {
        let packed = Packed::new(&[tokens]);
        packed.validate(self.config().vocab_size, self.config().max_seq_len)?;
        let out = self.run(&packed, &mut NoProbe, false, false);
        Ok(self.unembed(out.h_final.view()))
    }

    /// Token-averaged outputs of the tapped neurons for many prompts, one
    /// vector per prompt in neuron-enumeration order. Position 0 (the
    /// begin-of-sequence marker) is excluded from the average.
    pub fn capture_means<S: AsRef<[u32]> + Sync>(
        &self,
        prompts: &[S],
        tap: &NeuronTapSpec,
        mask: &SuppressionMask,
    ) -> Result<Vec<Vec<f32>>> {
        use rayon::prelude::*;
        let chunks: Vec<Result<Vec<Vec<f32>>>> = prompts
            .par_chunks(BATCH_CHUNK)
            .map(|chunk| {
                let packed = Packed::new(chunk);
                let (_, recs) = self.forward_packed(&packed, Some(tap), mask)?;
                recs.expect("tap requested")
                    .iter()
                    .map(|r| {
                        crate::expert::token_average(r, crate::expert::EffectiveTokens::SkipBos)
                    })
                    .collect()
            })
            .collect();
        let mut out = Vec::with_capacity(prompts.len());
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }
}

/// Fixed chunk size for batched inference; keeps results independent of the
/// thread count.
pub(crate) const BATCH_CHUNK: usize = 64;

/// Recorded projection outputs for one sequence, in neuron-enumeration order
/// (layer-major, then kind).
#[derive(Debug, Clone, PartialEq)]
pub struct TapRecord<T> {
    pub seq_len: usize,
    pub entries: Vec<TapEntry<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TapEntry<T> {
    pub layer: usize,
    pub kind: NeuronKind,
    /// `[seq_len, width]`: value of column `c` at position `t`.
    pub values: Array2<T>,
}

impl<T: Scalar> TapRecord<T> {
    pub fn n_neurons(&self) -> usize {
        self.entries.iter().map(|e| e.values.ncols()).sum()
    }

    pub fn get(&self, layer: usize, kind: NeuronKind) -> Option<&TapEntry<T>> {
        self.entries
            .iter()
            .find(|e| e.layer == layer && e.kind == kind)
    }
}

fn split_records<T: Scalar>(
    mut recorded: Vec<(usize, NeuronKind, Array2<T>)>,
    packed: &Packed,
) -> Vec<TapRecord<T>> {
    recorded.sort_by_key(|(layer, kind, _)| (*layer, *kind));
    (0..packed.n_seqs())
        .map(|sidx| {
            let (a, b) = packed.span(sidx);
            TapRecord {
                seq_len: b - a,
                entries: recorded
                    .iter()
                    .map(|(layer, kind, m)| TapEntry {
                        layer: *layer,
                        kind: *kind,
                        values: m.slice(s![a..b, ..]).to_owned(),
                    })
                    .collect(),
            }
        })
        .collect()
}
