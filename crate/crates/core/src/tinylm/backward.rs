//! Next-token cross-entropy and its analytic gradient.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayViewMut1, Axis, Zip};

use super::forward::{sigmoid, ForwardOut, LayerCache, NoProbe, Packed};
use super::params::{view1_mut, view2_mut};
use super::TinyLm;
use crate::scalar::Scalar;

/// Packed rows that have a next token, and that token.
fn targets(packed: &Packed) -> (Vec<usize>, Vec<usize>) {
    let mut rows = Vec::new();
    let mut next = Vec::new();
    for i in 0..packed.n_seqs() {
        let (a, b) = packed.span(i);
        for r in a..b.saturating_sub(1) {
            rows.push(r);
            next.push(packed.tokens[r + 1] as usize);
        }
    }
    (rows, next)
}

/// Mean negative log-likelihood and `softmax - onehot` (unscaled) per target.
fn cross_entropy<T: Scalar>(logits: &Array2<T>, next: &[usize]) -> (T, Array2<T>) {
    let mut dlogits = logits.clone();
    let mut total = T::zero();
    for ((mut row, logit_row), &t) in dlogits.rows_mut().into_iter().zip(logits.rows()).zip(next) {
        let max = logit_row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut sum = T::zero();
        row.mapv_inplace(|v| {
            let e = (v - max).exp();
            sum += e;
            e
        });
        total += max + sum.ln() - logit_row[t];
        row.mapv_inplace(|e| e / sum);
        row[t] -= T::one();
    }
    (total / T::lit(next.len() as f64), dlogits)
}

fn rms_norm_backward<T: Scalar>(
    x: &Array2<T>,
    r: &Array1<T>,
    gain: ArrayView1<T>,
    dh: &Array2<T>,
    dgain: &mut ArrayViewMut1<T>,
    dx: &mut Array2<T>,
) {
    let d = T::lit(x.ncols() as f64);
    for ((xr, dhr), (&ri, mut dxr)) in x
        .rows()
        .into_iter()
        .zip(dh.rows())
        .zip(r.iter().zip(dx.rows_mut()))
    {
        let mut dot = T::zero();
        for ((&xv, &dv), (&gv, dg)) in xr
            .iter()
            .zip(dhr.iter())
            .zip(gain.iter().zip(dgain.iter_mut()))
        {
            *dg += dv * xv * ri;
            dot += dv * gv * xv;
        }
        let coef = ri * ri * ri * dot / d;
        for ((&xv, &dv), (&gv, o)) in xr
            .iter()
            .zip(dhr.iter())
            .zip(gain.iter().zip(dxr.iter_mut()))
        {
            *o += ri * dv * gv - coef * xv;
        }
    }
}

fn attention_backward<T: Scalar>(
    cache: &LayerCache<T>,
    dctx: &Array2<T>,
    packed: &Packed,
    n_heads: usize,
) -> (Array2<T>, Array2<T>, Array2<T>) {
    let d = dctx.ncols();
    let dh = d / n_heads;
    let scale = T::lit(1.0 / (dh as f64).sqrt());
    let mut dq = Array2::<T>::zeros(dctx.raw_dim());
    let mut dk = Array2::<T>::zeros(dctx.raw_dim());
    let mut dv = Array2::<T>::zeros(dctx.raw_dim());
    let mut pi = 0;
    for sidx in 0..packed.n_seqs() {
        let (a, b) = packed.span(sidx);
        let n = b - a;
        for h in 0..n_heads {
            let cols = h * dh..(h + 1) * dh;
            let p = &cache.probs[pi];
            pi += 1;
            let qh = cache.q.slice(s![a..b, cols.clone()]);
            let kh = cache.k.slice(s![a..b, cols.clone()]);
            let vh = cache.v.slice(s![a..b, cols.clone()]);
            let dch = dctx.slice(s![a..b, cols.clone()]);
            for i in 0..n {
                let prow = &p[i * n..i * n + i + 1];
                // dP_ij = dctx_i . v_j ; dS = P * (dP - sum_j P dP)
                let dp: Vec<T> = (0..=i).map(|j| dch.row(i).dot(&vh.row(j))).collect();
                let inner = prow
                    .iter()
                    .zip(&dp)
                    .fold(T::zero(), |acc, (&pp, &d)| acc + pp * d);
                for j in 0..=i {
                    let ds = prow[j] * (dp[j] - inner) * scale;
                    {
                        let mut dqi = dq.slice_mut(s![a + i, cols.clone()]);
                        Zip::from(&mut dqi)
                            .and(&kh.row(j))
                            .for_each(|o, &kv| *o += ds * kv);
                    }
                    {
                        let mut dkj = dk.slice_mut(s![a + j, cols.clone()]);
                        Zip::from(&mut dkj)
                            .and(&qh.row(i))
                            .for_each(|o, &qv| *o += ds * qv);
                    }
                    let mut dvj = dv.slice_mut(s![a + j, cols.clone()]);
                    let pij = prow[j];
                    Zip::from(&mut dvj)
                        .and(&dch.row(i))
                        .for_each(|o, &g| *o += pij * g);
                }
            }
        }
    }
    (dq, dk, dv)
}

impl<T: Scalar> TinyLm<T> {
    fn train_forward(&self, packed: &Packed) -> (ForwardOut<T>, Vec<usize>, Vec<usize>, Array2<T>) {
        let out = self.run(packed, &mut NoProbe, true, true);
        let (rows, next) = targets(packed);
        let logits = self.project_rows(&out.h_final, &rows);
        (out, rows, next, logits)
    }

    /// Mean next-token cross-entropy over every position that has a successor.
    pub fn loss<S: AsRef<[u32]>>(&self, seqs: &[S]) -> crate::Result<T> {
        let packed = Packed::new(seqs);
        packed.validate(self.config().vocab_size, self.config().max_seq_len)?;
        let (_, _, next, logits) = self.train_forward(&packed);
        if next.is_empty() {
            return Err(crate::Error::SequenceTooShort(
                "no next-token targets".into(),
            ));
        }
        Ok(cross_entropy(&logits, &next).0)
    }

    /// Loss and its gradient with respect to every parameter, in storage order.
    pub fn loss_and_grad<S: AsRef<[u32]>>(&self, seqs: &[S]) -> crate::Result<(T, Vec<T>)> {
        let packed = Packed::new(seqs);
        packed.validate(self.config().vocab_size, self.config().max_seq_len)?;
        let mut grad = vec![T::zero(); self.n_params()];
        let loss = self.backward_into(&packed, &mut grad)?;
        Ok((loss, grad))
    }

    pub(crate) fn backward_into(&self, packed: &Packed, grad: &mut [T]) -> crate::Result<T> {
        let cfg = *self.config();
        let lay = self.layout().clone();
        let (out, rows, next, logits) = self.train_forward(packed);
        if next.is_empty() {
            return Err(crate::Error::SequenceTooShort(
                "no next-token targets".into(),
            ));
        }
        let (loss, mut dlogits) = cross_entropy(&logits, &next);
        dlogits.mapv_inplace(|v| v / T::lit(next.len() as f64));

        // Unembedding.
        let h_sel = out.h_final.select(Axis(0), &rows);
        general_mat_mul(
            T::one(),
            &h_sel.t(),
            &dlogits,
            T::one(),
            &mut view2_mut(grad, lay.w_out),
        );
        let dh_sel = dlogits.dot(&self.mat(lay.w_out).t());
        let mut dh = Array2::<T>::zeros(out.h_final.raw_dim());
        for (i, &r) in rows.iter().enumerate() {
            dh.row_mut(r).assign(&dh_sel.row(i));
        }
        let mut dx = Array2::<T>::zeros(out.x_final.raw_dim());
        rms_norm_backward(
            &out.x_final,
            &out.r_final,
            self.vec(lay.final_norm),
            &dh,
            &mut view1_mut(grad, lay.final_norm),
            &mut dx,
        );

        for (layer, cache) in out.layers.iter().enumerate().rev() {
            let w = &lay.layers[layer];
            // FFN: x_out = x_mid + (silu(g) * u) W_down
            general_mat_mul(
                T::one(),
                &cache.act.t(),
                &dx,
                T::one(),
                &mut view2_mut(grad, w.w_down),
            );
            let dact = dx.dot(&self.mat(w.w_down).t());
            let mut dg = dact.clone();
            let mut du = dact;
            Zip::from(&mut dg)
                .and(&mut du)
                .and(&cache.g)
                .and(&cache.u)
                .for_each(|dgv, duv, &gv, &uv| {
                    let sg = sigmoid(gv);
                    let a = *dgv;
                    *duv = a * gv * sg;
                    *dgv = a * uv * sg * (T::one() + gv * (T::one() - sg));
                });
            general_mat_mul(
                T::one(),
                &cache.h2.t(),
                &dg,
                T::one(),
                &mut view2_mut(grad, w.w_gate),
            );
            general_mat_mul(
                T::one(),
                &cache.h2.t(),
                &du,
                T::one(),
                &mut view2_mut(grad, w.w_up),
            );
            let mut dh2 = dg.dot(&self.mat(w.w_gate).t());
            general_mat_mul(T::one(), &du, &self.mat(w.w_up).t(), T::one(), &mut dh2);
            let mut dx_mid = dx;
            rms_norm_backward(
                &cache.x_mid,
                &cache.r2,
                self.vec(w.ffn_norm),
                &dh2,
                &mut view1_mut(grad, w.ffn_norm),
                &mut dx_mid,
            );

            // Attention: x_mid = x_in + ctx W_o
            general_mat_mul(
                T::one(),
                &cache.ctx.t(),
                &dx_mid,
                T::one(),
                &mut view2_mut(grad, w.wo),
            );
            let dctx = dx_mid.dot(&self.mat(w.wo).t());
            let (dq, dk, dv) = attention_backward(cache, &dctx, packed, cfg.n_heads);
            general_mat_mul(
                T::one(),
                &cache.h1.t(),
                &dq,
                T::one(),
                &mut view2_mut(grad, w.wq),
            );
            general_mat_mul(
                T::one(),
                &cache.h1.t(),
                &dk,
                T::one(),
                &mut view2_mut(grad, w.wk),
            );
            general_mat_mul(
                T::one(),
                &cache.h1.t(),
                &dv,
                T::one(),
                &mut view2_mut(grad, w.wv),
            );
            let mut dh1 = dq.dot(&self.mat(w.wq).t());
            general_mat_mul(T::one(), &dk, &self.mat(w.wk).t(), T::one(), &mut dh1);
            general_mat_mul(T::one(), &dv, &self.mat(w.wv).t(), T::one(), &mut dh1);
            let mut dx_in = dx_mid;
            rms_norm_backward(
                &cache.x_in,
                &cache.r1,
                self.vec(w.attn_norm),
                &dh1,
                &mut view1_mut(grad, w.attn_norm),
                &mut dx_in,
            );
            dx = dx_in;
        }

        // Embeddings.
        for sidx in 0..packed.n_seqs() {
            let (a, b) = packed.span(sidx);
            for (p, row) in (a..b).enumerate() {
                let t = packed.tokens[row] as usize;
                let src = dx.row(row);
                let tok = lay.tok_emb.offset + t * cfg.d_model;
                let pos = lay.pos_emb.offset + p * cfg.d_model;
                for (c, &g) in src.iter().enumerate() {
                    grad[tok + c] += g;
                    grad[pos + c] += g;
                }
            }
        }
        Ok(loss)
    }
}
