use ndarray::ArrayView1;
use rayon::prelude::*;

use super::forward::{Packed, BATCH_CHUNK};
use super::{SuppressionMask, TinyLm};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax_lowest<T: Scalar>(row: ArrayView1<T>) -> u32 {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best as u32
}

impl<T: Scalar> TinyLm<T> {
    /// Greedy decoding of `max_new` tokens with the mask applied at every step.
    pub fn generate(
        &self,
        prompt: &[u32],
        max_new: usize,
        mask: &SuppressionMask,
    ) -> Result<Vec<u32>> {
        Ok(self
            .generate_batch(&[prompt], max_new, mask)?
            .pop()
            .expect("one prompt"))
    }

    /// Greedy decoding for many prompts. Prompts are processed in fixed-size
    /// chunks, so results do not depend on the rayon thread count.
    pub fn generate_batch<S: AsRef<[u32]> + Sync>(
        &self,
        prompts: &[S],
        max_new: usize,
        mask: &SuppressionMask,
    ) -> Result<Vec<Vec<u32>>> {
        if max_new == 0 {
            return Err(Error::Config("max_new must be at least 1".into()));
        }
        if prompts.iter().any(|p| p.as_ref().is_empty()) {
            return Err(Error::EmptyPrompt);
        }
        let max_len = self.config().max_seq_len;
        if let Some(p) = prompts
            .iter()
            .find(|p| p.as_ref().len() + max_new - 1 > max_len)
        {
            return Err(Error::SequenceTooLong {
                len: p.as_ref().len() + max_new - 1,
                max: max_len,
            });
        }
        mask.validate(self.config())?;
        let chunks: Vec<Result<Vec<Vec<u32>>>> = prompts
            .par_chunks(BATCH_CHUNK)
            .map(|chunk| self.generate_chunk(chunk, max_new, mask))
            .collect();
        let mut out = Vec::with_capacity(prompts.len());
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }

    fn generate_chunk<S: AsRef<[u32]>>(
        &self,
        prompts: &[S],
        max_new: usize,
        mask: &SuppressionMask,
    ) -> Result<Vec<Vec<u32>>> {
        let mut seqs: Vec<Vec<u32>> = prompts.iter().map(|p| p.as_ref().to_vec()).collect();
        let mut produced = vec![Vec::with_capacity(max_new); seqs.len()];
        for _ in 0..max_new {
            let packed = Packed::new(&seqs);
            let (h, _) = self.forward_packed(&packed, None, mask)?;
            let logits = self.project_rows(&h, &packed.last_rows());
            for (i, row) in logits.rows().into_iter().enumerate() {
                let t = argmax_lowest(row);
                seqs[i].push(t);
                produced[i].push(t);
            }
        }
        Ok(produced)
    }

    /// exp of the mean next-token negative log-likelihood over positions 2..n.
    pub fn perplexity(&self, tokens: &[u32], mask: &SuppressionMask) -> Result<f64> {
        if tokens.len() < 2 {
            return Err(Error::SequenceTooShort(format!(
                "perplexity needs at least 2 tokens, got {}",
                tokens.len()
            )));
        }
        let (logits, _) = self.forward(tokens, None, mask)?;
        let mut nll = 0.0;
        for (pos, &next) in tokens.iter().enumerate().skip(1) {
            let row = logits.row(pos - 1);
            let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
            let lse = max
                + row
                    .iter()
                    .map(|v| (v.as_f64() - max).exp())
                    .sum::<f64>()
                    .ln();
            nll += lse - row[next as usize].as_f64();
        }
        Ok((nll / (tokens.len() - 1) as f64).exp())
    }
}
