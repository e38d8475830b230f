use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Average precision of `scores` as a ranking of `labels`.
///
/// Scores are visited in descending order and equal scores form a single
/// threshold group, so the result does not depend on input order:
/// after each group with cumulative `tp`/`fp`,
/// `ap += (group_tp / P) * tp / (tp + fp)`.
/// Accumulation is in `f64` whatever the score type.
pub fn average_precision<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<(f64, bool)> = Vec::with_capacity(scores.len());
    for (i, (&s, &l)) in scores.iter().zip(labels).enumerate() {
        let s = s.as_f64();
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("score {i}")));
        }
        order.push((s, l));
    }
    order.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
    Ok(grouped_ap(&order, positives))
}

/// `sorted` must be descending by score.
pub(crate) fn grouped_ap(sorted: &[(f64, bool)], positives: usize) -> f64 {
    let p = positives as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut ap = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].0;
        let (mut gtp, mut gfp) = (0usize, 0usize);
        while i < sorted.len() && sorted[i].0 == score {
            if sorted[i].1 {
                gtp += 1;
            } else {
                gfp += 1;
            }
            i += 1;
        }
        tp += gtp;
        fp += gfp;
        if gtp > 0 {
            ap += (gtp as f64 / p) * (tp as f64 / (tp + fp) as f64);
        }
    }
    ap
}
