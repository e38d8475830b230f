use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{average_precision, ActivationMatrix};
use crate::error::{Error, Result};
use crate::tinylm::{NeuronId, SuppressionMask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub neuron: NeuronId,
    pub ap: f64,
}

/// Per-neuron AP for one relation or concept, best first; ties keep
/// enumeration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronRanking {
    pub target: String,
    pub entries: Vec<RankEntry>,
}

impl NeuronRanking {
    pub fn from_scores(target: impl Into<String>, neurons: &[NeuronId], aps: &[f64]) -> Self {
        let mut entries: Vec<RankEntry> = neurons
            .iter()
            .zip(aps)
            .map(|(&neuron, &ap)| RankEntry { neuron, ap })
            .collect();
        entries.sort_by(|a, b| b.ap.total_cmp(&a.ap).then(a.neuron.cmp(&b.neuron)));
        NeuronRanking {
            target: target.into(),
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_sorted(&self) -> bool {
        self.entries
            .windows(2)
            .all(|w| w[0].ap > w[1].ap || (w[0].ap == w[1].ap && w[0].neuron < w[1].neuron))
    }

    fn enumeration(&self) -> BTreeSet<NeuronId> {
        self.entries.iter().map(|e| e.neuron).collect()
    }
}

/// AP of every column against the labels, computed column-parallel. Each
/// column is independent, so the result is the same for any thread count.
pub fn score_all(target: impl Into<String>, matrix: &ActivationMatrix) -> Result<NeuronRanking> {
    matrix.validate_for_scoring()?;
    let aps: Vec<f64> = (0..matrix.n_neurons())
        .into_par_iter()
        .map(|m| average_precision(&matrix.column(m), &matrix.labels))
        .collect::<Result<_>>()?;
    Ok(NeuronRanking::from_scores(target, &matrix.neuron_ids, &aps))
}

/// The first `k` neurons of the ranking.
pub fn top_k(ranking: &NeuronRanking, k: usize) -> Result<Vec<NeuronId>> {
    if k == 0 || k > ranking.len() {
        return Err(Error::KOutOfRange {
            k,
            n: ranking.len(),
        });
    }
    Ok(ranking.entries[..k].iter().map(|e| e.neuron).collect())
}

/// Suppression mask of the top `k` neurons; `k = 0` gives the empty mask.
pub fn top_k_mask(ranking: &NeuronRanking, k: usize) -> Result<SuppressionMask> {
    if k == 0 {
        return Ok(SuppressionMask::empty());
    }
    Ok(top_k(ranking, k)?.into_iter().collect())
}

/// `cell[i][j] = |top_k(i) ∩ top_k(j)|`.
pub fn overlap_matrix(rankings: &[NeuronRanking], k: usize) -> Result<Vec<Vec<usize>>> {
    if let Some(first) = rankings.first() {
        let base = first.enumeration();
        for r in &rankings[1..] {
            if r.len() != first.len() || r.enumeration() != base {
                return Err(Error::MismatchedEnumeration);
            }
        }
    }
    let sets: Vec<BTreeSet<NeuronId>> = rankings
        .iter()
        .map(|r| top_k(r, k).map(|v| v.into_iter().collect()))
        .collect::<Result<_>>()?;
    Ok(sets
        .iter()
        .map(|a| sets.iter().map(|b| a.intersection(b).count()).collect())
        .collect())
}

/// Number of top-`k` neurons per layer; the length covers every layer that
/// appears anywhere in the ranking.
pub fn layer_histogram(ranking: &NeuronRanking, k: usize) -> Result<Vec<usize>> {
    let n_layers = ranking
        .entries
        .iter()
        .map(|e| e.neuron.layer as usize + 1)
        .max()
        .unwrap_or(0);
    let mut hist = vec![0; n_layers];
    for id in top_k(ranking, k)? {
        hist[id.layer as usize] += 1;
    }
    Ok(hist)
}

/// |A ∩ B| / |A ∪ B| of two top-k sets; used for seed-stability reports.
pub fn jaccard(a: &[NeuronId], b: &[NeuronId]) -> f64 {
    let a: BTreeSet<_> = a.iter().collect();
    let b: BTreeSet<_> = b.iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}
