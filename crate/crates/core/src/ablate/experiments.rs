use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::eval::{accuracy_drop, evaluate, evaluate_all, Evaluation};
use crate::error::{Error, Result};
use crate::expert::{top_k, top_k_mask, NeuronRanking};
use crate::probes::PromptInstance;
use crate::scalar::Scalar;
use crate::tinylm::{SuppressionMask, TinyLm, Tokenizer};

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs
        .into_iter()
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Cell `(i, j)`: accuracy drop of relation `i` with relation `j`'s top-k masked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropMatrix {
    pub relations: Vec<String>,
    pub k: usize,
    pub baseline: Vec<f64>,
    /// `masked[i][j]`: accuracy of relation `i` under relation `j`'s mask.
    pub masked: Vec<Vec<f64>>,
    pub cells: Vec<Vec<Option<f64>>>,
}

impl DropMatrix {
    pub fn diagonal(&self) -> Vec<Option<f64>> {
        (0..self.relations.len())
            .map(|i| self.cells[i][i])
            .collect()
    }

    /// Mean of the defined off-diagonal cells of row `i`.
    pub fn off_diagonal_mean(&self, i: usize) -> Option<f64> {
        let vals: Vec<f64> = (0..self.relations.len())
            .filter(|&j| j != i)
            .filter_map(|j| self.cells[i][j])
            .collect();
        (!vals.is_empty()).then(|| mean(vals))
    }
}

pub fn drop_matrix<T: Scalar>(
    model: &TinyLm<T>,
    tokenizer: &Tokenizer,
    rankings: &[NeuronRanking],
    eva: &BTreeMap<String, Vec<PromptInstance>>,
    k: usize,
) -> Result<DropMatrix> {
    let relations: Vec<String> = rankings.iter().map(|r| r.target.clone()).collect();
    let prompts: Vec<&Vec<PromptInstance>> = relations
        .iter()
        .map(|r| {
            eva.get(r)
                .ok_or_else(|| Error::Config(format!("no eva prompts for `{r}`")))
        })
        .collect::<Result<_>>()?;
    let empty = SuppressionMask::empty();
    let baseline: Vec<f64> = prompts
        .iter()
        .map(|ps| Ok(evaluate(model, tokenizer, ps, &empty, "none")?.accuracy))
        .collect::<Result<_>>()?;
    let masks: Vec<SuppressionMask> = rankings
        .iter()
        .map(|r| top_k_mask(r, k))
        .collect::<Result<_>>()?;
    let mut masked = vec![vec![0.0; relations.len()]; relations.len()];
    for (j, mask) in masks.iter().enumerate() {
        for (i, ps) in prompts.iter().enumerate() {
            masked[i][j] = evaluate(model, tokenizer, ps, mask, &relations[j])?.accuracy;
        }
    }
    let cells = (0..relations.len())
        .map(|i| {
            (0..relations.len())
                .map(|j| accuracy_drop(baseline[i], masked[i][j]))
                .collect()
        })
        .collect();
    Ok(DropMatrix {
        relations,
        k,
        baseline,
        masked,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    pub acc_self: f64,
    pub acc_others_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub relation: String,
    pub points: Vec<SweepPoint>,
}

/// Masks the top-k prefix of `ranking` for every `k` in `ks` (strictly
/// increasing; `k = 0` is the unmasked baseline).
pub fn sweep_k<T: Scalar>(
    model: &TinyLm<T>,
    tokenizer: &Tokenizer,
    ranking: &NeuronRanking,
    eva: &BTreeMap<String, Vec<PromptInstance>>,
    ks: &[usize],
) -> Result<SweepCurve> {
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "sweep sizes must be strictly increasing".into(),
        ));
    }
    if let Some(&k) = ks.iter().find(|&&k| k > ranking.len()) {
        return Err(Error::KOutOfRange {
            k,
            n: ranking.len(),
        });
    }
    if !eva.contains_key(&ranking.target) {
        return Err(Error::Config(format!(
            "no eva prompts for `{}`",
            ranking.target
        )));
    }
    let mut points = Vec::with_capacity(ks.len());
    for &k in ks {
        let mask = top_k_mask(ranking, k)?;
        let evals = evaluate_all(model, tokenizer, eva, &mask, &format!("top{k}"))?;
        points.push(SweepPoint {
            k,
            acc_self: evals[&ranking.target].accuracy,
            acc_others_mean: mean(
                evals
                    .iter()
                    .filter(|(r, _)| **r != ranking.target)
                    .map(|(_, e)| e.accuracy),
            ),
        });
    }
    Ok(SweepCurve {
        relation: ranking.target.clone(),
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativityReport {
    pub k_small: usize,
    pub k_large: usize,
    pub n_total: usize,
    pub n_affected: usize,
    /// `1 - n_affected / n_total`; `None` when `n_total` is zero.
    pub cumulativity: Option<f64>,
}

impl CumulativityReport {
    /// Counts from aligned per-prompt verdicts under the three masks.
    pub fn from_verdicts(
        k_small: usize,
        k_large: usize,
        small: &[bool],
        large: &[bool],
        difference: &[bool],
    ) -> Result<Self> {
        if small.len() != large.len() || small.len() != difference.len() {
            return Err(Error::Invalid("verdict lists are not aligned".into()));
        }
        let mut n_total = 0;
        let mut n_affected = 0;
        for i in 0..small.len() {
            if small[i] && !large[i] {
                n_total += 1;
                if !difference[i] {
                    n_affected += 1;
                }
            }
        }
        Ok(CumulativityReport {
            k_small,
            k_large,
            n_total,
            n_affected,
            cumulativity: (n_total > 0).then(|| 1.0 - n_affected as f64 / n_total as f64),
        })
    }
}

/// Prompts broken by growing the mask from top-`k_small` to top-`k_large`,
/// and how many of them the difference set alone also breaks.
pub fn cumulativity<T: Scalar>(
    model: &TinyLm<T>,
    tokenizer: &Tokenizer,
    ranking: &NeuronRanking,
    prompts: &[PromptInstance],
    k_small: usize,
    k_large: usize,
) -> Result<CumulativityReport> {
    if k_small >= k_large {
        return Err(Error::Config(format!(
            "need k_small < k_large, got {k_small} and {k_large}"
        )));
    }
    let small = top_k_mask(ranking, k_small)?;
    let large = top_k_mask(ranking, k_large)?;
    let difference: SuppressionMask = top_k(ranking, k_large)?.into_iter().skip(k_small).collect();
    let verdicts = |mask: &SuppressionMask, id: &str| -> Result<Vec<bool>> {
        let e = evaluate(model, tokenizer, prompts, mask, id)?;
        Ok(e.outcomes.iter().map(|o| o.correct).collect())
    };
    CumulativityReport::from_verdicts(
        k_small,
        k_large,
        &verdicts(&small, "small")?,
        &verdicts(&large, "large")?,
        &verdicts(&difference, "difference")?,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemplateRobustness {
    pub eva_unmasked: f64,
    pub eva_masked: f64,
    pub eva2_unmasked: f64,
    pub eva2_masked: f64,
}

impl TemplateRobustness {
    pub fn eva_drop(&self) -> f64 {
        self.eva_unmasked - self.eva_masked
    }

    pub fn eva2_drop(&self) -> f64 {
        self.eva2_unmasked - self.eva2_masked
    }
}

/// Masked and unmasked accuracy on both template variants, per relation.
pub fn template_robustness<T: Scalar>(
    model: &TinyLm<T>,
    tokenizer: &Tokenizer,
    eva: &BTreeMap<String, Vec<PromptInstance>>,
    eva2: &BTreeMap<String, Vec<PromptInstance>>,
    masks: &BTreeMap<String, SuppressionMask>,
) -> Result<BTreeMap<String, TemplateRobustness>> {
    let empty = SuppressionMask::empty();
    let mut out = BTreeMap::new();
    for (rel, mask) in masks {
        let (Some(e), Some(e2)) = (eva.get(rel), eva2.get(rel)) else {
            return Err(Error::Config(format!(
                "missing eva or eva2 prompts for `{rel}`"
            )));
        };
        let acc = |ps: &[PromptInstance], m: &SuppressionMask| -> Result<f64> {
            Ok(evaluate(model, tokenizer, ps, m, rel)?.accuracy)
        };
        out.insert(
            rel.clone(),
            TemplateRobustness {
                eva_unmasked: acc(e, &empty)?,
                eva_masked: acc(e, mask)?,
                eva2_unmasked: acc(e2, &empty)?,
                eva2_masked: acc(e2, mask)?,
            },
        );
    }
    Ok(out)
}

/// Accuracy of one evaluation map, averaged over relations.
pub fn mean_accuracy(evals: &BTreeMap<String, Evaluation>) -> f64 {
    mean(evals.values().map(|e| e.accuracy))
}
