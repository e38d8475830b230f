use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::eval::EvalOutcome;
use crate::error::{Error, Result};
use crate::world::World;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResilienceGroups {
    pub relation: String,
    /// Correct before and after masking.
    pub resilient: Vec<String>,
    /// Correct before, wrong after.
    pub sensitive: Vec<String>,
    pub mean_weight_resilient: Option<f64>,
    pub mean_weight_sensitive: Option<f64>,
    /// `(sensitive - resilient) / sensitive` over mean frequency weights;
    /// negative when resilient facts are the more frequent ones.
    pub relative_diff: Option<f64>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Groups facts by whether they survive masking and compares their corpus
/// frequency weights. Outcome lists must be aligned prompt for prompt.
pub fn resilience_groups(
    before: &[EvalOutcome],
    after: &[EvalOutcome],
    world: &World,
) -> Result<BTreeMap<String, ResilienceGroups>> {
    if before.len() != after.len() {
        return Err(Error::Invalid("outcome lists differ in length".into()));
    }
    let mut weights: BTreeMap<(&str, String), f64> = BTreeMap::new();
    for (rel, ts) in &world.triples {
        for t in ts {
            weights.insert((rel.as_str(), world.surface(t.subject)), t.frequency_weight);
        }
    }
    // relation -> (resilient subjects, their weights, sensitive subjects, their weights)
    #[allow(clippy::type_complexity)]
    let mut groups: BTreeMap<String, (Vec<String>, Vec<f64>, Vec<String>, Vec<f64>)> =
        BTreeMap::new();
    for (b, a) in before.iter().zip(after) {
        if b.prompt.relation != a.prompt.relation || b.prompt.subject != a.prompt.subject {
            return Err(Error::Invalid(format!(
                "outcomes not aligned: `{}` vs `{}`",
                b.prompt.text, a.prompt.text
            )));
        }
        let rel = &b.prompt.relation;
        let entry = groups.entry(rel.clone()).or_default();
        if !b.correct {
            continue;
        }
        let w = *weights
            .get(&(rel.as_str(), b.prompt.subject.clone()))
            .ok_or_else(|| {
                Error::Invalid(format!("no fact for `{}` in `{rel}`", b.prompt.subject))
            })?;
        if a.correct {
            entry.0.push(b.prompt.subject.clone());
            entry.1.push(w);
        } else {
            entry.2.push(b.prompt.subject.clone());
            entry.3.push(w);
        }
    }
    Ok(groups
        .into_iter()
        .map(|(rel, (resilient, wr, sensitive, ws))| {
            let (mr, ms) = (mean(&wr), mean(&ws));
            let relative_diff = match (mr, ms) {
                (Some(a), Some(b)) if b != 0.0 => Some((b - a) / b),
                _ => None,
            };
            let g = ResilienceGroups {
                relation: rel.clone(),
                resilient,
                sensitive,
                mean_weight_resilient: mr,
                mean_weight_sensitive: ms,
                relative_diff,
            };
            (rel, g)
        })
        .collect())
}
