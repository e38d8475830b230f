use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probes::{continuations, is_correct_text, PromptInstance};
use crate::scalar::Scalar;
use crate::tinylm::{neuron_index, ModelConfig, NeuronKind, SuppressionMask, TinyLm, Tokenizer};

/// One masked (or unmasked) generation and its verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub prompt: PromptInstance,
    pub predicted_tokens: Vec<u32>,
    pub predicted_text: String,
    pub correct: bool,
    pub mask_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mask_id: String,
    pub outcomes: Vec<EvalOutcome>,
    pub accuracy: f64,
}

impl Evaluation {
    pub fn from_outcomes(mask_id: impl Into<String>, outcomes: Vec<EvalOutcome>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::Config("evaluation needs at least one prompt".into()));
        }
        let correct = outcomes.iter().filter(|o| o.correct).count();
        Ok(Evaluation {
            mask_id: mask_id.into(),
            accuracy: correct as f64 / outcomes.len() as f64,
            outcomes,
        })
    }

    pub fn n_correct(&self) -> usize {
        self.outcomes.iter().filter(|o| o.correct).count()
    }
}

/// Greedy 2-token generation for every prompt under `mask`.
pub fn evaluate<T: Scalar>(
    model: &TinyLm<T>,
    tokenizer: &Tokenizer,
    prompts: &[PromptInstance],
    mask: &SuppressionMask,
    mask_id: &str,
) -> Result<Evaluation> {
    if prompts.is_empty() {
        return Err(Error::Config("evaluation needs at least one prompt".into()));
    }
    let preds = continuations(model, tokenizer, prompts, mask)?;
    let outcomes = prompts
        .iter()
        .zip(preds)
        .map(|(p, (ids, text))| EvalOutcome {
            correct: is_correct_text(&text, &p.object),
            prompt: p.clone(),
            predicted_tokens: ids,
            predicted_text: text,
            mask_id: mask_id.to_string(),
        })
        .collect();
    Evaluation::from_outcomes(mask_id, outcomes)
}

/// Per-relation evaluation, in relation order.
pub fn evaluate_all<T: Scalar>(
    model: &TinyLm<T>,
    tokenizer: &Tokenizer,
    prompts: &BTreeMap<String, Vec<PromptInstance>>,
    mask: &SuppressionMask,
    mask_id: &str,
) -> Result<BTreeMap<String, Evaluation>> {
    prompts
        .iter()
        .map(|(r, ps)| Ok((r.clone(), evaluate(model, tokenizer, ps, mask, mask_id)?)))
        .collect()
}

/// A prediction produced elsewhere (for example by an external model),
/// scored with the same correctness rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub relation: String,
    pub subject: String,
    pub object: String,
    pub text: String,
    pub predicted_tokens: Vec<u32>,
    pub predicted_text: String,
    #[serde(default)]
    pub mask_id: String,
}

pub fn evaluate_offline(predictions: &[Prediction]) -> Result<BTreeMap<String, Evaluation>> {
    let mut by_rel: BTreeMap<String, Vec<EvalOutcome>> = BTreeMap::new();
    for p in predictions {
        if p.predicted_tokens.len() != 2 {
            return Err(Error::Invalid(format!(
                "prediction for `{}` has {} tokens, expected 2",
                p.text,
                p.predicted_tokens.len()
            )));
        }
        by_rel
            .entry(p.relation.clone())
            .or_default()
            .push(EvalOutcome {
                prompt: PromptInstance {
                    relation: p.relation.clone(),
                    subject: p.subject.clone(),
                    object: p.object.clone(),
                    text: p.text.clone(),
                    split: crate::probes::Split::Eva,
                },
                predicted_tokens: p.predicted_tokens.clone(),
                predicted_text: p.predicted_text.clone(),
                correct: is_correct_text(&p.predicted_text, &p.object),
                mask_id: p.mask_id.clone(),
            });
    }
    by_rel
        .into_iter()
        .map(|(r, o)| {
            let id = o[0].mask_id.clone();
            Ok((r, Evaluation::from_outcomes(id, o)?))
        })
        .collect()
}

/// `(orig - masked) / orig`; `None` when the baseline is zero.
pub fn accuracy_drop(acc_original: f64, acc_masked: f64) -> Option<f64> {
    (acc_original > 0.0).then(|| (acc_original - acc_masked) / acc_original)
}

/// `k` neurons drawn uniformly from the enumeration of `kinds`.
pub fn random_mask(
    config: &ModelConfig,
    kinds: &BTreeSet<NeuronKind>,
    k: usize,
    seed: u64,
) -> Result<SuppressionMask> {
    let ids = neuron_index(config, kinds);
    if k > ids.len() {
        return Err(Error::KOutOfRange { k, n: ids.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample(&mut rng, ids.len(), k)
        .into_iter()
        .map(|i| ids[i])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drop_formula() {
        assert_eq!(accuracy_drop(0.8, 0.4), Some(0.5));
        assert_eq!(accuracy_drop(0.8, 0.8), Some(0.0));
        assert!((accuracy_drop(0.5, 0.6).unwrap() + 0.2).abs() < 1e-15);
        assert_eq!(accuracy_drop(0.0, 0.3), None);
    }

    #[test]
    fn random_masks_are_seeded() {
        let cfg = ModelConfig::desk(50, 8);
        let kinds: BTreeSet<_> = NeuronKind::FFN.into_iter().collect();
        let a = random_mask(&cfg, &kinds, 26, 3).unwrap();
        assert_eq!(a.len(), 26);
        assert_eq!(a, random_mask(&cfg, &kinds, 26, 3).unwrap());
        assert_ne!(a, random_mask(&cfg, &kinds, 26, 4).unwrap());
        assert!(random_mask(&cfg, &kinds, 1_000_000, 0).is_err());
    }

    #[test]
    fn offline_scoring() {
        let p = |obj: &str, pred: &str| Prediction {
            relation: "r".into(),
            subject: "S".into(),
            object: obj.into(),
            text: "the x of S is".into(),
            predicted_tokens: vec![1, 2],
            predicted_text: pred.into(),
            mask_id: "none".into(),
        };
        let e =
            evaluate_offline(&[p("Jensen Huang", "Jensen Hu"), p("Paris", "Parisian")]).unwrap();
        assert_eq!(e["r"].accuracy, 0.5);
        let mut bad = p("A", "A");
        bad.predicted_tokens.pop();
        assert!(evaluate_offline(&[bad]).is_err());
    }
}
