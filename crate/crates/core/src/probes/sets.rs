use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::correctness::is_correct_text;
use super::prompts::{PromptInstance, Split};
use super::templates::{PromptTemplate, TemplateSet, Variant};
use crate::error::{Error, Result};
use crate::expert::ActivationMatrix;
use crate::scalar::Scalar;
use crate::tinylm::{NeuronTapSpec, SuppressionMask, TinyLm, Tokenizer, BOS, EOS};
use crate::world::World;

/// Specials first, then template words, then entity words in entity order.
pub fn build_tokenizer(world: &World, templates: &TemplateSet) -> Result<Tokenizer> {
    let mut tokens = vec![BOS.to_string(), EOS.to_string()];
    tokens.extend(templates.words());
    tokens.extend(world.vocabulary.iter().cloned());
    Tokenizer::new(tokens)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub prompt: PromptInstance,
    pub predicted: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// relation -> (kept, total)
    pub survivors: BTreeMap<String, (usize, usize)>,
    pub rejections: Vec<Rejection>,
}

impl ValidationReport {
    pub fn empty_relations(&self) -> Vec<&str> {
        self.survivors
            .iter()
            .filter(|(_, (kept, _))| *kept == 0)
            .map(|(r, _)| r.as_str())
            .collect()
    }
}

/// Greedy 2-token continuation of every prompt, decoded to text.
pub fn continuations<T: Scalar>(
    model: &TinyLm<T>,
    tokenizer: &Tokenizer,
    prompts: &[PromptInstance],
    mask: &SuppressionMask,
) -> Result<Vec<(Vec<u32>, String)>> {
    let encoded: Vec<Vec<u32>> = prompts
        .iter()
        .map(|p| p.encode(tokenizer))
        .collect::<Result<_>>()?;
    if encoded.is_empty() {
        return Ok(Vec::new());
    }
    let out = model.generate_batch(&encoded, 2, mask)?;
    out.into_iter()
        .map(|ids| {
            let text = tokenizer.decode(&ids)?;
            Ok((ids, text))
        })
        .collect()
}

/// Keeps the prompts the model answers correctly under `mask`.
pub fn validate_prompts<T: Scalar>(
    model: &TinyLm<T>,
    tokenizer: &Tokenizer,
    prompts: &BTreeMap<String, Vec<PromptInstance>>,
    mask: &SuppressionMask,
) -> Result<(BTreeMap<String, Vec<PromptInstance>>, ValidationReport)> {
    let mut kept = BTreeMap::new();
    let mut report = ValidationReport::default();
    for (rel, ps) in prompts {
        let preds = continuations(model, tokenizer, ps, mask)?;
        let mut good = Vec::new();
        for (p, (_, text)) in ps.iter().zip(preds) {
            if is_correct_text(&text, &p.object) {
                good.push(p.clone());
            } else {
                report.rejections.push(Rejection {
                    prompt: p.clone(),
                    predicted: text,
                });
            }
        }
        report.survivors.insert(rel.clone(), (good.len(), ps.len()));
        kept.insert(rel.clone(), good);
    }
    Ok((kept, report))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub prompt: PromptInstance,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExampleSet {
    pub relation_or_concept: String,
    pub examples: Vec<LabeledExample>,
    pub seed: u64,
    pub ratio: usize,
    /// Negatives requested but unavailable.
    pub shortfall: usize,
}

impl LabeledExampleSet {
    pub fn n_positive(&self) -> usize {
        self.examples.iter().filter(|e| e.label == 1).count()
    }

    pub fn n_negative(&self) -> usize {
        self.examples.len() - self.n_positive()
    }

    /// Positives only; every neuron would score AP 1, so such sets are not scored.
    pub fn is_degenerate(&self) -> bool {
        self.n_negative() == 0
    }

    pub fn labels(&self) -> Vec<bool> {
        self.examples.iter().map(|e| e.label == 1).collect()
    }

    /// Runs the model over every example and token-averages the tapped outputs.
    pub fn capture<T: Scalar>(
        &self,
        model: &TinyLm<T>,
        tokenizer: &Tokenizer,
        tap: &NeuronTapSpec,
    ) -> Result<ActivationMatrix> {
        let encoded: Vec<Vec<u32>> = self
            .examples
            .iter()
            .map(|e| e.prompt.encode(tokenizer))
            .collect::<Result<_>>()?;
        let rows = model.capture_means(&encoded, tap, &SuppressionMask::empty())?;
        let ids = crate::tinylm::neuron_index(model.config(), &tap.kinds);
        let labeled: Vec<(&[f32], bool)> =
            rows.iter().map(Vec::as_slice).zip(self.labels()).collect();
        ActivationMatrix::from_rows(ids, &labeled)
    }
}

fn sample_without_replacement<P: Clone>(pool: &[P], n: usize, rng: &mut ChaCha8Rng) -> Vec<P> {
    let mut idx = sample(rng, pool.len(), n.min(pool.len())).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| pool[i].clone()).collect()
}

/// Target's det prompts as positives, plus `ratio` times as many negatives
/// drawn uniformly from the pooled det prompts of every other relation.
pub fn build_labeled_set(
    target: &str,
    validated: &BTreeMap<String, Vec<PromptInstance>>,
    ratio: usize,
    seed: u64,
) -> Result<LabeledExampleSet> {
    let positives = validated
        .get(target)
        .filter(|p| !p.is_empty())
        .ok_or_else(|| Error::Config(format!("relation `{target}` has no validated prompts")))?;
    let pool: Vec<&PromptInstance> = validated
        .iter()
        .filter(|(r, _)| r.as_str() != target)
        .flat_map(|(_, ps)| ps)
        .collect();
    let wanted = ratio * positives.len();
    if wanted > 0 && pool.is_empty() {
        return Err(Error::NoNegatives(target.to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let negatives = sample_without_replacement(&pool, wanted, &mut rng);
    let shortfall = wanted - negatives.len();
    let mut examples: Vec<LabeledExample> = positives
        .iter()
        .map(|p| LabeledExample {
            prompt: p.clone(),
            label: 1,
        })
        .collect();
    examples.extend(negatives.into_iter().map(|p| LabeledExample {
        prompt: p.clone(),
        label: 0,
    }));
    Ok(LabeledExampleSet {
        relation_or_concept: target.to_string(),
        examples,
        seed,
        ratio,
        shortfall,
    })
}

fn concept_prompts(
    world: &World,
    concept: &str,
    patterns: &[PromptTemplate],
) -> Vec<PromptInstance> {
    let ids = world
        .entities
        .get(concept)
        .map(Vec::as_slice)
        .unwrap_or(&[]);
    ids.iter()
        .flat_map(|&id| {
            let subject = world.surface(id);
            patterns.iter().map(move |t| PromptInstance {
                relation: concept.to_string(),
                subject: subject.clone(),
                object: String::new(),
                text: t.render(&subject),
                split: Split::Concept,
            })
        })
        .collect()
}

/// Every entity of `target` under every concept pattern, labeled 1, against
/// an equal number of prompts drawn from the other concepts' entities.
pub fn build_concept_set(
    target: &str,
    world: &World,
    patterns: &[String],
    seed: u64,
) -> Result<LabeledExampleSet> {
    let concepts = world.concepts();
    if concepts.len() < 2 {
        return Err(Error::Config(
            "concept sets need at least two concepts".into(),
        ));
    }
    if !concepts.contains(&target) {
        return Err(Error::UnknownConcept(target.to_string()));
    }
    let templates: Vec<PromptTemplate> = patterns
        .iter()
        .map(|p| PromptTemplate::new(target, p.clone(), Variant::Primary))
        .collect::<Result<_>>()?;
    if templates.is_empty() {
        return Err(Error::Template("no concept prompt patterns".into()));
    }
    let positives = concept_prompts(world, target, &templates);
    if positives.is_empty() {
        return Err(Error::Config(format!("concept `{target}` has no entities")));
    }
    let pool: Vec<PromptInstance> = concepts
        .iter()
        .filter(|&&c| c != target)
        .flat_map(|&c| concept_prompts(world, c, &templates))
        .collect();
    if pool.is_empty() {
        return Err(Error::NoNegatives(target.to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let negatives = sample_without_replacement(&pool, positives.len(), &mut rng);
    let shortfall = positives.len() - negatives.len();
    let examples = positives
        .into_iter()
        .map(|prompt| LabeledExample { prompt, label: 1 })
        .chain(
            negatives
                .into_iter()
                .map(|prompt| LabeledExample { prompt, label: 0 }),
        )
        .collect();
    Ok(LabeledExampleSet {
        relation_or_concept: target.to_string(),
        examples,
        seed,
        ratio: 1,
        shortfall,
    })
}
