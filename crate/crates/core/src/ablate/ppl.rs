use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probes::{TemplateSet, OBJECT_SLOT};
use crate::scalar::Scalar;
use crate::tinylm::{SuppressionMask, TinyLm, Tokenizer};
use crate::world::World;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PplPair {
    pub before: f64,
    pub after: f64,
}

/// Each distinct object of `relation` placed at the end of every neutral pattern.
pub fn neutral_sentences(
    world: &World,
    templates: &TemplateSet,
    relation: &str,
) -> Result<Vec<String>> {
    if world.relation(relation).is_none() {
        return Err(Error::Config(format!("unknown relation `{relation}`")));
    }
    let mut objects: Vec<u32> = world
        .triples_of(relation)
        .iter()
        .map(|t| t.object)
        .collect();
    objects.sort_unstable();
    objects.dedup();
    Ok(objects
        .into_iter()
        .flat_map(|o| {
            let surface = world.surface(o);
            templates
                .neutral
                .iter()
                .map(move |n| n.replace(OBJECT_SLOT, &surface))
        })
        .collect())
}

/// Mean sentence perplexity without and with `mask`.
pub fn ppl_delta<T: Scalar>(
    model: &TinyLm<T>,
    tokenizer: &Tokenizer,
    sentences: &[String],
    mask: &SuppressionMask,
) -> Result<PplPair> {
    if sentences.is_empty() {
        return Err(Error::Config("no sentences for perplexity".into()));
    }
    let empty = SuppressionMask::empty();
    let (mut before, mut after) = (0.0, 0.0);
    for s in sentences {
        let ids = tokenizer.encode_prompt(s)?;
        before += model.perplexity(&ids, &empty)?;
        after += model.perplexity(&ids, mask)?;
    }
    let n = sentences.len() as f64;
    Ok(PplPair {
        before: before / n,
        after: after / n,
    })
}

/// `ppl_delta` for each relation's neutral sentences under that relation's mask.
pub fn ppl_by_relation<T: Scalar>(
    model: &TinyLm<T>,
    tokenizer: &Tokenizer,
    world: &World,
    templates: &TemplateSet,
    masks: &BTreeMap<String, SuppressionMask>,
) -> Result<BTreeMap<String, PplPair>> {
    masks
        .iter()
        .map(|(rel, mask)| {
            let sentences = neutral_sentences(world, templates, rel)?;
            Ok((rel.clone(), ppl_delta(model, tokenizer, &sentences, mask)?))
        })
        .collect()
}
