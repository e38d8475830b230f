use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::templates::{TemplateSet, Variant};
use crate::error::{Error, Result};
use crate::tinylm::Tokenizer;
use crate::world::{SplitTriples, Triple, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Det,
    Eva,
    Eva2,
    /// Concept-grouped prompts, outside the det/eva protocol.
    Concept,
}

/// One rendered prompt. Subject and object are surface forms; `relation`
/// holds the concept name for concept prompts, whose object is empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub relation: String,
    pub subject: String,
    pub object: String,
    pub text: String,
    pub split: Split,
}

impl PromptInstance {
    pub fn encode(&self, tokenizer: &Tokenizer) -> Result<Vec<u32>> {
        tokenizer.encode_prompt(&self.text)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RenderedPrompts {
    pub det: BTreeMap<String, Vec<PromptInstance>>,
    pub eva: BTreeMap<String, Vec<PromptInstance>>,
    /// `eva` rendered with the alternate template; empty for relations without one.
    pub eva2: BTreeMap<String, Vec<PromptInstance>>,
}

fn contains_words(haystack: &str, needle: &str) -> bool {
    let h: Vec<&str> = haystack.split_whitespace().collect();
    let n: Vec<&str> = needle.split_whitespace().collect();
    !n.is_empty() && h.windows(n.len()).any(|w| w == n.as_slice())
}

fn render_one(
    world: &World,
    templates: &TemplateSet,
    triple: &Triple,
    variant: Variant,
    split: Split,
) -> Result<PromptInstance> {
    let template = templates.prompt(&triple.relation, variant).ok_or_else(|| {
        Error::Template(format!(
            "no {variant:?} prompt template for relation `{}`",
            triple.relation
        ))
    })?;
    let subject = world.surface(triple.subject);
    let object = world.surface(triple.object);
    let text = template.render(&subject);
    if contains_words(&text, &object) {
        return Err(Error::ObjectLeak { object, text });
    }
    Ok(PromptInstance {
        relation: triple.relation.clone(),
        subject,
        object,
        text,
        split,
    })
}

/// Renders det and eva prompts with the primary template and eva2 with the
/// alternate one, one instance per triple in split order.
pub fn render_prompts(
    world: &World,
    templates: &TemplateSet,
    splits: &BTreeMap<String, SplitTriples>,
) -> Result<RenderedPrompts> {
    let mut out = RenderedPrompts::default();
    for (rel, split) in splits {
        if world.relation(rel).is_none() {
            return Err(Error::Template(format!(
                "split for unknown relation `{rel}`"
            )));
        }
        let render = |ts: &[Triple], v: Variant, s: Split| -> Result<Vec<PromptInstance>> {
            ts.iter()
                .map(|t| render_one(world, templates, t, v, s))
                .collect()
        };
        out.det.insert(
            rel.clone(),
            render(&split.det, Variant::Primary, Split::Det)?,
        );
        out.eva.insert(
            rel.clone(),
            render(&split.eva, Variant::Primary, Split::Eva)?,
        );
        if templates.prompt(rel, Variant::Alternate).is_some() {
            out.eva2.insert(
                rel.clone(),
                render(&split.eva, Variant::Alternate, Split::Eva2)?,
            );
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_world, split_det_eva, WorldConfig};

    fn fixture() -> (World, TemplateSet, BTreeMap<String, SplitTriples>) {
        let cfg = WorldConfig::default();
        let world = generate_world(&cfg, 3).unwrap();
        let templates = TemplateSet::default_for(&cfg);
        let splits = world
            .relation_names()
            .into_iter()
            .map(|r| {
                let s = split_det_eva(world.triples_of(r), 50, 9).unwrap();
                (r.to_string(), s)
            })
            .collect();
        (world, templates, splits)
    }

    #[test]
    fn one_instance_per_triple() {
        let (world, templates, splits) = fixture();
        let p = render_prompts(&world, &templates, &splits).unwrap();
        for (rel, s) in &splits {
            assert_eq!(p.det[rel].len(), s.det.len());
            assert_eq!(p.eva[rel].len(), 50);
            for (i, t) in s.eva.iter().enumerate() {
                let (e, e2) = (&p.eva[rel][i], &p.eva2[rel][i]);
                assert_eq!(e.subject, world.surface(t.subject));
                assert_eq!((&e.subject, &e.object), (&e2.subject, &e2.object));
                assert_ne!(e.text, e2.text);
                assert!(e.text.contains(&e.subject));
            }
        }
    }

    #[test]
    fn object_leak_is_fatal() {
        let (world, mut templates, splits) = fixture();
        let rel = "company_ceo";
        let obj = world.surface(splits[rel].det[0].object);
        let p = templates
            .prompts
            .iter_mut()
            .find(|p| p.relation_or_concept == rel && p.variant_tag == Variant::Primary)
            .unwrap();
        p.text_pattern = format!("{obj} knows {{s}}");
        assert!(matches!(
            render_prompts(&world, &templates, &splits),
            Err(Error::ObjectLeak { .. })
        ));
    }

    #[test]
    fn missing_template_is_an_error() {
        let (world, mut templates, splits) = fixture();
        templates
            .prompts
            .retain(|p| p.relation_or_concept != "city_language");
        assert!(matches!(
            render_prompts(&world, &templates, &splits),
            Err(Error::Template(_))
        ));
    }

    #[test]
    fn word_level_containment() {
        assert!(contains_words("the ceo of Bal Ko is", "Bal Ko"));
        assert!(!contains_words("the ceo of Balko is", "Bal"));
        assert!(!contains_words("the ceo of Bal is", "Bal Ko"));
    }
}
