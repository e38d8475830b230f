use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::WorldConfig;

pub const SUBJECT_SLOT: &str = "{s}";
pub const OBJECT_SLOT: &str = "{o}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Primary,
    Alternate,
}

/// A prompt pattern: one subject slot, no object slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub relation_or_concept: String,
    pub text_pattern: String,
    pub variant_tag: Variant,
}

impl PromptTemplate {
    pub fn new(
        target: impl Into<String>,
        pattern: impl Into<String>,
        variant: Variant,
    ) -> Result<Self> {
        let t = PromptTemplate {
            relation_or_concept: target.into(),
            text_pattern: pattern.into(),
            variant_tag: variant,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let subjects = self.text_pattern.matches(SUBJECT_SLOT).count();
        if subjects != 1 {
            return Err(Error::Template(format!(
                "prompt `{}` has {subjects} subject slots, expected 1",
                self.text_pattern
            )));
        }
        if self.text_pattern.contains(OBJECT_SLOT) {
            return Err(Error::Template(format!(
                "prompt `{}` must not contain an object slot",
                self.text_pattern
            )));
        }
        Ok(())
    }

    pub fn render(&self, subject: &str) -> String {
        self.text_pattern.replace(SUBJECT_SLOT, subject)
    }
}

/// A corpus statement pattern with one subject and one object slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementTemplate {
    pub relation: String,
    pub pattern: String,
}

impl StatementTemplate {
    pub fn validate(&self) -> Result<()> {
        let s = self.pattern.matches(SUBJECT_SLOT).count();
        let o = self.pattern.matches(OBJECT_SLOT).count();
        if s != 1 || o != 1 {
            return Err(Error::Template(format!(
                "statement `{}` needs exactly one subject and one object slot (found {s}, {o})",
                self.pattern
            )));
        }
        Ok(())
    }

    pub fn render(&self, subject: &str, object: &str) -> String {
        self.pattern
            .replace(SUBJECT_SLOT, subject)
            .replace(OBJECT_SLOT, object)
    }
}

/// All text patterns of a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub statements: Vec<StatementTemplate>,
    pub prompts: Vec<PromptTemplate>,
    /// Relation-neutral prompt patterns shared by every concept.
    pub concept_prompts: Vec<String>,
    /// Patterns placing an object entity at the end of a neutral sentence.
    pub neutral: Vec<String>,
}

impl TemplateSet {
    /// Two phrasings per relation, keyed on the last `_`-separated part of the
    /// relation name: `the {kw} of {s} is {o}` and `for {s} the {kw} is {o}`.
    /// Prompts are the statements with the object removed.
    pub fn default_for(config: &WorldConfig) -> Self {
        let mut statements = Vec::new();
        let mut prompts = Vec::new();
        for r in &config.relations {
            let kw = r.name.rsplit('_').next().unwrap_or(&r.name);
            let primary = format!("the {kw} of {SUBJECT_SLOT} is");
            let alternate = format!("for {SUBJECT_SLOT} the {kw} is");
            for (p, v) in [(primary, Variant::Primary), (alternate, Variant::Alternate)] {
                statements.push(StatementTemplate {
                    relation: r.name.clone(),
                    pattern: format!("{p} {OBJECT_SLOT}"),
                });
                prompts.push(PromptTemplate {
                    relation_or_concept: r.name.clone(),
                    text_pattern: p,
                    variant_tag: v,
                });
            }
        }
        TemplateSet {
            statements,
            prompts,
            concept_prompts: vec![
                format!("{SUBJECT_SLOT} has a"),
                format!("{SUBJECT_SLOT} can"),
            ],
            neutral: vec![
                format!("we talked about {OBJECT_SLOT}"),
                format!("everyone has heard of {OBJECT_SLOT}"),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.statements {
            s.validate()?;
        }
        for p in &self.prompts {
            p.validate()?;
        }
        for c in &self.concept_prompts {
            PromptTemplate::new("concept", c.clone(), Variant::Primary)?;
        }
        for n in &self.neutral {
            if n.contains(SUBJECT_SLOT)
                || n.matches(OBJECT_SLOT).count() != 1
                || !n.trim_end().ends_with(OBJECT_SLOT)
            {
                return Err(Error::Template(format!(
                    "neutral pattern `{n}` must end with its only slot, the object"
                )));
            }
        }
        Ok(())
    }

    pub fn statements_for(&self, relation: &str) -> Vec<&StatementTemplate> {
        self.statements
            .iter()
            .filter(|s| s.relation == relation)
            .collect()
    }

    pub fn prompt(&self, relation: &str, variant: Variant) -> Option<&PromptTemplate> {
        self.prompts
            .iter()
            .find(|p| p.relation_or_concept == relation && p.variant_tag == variant)
    }

    /// Every literal word used by any pattern, sorted and deduplicated.
    pub fn words(&self) -> Vec<String> {
        let patterns = self
            .statements
            .iter()
            .map(|s| s.pattern.as_str())
            .chain(self.prompts.iter().map(|p| p.text_pattern.as_str()))
            .chain(self.concept_prompts.iter().map(String::as_str))
            .chain(self.neutral.iter().map(String::as_str));
        let mut words: Vec<String> = patterns
            .flat_map(str::split_whitespace)
            .filter(|w| *w != SUBJECT_SLOT && *w != OBJECT_SLOT)
            .map(String::from)
            .collect();
        words.sort();
        words.dedup();
        words
    }
}
