use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyLaw {
    Uniform,
    /// Weight of the fact at rank `r` (1-based, random order) out of `n` is
    /// `min(max_weight, (n / r)^exponent)`, so the rarest fact has weight 1.
    Zipf {
        exponent: f64,
    },
}

impl Default for FrequencyLaw {
    fn default() -> Self {
        FrequencyLaw::Zipf { exponent: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationSpec {
    pub name: String,
    pub subject_concept: String,
    pub object_concept: String,
    pub n_facts: usize,
    pub object_cardinality: usize,
    #[serde(default)]
    pub fact_frequency_law: FrequencyLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptSpec {
    pub name: String,
    pub n_entities: usize,
    /// Share of this concept's entities whose surface form is two words.
    #[serde(default)]
    pub two_token_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub concepts: Vec<ConceptSpec>,
    pub relations: Vec<RelationSpec>,
    /// Relation pairs that draw from one shared subject list.
    #[serde(default)]
    pub sibling_pairs: Vec<(String, String)>,
    /// Share of each relation's object set that renders as two tokens.
    pub two_token_object_fraction: f64,
    /// Cap on frequency weights.
    pub max_weight: f64,
}

pub const MIN_FACTS: usize = 60;

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let mut concepts = BTreeSet::new();
        for c in &self.concepts {
            if !concepts.insert(c.name.as_str()) {
                return Err(Error::Config(format!("duplicate concept `{}`", c.name)));
            }
            if c.n_entities == 0 {
                return Err(Error::Config(format!(
                    "concept `{}` has no entities",
                    c.name
                )));
            }
            if !(0.0..=1.0).contains(&c.two_token_fraction) {
                return Err(Error::Config(format!(
                    "concept `{}`: two_token_fraction outside [0,1]",
                    c.name
                )));
            }
        }
        let mut names = BTreeSet::new();
        for r in &self.relations {
            if !names.insert(r.name.as_str()) {
                return Err(Error::DuplicateRelation(r.name.clone()));
            }
            for c in [&r.subject_concept, &r.object_concept] {
                if !concepts.contains(c.as_str()) {
                    return Err(Error::UnknownConcept(c.clone()));
                }
            }
            if r.n_facts < MIN_FACTS {
                return Err(Error::Config(format!(
                    "relation `{}` needs at least {MIN_FACTS} facts",
                    r.name
                )));
            }
            if r.object_cardinality < 2 {
                return Err(Error::Config(format!(
                    "relation `{}` needs object_cardinality >= 2",
                    r.name
                )));
            }
            if let FrequencyLaw::Zipf { exponent } = r.fact_frequency_law {
                if !(exponent.is_finite() && exponent >= 0.0) {
                    return Err(Error::Config(format!(
                        "relation `{}`: bad zipf exponent",
                        r.name
                    )));
                }
            }
        }
        let mut paired = BTreeSet::new();
        for (a, b) in &self.sibling_pairs {
            let ra = self
                .relation(a)
                .ok_or_else(|| Error::Config(format!("sibling `{a}` is not a relation")))?;
            let rb = self
                .relation(b)
                .ok_or_else(|| Error::Config(format!("sibling `{b}` is not a relation")))?;
            if ra.subject_concept != rb.subject_concept {
                return Err(Error::Config(format!(
                    "siblings `{a}`/`{b}` have different subject concepts"
                )));
            }
            if a == b || !paired.insert(a.as_str()) || !paired.insert(b.as_str()) {
                return Err(Error::Config(format!(
                    "relation in more than one sibling pair: `{a}`/`{b}`"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.two_token_object_fraction) {
            return Err(Error::Config(
                "two_token_object_fraction outside [0,1]".into(),
            ));
        }
        if self.max_weight.is_nan() || self.max_weight < 1.0 {
            return Err(Error::Config("max_weight must be >= 1".into()));
        }
        Ok(())
    }

    pub fn relation(&self, name: &str) -> Option<&RelationSpec> {
        self.relations.iter().find(|r| r.name == name)
    }

    pub fn concept(&self, name: &str) -> Option<&ConceptSpec> {
        self.concepts.iter().find(|c| c.name == name)
    }
}

fn concept(name: &str, n_entities: usize, two_token_fraction: f64) -> ConceptSpec {
    ConceptSpec {
        name: name.into(),
        n_entities,
        two_token_fraction,
    }
}

fn relation(name: &str, subject: &str, object: &str, cardinality: usize) -> RelationSpec {
    RelationSpec {
        name: name.into(),
        subject_concept: subject.into(),
        object_concept: object.into(),
        n_facts: 300,
        object_cardinality: cardinality,
        fact_frequency_law: FrequencyLaw::Zipf { exponent: 1.0 },
    }
}

impl Default for WorldConfig {
    /// Eight relations of 300 facts each, zipf(1.0) weights, with
    /// `person_mother`/`person_father` sharing their subjects.
    fn default() -> Self {
        WorldConfig {
            concepts: vec![
                concept("person", 900, 0.3),
                concept("company", 400, 0.2),
                concept("country", 400, 0.2),
                concept("city", 400, 0.2),
                concept("product", 320, 0.0),
                concept("landmark", 320, 0.0),
                concept("instrument", 30, 0.3),
                concept("language", 30, 0.3),
            ],
            relations: vec![
                relation("company_ceo", "company", "person", 60),
                relation("person_mother", "person", "person", 60),
                relation("person_father", "person", "person", 60),
                relation("country_capital", "country", "city", 40),
                relation("person_instrument", "person", "instrument", 20),
                relation("product_company", "product", "company", 40),
                relation("landmark_country", "landmark", "country", 40),
                relation("city_language", "city", "language", 20),
            ],
            sibling_pairs: vec![("person_mother".into(), "person_father".into())],
            two_token_object_fraction: 0.3,
            max_weight: 8.0,
        }
    }
}
