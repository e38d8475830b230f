use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{FrequencyLaw, RelationSpec, WorldConfig};
use crate::error::{Error, Result};

pub type EntityId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub concept: String,
    /// One word for subjects; objects may have two.
    pub words: Vec<String>,
}

impl Entity {
    pub fn surface(&self) -> String {
        self.words.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub subject: EntityId,
    pub relation: String,
    pub object: EntityId,
    pub frequency_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub relations: Vec<RelationSpec>,
    /// Concept -> ids of the entities that occur in some triple.
    pub entities: BTreeMap<String, Vec<EntityId>>,
    pub entity_table: Vec<Entity>,
    pub triples: BTreeMap<String, Vec<Triple>>,
    pub sibling_pairs: Vec<(String, String)>,
    /// Entity words in entity-id order.
    pub vocabulary: Vec<String>,
    pub seed: u64,
}

impl World {
    pub fn entity(&self, id: EntityId) -> &Entity {
        &self.entity_table[id as usize]
    }

    pub fn surface(&self, id: EntityId) -> String {
        self.entity(id).surface()
    }

    pub fn relation_names(&self) -> Vec<&str> {
        self.relations.iter().map(|r| r.name.as_str()).collect()
    }

    pub fn relation(&self, name: &str) -> Option<&RelationSpec> {
        self.relations.iter().find(|r| r.name == name)
    }

    pub fn triples_of(&self, relation: &str) -> &[Triple] {
        self.triples.get(relation).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn concepts(&self) -> Vec<&str> {
        self.entities.keys().map(String::as_str).collect()
    }

    pub fn n_triples(&self) -> usize {
        self.triples.values().map(Vec::len).sum()
    }

    pub fn subjects_of(&self, relation: &str) -> BTreeSet<EntityId> {
        self.triples_of(relation)
            .iter()
            .map(|t| t.subject)
            .collect()
    }

    /// Every entity that is the object of some triple, ascending.
    pub fn object_entities(&self) -> Vec<EntityId> {
        let set: BTreeSet<EntityId> = self.triples.values().flatten().map(|t| t.object).collect();
        set.into_iter().collect()
    }

    /// `|subjects(i) ∩ subjects(j)|` over relations in declaration order.
    pub fn subject_intersections(&self) -> Vec<Vec<usize>> {
        let sets: Vec<_> = self
            .relations
            .iter()
            .map(|r| self.subjects_of(&r.name))
            .collect();
        sets.iter()
            .map(|a| sets.iter().map(|b| a.intersection(b).count()).collect())
            .collect()
    }

    pub fn are_siblings(&self, a: &str, b: &str) -> bool {
        self.sibling_pairs
            .iter()
            .any(|(x, y)| (x == a && y == b) || (x == b && y == a))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("world serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

const ONSETS: &[&str] = &[
    "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z", "br",
    "dr", "kr", "pl", "st", "tr", "sh", "th",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ea", "ou"];
const CODAS: &[&str] = &["", "", "n", "r", "s", "l", "k", "m"];

fn make_word(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.random_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
        w.push_str(VOWELS[rng.random_range(0..VOWELS.len())]);
    }
    w.push_str(CODAS[rng.random_range(0..CODAS.len())]);
    let mut chars = w.chars();
    let first = chars.next().expect("non-empty").to_ascii_uppercase();
    std::iter::once(first).chain(chars).collect()
}

struct Pool {
    /// Candidate surfaces; single-word ones first.
    words: Vec<Vec<String>>,
    n_single: usize,
}

/// Build a world from `(config, seed)`. Same inputs give a bit-identical world.
pub fn generate_world(config: &WorldConfig, seed: u64) -> Result<World> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Candidate entity surfaces per concept; words are unique across the world.
    let mut used_words = HashSet::new();
    let mut fresh = |rng: &mut ChaCha8Rng| loop {
        let w = make_word(rng);
        if used_words.insert(w.clone()) {
            break w;
        }
    };
    let mut pools: BTreeMap<&str, Pool> = BTreeMap::new();
    for c in &config.concepts {
        let n_two = (c.two_token_fraction * c.n_entities as f64).round() as usize;
        let n_single = c.n_entities - n_two;
        let mut words = Vec::with_capacity(c.n_entities);
        for i in 0..c.n_entities {
            let mut surface = vec![fresh(&mut rng)];
            if i >= n_single {
                surface.push(fresh(&mut rng));
            }
            words.push(surface);
        }
        pools.insert(c.name.as_str(), Pool { words, n_single });
    }

    // Subjects: disjoint chunks of each concept's shuffled single-word
    // entities; the second relation of a sibling pair reuses the first's.
    let mut subject_queue: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (name, pool) in &pools {
        let mut idx: Vec<usize> = (0..pool.n_single).collect();
        idx.shuffle(&mut rng);
        subject_queue.insert(name, idx);
    }
    let sibling_of: BTreeMap<&str, &str> = config
        .sibling_pairs
        .iter()
        .map(|(a, b)| (b.as_str(), a.as_str()))
        .collect();
    let mut subjects: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for r in &config.relations {
        let chosen = match sibling_of
            .get(r.name.as_str())
            .and_then(|p| subjects.get(p))
        {
            Some(shared) if shared.len() >= r.n_facts => shared[..r.n_facts].to_vec(),
            Some(shared) => {
                let mut v = shared.clone();
                take_subjects(&mut subject_queue, r, r.n_facts - shared.len(), &mut v)?;
                v
            }
            None => {
                let mut v = Vec::with_capacity(r.n_facts);
                take_subjects(&mut subject_queue, r, r.n_facts, &mut v)?;
                v
            }
        };
        subjects.insert(r.name.as_str(), chosen);
    }

    // Object sets, stratified by surface length.
    let mut objects: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for r in &config.relations {
        let pool = &pools[r.object_concept.as_str()];
        let n_two =
            (config.two_token_object_fraction * r.object_cardinality as f64).round() as usize;
        let n_one = r.object_cardinality - n_two;
        let available_two = pool.words.len() - pool.n_single;
        if n_two > available_two || n_one > pool.n_single {
            return Err(Error::Config(format!(
                "concept `{}` cannot supply {n_one} one-word and {n_two} two-word objects for `{}`",
                r.object_concept, r.name
            )));
        }
        let mut singles: Vec<usize> = (0..pool.n_single).collect();
        let mut doubles: Vec<usize> = (pool.n_single..pool.words.len()).collect();
        singles.shuffle(&mut rng);
        doubles.shuffle(&mut rng);
        let mut set: Vec<usize> = singles[..n_one]
            .iter()
            .chain(&doubles[..n_two])
            .copied()
            .collect();
        set.sort_unstable();
        objects.insert(r.name.as_str(), set);
    }

    // Facts: one object per subject, never the subject itself.
    // (subject, object, weight) per relation, before entity ids are assigned.
    #[allow(clippy::type_complexity)]
    let mut raw: Vec<(&RelationSpec, Vec<(usize, usize, f64)>)> = Vec::new();
    for r in &config.relations {
        let subj = &subjects[r.name.as_str()];
        let objs = &objects[r.name.as_str()];
        let same_concept = r.subject_concept == r.object_concept;
        let mut ranks: Vec<usize> = (1..=subj.len()).collect();
        ranks.shuffle(&mut rng);
        let facts = subj
            .iter()
            .zip(ranks)
            .map(|(&s, rank)| {
                let o = loop {
                    let o = objs[rng.random_range(0..objs.len())];
                    if !(same_concept && o == s) {
                        break o;
                    }
                };
                (
                    s,
                    o,
                    weight(r.fact_frequency_law, rank, subj.len(), config.max_weight),
                )
            })
            .collect();
        raw.push((r, facts));
    }

    // Materialize only entities that occur, ordered by (concept, pool index).
    let mut used: BTreeMap<(usize, usize), ()> = BTreeMap::new();
    let concept_pos = |name: &str| {
        config
            .concepts
            .iter()
            .position(|c| c.name == name)
            .expect("validated")
    };
    for (r, facts) in &raw {
        let (sc, oc) = (
            concept_pos(&r.subject_concept),
            concept_pos(&r.object_concept),
        );
        for &(s, o, _) in facts {
            used.insert((sc, s), ());
            used.insert((oc, o), ());
        }
    }
    let mut entity_table = Vec::with_capacity(used.len());
    let mut id_of: BTreeMap<(usize, usize), EntityId> = BTreeMap::new();
    let mut entities: BTreeMap<String, Vec<EntityId>> = BTreeMap::new();
    for &(ci, pi) in used.keys() {
        let concept = &config.concepts[ci].name;
        let id = entity_table.len() as EntityId;
        entity_table.push(Entity {
            id,
            concept: concept.clone(),
            words: pools[concept.as_str()].words[pi].clone(),
        });
        id_of.insert((ci, pi), id);
        entities.entry(concept.clone()).or_default().push(id);
    }
    let mut triples = BTreeMap::new();
    for (r, facts) in raw {
        let (sc, oc) = (
            concept_pos(&r.subject_concept),
            concept_pos(&r.object_concept),
        );
        let list = facts
            .into_iter()
            .map(|(s, o, w)| Triple {
                subject: id_of[&(sc, s)],
                relation: r.name.clone(),
                object: id_of[&(oc, o)],
                frequency_weight: w,
            })
            .collect();
        triples.insert(r.name.clone(), list);
    }
    let vocabulary = entity_table
        .iter()
        .flat_map(|e| e.words.iter().cloned())
        .collect();
    Ok(World {
        relations: config.relations.clone(),
        entities,
        entity_table,
        triples,
        sibling_pairs: config.sibling_pairs.clone(),
        vocabulary,
        seed,
    })
}

fn take_subjects(
    queue: &mut BTreeMap<&str, Vec<usize>>,
    r: &RelationSpec,
    n: usize,
    out: &mut Vec<usize>,
) -> Result<()> {
    let q = queue
        .get_mut(r.subject_concept.as_str())
        .expect("validated concept");
    if q.len() < n {
        return Err(Error::SubjectPoolExhausted {
            relation: r.name.clone(),
            needed: n,
            available: q.len(),
        });
    }
    out.extend(q.drain(..n));
    Ok(())
}

fn weight(law: FrequencyLaw, rank: usize, n: usize, cap: f64) -> f64 {
    match law {
        FrequencyLaw::Uniform => 1.0,
        FrequencyLaw::Zipf { exponent } => (n as f64 / rank as f64).powf(exponent).min(cap),
    }
}
