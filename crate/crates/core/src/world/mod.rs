//! The synthetic relational world: relations, entities, weighted facts, the
//! det/eva split and the pretraining corpus.

mod config;
mod corpus;
mod generate;
mod split;

pub use config::{ConceptSpec, FrequencyLaw, RelationSpec, WorldConfig, MIN_FACTS};
pub use corpus::{emission_count, emit_pretraining_corpus};
pub use generate::{generate_world, Entity, EntityId, Triple, World};
pub use split::{split_det_eva, SplitTriples};
