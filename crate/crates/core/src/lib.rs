//! A desk-scale laboratory for relation-specific neurons.
//!
//! A tiny decoder-only transformer is trained on a synthetic relational
//! world. Neurons whose token-averaged outputs separate one relation's prompts
//! from the others' are ranked by average precision, then suppressed during
//! greedy generation to measure intra- and inter-relation accuracy effects.
//!
//! The model and optimizer are generic over the scalar type; [`Model`] is the
//! `f32` training/inference instantiation and [`WideModel`] the `f64` one used
//! for finite-difference gradient checks.

pub mod ablate;
pub mod error;
pub mod expert;
pub mod pipeline;
pub mod probes;
pub mod scalar;
pub mod store;
pub mod tinylm;
pub mod world;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Model = tinylm::TinyLm<f32>;
pub type WideModel = tinylm::TinyLm<f64>;
pub type Trainer = tinylm::Trainer<f32>;
