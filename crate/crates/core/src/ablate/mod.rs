//! Masked evaluation and the experiments built on it: accuracy drops, drop
//! matrices, neuron-count sweeps, cumulativity, template robustness,
//! frequency resilience, and perplexity deltas.

mod eval;
mod experiments;
mod ppl;
mod resilience;

pub use eval::{
    accuracy_drop, evaluate, evaluate_all, evaluate_offline, random_mask, EvalOutcome, Evaluation,
    Prediction,
};
pub use experiments::{
    cumulativity, drop_matrix, mean_accuracy, sweep_k, template_robustness, CumulativityReport,
    DropMatrix, SweepCurve, SweepPoint, TemplateRobustness,
};
pub use ppl::{neutral_sentences, ppl_by_relation, ppl_delta, PplPair};
pub use resilience::{resilience_groups, ResilienceGroups};

/// Neuron-count sweep grid, as fractions of the enumerated neurons.
pub const SWEEP_FRACTIONS: [f64; 9] = [0.0001, 0.0005, 0.002, 0.005, 0.01, 0.03, 0.1, 0.2, 0.5];

/// Seeds averaged over by the random-mask baseline.
pub const RANDOM_BASELINE_SEEDS: u64 = 10;
