//! Neuron identification: token-averaged activations, tie-aware average
//! precision, rankings, top-k selection, overlaps and layer histograms.

mod activation;
mod ap;
mod ranking;

pub use activation::{token_average, ActivationMatrix, EffectiveTokens};
pub use ap::average_precision;
pub use ranking::{
    jaccard, layer_histogram, overlap_matrix, score_all, top_k, top_k_mask, NeuronRanking,
    RankEntry,
};

/// Default desk-scale selection size: this fraction of the enumerated neurons.
pub const DEFAULT_TOP_FRACTION: f64 = 0.01;

/// `ceil(fraction * n)`, clamped to `1..=n` for positive fractions.
pub fn k_from_fraction(fraction: f64, n: usize) -> usize {
    if fraction <= 0.0 || n == 0 {
        return 0;
    }
    ((fraction * n as f64).ceil() as usize).clamp(1, n)
}
