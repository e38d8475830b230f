//! Central finite differences in `f64` against the analytic gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, TinyLm};
use crate::error::{Error, Result};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for the relative error, so that gradients that are zero
/// up to rounding are compared in absolute terms.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub n_params: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compare every analytic partial derivative of the loss on `seqs` with its
/// central difference.
pub fn check_model(model: &TinyLm<f64>, seqs: &[Vec<u32>], step: f64) -> Result<GradCheckReport> {
    let (_, grad) = model.loss_and_grad(seqs)?;
    let names = model.layout().named_slots();
    let mut probe = model.clone();
    let mut worst = (0.0f64, 0usize);
    for (i, &analytic) in grad.iter().enumerate() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + step;
        let plus = probe.loss(seqs)?;
        probe.params_mut()[i] = orig - step;
        let minus = probe.loss(seqs)?;
        probe.params_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let err = relative_error(analytic, numeric);
        if !err.is_finite() {
            return Err(Error::NonFinite(format!("gradient of parameter {i}")));
        }
        if err > worst.0 {
            worst = (err, i);
        }
    }
    let worst_param = names
        .iter()
        .find(|(_, s)| s.range().contains(&worst.1))
        .map(|(n, s)| format!("{n}[{}]", worst.1 - s.offset))
        .unwrap_or_default();
    Ok(GradCheckReport {
        max_rel_error: worst.0,
        worst_param,
        n_params: model.n_params(),
    })
}

/// Random tiny model (init seeded by `seed`) on a random batch of sequences.
pub fn gradient_check(config: ModelConfig, seed: u64) -> Result<GradCheckReport> {
    if config.n_layers > 2 || config.d_model > 32 {
        return Err(Error::Config(
            "gradient_check is limited to at most 2 layers and d_model <= 32".into(),
        ));
    }
    let model = TinyLm::<f64>::init(config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let seqs: Vec<Vec<u32>> = (0..3)
        .map(|_| {
            let len = rng.random_range(2..=config.max_seq_len.max(2));
            (0..len)
                .map(|_| rng.random_range(0..config.vocab_size as u32))
                .collect()
        })
        .collect();
    check_model(&model, &seqs, FD_STEP)
}
