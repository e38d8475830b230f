use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tinylm::{NeuronId, TapRecord};

/// Examples x neurons matrix of token-averaged outputs with binary labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationMatrix {
    pub neuron_ids: Vec<NeuronId>,
    pub labels: Vec<bool>,
    /// Row-major `[labels.len(), neuron_ids.len()]`.
    pub values: Vec<f32>,
}

impl ActivationMatrix {
    pub fn new(neuron_ids: Vec<NeuronId>, labels: Vec<bool>, values: Vec<f32>) -> Result<Self> {
        let m = ActivationMatrix {
            neuron_ids,
            labels,
            values,
        };
        m.validate()?;
        Ok(m)
    }

    /// Stack per-example rows (each in `neuron_ids` order).
    pub fn from_rows(neuron_ids: Vec<NeuronId>, rows: &[(&[f32], bool)]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * neuron_ids.len());
        let mut labels = Vec::with_capacity(rows.len());
        for (row, label) in rows {
            if row.len() != neuron_ids.len() {
                return Err(Error::Invalid(format!(
                    "row has {} values for {} neurons",
                    row.len(),
                    neuron_ids.len()
                )));
            }
            values.extend_from_slice(row);
            labels.push(*label);
        }
        Self::new(neuron_ids, labels, values)
    }

    pub fn n_examples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_neurons(&self) -> usize {
        self.neuron_ids.len()
    }

    pub fn get(&self, example: usize, neuron: usize) -> f32 {
        self.values[example * self.n_neurons() + neuron]
    }

    pub fn column(&self, neuron: usize) -> Vec<f32> {
        let n = self.n_neurons();
        self.values
            .iter()
            .skip(neuron)
            .step_by(n)
            .copied()
            .collect()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    /// Shape, finiteness, and strictly increasing neuron order.
    pub fn validate(&self) -> Result<()> {
        if self.labels.is_empty() || self.neuron_ids.is_empty() {
            return Err(Error::Invalid(
                "activation matrix must have J > 0 and N > 0".into(),
            ));
        }
        if self.values.len() != self.labels.len() * self.neuron_ids.len() {
            return Err(Error::Invalid(format!(
                "{} values for a {}x{} matrix",
                self.values.len(),
                self.labels.len(),
                self.neuron_ids.len()
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            let n = self.n_neurons();
            return Err(Error::NonFinite(format!(
                "example {}, neuron {}",
                i / n,
                i % n
            )));
        }
        if self.neuron_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid(
                "neuron ids are not in enumeration order".into(),
            ));
        }
        Ok(())
    }

    /// Scoring additionally needs both classes present.
    pub fn validate_for_scoring(&self) -> Result<()> {
        self.validate()?;
        let p = self.positives();
        if p == 0 || p == self.n_examples() {
            return Err(Error::SingleClass);
        }
        Ok(())
    }
}

/// Which positions count as effective tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum EffectiveTokens {
    /// Every position except position 0, the begin-of-sequence marker.
    #[default]
    SkipBos,
    /// Every position.
    All,
}

impl EffectiveTokens {
    fn first(self) -> usize {
        match self {
            EffectiveTokens::SkipBos => 1,
            EffectiveTokens::All => 0,
        }
    }
}

/// Mean of each recorded neuron's outputs over the effective positions, in
/// the record's neuron order. Summation is in `f64`.
pub fn token_average<T: Scalar>(
    record: &TapRecord<T>,
    selector: EffectiveTokens,
) -> Result<Vec<f32>> {
    let first = selector.first();
    if record.seq_len <= first {
        return Err(Error::NoEffectiveTokens);
    }
    let count = (record.seq_len - first) as f64;
    let mut out = Vec::with_capacity(record.n_neurons());
    for entry in &record.entries {
        for col in entry.values.columns() {
            let sum: f64 = col.iter().skip(first).map(|v| v.as_f64()).sum();
            out.push((sum / count) as f32);
        }
    }
    Ok(out)
}
