//! Neuron addressing: which scalar outputs exist, how they are ordered, and
//! which of them a forward pass should record or suppress.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::error::{Error, Result};

/// Projection a neuron belongs to. The discriminant is the on-disk kind code
/// and also the within-layer enumeration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum NeuronKind {
    Up = 0,
    Gate = 1,
    Down = 2,
    AttnQ = 3,
    AttnK = 4,
    AttnV = 5,
    AttnO = 6,
}

impl NeuronKind {
    pub const ALL: [NeuronKind; 7] = [
        NeuronKind::Up,
        NeuronKind::Gate,
        NeuronKind::Down,
        NeuronKind::AttnQ,
        NeuronKind::AttnK,
        NeuronKind::AttnV,
        NeuronKind::AttnO,
    ];

    pub const FFN: [NeuronKind; 3] = [NeuronKind::Up, NeuronKind::Gate, NeuronKind::Down];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Self::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::Invalid(format!("unknown neuron kind code {code}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            NeuronKind::Up => "up",
            NeuronKind::Gate => "gate",
            NeuronKind::Down => "down",
            NeuronKind::AttnQ => "attn_q",
            NeuronKind::AttnK => "attn_k",
            NeuronKind::AttnV => "attn_v",
            NeuronKind::AttnO => "attn_o",
        }
    }

    /// Output width of this projection, i.e. the number of columns.
    pub fn width(self, config: &ModelConfig) -> usize {
        match self {
            NeuronKind::Up | NeuronKind::Gate => config.d_ff,
            _ => config.d_model,
        }
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for NeuronKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NeuronKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown neuron kind `{s}`")))
    }
}

/// One scalar-output neuron: column `column` of projection `kind` in `layer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NeuronId {
    pub kind: NeuronKind,
    pub layer: u16,
    pub column: u32,
}

impl NeuronId {
    pub fn new(kind: NeuronKind, layer: usize, column: usize) -> Self {
        NeuronId {
            kind,
            layer: layer as u16,
            column: column as u32,
        }
    }

    pub fn is_valid_for(&self, config: &ModelConfig) -> bool {
        (self.layer as usize) < config.n_layers && (self.column as usize) < self.kind.width(config)
    }
}

// Layer-major, then kind, then column: the enumeration order.
impl Ord for NeuronId {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.layer, self.kind, self.column).cmp(&(other.layer, other.kind, other.column))
    }
}

impl PartialOrd for NeuronId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for NeuronId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@L{}:{}", self.kind, self.layer, self.column)
    }
}

/// Ordered enumeration of all neurons of the requested kinds.
pub fn neuron_index(config: &ModelConfig, kinds: &BTreeSet<NeuronKind>) -> Vec<NeuronId> {
    let mut out = Vec::with_capacity(neuron_count(config, kinds));
    for layer in 0..config.n_layers {
        for &kind in kinds {
            out.extend((0..kind.width(config)).map(|c| NeuronId::new(kind, layer, c)));
        }
    }
    out
}

/// Size of [`neuron_index`] without materializing it.
pub fn neuron_count(config: &ModelConfig, kinds: &BTreeSet<NeuronKind>) -> usize {
    config.n_layers * kinds.iter().map(|k| k.width(config)).sum::<usize>()
}

/// Set of neurons whose outputs are overridden with zero.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuppressionMask {
    pub neurons: BTreeSet<NeuronId>,
}

impl SuppressionMask {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    pub fn contains(&self, id: &NeuronId) -> bool {
        self.neurons.contains(id)
    }

    pub fn is_subset(&self, other: &SuppressionMask) -> bool {
        self.neurons.is_subset(&other.neurons)
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        match self.neurons.iter().find(|id| !id.is_valid_for(config)) {
            Some(bad) => Err(Error::InvalidNeuron(*bad)),
            None => Ok(()),
        }
    }

    /// Per layer, per kind: the sorted columns to zero.
    pub(crate) fn compile(&self, config: &ModelConfig) -> Result<CompiledMask> {
        self.validate(config)?;
        let mut per_layer = vec![<[Vec<usize>; 7]>::default(); config.n_layers];
        for id in &self.neurons {
            per_layer[id.layer as usize][id.kind.index()].push(id.column as usize);
        }
        Ok(CompiledMask { per_layer })
    }
}

impl FromIterator<NeuronId> for SuppressionMask {
    fn from_iter<I: IntoIterator<Item = NeuronId>>(iter: I) -> Self {
        SuppressionMask {
            neurons: iter.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledMask {
    pub per_layer: Vec<[Vec<usize>; 7]>,
}

impl CompiledMask {
    pub fn columns(&self, layer: usize, kind: NeuronKind) -> &[usize] {
        &self.per_layer[layer][kind.index()]
    }
}

/// Which projection kinds a forward pass records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeuronTapSpec {
    pub kinds: BTreeSet<NeuronKind>,
}

impl NeuronTapSpec {
    pub fn new(kinds: impl IntoIterator<Item = NeuronKind>) -> Result<Self> {
        let kinds: BTreeSet<_> = kinds.into_iter().collect();
        if kinds.is_empty() {
            return Err(Error::Config("tap spec needs at least one kind".into()));
        }
        Ok(NeuronTapSpec { kinds })
    }

    pub fn ffn() -> Self {
        NeuronTapSpec {
            kinds: NeuronKind::FFN.into_iter().collect(),
        }
    }

    pub fn records(&self, kind: NeuronKind) -> bool {
        self.kinds.contains(&kind)
    }
}

impl Default for NeuronTapSpec {
    fn default() -> Self {
        Self::ffn()
    }
}
