//! From-scratch decoder-only transformer whose forward pass can record and
//! suppress individual projection outputs.

mod backward;
mod checkpoint;
mod config;
mod forward;
mod generate;
pub mod gradcheck;
mod neuron;
mod params;
mod tokenizer;
mod train;

pub use checkpoint::CHECKPOINT_MAGIC;
pub use config::{ModelConfig, PositionEncoding};
pub use forward::{TapEntry, TapRecord};
pub use generate::argmax_lowest;
pub use gradcheck::{gradient_check, GradCheckReport};
pub use neuron::{
    neuron_count, neuron_index, NeuronId, NeuronKind, NeuronTapSpec, SuppressionMask,
};
pub use params::{LayerSlots, Layout, Slot, TinyLm};
pub use tokenizer::{Tokenizer, BOS, EOS};
pub use train::{train, TrainConfig, TrainReport, Trainer};
