use std::collections::BTreeSet;

use relneurons::expert::{token_average, EffectiveTokens};
use relneurons::tinylm::{
    neuron_index, ModelConfig, NeuronId, NeuronKind, NeuronTapSpec, SuppressionMask,
};
use relneurons::Model;

fn config() -> ModelConfig {
    ModelConfig {
        n_layers: 3,
        d_model: 16,
        n_heads: 2,
        d_ff: 24,
        vocab_size: 20,
        max_seq_len: 12,
        position_encoding: Default::default(),
    }
}

fn model() -> Model {
    Model::init(config(), 11).unwrap()
}

fn tokens(seed: u32, len: usize) -> Vec<u32> {
    std::iter::once(0)
        .chain((1..len as u32).map(|i| (i * 7 + seed * 13) % 19 + 1))
        .collect()
}

fn all_kinds() -> NeuronTapSpec {
    NeuronTapSpec::new(NeuronKind::ALL).unwrap()
}

#[test]
fn empty_mask_is_bit_exact() {
    let m = model();
    let t = tokens(1, 9);
    let plain = m.logits(&t).unwrap();
    let (hooked, _) = m
        .forward(&t, Some(&all_kinds()), &SuppressionMask::empty())
        .unwrap();
    let (unrecorded, rec) = m.forward(&t, None, &SuppressionMask::empty()).unwrap();
    assert!(rec.is_none());
    assert_eq!(plain, hooked);
    assert_eq!(plain, unrecorded);
}

#[test]
fn masked_columns_record_exact_zeros() {
    let m = model();
    let t = tokens(2, 10);
    let mask: SuppressionMask = [
        NeuronId::new(NeuronKind::Up, 0, 3),
        NeuronId::new(NeuronKind::Gate, 1, 0),
        NeuronId::new(NeuronKind::Down, 2, 15),
        NeuronId::new(NeuronKind::AttnV, 1, 5),
    ]
    .into_iter()
    .collect();
    let (_, rec) = m.forward(&t, Some(&all_kinds()), &mask).unwrap();
    let rec = rec.unwrap();
    for id in &mask.neurons {
        let e = rec.get(id.layer as usize, id.kind).unwrap();
        assert!(
            e.values
                .column(id.column as usize)
                .iter()
                .all(|&v| v == 0.0),
            "{id}"
        );
    }
    let (_, free) = m
        .forward(&t, Some(&all_kinds()), &SuppressionMask::empty())
        .unwrap();
    let e = free.unwrap();
    assert!(e
        .get(0, NeuronKind::Up)
        .unwrap()
        .values
        .column(3)
        .iter()
        .any(|&v| v != 0.0));
}

#[test]
fn masking_is_layer_local() {
    let m = model();
    let t = tokens(3, 11);
    let tap = all_kinds();
    let (_, base) = m
        .forward(&t, Some(&tap), &SuppressionMask::empty())
        .unwrap();
    let base = base.unwrap();
    let mask: SuppressionMask = [NeuronId::new(NeuronKind::Up, 2, 4)].into_iter().collect();
    let (_, masked) = m.forward(&t, Some(&tap), &mask).unwrap();
    let masked = masked.unwrap();
    for layer in 0..2 {
        for kind in NeuronKind::ALL {
            assert_eq!(
                base.get(layer, kind).unwrap().values,
                masked.get(layer, kind).unwrap().values,
                "layer {layer} {kind:?}"
            );
        }
    }
    // Within the masked layer, projections computed before `up` are unchanged too.
    for kind in [
        NeuronKind::AttnQ,
        NeuronKind::AttnK,
        NeuronKind::AttnV,
        NeuronKind::AttnO,
        NeuronKind::Gate,
    ] {
        assert_eq!(
            base.get(2, kind).unwrap().values,
            masked.get(2, kind).unwrap().values
        );
    }
    assert_ne!(
        base.get(2, NeuronKind::Down).unwrap().values,
        masked.get(2, NeuronKind::Down).unwrap().values
    );
}

#[test]
fn full_ffn_mask_equals_removing_the_ffn() {
    let m = model();
    let kinds: BTreeSet<_> = NeuronKind::FFN.into_iter().collect();
    let mask: SuppressionMask = neuron_index(m.config(), &kinds).into_iter().collect();
    for seed in 0..5 {
        let t = tokens(seed, 4 + seed as usize);
        let (masked, _) = m.forward(&t, None, &mask).unwrap();
        let reference = m.logits_without_ffn(&t).unwrap();
        for (a, b) in masked.iter().zip(reference.iter()) {
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn batched_generation_matches_single_sequences() {
    let m = model();
    let prompts: Vec<Vec<u32>> = (0..150).map(|i| tokens(i, 2 + (i as usize % 8))).collect();
    let mask: SuppressionMask = [NeuronId::new(NeuronKind::Gate, 1, 7)]
        .into_iter()
        .collect();
    for mask in [SuppressionMask::empty(), mask] {
        let batch = m.generate_batch(&prompts, 2, &mask).unwrap();
        for (p, b) in prompts.iter().zip(&batch) {
            assert_eq!(&m.generate(p, 2, &mask).unwrap(), b);
        }
    }
}

#[test]
fn batched_capture_matches_single_sequences() {
    let m = model();
    let tap = NeuronTapSpec::ffn();
    let prompts: Vec<Vec<u32>> = (0..80).map(|i| tokens(i, 2 + (i as usize % 9))).collect();
    let batch = m
        .capture_means(&prompts, &tap, &SuppressionMask::empty())
        .unwrap();
    for (p, row) in prompts.iter().zip(&batch) {
        let (_, rec) = m.forward(p, Some(&tap), &SuppressionMask::empty()).unwrap();
        let single = token_average(&rec.unwrap(), EffectiveTokens::SkipBos).unwrap();
        assert_eq!(&single, row);
    }
}

#[test]
fn invalid_mask_is_rejected() {
    let m = model();
    let mask: SuppressionMask = [NeuronId::new(NeuronKind::Up, 3, 0)].into_iter().collect();
    assert!(m.forward(&tokens(0, 3), None, &mask).is_err());
    let mask: SuppressionMask = [NeuronId::new(NeuronKind::Down, 0, 16)]
        .into_iter()
        .collect();
    assert!(m.generate(&tokens(0, 3), 2, &mask).is_err());
}
