mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use relneurons::ablate::{accuracy_drop, random_mask, CumulativityReport};
use relneurons::expert::{
    average_precision, k_from_fraction, top_k_mask, ActivationMatrix, NeuronRanking,
};
use relneurons::probes::{build_labeled_set, is_correct_text, PromptInstance, Split};
use relneurons::store;
use relneurons::tinylm::{neuron_index, ModelConfig, NeuronKind, SuppressionMask};
use relneurons::world::{
    generate_world, split_det_eva, ConceptSpec, FrequencyLaw, RelationSpec, Triple, WorldConfig,
};
use relneurons::Model;

use common::{oracle_ap, spearman};

#[test]
fn oracles_agree_with_hand_values() {
    assert_eq!(
        oracle_ap(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]),
        (1.0 + 2.0 / 3.0) / 2.0
    );
    assert_eq!(
        oracle_ap(&[1.0, 1.0, 1.0], &[true, false, false]),
        1.0 / 3.0
    );
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]), None);
}

/// Scores drawn from a few levels so ties are common, plus both label classes.
fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..64)
        .prop_flat_map(|j| {
            (
                prop::collection::vec(0u8..6, j),
                prop::collection::vec(any::<bool>(), j),
            )
        })
        .prop_filter("both classes", |(_, l)| {
            l.iter().any(|&x| x) && l.iter().any(|&x| !x)
        })
        .prop_map(|(s, l)| (s.into_iter().map(|v| v as f64 * 0.25 - 0.5).collect(), l))
}

fn small_world_config(n_rel: usize, siblings: bool) -> WorldConfig {
    let concept = |n: &str, k| ConceptSpec {
        name: n.into(),
        n_entities: k,
        two_token_fraction: 0.3,
    };
    let mut relations: Vec<RelationSpec> = (0..n_rel)
        .map(|i| RelationSpec {
            name: format!("person_r{i}"),
            subject_concept: "person".into(),
            object_concept: "thing".into(),
            n_facts: 60,
            object_cardinality: 8,
            fact_frequency_law: FrequencyLaw::Zipf { exponent: 1.0 },
        })
        .collect();
    relations.push(RelationSpec {
        name: "city_thing".into(),
        subject_concept: "city".into(),
        object_concept: "thing".into(),
        n_facts: 60,
        object_cardinality: 8,
        fact_frequency_law: FrequencyLaw::Uniform,
    });
    WorldConfig {
        concepts: vec![
            concept("person", 400),
            concept("city", 100),
            concept("thing", 40),
        ],
        relations,
        sibling_pairs: if siblings {
            vec![("person_r0".into(), "person_r1".into())]
        } else {
            vec![]
        },
        two_token_object_fraction: 0.3,
        max_weight: 8.0,
    }
}

fn prompt(relation: &str, i: usize) -> PromptInstance {
    PromptInstance {
        relation: relation.into(),
        subject: format!("S{i}"),
        object: "O".into(),
        text: format!("the x of S{i} is"),
        split: Split::Det,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ap_matches_oracle((scores, labels) in scored_labels()) {
        let ap = average_precision(&scores, &labels).unwrap();
        prop_assert!((ap - oracle_ap(&scores, &labels)).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&ap));
    }

    #[test]
    fn ap_ignores_monotone_transforms_and_order((scores, labels) in scored_labels(), shift in -5.0f64..5.0, rot in 0usize..64) {
        let ap = average_precision(&scores, &labels).unwrap();
        let moved: Vec<f64> = scores.iter().map(|s| 3.0 * s + shift).collect();
        prop_assert!((average_precision(&moved, &labels).unwrap() - ap).abs() <= 1e-12);
        let r = rot % scores.len();
        let mut s2 = scores.clone();
        let mut l2 = labels.clone();
        s2.rotate_left(r);
        l2.rotate_left(r);
        prop_assert!((average_precision(&s2, &l2).unwrap() - ap).abs() <= 1e-12);
    }

    #[test]
    fn prefixes_and_word_boundaries(first in "[A-Z][a-z]{1,6}", second in proptest::option::of("[A-Z][a-z]{1,6}"), tail in "[a-z]{1,5}", cut in 1usize..20) {
        let object = match &second { Some(s) => format!("{first} {s}"), None => first.clone() };
        let cut = cut.min(object.len());
        prop_assert!(is_correct_text(&object[..cut], &object));
        let padded = format!("  {object}");
        let spaced = format!("{object} {tail}");
        let punct = format!("{object}, {tail}");
        let glued = format!("{object}{tail}");
        prop_assert!(is_correct_text(&padded, &object));
        prop_assert!(is_correct_text(&spaced, &object));
        prop_assert!(is_correct_text(&punct, &object));
        prop_assert!(!is_correct_text(&glued, &object));
        prop_assert!(!is_correct_text(&object.to_lowercase(), &object));
    }

    #[test]
    fn accuracy_drop_sign(orig in 0.01f64..1.0, masked in 0.0f64..1.0) {
        let d = accuracy_drop(orig, masked).unwrap();
        prop_assert_eq!(d > 0.0, masked < orig);
        prop_assert!((d - (orig - masked) / orig).abs() == 0.0);
        prop_assert_eq!(accuracy_drop(0.0, masked), None);
    }

    #[test]
    fn k_from_fraction_stays_in_range(f in 0.0f64..=1.0, n in 1usize..100_000) {
        let k = k_from_fraction(f, n);
        prop_assert!(k <= n);
        if f > 0.0 {
            prop_assert!(k >= 1);
            prop_assert!(k as f64 >= f * n as f64 - 1e-9);
        } else {
            prop_assert_eq!(k, 0);
        }
    }

    #[test]
    fn rankings_are_sorted_and_topk_masks_nested(aps in prop::collection::vec(0u8..5, 2..60), k1 in 0usize..60, k2 in 0usize..60) {
        let cfg = ModelConfig { n_layers: 2, d_model: 4, n_heads: 1, d_ff: 8, vocab_size: 4, max_seq_len: 4, position_encoding: Default::default() };
        let kinds: BTreeSet<_> = NeuronKind::FFN.into_iter().collect();
        let ids = neuron_index(&cfg, &kinds);
        let n = aps.len().min(ids.len());
        let aps: Vec<f64> = aps[..n].iter().map(|&a| a as f64 / 4.0).collect();
        let r = NeuronRanking::from_scores("t", &ids[..n], &aps);
        prop_assert!(r.is_sorted());
        for w in r.entries.windows(2) {
            prop_assert!(w[0].ap > w[1].ap || (w[0].ap == w[1].ap && w[0].neuron < w[1].neuron));
        }
        let (a, b) = (k1.min(k2).min(n), k1.max(k2).min(n));
        prop_assert!(top_k_mask(&r, a).unwrap().is_subset(&top_k_mask(&r, b).unwrap()));
    }

    #[test]
    fn random_masks_are_reproducible(k in 1usize..100, seed in any::<u64>()) {
        let cfg = ModelConfig::desk(50, 12);
        let kinds: BTreeSet<_> = NeuronKind::FFN.into_iter().collect();
        let a = random_mask(&cfg, &kinds, k, seed).unwrap();
        prop_assert_eq!(&a, &random_mask(&cfg, &kinds, k, seed).unwrap());
        prop_assert_eq!(a.len(), k);
        prop_assert!(a.validate(&cfg).is_ok());
        prop_assert!(a.neurons.iter().all(|id| kinds.contains(&id.kind)));
    }

    #[test]
    fn cumulativity_counts_are_bounded(v in prop::collection::vec((any::<bool>(), any::<bool>(), any::<bool>()), 0..50)) {
        let small: Vec<bool> = v.iter().map(|t| t.0).collect();
        let large: Vec<bool> = v.iter().map(|t| t.1).collect();
        let diff: Vec<bool> = v.iter().map(|t| t.2).collect();
        let r = CumulativityReport::from_verdicts(1, 2, &small, &large, &diff).unwrap();
        prop_assert!(r.n_affected <= r.n_total);
        match r.cumulativity {
            Some(c) => prop_assert!((0.0..=1.0).contains(&c)),
            None => prop_assert_eq!(r.n_total, 0),
        }
    }

    #[test]
    fn labeled_sets_hit_the_ratio_or_report_shortfall(pos in 1usize..40, others in prop::collection::vec(0usize..60, 1..4), ratio in 0usize..6, seed in any::<u64>()) {
        let mut validated = BTreeMap::new();
        validated.insert("target".to_string(), (0..pos).map(|i| prompt("target", i)).collect::<Vec<_>>());
        for (j, &n) in others.iter().enumerate() {
            let r = format!("other{j}");
            validated.insert(r.clone(), (0..n).map(|i| prompt(&r, 1000 * (j + 1) + i)).collect());
        }
        let pool: usize = others.iter().sum();
        match build_labeled_set("target", &validated, ratio, seed) {
            Ok(set) => {
                prop_assert_eq!(set.n_positive(), pos);
                prop_assert_eq!(set.n_negative(), (ratio * pos).min(pool));
                prop_assert_eq!(set.shortfall, (ratio * pos).saturating_sub(pool));
                for e in &set.examples {
                    prop_assert_eq!(e.label == 1, e.prompt.relation == "target");
                }
                let again = build_labeled_set("target", &validated, ratio, seed).unwrap();
                prop_assert_eq!(set.examples, again.examples);
            }
            Err(_) => prop_assert!(pool == 0 && ratio > 0),
        }
    }

    #[test]
    fn activation_files_round_trip(j in 1usize..12, n in 1usize..12, seed in any::<u64>(), labels in prop::collection::vec(any::<bool>(), 12)) {
        let cfg = ModelConfig { n_layers: 2, d_model: 6, n_heads: 1, d_ff: 6, vocab_size: 4, max_seq_len: 4, position_encoding: Default::default() };
        let ids = neuron_index(&cfg, &NeuronKind::ALL.into_iter().collect());
        let values: Vec<f32> = (0..j * n).map(|i| ((seed.wrapping_mul(i as u64 + 1) % 2001) as f32 - 1000.0) / 7.0).collect();
        let m = ActivationMatrix::new(ids[..n].to_vec(), labels[..j].to_vec(), values).unwrap();
        let bytes = store::activation_to_bytes(&m).unwrap();
        let back = store::activation_from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(store::activation_to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn ranking_and_mask_csv_round_trip(aps in prop::collection::vec(0.0f64..=1.0, 1..40)) {
        let cfg = ModelConfig { n_layers: 2, d_model: 8, n_heads: 1, d_ff: 8, vocab_size: 4, max_seq_len: 4, position_encoding: Default::default() };
        let ids = neuron_index(&cfg, &NeuronKind::FFN.into_iter().collect());
        let n = aps.len().min(ids.len());
        let r = NeuronRanking::from_scores("rel", &ids[..n], &aps[..n]);
        let csv = store::ranking_to_csv(&r).unwrap();
        let back = store::ranking_from_csv("rel", &csv).unwrap();
        prop_assert_eq!(&back, &r);
        let mask = top_k_mask(&r, n / 2).unwrap();
        let mcsv = store::mask_to_csv(&mask, Some(&r)).unwrap();
        prop_assert_eq!(store::mask_from_csv(&mcsv).unwrap(), mask.clone());
        // A ranking file read as a mask selects every neuron it lists.
        let all: SuppressionMask = ids[..n].iter().copied().collect();
        prop_assert_eq!(store::mask_from_csv(&csv).unwrap(), all);
    }

    #[test]
    fn checkpoints_round_trip(layers in 1usize..3, heads in 1usize..3, seed in any::<u64>()) {
        let cfg = ModelConfig { n_layers: layers, d_model: 4 * heads, n_heads: heads, d_ff: 6, vocab_size: 9, max_seq_len: 5, position_encoding: Default::default() };
        let m = Model::init(cfg, seed).unwrap();
        let bytes = m.to_checkpoint_bytes();
        let back = Model::from_checkpoint_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(back.to_checkpoint_bytes(), bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn world_invariants(seed in any::<u64>(), n_rel in 2usize..4, siblings in any::<bool>()) {
        let cfg = small_world_config(n_rel, siblings);
        let w = generate_world(&cfg, seed).unwrap();
        prop_assert_eq!(w.to_json(), generate_world(&cfg, seed).unwrap().to_json());
        let names = w.relation_names();
        let inter = w.subject_intersections();
        for (i, a) in names.iter().enumerate() {
            prop_assert_eq!(w.triples_of(a).len(), 60);
            for (j, b) in names.iter().enumerate() {
                if i == j {
                    continue;
                }
                if w.are_siblings(a, b) {
                    prop_assert!(inter[i][j] as f64 >= 0.9 * 60.0);
                } else {
                    prop_assert_eq!(inter[i][j], 0);
                }
            }
        }
        let vocab: BTreeSet<&str> = w.vocabulary.iter().map(String::as_str).collect();
        prop_assert_eq!(vocab.len(), w.vocabulary.len());
        for ts in w.triples.values() {
            for t in ts {
                prop_assert!(t.frequency_weight >= 1.0 && t.frequency_weight <= 8.0);
                for word in &w.entity(t.subject).words {
                    prop_assert!(vocab.contains(word.as_str()));
                }
                prop_assert_eq!(w.entity(t.subject).words.len(), 1);
            }
        }
    }

    #[test]
    fn splits_are_subject_disjoint(seed in any::<u64>(), n_eva in 1usize..40) {
        let cfg = small_world_config(2, true);
        let w = generate_world(&cfg, 5).unwrap();
        for rel in w.relation_names() {
            let s = split_det_eva(w.triples_of(rel), n_eva, seed).unwrap();
            prop_assert_eq!(s.eva.len(), n_eva);
            prop_assert_eq!(s.det.len() + s.eva.len(), 60);
            let det: BTreeSet<u32> = s.det.iter().map(|t: &Triple| t.subject).collect();
            prop_assert!(s.eva.iter().all(|t| !det.contains(&t.subject)));
        }
    }
}
