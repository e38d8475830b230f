use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::World;
use crate::error::{Error, Result};
use crate::probes::TemplateSet;

/// How many times a fact with this weight is stated per statement template.
pub fn emission_count(weight: f64) -> usize {
    (weight.round() as usize).max(1)
}

/// Pretraining corpus, one statement per line.
///
/// Every fact is rendered through each of its relation's statement templates
/// `emission_count(weight)` times; each object entity additionally appears
/// once per neutral-context template. Lines are shuffled with `seed`.
pub fn emit_pretraining_corpus(
    world: &World,
    templates: &TemplateSet,
    seed: u64,
) -> Result<Vec<String>> {
    templates.validate()?;
    let mut lines = Vec::new();
    for rel in world.relation_names() {
        let stmts = templates.statements_for(rel);
        if stmts.is_empty() && !world.triples_of(rel).is_empty() {
            return Err(Error::Template(format!(
                "relation `{rel}` has no statement template"
            )));
        }
        for t in world.triples_of(rel) {
            let subject = world.surface(t.subject);
            let object = world.surface(t.object);
            for _ in 0..emission_count(t.frequency_weight) {
                for s in &stmts {
                    lines.push(s.render(&subject, &object));
                }
            }
        }
    }
    for o in world.object_entities() {
        let object = world.surface(o);
        for n in &templates.neutral {
            lines.push(n.replace(crate::probes::OBJECT_SLOT, &object));
        }
    }
    lines.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_world, FrequencyLaw, Triple, WorldConfig};
    use std::collections::BTreeMap;

    fn occurrences(lines: &[String], w: &World, templates: &TemplateSet, t: &Triple) -> usize {
        let stmt = &templates.statements_for(&t.relation)[0];
        let line = stmt.render(&w.surface(t.subject), &w.surface(t.object));
        lines.iter().filter(|l| **l == line).count()
    }

    #[test]
    fn occurrence_ratio_tracks_weight() {
        let cfg = WorldConfig::default();
        let mut w = generate_world(&cfg, 0).unwrap();
        let rel = w.relation_names()[0].to_string();
        let ts = w.triples.get_mut(&rel).unwrap();
        ts[0].frequency_weight = 8.0;
        ts[1].frequency_weight = 1.0;
        let (a, b) = (ts[0].clone(), ts[1].clone());
        let templates = TemplateSet::default_for(&cfg);
        let lines = emit_pretraining_corpus(&w, &templates, 1).unwrap();
        let (ca, cb) = (
            occurrences(&lines, &w, &templates, &a),
            occurrences(&lines, &w, &templates, &b),
        );
        assert_eq!(cb, 1);
        assert!((ca as f64 / cb as f64 - 8.0).abs() <= 1.0, "{ca}:{cb}");
    }

    #[test]
    fn uniform_weights_give_equal_counts() {
        let mut cfg = WorldConfig::default();
        for r in &mut cfg.relations {
            r.fact_frequency_law = FrequencyLaw::Uniform;
        }
        let w = generate_world(&cfg, 3).unwrap();
        let templates = TemplateSet::default_for(&cfg);
        let lines = emit_pretraining_corpus(&w, &templates, 3).unwrap();
        let counts: BTreeMap<usize, usize> =
            w.triples
                .values()
                .flatten()
                .fold(BTreeMap::new(), |mut m, t| {
                    *m.entry(occurrences(&lines, &w, &templates, t)).or_default() += 1;
                    m
                });
        assert_eq!(counts.keys().copied().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn empty_world_gives_empty_stream() {
        let mut w = generate_world(&WorldConfig::default(), 0).unwrap();
        w.relations.clear();
        w.triples.clear();
        let lines =
            emit_pretraining_corpus(&w, &TemplateSet::default_for(&WorldConfig::default()), 0)
                .unwrap();
        assert!(lines.is_empty());
    }

    #[test]
    fn emission_is_pure() {
        let cfg = WorldConfig::default();
        let w = generate_world(&cfg, 5).unwrap();
        let t = TemplateSet::default_for(&cfg);
        assert_eq!(
            emit_pretraining_corpus(&w, &t, 2).unwrap(),
            emit_pretraining_corpus(&w, &t, 2).unwrap()
        );
    }

    #[test]
    fn counts_round_and_floor_at_one() {
        assert_eq!(emission_count(0.2), 1);
        assert_eq!(emission_count(2.5), 3);
        assert_eq!(emission_count(8.0), 8);
    }
}
