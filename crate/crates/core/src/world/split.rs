use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EntityId, Triple};
use crate::error::{Error, Result};

/// Detection and held-out evaluation triples with disjoint subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitTriples {
    pub det: Vec<Triple>,
    pub eva: Vec<Triple>,
}

/// Seeded uniform choice of exactly `n_eva` triples whose subjects do not
/// occur among the remaining (det) triples. Both halves keep input order.
pub fn split_det_eva(triples: &[Triple], n_eva: usize, seed: u64) -> Result<SplitTriples> {
    if n_eva >= triples.len() {
        return Err(Error::InfeasibleSplit(format!(
            "n_eva = {n_eva} leaves no det triples out of {}",
            triples.len()
        )));
    }
    let mut groups: BTreeMap<EntityId, Vec<usize>> = BTreeMap::new();
    for (i, t) in triples.iter().enumerate() {
        groups.entry(t.subject).or_default().push(i);
    }
    let mut subjects: Vec<EntityId> = groups.keys().copied().collect();
    subjects.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut eva_idx = Vec::with_capacity(n_eva);
    for s in subjects {
        let g = &groups[&s];
        if eva_idx.len() + g.len() <= n_eva {
            eva_idx.extend_from_slice(g);
        }
        if eva_idx.len() == n_eva {
            break;
        }
    }
    if eva_idx.len() != n_eva {
        return Err(Error::InfeasibleSplit(format!(
            "cannot select exactly {n_eva} triples with subjects disjoint from the rest"
        )));
    }
    let mut is_eva = vec![false; triples.len()];
    for i in eva_idx {
        is_eva[i] = true;
    }
    let (eva, det): (Vec<_>, Vec<_>) = triples.iter().cloned().zip(is_eva).partition(|(_, e)| *e);
    Ok(SplitTriples {
        det: det.into_iter().map(|(t, _)| t).collect(),
        eva: eva.into_iter().map(|(t, _)| t).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn triples(subjects: impl IntoIterator<Item = u32>) -> Vec<Triple> {
        subjects
            .into_iter()
            .map(|s| Triple {
                subject: s,
                relation: "r".into(),
                object: 10_000,
                frequency_weight: 1.0,
            })
            .collect()
    }

    #[test]
    fn fifty_of_three_hundred() {
        let ts = triples(0..300);
        let sp = split_det_eva(&ts, 50, 3).unwrap();
        assert_eq!(sp.det.len(), 250);
        assert_eq!(sp.eva.len(), 50);
        let d: BTreeSet<_> = sp.det.iter().map(|t| t.subject).collect();
        assert!(sp.eva.iter().all(|t| !d.contains(&t.subject)));
        assert_ne!(sp, split_det_eva(&ts, 50, 4).unwrap());
        assert_eq!(sp, split_det_eva(&ts, 50, 3).unwrap());
    }

    #[test]
    fn empty_det_is_an_error() {
        let ts = triples(0..10);
        assert!(matches!(
            split_det_eva(&ts, 10, 0),
            Err(Error::InfeasibleSplit(_))
        ));
    }

    #[test]
    fn one_shared_subject_is_infeasible() {
        let ts = triples(std::iter::repeat_n(5, 10));
        assert!(matches!(
            split_det_eva(&ts, 1, 0),
            Err(Error::InfeasibleSplit(_))
        ));
    }

    #[test]
    fn repeated_subjects_stay_together() {
        let ts = triples([1, 1, 2, 2, 3, 3, 4, 4]);
        let sp = split_det_eva(&ts, 4, 9).unwrap();
        let d: BTreeSet<_> = sp.det.iter().map(|t| t.subject).collect();
        let e: BTreeSet<_> = sp.eva.iter().map(|t| t.subject).collect();
        assert!(d.is_disjoint(&e));
        assert_eq!(e.len(), 2);
    }
}
