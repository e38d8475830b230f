//! Ranking CSV (`kind,layer,column,ap`). Mask files share the format; their
//! rows are the masked neurons and the `ap` column is informational.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expert::{NeuronRanking, RankEntry};
use crate::tinylm::{NeuronId, NeuronKind, SuppressionMask};

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    kind: String,
    layer: u16,
    column: u32,
    ap: f64,
}

fn to_rows(entries: &[RankEntry]) -> Vec<Row> {
    entries
        .iter()
        .map(|e| Row {
            kind: e.neuron.kind.name().to_string(),
            layer: e.neuron.layer,
            column: e.neuron.column,
            ap: e.ap,
        })
        .collect()
}

fn rows_to_csv(rows: &[Row]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(["kind", "layer", "column", "ap"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Invalid(e.to_string()))
}

fn csv_to_entries(bytes: &[u8]) -> Result<Vec<RankEntry>> {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["kind", "layer", "column", "ap"] {
        return Err(Error::Invalid(format!(
            "ranking header is {:?}, expected kind,layer,column,ap",
            header
        )));
    }
    r.deserialize::<Row>()
        .map(|row| {
            let row = row?;
            let kind: NeuronKind = row.kind.parse()?;
            if !(0.0..=1.0).contains(&row.ap) {
                return Err(Error::Invalid(format!("ap {} outside [0, 1]", row.ap)));
            }
            Ok(RankEntry {
                neuron: NeuronId {
                    kind,
                    layer: row.layer,
                    column: row.column,
                },
                ap: row.ap,
            })
        })
        .collect()
}

pub fn ranking_to_csv(ranking: &NeuronRanking) -> Result<Vec<u8>> {
    rows_to_csv(&to_rows(&ranking.entries))
}

pub fn ranking_from_csv(target: impl Into<String>, bytes: &[u8]) -> Result<NeuronRanking> {
    let ranking = NeuronRanking {
        target: target.into(),
        entries: csv_to_entries(bytes)?,
    };
    if !ranking.is_sorted() {
        return Err(Error::Invalid(
            "ranking rows are not sorted by ap, then neuron".into(),
        ));
    }
    Ok(ranking)
}

pub fn write_ranking(path: impl AsRef<Path>, ranking: &NeuronRanking) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, ranking_to_csv(ranking)?).map_err(|e| Error::io(path, e))
}

/// The target name is taken from the file stem.
pub fn read_ranking(path: impl AsRef<Path>) -> Result<NeuronRanking> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let target = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default();
    ranking_from_csv(target, &bytes)
}

/// Mask rows in neuron order with `ap` 0 unless a ranking supplies scores.
pub fn mask_to_csv(mask: &SuppressionMask, scores: Option<&NeuronRanking>) -> Result<Vec<u8>> {
    let entries: Vec<RankEntry> = mask
        .neurons
        .iter()
        .map(|&neuron| RankEntry {
            neuron,
            ap: scores
                .and_then(|r| r.entries.iter().find(|e| e.neuron == neuron))
                .map_or(0.0, |e| e.ap),
        })
        .collect();
    rows_to_csv(&to_rows(&entries))
}

pub fn mask_from_csv(bytes: &[u8]) -> Result<SuppressionMask> {
    Ok(csv_to_entries(bytes)?
        .into_iter()
        .map(|e| e.neuron)
        .collect())
}

pub fn write_mask(
    path: impl AsRef<Path>,
    mask: &SuppressionMask,
    scores: Option<&NeuronRanking>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, mask_to_csv(mask, scores)?).map_err(|e| Error::io(path, e))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<SuppressionMask> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    mask_from_csv(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranking() -> NeuronRanking {
        let ids = [
            NeuronId::new(NeuronKind::Up, 0, 3),
            NeuronId::new(NeuronKind::Gate, 1, 0),
            NeuronId::new(NeuronKind::Down, 2, 9),
            NeuronId::new(NeuronKind::AttnO, 0, 1),
        ];
        NeuronRanking::from_scores("company_ceo", &ids, &[0.5, 1.0, 0.1 + 0.2, 0.5])
    }

    #[test]
    fn csv_round_trip_is_byte_identical() {
        let r = ranking();
        let bytes = ranking_to_csv(&r).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(
            text.starts_with("kind,layer,column,ap\ngate,1,0,1.0\n"),
            "{text}"
        );
        let back = ranking_from_csv("company_ceo", &bytes).unwrap();
        assert_eq!(back, r);
        assert_eq!(ranking_to_csv(&back).unwrap(), bytes);
    }

    #[test]
    fn unsorted_or_bad_rows_are_rejected() {
        assert!(ranking_from_csv("r", b"kind,layer,column,ap\nup,0,0,0.1\nup,0,1,0.9\n").is_err());
        assert!(ranking_from_csv("r", b"kind,layer,column,ap\nsideways,0,0,0.1\n").is_err());
        assert!(ranking_from_csv("r", b"kind,layer,col,ap\nup,0,0,0.1\n").is_err());
        assert!(ranking_from_csv("r", b"kind,layer,column,ap\nup,0,0,1.5\n").is_err());
    }

    #[test]
    fn ranking_files_are_valid_masks() {
        let r = ranking();
        let mask = mask_from_csv(&ranking_to_csv(&r).unwrap()).unwrap();
        assert_eq!(mask.len(), 4);
        let again = mask_from_csv(&mask_to_csv(&mask, Some(&r)).unwrap()).unwrap();
        assert_eq!(again, mask);
        assert!(
            mask_from_csv(&mask_to_csv(&SuppressionMask::empty(), None).unwrap())
                .unwrap()
                .is_empty()
        );
    }
}
