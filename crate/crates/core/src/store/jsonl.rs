//! JSON-lines files: prompt sets, labeled example sets (plus a manifest),
//! and predictions.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::ablate::Prediction;
use crate::error::{Error, Result};
use crate::probes::{LabeledExample, LabeledExampleSet, PromptInstance, Split};

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn from_jsonl<T: DeserializeOwned>(bytes: &[u8]) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(bytes).lines().enumerate() {
        let line = line.map_err(|e| Error::Invalid(format!("line {}: {e}", i + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Invalid(format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_jsonl(items)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_jsonl(&bytes)
}

pub fn write_prompts(path: impl AsRef<Path>, prompts: &[PromptInstance]) -> Result<()> {
    write_jsonl(path, prompts)
}

pub fn read_prompts(path: impl AsRef<Path>) -> Result<Vec<PromptInstance>> {
    read_jsonl(path)
}

/// One labeled-set line: the prompt fields plus `label`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledLine {
    pub relation: String,
    pub subject: String,
    pub object: String,
    pub text: String,
    pub split: Split,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSetManifest {
    pub target: String,
    pub ratio: usize,
    pub seed: u64,
    pub n_positive: usize,
    pub n_negative: usize,
    pub shortfall: usize,
}

pub fn labeled_lines(set: &LabeledExampleSet) -> Vec<LabeledLine> {
    set.examples
        .iter()
        .map(|e| LabeledLine {
            relation: e.prompt.relation.clone(),
            subject: e.prompt.subject.clone(),
            object: e.prompt.object.clone(),
            text: e.prompt.text.clone(),
            split: e.prompt.split,
            label: e.label,
        })
        .collect()
}

pub fn labeled_manifest(set: &LabeledExampleSet) -> LabeledSetManifest {
    LabeledSetManifest {
        target: set.relation_or_concept.clone(),
        ratio: set.ratio,
        seed: set.seed,
        n_positive: set.n_positive(),
        n_negative: set.n_negative(),
        shortfall: set.shortfall,
    }
}

/// Writes `<stem>.jsonl` and `<stem>.manifest.json` into `dir`.
pub fn write_labeled_set(dir: impl AsRef<Path>, stem: &str, set: &LabeledExampleSet) -> Result<()> {
    let dir = dir.as_ref();
    write_jsonl(dir.join(format!("{stem}.jsonl")), &labeled_lines(set))?;
    let path = dir.join(format!("{stem}.manifest.json"));
    let text = serde_json::to_string_pretty(&labeled_manifest(set))?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_labeled_set(dir: impl AsRef<Path>, stem: &str) -> Result<LabeledExampleSet> {
    let dir = dir.as_ref();
    let lines: Vec<LabeledLine> = read_jsonl(dir.join(format!("{stem}.jsonl")))?;
    let path = dir.join(format!("{stem}.manifest.json"));
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: LabeledSetManifest = serde_json::from_str(&text)?;
    let examples: Vec<LabeledExample> = lines
        .into_iter()
        .map(|l| {
            if l.label > 1 {
                return Err(Error::Invalid(format!("label {} is not 0 or 1", l.label)));
            }
            Ok(LabeledExample {
                prompt: PromptInstance {
                    relation: l.relation,
                    subject: l.subject,
                    object: l.object,
                    text: l.text,
                    split: l.split,
                },
                label: l.label,
            })
        })
        .collect::<Result<_>>()?;
    let set = LabeledExampleSet {
        relation_or_concept: manifest.target.clone(),
        examples,
        seed: manifest.seed,
        ratio: manifest.ratio,
        shortfall: manifest.shortfall,
    };
    if set.n_positive() != manifest.n_positive || set.n_negative() != manifest.n_negative {
        return Err(Error::Invalid(format!(
            "labeled set `{stem}` counts disagree with its manifest"
        )));
    }
    Ok(set)
}

pub fn write_predictions(path: impl AsRef<Path>, predictions: &[Prediction]) -> Result<()> {
    write_jsonl(path, predictions)
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    read_jsonl(path)
}
