//! The `RSNACT01` activation-matrix file.
//!
//! Layout (all integers little-endian): 8-byte magic, `u32` version, `u32` J
//! (examples), `u32` N (neurons), N records of `(u8 kind, u8 pad, u16 layer,
//! u32 column)`, J label bytes, then J×N row-major `f32` values.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::expert::ActivationMatrix;
use crate::tinylm::{NeuronId, NeuronKind};

pub const ACTIVATION_MAGIC: &[u8; 8] = b"RSNACT01";
pub const ACTIVATION_VERSION: u32 = 1;

const HEADER: usize = 8 + 4 + 4 + 4;
const RECORD: usize = 8;

pub fn activation_to_bytes(matrix: &ActivationMatrix) -> Result<Vec<u8>> {
    matrix.validate()?;
    let (j, n) = (matrix.n_examples(), matrix.n_neurons());
    let mut out = Vec::with_capacity(HEADER + n * RECORD + j + 4 * j * n);
    out.extend_from_slice(ACTIVATION_MAGIC);
    out.extend_from_slice(&ACTIVATION_VERSION.to_le_bytes());
    out.extend_from_slice(&(j as u32).to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for id in &matrix.neuron_ids {
        out.push(id.kind.code());
        out.push(0);
        out.extend_from_slice(&id.layer.to_le_bytes());
        out.extend_from_slice(&id.column.to_le_bytes());
    }
    out.extend(matrix.labels.iter().map(|&l| l as u8));
    for v in &matrix.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn u32_at(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| {
            Error::Truncated(format!(
                "need 4 bytes at offset {at}, file has {}",
                bytes.len()
            ))
        })
}

pub fn activation_from_bytes(bytes: &[u8]) -> Result<ActivationMatrix> {
    let magic = bytes
        .get(..8)
        .ok_or_else(|| Error::Truncated(format!("{} bytes, no room for the magic", bytes.len())))?;
    if magic != ACTIVATION_MAGIC {
        // Same family, other revision: report it as a version mismatch.
        if magic[..6] == ACTIVATION_MAGIC[..6] {
            if let Some(v) = std::str::from_utf8(&magic[6..])
                .ok()
                .and_then(|d| d.parse().ok())
            {
                return Err(Error::UnsupportedVersion(v));
            }
        }
        return Err(Error::BadMagic {
            found: String::from_utf8_lossy(magic).into_owned(),
            expected: String::from_utf8_lossy(ACTIVATION_MAGIC).into_owned(),
        });
    }
    let version = u32_at(bytes, 8)?;
    if version != ACTIVATION_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let j = u32_at(bytes, 12)? as usize;
    let n = u32_at(bytes, 16)? as usize;
    let expected = n
        .checked_mul(RECORD)
        .and_then(|x| x.checked_add(HEADER + j))
        .and_then(|x| j.checked_mul(n)?.checked_mul(4)?.checked_add(x))
        .ok_or_else(|| Error::Invalid(format!("header sizes J={j}, N={n} overflow")))?;
    if bytes.len() < expected {
        return Err(Error::Truncated(format!(
            "{} bytes, header promises {expected}",
            bytes.len()
        )));
    }
    if bytes.len() > expected {
        return Err(Error::Invalid(format!(
            "{} trailing bytes after activation payload",
            bytes.len() - expected
        )));
    }
    let mut at = HEADER;
    let mut neuron_ids = Vec::with_capacity(n);
    for _ in 0..n {
        let kind = NeuronKind::from_code(bytes[at])?;
        if bytes[at + 1] != 0 {
            return Err(Error::Invalid("non-zero pad byte in neuron record".into()));
        }
        let layer = u16::from_le_bytes([bytes[at + 2], bytes[at + 3]]);
        let column = u32_at(bytes, at + 4)?;
        neuron_ids.push(NeuronId {
            kind,
            layer,
            column,
        });
        at += RECORD;
    }
    let labels = bytes[at..at + j]
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::Invalid(format!("label byte {other} is not 0 or 1"))),
        })
        .collect::<Result<Vec<bool>>>()?;
    at += j;
    let values: Vec<f32> = bytes[at..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "example {}, neuron {}",
            i / n,
            i % n
        )));
    }
    ActivationMatrix::new(neuron_ids, labels, values)
}

pub fn write_activation_file(path: impl AsRef<Path>, matrix: &ActivationMatrix) -> Result<()> {
    let path = path.as_ref();
    let bytes = activation_to_bytes(matrix)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_activation_file(path: impl AsRef<Path>) -> Result<ActivationMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    activation_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix() -> ActivationMatrix {
        let ids = vec![
            NeuronId::new(NeuronKind::Up, 0, 1),
            NeuronId::new(NeuronKind::Gate, 0, 1),
            NeuronId::new(NeuronKind::Down, 0, 3),
            NeuronId::new(NeuronKind::Up, 1, 0),
            NeuronId::new(NeuronKind::AttnV, 1, 7),
        ];
        let values = (0..15).map(|i| i as f32 * 0.25 - 1.0).collect();
        ActivationMatrix::new(ids, vec![true, false, false], values).unwrap()
    }

    #[test]
    fn three_by_five_round_trip() {
        let m = matrix();
        let bytes = activation_to_bytes(&m).unwrap();
        assert_eq!(bytes.len(), 20 + 5 * 8 + 3 + 60);
        let back = activation_from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(activation_to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn header_is_as_documented() {
        let bytes = activation_to_bytes(&matrix()).unwrap();
        assert_eq!(&bytes[..8], b"RSNACT01");
        assert_eq!(&bytes[8..20], &[1, 0, 0, 0, 3, 0, 0, 0, 5, 0, 0, 0]);
        // Second record: gate, pad, layer 0, column 1.
        assert_eq!(&bytes[28..36], &[1, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&bytes[60..63], &[1, 0, 0]);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let good = activation_to_bytes(&matrix()).unwrap();
        let mut bad = good.clone();
        bad[6..8].copy_from_slice(b"99");
        assert!(matches!(
            activation_from_bytes(&bad),
            Err(Error::UnsupportedVersion(99))
        ));
        let mut bad = good.clone();
        bad[..8].copy_from_slice(b"TLMW0001");
        assert!(matches!(
            activation_from_bytes(&bad),
            Err(Error::BadMagic { .. })
        ));
        let mut bad = good.clone();
        bad[8] = 2;
        assert!(matches!(
            activation_from_bytes(&bad),
            Err(Error::UnsupportedVersion(2))
        ));
        for cut in [0, 7, 19, 30, good.len() - 1] {
            assert!(
                matches!(
                    activation_from_bytes(&good[..cut]),
                    Err(Error::Truncated(_))
                ),
                "cut {cut}"
            );
        }
        let mut bad = good.clone();
        let last = bad.len() - 4;
        bad[last..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            activation_from_bytes(&bad),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn empty_matrix_is_not_written() {
        let mut m = matrix();
        m.labels.clear();
        m.values.clear();
        assert!(activation_to_bytes(&m).is_err());
    }
}
