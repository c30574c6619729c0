//! Training datasets of (syndrome, diagnosis) pairs and their on-disk form.
//!
//! A dataset never stores the sampled errors: sample `i` is a pure function
//! of the header's seed and `i`, so anything that needs the error regenerates
//! it. Files carry a fixed magic and version, a JSON header, and one packed
//! little-endian bit payload with each sample's syndrome and diagnosis words
//! stored back to back.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::{Family, StabilizerCode};
use crate::diagnosis::DiagnosisScheme;
use crate::gf2::BitVec;
use crate::noise::NoiseModel;

const MAGIC: [u8; 4] = *b"QDS\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset format version {found}, this build reads {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt dataset: {0}")]
    CorruptPayload(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One training pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingSample {
    /// Syndrome, `n - k` bits.
    pub s: BitVec,
    /// Diagnosis, `|g|` bits.
    pub g: BitVec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub family: Family,
    pub d: usize,
    pub noise: NoiseModel,
    /// Hash of the generating scheme's row matrix.
    pub scheme_id: String,
    pub sample_count: usize,
    pub seed: u64,
    pub syndrome_bits: usize,
    pub diagnosis_bits: usize,
}

/// An in-memory dataset: header plus the packed payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    payload: Vec<u64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.header.sample_count
    }

    pub fn is_empty(&self) -> bool {
        self.header.sample_count == 0
    }

    fn syndrome_words(&self) -> usize {
        self.header.syndrome_bits.div_ceil(64)
    }

    fn stride(&self) -> usize {
        self.syndrome_words() + self.header.diagnosis_bits.div_ceil(64)
    }

    pub fn sample(&self, i: usize) -> TrainingSample {
        assert!(i < self.len(), "sample index out of range");
        let stride = self.stride();
        let sw = self.syndrome_words();
        let base = i * stride;
        TrainingSample {
            s: BitVec::from_words(self.header.syndrome_bits, &self.payload[base..base + sw]),
            g: BitVec::from_words(
                self.header.diagnosis_bits,
                &self.payload[base + sw..base + stride],
            ),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = TrainingSample> + '_ {
        (0..self.len()).map(|i| self.sample(i))
    }
}

/// Samples `count` errors from the model and records each one's syndrome and
/// diagnosis. Sample `i` comes from `model.sample_error(n, seed, i)`, so the
/// result is identical however the index range is split across threads.
pub fn generate_dataset(
    code: &StabilizerCode,
    scheme: &DiagnosisScheme,
    model: &NoiseModel,
    count: usize,
    seed: u64,
) -> Dataset {
    let header = DatasetHeader {
        format_version: FORMAT_VERSION,
        family: code.family,
        d: code.d,
        noise: model.clone(),
        scheme_id: scheme.id(),
        sample_count: count,
        seed,
        syndrome_bits: code.n - code.k,
        diagnosis_bits: scheme.rows(),
    };
    let sw = header.syndrome_bits.div_ceil(64);
    let gw = header.diagnosis_bits.div_ceil(64);
    let stride = sw + gw;
    let mut payload = vec![0u64; count * stride];
    payload.par_chunks_mut(stride).enumerate().for_each(|(i, chunk)| {
        let e = model.sample_error(code.n, seed, i as u64);
        let s = code.syndrome(&e);
        let g = scheme.diagnosis_of(&e);
        chunk[..sw].copy_from_slice(s.words());
        chunk[sw..].copy_from_slice(g.words());
    });
    Dataset { header, payload }
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let json = serde_json::to_vec(&ds.header)
        .map_err(|e| DatasetError::CorruptPayload(format!("unencodable header: {e}")))?;
    let mut bytes =
        Vec::with_capacity(4 + 4 + 8 + json.len() + 8 + 8 * ds.payload.len());
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    bytes.extend_from_slice(&(ds.payload.len() as u64).to_le_bytes());
    for w in &ds.payload {
        bytes.extend_from_slice(&w.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let bytes = fs::read(path)?;
    let mut off = 0usize;
    let magic = take(&bytes, &mut off, 4)?;
    if magic != MAGIC {
        return Err(DatasetError::CorruptPayload("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&bytes, &mut off, 4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(DatasetError::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let json_len = u64::from_le_bytes(take(&bytes, &mut off, 8)?.try_into().unwrap()) as usize;
    let header: DatasetHeader = serde_json::from_slice(take(&bytes, &mut off, json_len)?)
        .map_err(|e| DatasetError::CorruptPayload(format!("unreadable header: {e}")))?;
    if header.format_version != version {
        return Err(DatasetError::CorruptPayload("header disagrees on version".into()));
    }
    let words = u64::from_le_bytes(take(&bytes, &mut off, 8)?.try_into().unwrap()) as usize;
    let stride = header.syndrome_bits.div_ceil(64) + header.diagnosis_bits.div_ceil(64);
    if words != header.sample_count * stride {
        return Err(DatasetError::CorruptPayload("payload length disagrees with header".into()));
    }
    let mut payload = Vec::with_capacity(words);
    for _ in 0..words {
        payload.push(u64::from_le_bytes(take(&bytes, &mut off, 8)?.try_into().unwrap()));
    }
    if off != bytes.len() {
        return Err(DatasetError::CorruptPayload("trailing bytes".into()));
    }
    Ok(Dataset { header, payload })
}

fn take<'a>(bytes: &'a [u8], off: &mut usize, len: usize) -> Result<&'a [u8], DatasetError> {
    let end = off.checked_add(len).filter(|&e| e <= bytes.len());
    match end {
        Some(end) => {
            let slice = &bytes[*off..end];
            *off = end;
            Ok(slice)
        }
        None => Err(DatasetError::CorruptPayload("truncated file".into())),
    }
}

// ==================== tests ====================
