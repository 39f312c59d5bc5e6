//! Dense activation sequences, their binary dump format, and max pooling.
//!
//! Dump layout (all integers and floats little-endian):
//!
//! ```text
//! "SCPA" | version u32 = 1 | d u32 | record_count u64
//! per record: label u8 (0 = general, 1 = copyrighted) | tokens u32 | tokens*d binary32, row-major
//! footer: byte_len u32 | UTF-8 "key=value\n" lines
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScopeError};
use crate::io::{check_magic, check_version, write_f32s, LeReader};

pub const DUMP_MAGIC: &[u8; 4] = b"SCPA";
pub const DUMP_VERSION: u32 = 1;

/// Which corpus a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CorpusLabel {
    General,
    Copyrighted,
}

impl CorpusLabel {
    pub fn to_byte(self) -> u8 {
        match self {
            CorpusLabel::General => 0,
            CorpusLabel::Copyrighted => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(CorpusLabel::General),
            1 => Some(CorpusLabel::Copyrighted),
            _ => None,
        }
    }
}

/// One sample: a sequence of `tokens` hidden states, each of width `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    label: CorpusLabel,
    dim: usize,
    values: Vec<f32>,
}

impl ActivationRecord {
    /// Builds a record from a row-major buffer of `tokens * dim` values.
    pub fn new(label: CorpusLabel, dim: usize, values: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(ScopeError::domain("activation dimension must be at least 1"));
        }
        if values.is_empty() || values.len() % dim != 0 {
            return Err(ScopeError::domain(format!(
                "record holds {} values, not a positive multiple of d={dim}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(ScopeError::domain(format!(
                "non-finite activation at token {}, component {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(ActivationRecord { label, dim, values })
    }

    pub fn from_vectors<V: AsRef<[f32]>>(label: CorpusLabel, vectors: &[V]) -> Result<Self> {
        let dim = vectors.first().map(|v| v.as_ref().len()).ok_or_else(|| {
            ScopeError::domain("record needs at least one token")
        })?;
        let mut values = Vec::with_capacity(dim * vectors.len());
        for (t, v) in vectors.iter().enumerate() {
            let v = v.as_ref();
            if v.len() != dim {
                return Err(ScopeError::domain(format!(
                    "token {t} has dimension {}, expected {dim}",
                    v.len()
                )));
            }
            values.extend_from_slice(v);
        }
        Self::new(label, dim, values)
    }

    pub fn label(&self) -> CorpusLabel {
        self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tokens(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn vector(&self, t: usize) -> &[f32] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f32]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

/// A labeled collection of records sharing one hidden size.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActivationDataset {
    pub dim: usize,
    pub records: Vec<ActivationRecord>,
    pub metadata: BTreeMap<String, String>,
}

impl ActivationDataset {
    pub fn new(dim: usize) -> Self {
        ActivationDataset {
            dim,
            records: Vec::new(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, record: ActivationRecord) -> Result<()> {
        if record.dim() != self.dim {
            return Err(ScopeError::domain(format!(
                "record dimension {} does not match dataset dimension {}",
                record.dim(),
                self.dim
            )));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, label: CorpusLabel) -> usize {
        self.records.iter().filter(|r| r.label() == label).count()
    }

    pub fn total_tokens(&self) -> usize {
        self.records.iter().map(|r| r.tokens()).sum()
    }

    /// Every token vector in the dataset, in record order.
    pub fn token_vectors(&self) -> impl Iterator<Item = &[f32]> {
        self.records.iter().flat_map(|r| r.vectors())
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(ScopeError::domain("dataset dimension must be at least 1"));
        }
        for (i, r) in self.records.iter().enumerate() {
            if r.dim() != self.dim {
                return Err(ScopeError::domain(format!(
                    "record {i} has dimension {}, dataset declares {}",
                    r.dim(),
                    self.dim
                )));
            }
        }
        for (k, v) in &self.metadata {
            if k.is_empty() || k.contains('=') || k.contains('\n') || v.contains('\n') {
                return Err(ScopeError::domain(format!(
                    "metadata entry {k:?} cannot be encoded as a key=value line"
                )));
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        self.validate()?;
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&DUMP_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        for r in &self.records {
            w.write_all(&[r.label().to_byte()])?;
            w.write_all(&(r.tokens() as u32).to_le_bytes())?;
            write_f32s(w, r.values().iter().copied())?;
        }
        let footer: String = self
            .metadata
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        w.write_all(&(footer.len() as u32).to_le_bytes())?;
        w.write_all(footer.as_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = LeReader::new(r);
        check_magic(&mut r, DUMP_MAGIC)?;
        check_version(&mut r, DUMP_VERSION)?;
        let dim = r.u32("dimension")? as usize;
        if dim == 0 {
            return Err(ScopeError::Format("dimension 0 in header".into()));
        }
        let count = r.u64("record count")?;
        let mut ds = ActivationDataset::new(dim);
        for i in 0..count {
            let at = r.offset();
            let label = CorpusLabel::from_byte(r.u8("record label")?).ok_or_else(|| {
                ScopeError::Corruption {
                    offset: at,
                    reason: format!("record {i} has an unknown label byte"),
                }
            })?;
            let tokens_at = r.offset();
            let tokens = r.u32("token count")? as usize;
            if tokens == 0 {
                return Err(ScopeError::Corruption {
                    offset: tokens_at,
                    reason: format!("record {i} has zero tokens"),
                });
            }
            let values = r.f32_array(tokens * dim, "record values")?;
            ds.records.push(ActivationRecord { label, dim, values });
        }
        let footer_len = r.u32("metadata length")? as usize;
        let footer_at = r.offset();
        let mut footer = vec![0u8; footer_len];
        r.fill(&mut footer, "metadata")?;
        let footer = String::from_utf8(footer).map_err(|e| ScopeError::Corruption {
            offset: footer_at + e.utf8_error().valid_up_to() as u64,
            reason: "metadata is not valid UTF-8".into(),
        })?;
        for line in footer.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| ScopeError::Corruption {
                offset: footer_at,
                reason: format!("metadata line {line:?} has no '='"),
            })?;
            ds.metadata.insert(k.to_string(), v.to_string());
        }
        r.expect_eof()?;
        Ok(ds)
    }
}

pub fn load_dump(path: impl AsRef<Path>) -> Result<ActivationDataset> {
    let file = File::open(path)?;
    ActivationDataset::read_from(BufReader::new(file))
}

/// Writes `dataset` to `path`. Validation happens before the file is created.
pub fn save_dump(dataset: &ActivationDataset, path: impl AsRef<Path>) -> Result<()> {
    dataset.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    dataset.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Per-sample summary vector in sparse-code space.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledVector {
    pub label: CorpusLabel,
    pub values: Vec<f64>,
}

/// Component-wise maximum over a sequence of equal-length vectors.
pub fn max_pool<V: AsRef<[f64]>>(code_sequence: &[V]) -> Result<Vec<f64>> {
    let (first, rest) = code_sequence
        .split_first()
        .ok_or_else(|| ScopeError::domain("cannot max-pool an empty sequence"))?;
    let mut out = first.as_ref().to_vec();
    for (t, v) in rest.iter().enumerate() {
        let v = v.as_ref();
        if v.len() != out.len() {
            return Err(ScopeError::domain(format!(
                "timestep {} has dimension {}, expected {}",
                t + 1,
                v.len(),
                out.len()
            )));
        }
        for (o, &x) in out.iter_mut().zip(v) {
            if x > *o {
                *o = x;
            }
        }
    }
    Ok(out)
}
