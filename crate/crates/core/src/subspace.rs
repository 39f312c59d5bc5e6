//! Top-n selection of the protected subspace and its JSON persistence.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alignment::AlignmentReport;
use crate::error::{Result, ScopeError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimScore {
    pub index: usize,
    pub score: f64,
}

/// An ordered set of selected code dimensions, highest score first.
///
/// `dims[n - 1].score` is the selection cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceSpec {
    pub k: usize,
    pub tau: f64,
    pub n: usize,
    pub dims: Vec<DimScore>,
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
}

impl SubspaceSpec {
    /// A spec over `k` dimensions selecting nothing. Clamping with it is a no-op.
    pub fn empty(k: usize, tau: f64) -> Self {
        SubspaceSpec {
            k,
            tau,
            n: 0,
            dims: Vec::new(),
            provenance: BTreeMap::new(),
        }
    }

    /// Builds a spec from explicit indices, all given score 1.
    pub fn from_indices(k: usize, tau: f64, indices: &[usize]) -> Result<Self> {
        let spec = SubspaceSpec {
            k,
            tau,
            n: indices.len(),
            dims: indices
                .iter()
                .map(|&index| DimScore { index, score: 1.0 })
                .collect(),
            provenance: BTreeMap::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n != self.dims.len() {
            return Err(ScopeError::domain(format!(
                "n = {} but {} dims listed",
                self.n,
                self.dims.len()
            )));
        }
        let mut seen = vec![false; self.k];
        for d in &self.dims {
            if d.index >= self.k {
                return Err(ScopeError::domain(format!(
                    "dimension {} out of range for k={}",
                    d.index, self.k
                )));
            }
            if std::mem::replace(&mut seen[d.index], true) {
                return Err(ScopeError::domain(format!("dimension {} listed twice", d.index)));
            }
        }
        if self.dims.windows(2).any(|w| w[1].score > w[0].score) {
            return Err(ScopeError::domain("dims must be sorted by non-increasing score"));
        }
        Ok(())
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.dims.iter().map(|d| d.index)
    }

    /// Membership mask of length `k`.
    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.k];
        for i in self.indices() {
            mask[i] = true;
        }
        mask
    }

    pub fn cutoff(&self) -> Option<f64> {
        self.dims.last().map(|d| d.score)
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SubspaceSpec = serde_json::from_str(text)?;
        spec.validate().map_err(|e| ScopeError::Format(e.to_string()))?;
        Ok(spec)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// The `n` highest-scoring dimensions. Equal scores go to the smaller index.
pub fn select_top_n(report: &AlignmentReport, n: usize, tau: f64) -> Result<SubspaceSpec> {
    if n == 0 || n > report.k {
        return Err(ScopeError::domain(format!(
            "n must be in 1..={}, got {n}",
            report.k
        )));
    }
    let mut order: Vec<usize> = (0..report.k).collect();
    let by_score = |a: &usize, b: &usize| {
        report.scores[*b]
            .total_cmp(&report.scores[*a])
            .then(a.cmp(b))
    };
    if n < order.len() {
        order.select_nth_unstable_by(n - 1, by_score);
        order.truncate(n);
    }
    order.sort_unstable_by(by_score);
    let spec = SubspaceSpec {
        k: report.k,
        tau,
        n,
        dims: order
            .into_iter()
            .map(|index| DimScore {
                index,
                score: report.scores[index],
            })
            .collect(),
        provenance: BTreeMap::new(),
    };
    spec.validate()?;
    Ok(spec)
}

/// Zeroes every component of `z` outside the subspace.
pub fn project(z: &[f64], spec: &SubspaceSpec) -> Result<Vec<f64>> {
    if z.len() != spec.k {
        return Err(ScopeError::domain(format!(
            "code has dimension {}, subspace is over k={}",
            z.len(),
            spec.k
        )));
    }
    let mask = spec.mask();
    Ok(z.iter()
        .zip(mask)
        .map(|(&v, keep)| if keep { v } else { 0.0 })
        .collect())
}
