//! Copyright Alignment Score: for one code dimension, the fraction of
//! (protected, general) sample pairs in which the protected sample's pooled
//! activation is strictly larger.
//!
//! This is the Mann-Whitney AUROC except that ties count zero instead of
//! one half, so it equals the usual AUROC only on tie-free data. All-zero
//! dimensions therefore score 0 rather than 0.5.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activations::{CorpusLabel, PooledVector};
use crate::error::{Result, ScopeError};

fn check_inputs(cr_values: &[f64], gen_values: &[f64]) -> Result<()> {
    if cr_values.is_empty() || gen_values.is_empty() {
        return Err(ScopeError::domain(format!(
            "alignment score needs samples from both corpora (got {} copyrighted, {} general)",
            cr_values.len(),
            gen_values.len()
        )));
    }
    if cr_values.iter().chain(gen_values).any(|v| !v.is_finite()) {
        return Err(ScopeError::domain("alignment score inputs must be finite"));
    }
    Ok(())
}

/// Pairwise definition, O(n_cr · n_gen).
pub fn score_dimension(cr_values: &[f64], gen_values: &[f64]) -> Result<f64> {
    check_inputs(cr_values, gen_values)?;
    let mut wins: u64 = 0;
    for &a in cr_values {
        for &b in gen_values {
            if a > b {
                wins += 1;
            }
        }
    }
    Ok(wins as f64 / (cr_values.len() as u64 * gen_values.len() as u64) as f64)
}

/// Same value as [`score_dimension`], computed by sorting the general values
/// once and binary-searching each copyrighted value.
pub fn score_dimension_fast(cr_values: &[f64], gen_values: &[f64]) -> Result<f64> {
    check_inputs(cr_values, gen_values)?;
    let mut sorted = gen_values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(strict_wins_sorted(cr_values, &sorted) as f64
        / (cr_values.len() as u64 * gen_values.len() as u64) as f64)
}

fn strict_wins_sorted(cr_values: &[f64], sorted_gen: &[f64]) -> u64 {
    cr_values
        .iter()
        .map(|&a| sorted_gen.partition_point(|&b| b < a) as u64)
        .sum()
}

/// Per-dimension scores over a labeled set of pooled codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub k: usize,
    pub scores: Vec<f64>,
    pub n_cr: usize,
    pub n_gen: usize,
}

impl AlignmentReport {
    pub fn new(scores: Vec<f64>, n_cr: usize, n_gen: usize) -> Result<Self> {
        if scores.is_empty() {
            return Err(ScopeError::domain("report needs at least one dimension"));
        }
        if let Some(i) = scores.iter().position(|s| !(0.0..=1.0).contains(s)) {
            return Err(ScopeError::domain(format!(
                "score {} for dimension {i} is outside [0, 1]",
                scores[i]
            )));
        }
        if n_cr == 0 || n_gen == 0 {
            return Err(ScopeError::domain("report needs n_cr >= 1 and n_gen >= 1"));
        }
        Ok(AlignmentReport {
            k: scores.len(),
            scores,
            n_cr,
            n_gen,
        })
    }

    /// CSV with header `dim,score,n_cr,n_gen`, scores to 12 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["dim", "score", "n_cr", "n_gen"])?;
        for (i, s) in self.scores.iter().enumerate() {
            out.write_record([
                i.to_string(),
                format_significant(*s, 12),
                self.n_cr.to_string(),
                self.n_gen.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["dim", "score", "n_cr", "n_gen"] {
            return Err(ScopeError::Format(format!("unexpected report header {header:?}")));
        }
        let mut scores = Vec::new();
        let mut counts = None;
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let bad = |what: &str| ScopeError::Format(format!("row {}: bad {what}", row + 1));
            let dim: usize = field(0).parse().map_err(|_| bad("dim"))?;
            if dim != scores.len() {
                return Err(ScopeError::Format(format!(
                    "row {} has dim {dim}, expected {}",
                    row + 1,
                    scores.len()
                )));
            }
            scores.push(field(1).parse::<f64>().map_err(|_| bad("score"))?);
            let n_cr: usize = field(2).parse().map_err(|_| bad("n_cr"))?;
            let n_gen: usize = field(3).parse().map_err(|_| bad("n_gen"))?;
            match counts {
                None => counts = Some((n_cr, n_gen)),
                Some(c) if c != (n_cr, n_gen) => {
                    return Err(ScopeError::Format("sample counts differ between rows".into()))
                }
                _ => {}
            }
        }
        let (n_cr, n_gen) = counts.ok_or_else(|| ScopeError::Format("report has no rows".into()))?;
        Self::new(scores, n_cr, n_gen).map_err(|e| ScopeError::Format(e.to_string()))
    }
}

/// `%.{digits}g`-style formatting: shortest of fixed or exponent notation,
/// trailing zeros removed.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -5 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        format!("{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn split_by_label(pooled: &[PooledVector]) -> Result<(Vec<&PooledVector>, Vec<&PooledVector>, usize)> {
    let k = pooled
        .first()
        .map(|p| p.values.len())
        .ok_or_else(|| ScopeError::domain("no pooled vectors to score"))?;
    if pooled.iter().any(|p| p.values.len() != k) {
        return Err(ScopeError::domain("pooled vectors differ in dimension"));
    }
    let (cr, gen): (Vec<_>, Vec<_>) = pooled
        .iter()
        .partition(|p| p.label == CorpusLabel::Copyrighted);
    if cr.is_empty() || gen.is_empty() {
        return Err(ScopeError::domain(format!(
            "scoring needs both labels (got {} copyrighted, {} general)",
            cr.len(),
            gen.len()
        )));
    }
    Ok((cr, gen, k))
}

/// Scores every dimension of the pooled codes.
pub fn score_report(pooled: &[PooledVector]) -> Result<AlignmentReport> {
    let (cr, gen, k) = split_by_label(pooled)?;
    let scores = (0..k)
        .into_par_iter()
        .map(|i| {
            let a: Vec<f64> = cr.iter().map(|p| p.values[i]).collect();
            let b: Vec<f64> = gen.iter().map(|p| p.values[i]).collect();
            score_dimension_fast(&a, &b)
        })
        .collect::<Result<Vec<_>>>()?;
    AlignmentReport::new(scores, cr.len(), gen.len())
}

/// Mean per-dimension score over `index_set`, which must be non-empty,
/// duplicate-free and in range.
pub fn subspace_score(report: &AlignmentReport, index_set: &[usize]) -> Result<f64> {
    if index_set.is_empty() {
        return Err(ScopeError::domain("subspace index set is empty"));
    }
    let mut seen = vec![false; report.k];
    for &i in index_set {
        if i >= report.k {
            return Err(ScopeError::domain(format!(
                "index {i} out of range for k={}",
                report.k
            )));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(ScopeError::domain(format!("index {i} repeated in subspace")));
        }
    }
    let sum: f64 = index_set.iter().map(|&i| report.scores[i]).sum();
    Ok(sum / index_set.len() as f64)
}

/// Thresholded firing statistics for one dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionStats {
    pub dim: usize,
    /// Fraction of copyrighted samples whose pooled activation exceeds tau.
    pub cr_rate: f64,
    /// Fraction of general samples whose pooled activation exceeds tau.
    pub gen_rate: f64,
    /// Fraction of general samples with pooled activation exactly zero.
    pub gen_silent: f64,
    pub cr_mean_max: f64,
    pub gen_mean_max: f64,
}

impl DimensionStats {
    /// `cr_rate` is the coverage fraction and `gen_silent` the exclusivity
    /// fraction; an ideal protected dimension has both equal to 1.
    pub fn coverage(&self) -> f64 {
        self.cr_rate
    }

    pub fn exclusivity(&self) -> f64 {
        self.gen_silent
    }
}

/// Activation frequencies and mean pooled maxima per dimension and corpus.
pub fn dimension_stats(pooled: &[PooledVector], tau: f64) -> Result<Vec<DimensionStats>> {
    let (cr, gen, k) = split_by_label(pooled)?;
    let frac = |set: &[&PooledVector], i: usize, pred: &dyn Fn(f64) -> bool| {
        set.iter().filter(|p| pred(p.values[i])).count() as f64 / set.len() as f64
    };
    let mean = |set: &[&PooledVector], i: usize| {
        set.iter().map(|p| p.values[i]).sum::<f64>() / set.len() as f64
    };
    Ok((0..k)
        .map(|i| DimensionStats {
            dim: i,
            cr_rate: frac(&cr, i, &|v| v > tau),
            gen_rate: frac(&gen, i, &|v| v > tau),
            gen_silent: frac(&gen, i, &|v| v == 0.0),
            cr_mean_max: mean(&cr, i),
            gen_mean_max: mean(&gen, i),
        })
        .collect())
}

pub fn write_stats_csv<W: Write>(stats: &[DimensionStats], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for s in stats {
        out.serialize(s)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pooled(label: CorpusLabel, values: Vec<f64>) -> PooledVector {
        PooledVector { label, values }
    }

    #[test]
    fn score_examples() {
        assert_eq!(score_dimension(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(score_dimension(&[5.0], &[5.0]).unwrap(), 0.0);
        assert_eq!(score_dimension_fast(&[5.0], &[5.0]).unwrap(), 0.0);
        assert_eq!(score_dimension_fast(&[2.0, 2.0], &[1.0, 3.0]).unwrap(), 0.5);
        assert_eq!(score_dimension(&[2.0, 2.0], &[1.0, 3.0]).unwrap(), 0.5);
    }

    #[test]
    fn empty_or_non_finite_inputs_rejected() {
        assert!(score_dimension(&[], &[1.0]).is_err());
        assert!(score_dimension_fast(&[1.0], &[]).is_err());
        assert!(score_dimension_fast(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn same_distribution_is_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let a: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
        let slow = score_dimension(&a, &b).unwrap();
        assert!((slow - 0.5).abs() < 0.1, "{slow}");
        assert_eq!(score_dimension_fast(&a, &b).unwrap(), slow);
    }

    #[test]
    fn report_single_separating_dimension() {
        let mut v = Vec::new();
        for _ in 0..5 {
            v.push(pooled(CorpusLabel::Copyrighted, vec![0.0, 0.0, 0.0, 6.5, 0.0]));
            v.push(pooled(CorpusLabel::General, vec![0.0; 5]));
        }
        let r = score_report(&v).unwrap();
        assert_eq!(r.scores, vec![0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!((r.n_cr, r.n_gen, r.k), (5, 5, 5));
    }

    #[test]
    fn report_requires_both_labels() {
        let v = vec![pooled(CorpusLabel::General, vec![1.0])];
        assert!(matches!(score_report(&v), Err(ScopeError::Domain(_))));
    }

    #[test]
    fn subspace_score_examples() {
        let r = AlignmentReport::new(vec![0.9, 0.5, 0.1], 3, 3).unwrap();
        assert_eq!(subspace_score(&r, &[1]).unwrap(), 0.5);
        assert!((subspace_score(&r, &[0, 1]).unwrap() - 0.7).abs() < 1e-15);
        assert!(subspace_score(&r, &[]).is_err());
        assert!(subspace_score(&r, &[3]).is_err());
        assert!(subspace_score(&r, &[1, 1]).is_err());
    }

    #[test]
    fn csv_format_and_round_trip() {
        let r = AlignmentReport::new(vec![0.5, 1.0 / 3.0, 0.0, 1.0], 7, 9).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "dim,score,n_cr,n_gen\n0,0.5,7,9\n1,0.333333333333,7,9\n2,0,7,9\n3,1,7,9\n"
        );
        let back = AlignmentReport::read_csv(&buf[..]).unwrap();
        assert_eq!(back.scores[0], 0.5);
        assert!((back.scores[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_significant(0.123456789012345, 12), "0.123456789012");
        assert_eq!(format_significant(1.0, 12), "1");
        assert_eq!(format_significant(1.5e-7, 12), "1.5e-07");
        assert_eq!(format_significant(0.0001, 12), "0.0001");
        assert_eq!(format_significant(123456.5, 3), "1.23e+05");
    }

    #[test]
    fn stats_coverage_and_exclusivity() {
        let v = vec![
            pooled(CorpusLabel::Copyrighted, vec![6.0, 0.0]),
            pooled(CorpusLabel::Copyrighted, vec![4.0, 7.0]),
            pooled(CorpusLabel::General, vec![0.0, 7.0]),
            pooled(CorpusLabel::General, vec![0.0, 0.0]),
        ];
        let s = dimension_stats(&v, 5.0).unwrap();
        assert_eq!(s[0].coverage(), 0.5);
        assert_eq!(s[0].exclusivity(), 1.0);
        assert_eq!(s[1].gen_rate, 0.5);
        assert_eq!(s[0].cr_mean_max, 5.0);
    }

    fn tie_heavy() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec((0u8..4).prop_map(f64::from), 1..40)
    }

    proptest! {
        #[test]
        fn fast_equals_pairwise(a in proptest::collection::vec(-1e3f64..1e3, 1..60),
                                b in proptest::collection::vec(-1e3f64..1e3, 1..60)) {
            prop_assert_eq!(score_dimension_fast(&a, &b).unwrap(), score_dimension(&a, &b).unwrap());
        }

        #[test]
        fn fast_equals_pairwise_with_ties(a in tie_heavy(), b in tie_heavy()) {
            let s = score_dimension(&a, &b).unwrap();
            prop_assert_eq!(score_dimension_fast(&a, &b).unwrap(), s);
            prop_assert!((0.0..=1.0).contains(&s));
        }

        #[test]
        fn label_swap_sums_to_one_without_ties(
            vals in proptest::collection::btree_set(-10_000i32..10_000, 2..50),
            split in any::<proptest::sample::Index>(),
        ) {
            let vals: Vec<f64> = vals.into_iter().map(f64::from).collect();
            let cut = 1 + split.index(vals.len() - 1);
            let (a, b) = vals.split_at(cut);
            let fwd = score_dimension_fast(a, b).unwrap();
            let back = score_dimension_fast(b, a).unwrap();
            prop_assert!((fwd + back - 1.0).abs() < 1e-12);
        }

        #[test]
        fn invariant_under_increasing_maps(a in proptest::collection::vec(-500i32..500, 1..30),
                                           b in proptest::collection::vec(-500i32..500, 1..30)) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let s = score_dimension_fast(&a, &b).unwrap();
            // exact in f64 over this range
            let f = |x: &f64| x * x * x + 7.0 * x;
            let fa: Vec<f64> = a.iter().map(f).collect();
            let fb: Vec<f64> = b.iter().map(f).collect();
            prop_assert_eq!(score_dimension_fast(&fa, &fb).unwrap(), s);
        }
    }
}
