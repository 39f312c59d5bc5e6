//! Text similarity metrics and the pairwise win-rate protocol.
//!
//! Every metric returns a similarity in `[0, 1]`; lower means the generation
//! copied less of the reference, so a method "wins" a comparison by scoring
//! strictly lower than its opponent.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScopeError};

/// `1 - edit_distance / max(len)` over Unicode scalar values; 1 for two empty strings.
pub fn levenshtein_similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein_distance(&a, &b) as f64 / longest as f64
}

/// Unit-cost edit distance with a two-row table.
pub fn levenshtein_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinHashConfig {
    /// Words per shingle.
    pub shingle_size: usize,
    pub permutations: usize,
    pub seed: u64,
}

impl Default for MinHashConfig {
    fn default() -> Self {
        MinHashConfig {
            shingle_size: 3,
            permutations: 256,
            seed: 0,
        }
    }
}

/// Lowercased, whitespace-split word shingles. A text with fewer than
/// `size` words (but at least one) yields a single shingle of all its words.
pub fn word_shingles(text: &str, size: usize) -> HashSet<String> {
    let size = size.max(1);
    let words: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
    if words.is_empty() {
        return HashSet::new();
    }
    if words.len() < size {
        return HashSet::from([words.join(" ")]);
    }
    words.windows(size).map(|w| w.join(" ")).collect()
}

/// Exact Jaccard similarity of two sets; 1 when both are empty.
pub fn jaccard<T: Eq + std::hash::Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    inter as f64 / (a.len() + b.len() - inter) as f64
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A family of `permutations` multiply-add-shift hashes over 64-bit keys:
/// `h(x) = ((a*x + b) mod 2^128) >> 64` with random 128-bit `a`, `b`.
#[derive(Debug, Clone)]
pub struct MinHasher {
    coeffs: Vec<(u128, u128)>,
    shingle_size: usize,
}

impl MinHasher {
    pub fn new(config: &MinHashConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let coeffs = (0..config.permutations)
            .map(|_| (rng.random::<u128>(), rng.random::<u128>()))
            .collect();
        MinHasher {
            coeffs,
            shingle_size: config.shingle_size,
        }
    }

    /// Signature of a text, or `None` when it has no shingles.
    pub fn signature(&self, text: &str) -> Option<Vec<u64>> {
        let keys: Vec<u64> = word_shingles(text, self.shingle_size)
            .iter()
            .map(|s| fnv1a(s.as_bytes()))
            .collect();
        if keys.is_empty() {
            return None;
        }
        Some(
            self.coeffs
                .iter()
                .map(|&(a, b)| {
                    keys.iter()
                        .map(|&x| (a.wrapping_mul(x as u128).wrapping_add(b) >> 64) as u64)
                        .min()
                        .expect("non-empty")
                })
                .collect(),
        )
    }

    pub fn similarity(&self, a: &str, b: &str) -> f64 {
        match (self.signature(a), self.signature(b)) {
            (None, None) => 1.0,
            (Some(sa), Some(sb)) if !sa.is_empty() => {
                sa.iter().zip(&sb).filter(|(x, y)| x == y).count() as f64 / sa.len() as f64
            }
            _ => 0.0,
        }
    }
}

/// MinHash estimate of the Jaccard similarity of the two texts' word shingles.
pub fn minhash_similarity(a: &str, b: &str, config: &MinHashConfig) -> f64 {
    MinHasher::new(config).similarity(a, b)
}

fn char_ngrams(text: &str, n: usize) -> HashMap<&str, u64> {
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    let mut counts = HashMap::new();
    if n == 0 || bounds.len() <= n {
        return counts;
    }
    for w in bounds.windows(n + 1) {
        *counts.entry(&text[w[0]..w[n]]).or_insert(0) += 1;
    }
    counts
}

/// Cosine similarity of character n-gram count vectors.
///
/// A lexical stand-in for embedding-based semantic similarity; it is always
/// reported under the name `ngram_cosine`.
pub fn ngram_cosine(a: &str, b: &str, n: usize) -> f64 {
    let (ca, cb) = (char_ngrams(a, n), char_ngrams(b, n));
    if ca.is_empty() || cb.is_empty() {
        return 0.0;
    }
    let (small, large) = if ca.len() <= cb.len() { (&ca, &cb) } else { (&cb, &ca) };
    let dot: u64 = small
        .iter()
        .map(|(g, x)| x * large.get(g).copied().unwrap_or(0))
        .sum();
    let na: u64 = ca.values().map(|x| x * x).sum();
    let nb: u64 = cb.values().map(|x| x * x).sum();
    (dot as f64 / ((na as f64) * (nb as f64)).sqrt()).min(1.0)
}

/// A similarity metric applied to (generated, reference) pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    MinHash(MinHashConfig),
    Levenshtein,
    NgramCosine(usize),
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::MinHash(_) => "minhash",
            Metric::Levenshtein => "levenshtein",
            Metric::NgramCosine(_) => "ngram_cosine",
        }
    }

    pub fn score(&self, generated: &str, reference: &str) -> f64 {
        match self {
            Metric::MinHash(cfg) => minhash_similarity(generated, reference, cfg),
            Metric::Levenshtein => levenshtein_similarity(generated, reference),
            Metric::NgramCosine(n) => ngram_cosine(generated, reference, *n),
        }
    }

    /// The default metric set: MinHash, Levenshtein, and 3-gram cosine.
    pub fn defaults(seed: u64) -> Vec<Metric> {
        vec![
            Metric::MinHash(MinHashConfig {
                seed,
                ..MinHashConfig::default()
            }),
            Metric::Levenshtein,
            Metric::NgramCosine(3),
        ]
    }
}

/// One method's output on one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub method: String,
    pub example_id: String,
    pub generated: String,
    pub reference: String,
}

impl GenerationRecord {
    pub fn new(
        method: impl Into<String>,
        example_id: impl Into<String>,
        generated: impl Into<String>,
        reference: impl Into<String>,
    ) -> Result<Self> {
        let rec = GenerationRecord {
            method: method.into(),
            example_id: example_id.into(),
            generated: generated.into(),
            reference: reference.into(),
        };
        if rec.method.is_empty() || rec.example_id.is_empty() {
            return Err(ScopeError::domain("generation record needs a method and example id"));
        }
        Ok(rec)
    }
}

/// Similarity values indexed `[method][example][metric]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMatrix {
    pub methods: Vec<String>,
    pub examples: Vec<String>,
    pub metrics: Vec<String>,
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MetricRow {
    method: String,
    example_id: String,
    metric: String,
    similarity: f64,
}

impl MetricMatrix {
    pub fn new(
        methods: Vec<String>,
        examples: Vec<String>,
        metrics: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != methods.len() * examples.len() * metrics.len() {
            return Err(ScopeError::domain(format!(
                "{} values for a {}x{}x{} matrix",
                values.len(),
                methods.len(),
                examples.len(),
                metrics.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(ScopeError::domain(format!("similarity {v} outside [0, 1]")));
        }
        for (what, names) in [("method", &methods), ("example", &examples), ("metric", &metrics)] {
            let unique: HashSet<&String> = names.iter().collect();
            if unique.len() != names.len() {
                return Err(ScopeError::domain(format!("duplicate {what} name")));
            }
        }
        Ok(MetricMatrix {
            methods,
            examples,
            metrics,
            values,
        })
    }

    /// Scores every record with every metric. Each (method, example) pair
    /// must appear exactly once, and every method must cover every example.
    pub fn from_generations(records: &[GenerationRecord], metrics: &[Metric]) -> Result<Self> {
        let mut methods: Vec<String> = Vec::new();
        let mut examples: Vec<String> = Vec::new();
        for r in records {
            if !methods.contains(&r.method) {
                methods.push(r.method.clone());
            }
            if !examples.contains(&r.example_id) {
                examples.push(r.example_id.clone());
            }
        }
        let metric_names: Vec<String> = metrics.iter().map(|m| m.name().to_string()).collect();
        let mut values = vec![f64::NAN; methods.len() * examples.len() * metrics.len()];
        let stride = examples.len() * metrics.len();
        for r in records {
            let mi = methods.iter().position(|m| *m == r.method).expect("collected");
            let ei = examples.iter().position(|e| *e == r.example_id).expect("collected");
            let base = mi * stride + ei * metrics.len();
            if !values[base].is_nan() {
                return Err(ScopeError::domain(format!(
                    "duplicate generation for method {:?}, example {:?}",
                    r.method, r.example_id
                )));
            }
            for (k, metric) in metrics.iter().enumerate() {
                values[base + k] = metric.score(&r.generated, &r.reference);
            }
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(ScopeError::domain("every method needs a generation for every example"));
        }
        Self::new(methods, examples, metric_names, values)
    }

    pub fn get(&self, method: usize, example: usize, metric: usize) -> f64 {
        self.values[(method * self.examples.len() + example) * self.metrics.len() + metric]
    }

    pub fn method_index(&self, method: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == method)
    }

    /// Mean similarity of `method` on `metric` across examples.
    pub fn mean(&self, method: usize, metric: usize) -> f64 {
        (0..self.examples.len())
            .map(|e| self.get(method, e, metric))
            .sum::<f64>()
            / self.examples.len().max(1) as f64
    }

    /// Long-format CSV: `method,example_id,metric,similarity`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for (mi, method) in self.methods.iter().enumerate() {
            for (ei, example) in self.examples.iter().enumerate() {
                for (ki, metric) in self.metrics.iter().enumerate() {
                    out.serialize(MetricRow {
                        method: method.clone(),
                        example_id: example.clone(),
                        metric: metric.clone(),
                        similarity: self.get(mi, ei, ki),
                    })?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let rows = csv::Reader::from_reader(r)
            .deserialize()
            .collect::<std::result::Result<Vec<MetricRow>, _>>()?;
        Self::from_rows(rows)
    }

    /// Combines several CSVs (e.g. one per method) into one matrix.
    pub fn read_csvs<R: Read>(readers: impl IntoIterator<Item = R>) -> Result<Self> {
        let mut rows = Vec::new();
        for r in readers {
            for row in csv::Reader::from_reader(r).deserialize() {
                rows.push(row?);
            }
        }
        Self::from_rows(rows)
    }

    fn from_rows(rows: Vec<MetricRow>) -> Result<Self> {
        let mut methods = Vec::new();
        let mut examples = Vec::new();
        let mut metrics = Vec::new();
        let mut cells: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
        let intern = |list: &mut Vec<String>, name: &str| {
            list.iter().position(|x| x == name).unwrap_or_else(|| {
                list.push(name.to_string());
                list.len() - 1
            })
        };
        for row in &rows {
            let key = (
                intern(&mut methods, &row.method),
                intern(&mut examples, &row.example_id),
                intern(&mut metrics, &row.metric),
            );
            if cells.insert(key, row.similarity).is_some() {
                return Err(ScopeError::Format(format!(
                    "duplicate cell ({}, {}, {})",
                    row.method, row.example_id, row.metric
                )));
            }
        }
        let (nm, ne, nk) = (methods.len(), examples.len(), metrics.len());
        if cells.len() != nm * ne * nk {
            return Err(ScopeError::Format(format!(
                "metric table is incomplete: {} of {} cells present",
                cells.len(),
                nm * ne * nk
            )));
        }
        let mut values = vec![0.0; nm * ne * nk];
        for ((m, e, k), v) in cells {
            values[(m * ne + e) * nk + k] = v;
        }
        Self::new(methods, examples, metrics, values)
    }
}

fn win_rate_index(matrix: &MetricMatrix, me: usize, metrics: &[usize]) -> f64 {
    let mut total = 0.0;
    let mut comparisons = 0usize;
    for e in 0..matrix.examples.len() {
        for &k in metrics {
            let mine = matrix.get(me, e, k);
            for other in (0..matrix.methods.len()).filter(|&o| o != me) {
                let theirs = matrix.get(other, e, k);
                total += if mine < theirs {
                    1.0
                } else if mine == theirs {
                    0.5
                } else {
                    0.0
                };
                comparisons += 1;
            }
        }
    }
    total / comparisons as f64
}

fn check_win_rate_input(matrix: &MetricMatrix, method: &str) -> Result<usize> {
    if matrix.methods.len() < 2 {
        return Err(ScopeError::domain("win rate needs at least two methods"));
    }
    if matrix.examples.is_empty() || matrix.metrics.is_empty() {
        return Err(ScopeError::domain("win rate needs at least one example and metric"));
    }
    matrix
        .method_index(method)
        .ok_or_else(|| ScopeError::domain(format!("method {method:?} not in matrix")))
}

/// Probability that `method` has strictly lower similarity than a uniformly
/// drawn opponent on a uniformly drawn (example, metric) cell, ties counting
/// one half. Computed by enumerating every comparison.
pub fn win_rate(matrix: &MetricMatrix, method: &str) -> Result<f64> {
    let me = check_win_rate_input(matrix, method)?;
    let all: Vec<usize> = (0..matrix.metrics.len()).collect();
    Ok(win_rate_index(matrix, me, &all))
}

/// Win rate restricted to a single metric column.
pub fn win_rate_on_metric(matrix: &MetricMatrix, method: &str, metric: &str) -> Result<f64> {
    let me = check_win_rate_input(matrix, method)?;
    let k = matrix
        .metrics
        .iter()
        .position(|m| m == metric)
        .ok_or_else(|| ScopeError::domain(format!("metric {metric:?} not in matrix")))?;
    Ok(win_rate_index(matrix, me, &[k]))
}

/// One row of the win-rate summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WinRateRow {
    pub method: String,
    /// Metric name, or `all` for the pooled rate.
    pub metric: String,
    pub win_rate: f64,
}

/// Pooled and per-metric win rates for every method.
pub fn win_rate_summary(matrix: &MetricMatrix) -> Result<Vec<WinRateRow>> {
    let mut rows = Vec::new();
    for method in &matrix.methods {
        rows.push(WinRateRow {
            method: method.clone(),
            metric: "all".into(),
            win_rate: win_rate(matrix, method)?,
        });
        for metric in &matrix.metrics {
            rows.push(WinRateRow {
                method: method.clone(),
                metric: metric.clone(),
                win_rate: win_rate_on_metric(matrix, method, metric)?,
            });
        }
    }
    Ok(rows)
}

pub fn write_summary_csv<W: Write>(rows: &[WinRateRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// A static SVG bar chart of pooled win rate per method.
pub fn win_rate_svg(rates: &[(String, f64)]) -> String {
    let (bar_w, gap, height, left, top, bottom) = (60.0, 30.0, 240.0, 50.0, 30.0, 60.0);
    let width = left + rates.len() as f64 * (bar_w + gap) + gap;
    let total_h = top + height + bottom;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{total_h}" viewBox="0 0 {width} {total_h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="14">Win rate (lower similarity wins)</text>"#,
        width / 2.0
    );
    for tick in 0..=4 {
        let v = tick as f64 * 0.25;
        let y = top + height * (1.0 - v);
        let _ = writeln!(
            svg,
            r##"<line x1="{left}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{v:.2}</text>"##,
            width - gap / 2.0,
            left - 6.0,
            y + 4.0
        );
    }
    for (i, (name, rate)) in rates.iter().enumerate() {
        let x = left + gap + i as f64 * (bar_w + gap);
        let h = height * rate.clamp(0.0, 1.0);
        let y = top + height - h;
        let _ = writeln!(
            svg,
            r##"<rect x="{x}" y="{y}" width="{bar_w}" height="{h}" fill="#4c72b0"/><text x="{}" y="{}" text-anchor="middle">{rate:.3}</text><text x="{}" y="{}" text-anchor="middle">{}</text>"##,
            x + bar_w / 2.0,
            y - 4.0,
            x + bar_w / 2.0,
            top + height + 18.0,
            xml_escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn dp_reference(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in t.iter_mut().enumerate() {
            row[0] = i;
        }
        for j in 0..=b.len() {
            t[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
                t[i][j] = (t[i - 1][j] + 1).min(t[i][j - 1] + 1).min(t[i - 1][j - 1] + cost);
            }
        }
        t[a.len()][b.len()]
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein_similarity("abc", "abc"), 1.0);
        assert_eq!(levenshtein_similarity("abc", "abd"), 1.0 - 1.0 / 3.0);
        assert_eq!(levenshtein_similarity("", ""), 1.0);
        assert_eq!(levenshtein_similarity("", "ab"), 0.0);
        assert_eq!(levenshtein_distance(&['k', 'i', 't', 't', 'e', 'n'], &['s', 'i', 't', 't', 'i', 'n', 'g']), 3);
        assert_eq!(levenshtein_similarity("héllo", "hello"), 0.8);
    }

    #[test]
    fn minhash_examples() {
        let cfg = MinHashConfig::default();
        let t = "the quick brown fox jumps over the lazy dog";
        assert_eq!(minhash_similarity(t, t, &cfg), 1.0);
        assert_eq!(minhash_similarity(t, &t.to_uppercase(), &cfg), 1.0);
        let other = "alpha beta gamma delta epsilon zeta eta theta";
        assert!(minhash_similarity(t, other, &cfg) < 0.05);
        assert_eq!(minhash_similarity("", "  ", &cfg), 1.0);
        assert_eq!(minhash_similarity("", "word", &cfg), 0.0);
        assert_eq!(word_shingles("One two", 3), HashSet::from(["one two".to_string()]));
    }

    #[test]
    fn minhash_tracks_exact_jaccard_on_partial_overlap() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let words: Vec<String> = (0..60).map(|i| format!("w{i}")).collect();
        for keep in [0.9, 0.7, 0.5, 0.3] {
            let a = words.join(" ");
            let b: Vec<String> = words
                .iter()
                .map(|w| if rng.random_bool(keep) { w.clone() } else { format!("z{}", rng.random::<u32>()) })
                .collect();
            let b = b.join(" ");
            let exact = jaccard(&word_shingles(&a, 3), &word_shingles(&b, 3));
            let est = minhash_similarity(&a, &b, &MinHashConfig::default());
            assert!((est - exact).abs() <= 0.1, "keep {keep}: exact {exact} estimate {est}");
        }
    }

    #[test]
    fn ngram_cosine_examples() {
        assert_eq!(ngram_cosine("banana bread", "banana bread", 3), 1.0);
        assert_eq!(ngram_cosine("aaaa", "bbbb", 2), 0.0);
        assert_eq!(ngram_cosine("ab", "abc", 3), 0.0);
        // "abab" 2-grams {ab:2, ba:1}, "ab" {ab:1}: 2 / sqrt(5)
        assert!((ngram_cosine("abab", "ab", 2) - 2.0 / 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ngram_cosine_matches_count_vector_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let gen = |rng: &mut ChaCha8Rng| -> String {
                (0..rng.random_range(0..25)).map(|_| ['a', 'b', 'c', ' '][rng.random_range(0..4)]).collect()
            };
            let (a, b) = (gen(&mut rng), gen(&mut rng));
            let n = rng.random_range(1..4);
            let grams = |s: &str| -> Vec<String> {
                let c: Vec<char> = s.chars().collect();
                if c.len() < n { return vec![] }
                (0..=c.len() - n).map(|i| c[i..i + n].iter().collect()).collect()
            };
            let (ga, gb) = (grams(&a), grams(&b));
            let vocab: Vec<String> = ga.iter().chain(&gb).cloned().collect::<HashSet<_>>().into_iter().collect();
            let count = |g: &[String], w: &String| g.iter().filter(|x| *x == w).count() as f64;
            let va: Vec<f64> = vocab.iter().map(|w| count(&ga, w)).collect();
            let vb: Vec<f64> = vocab.iter().map(|w| count(&gb, w)).collect();
            let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
            let na: f64 = va.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
            let want = if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) };
            assert!((ngram_cosine(&a, &b, n) - want).abs() < 1e-12, "{a:?} {b:?} {n}");
        }
    }

    fn matrix(values: Vec<f64>, methods: usize, examples: usize, metrics: usize) -> MetricMatrix {
        MetricMatrix::new(
            (0..methods).map(|i| format!("m{i}")).collect(),
            (0..examples).map(|i| format!("e{i}")).collect(),
            (0..metrics).map(|i| format!("k{i}")).collect(),
            values,
        )
        .unwrap()
    }

    #[test]
    fn win_rate_domination_and_ties() {
        let m = matrix(vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8], 2, 2, 2);
        assert_eq!(win_rate(&m, "m0").unwrap(), 1.0);
        assert_eq!(win_rate(&m, "m1").unwrap(), 0.0);
        let same = matrix(vec![0.4; 12], 3, 2, 2);
        for name in ["m0", "m1", "m2"] {
            assert_eq!(win_rate(&same, name).unwrap(), 0.5);
        }
        assert!(win_rate(&m, "missing").is_err());
        assert!(win_rate(&matrix(vec![0.1], 1, 1, 1), "m0").is_err());
    }

    #[test]
    fn from_generations_requires_full_grid() {
        let recs = vec![
            GenerationRecord::new("vanilla", "a", "x y z", "x y z").unwrap(),
            GenerationRecord::new("clamp", "a", "p q r", "x y z").unwrap(),
            GenerationRecord::new("clamp", "b", "p q r", "x y z").unwrap(),
        ];
        assert!(MetricMatrix::from_generations(&recs, &Metric::defaults(0)).is_err());
        let m = MetricMatrix::from_generations(&recs[..2], &Metric::defaults(0)).unwrap();
        assert_eq!(m.metrics, vec!["minhash", "levenshtein", "ngram_cosine"]);
        assert_eq!(win_rate(&m, "clamp").unwrap(), 1.0);
        assert!(GenerationRecord::new("", "a", "", "").is_err());
    }

    #[test]
    fn csv_round_trip_and_incomplete_rejection() {
        let m = matrix(vec![0.1, 0.25, 0.5, 1.0, 0.0, 0.75], 3, 2, 1);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("method,example_id,metric,similarity\n"));
        assert_eq!(MetricMatrix::read_csv(&buf[..]).unwrap(), m);
        let text = String::from_utf8(buf).unwrap();
        let truncated: String = text.lines().take(4).map(|l| format!("{l}\n")).collect();
        assert!(MetricMatrix::read_csv(truncated.as_bytes()).is_err());
    }

    #[test]
    fn svg_has_one_bar_per_method() {
        let svg = win_rate_svg(&[("a<b".into(), 0.25), ("c".into(), 0.75)]);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("fill=\"#4c72b0\"").count(), 2);
        assert!(svg.contains("a&lt;b"));
    }

    proptest! {
        #[test]
        fn levenshtein_matches_dp(a in "[abc]{0,30}", b in "[abc]{0,30}") {
            let d = dp_reference(&a, &b);
            let longest = a.chars().count().max(b.chars().count());
            let want = if longest == 0 { 1.0 } else { 1.0 - d as f64 / longest as f64 };
            prop_assert_eq!(levenshtein_similarity(&a, &b), want);
            prop_assert_eq!(levenshtein_similarity(&b, &a), want);
        }

        #[test]
        fn metrics_symmetric_and_bounded(a in "[a-d ]{0,40}", b in "[a-d ]{0,40}") {
            let cfg = MinHashConfig { shingle_size: 2, permutations: 64, seed: 3 };
            for (x, y) in [
                (minhash_similarity(&a, &b, &cfg), minhash_similarity(&b, &a, &cfg)),
                (ngram_cosine(&a, &b, 2), ngram_cosine(&b, &a, 2)),
            ] {
                prop_assert_eq!(x, y);
                prop_assert!((0.0..=1.0).contains(&x));
            }
            prop_assert_eq!(levenshtein_similarity(&a, &a), 1.0);
        }

        #[test]
        fn win_rates_average_to_half(vals in proptest::collection::vec((0u8..5).prop_map(|v| v as f64 / 4.0), 24)) {
            let m = matrix(vals, 4, 3, 2);
            let rates: Vec<f64> = m.methods.iter().map(|n| win_rate(&m, n).unwrap()).collect();
            prop_assert!((rates.iter().sum::<f64>() / 4.0 - 0.5).abs() < 1e-12);
        }

        #[test]
        fn win_rate_invariant_under_monotone_column_map(vals in proptest::collection::vec(0.0f64..1.0, 18)) {
            let m = matrix(vals.clone(), 3, 3, 2);
            // square every value of metric k1 (increasing on [0, 1])
            let mapped: Vec<f64> = vals.iter().enumerate()
                .map(|(i, v)| if i % 2 == 1 { v * v } else { *v }).collect();
            let m2 = matrix(mapped, 3, 3, 2);
            for n in ["m0", "m1", "m2"] {
                prop_assert_eq!(win_rate(&m, n).unwrap(), win_rate(&m2, n).unwrap());
            }
        }
    }
}
