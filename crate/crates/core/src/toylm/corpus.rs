//! Corpus assembly for the toy LM: protected passages repeated among filler.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activations::CorpusLabel;
use crate::error::{Result, ScopeError};

/// Four 200-character passages used by the examples and the end-to-end tests.
pub const SAMPLE_PASSAGES: &str = include_str!("../../data/protected.txt");

// Filler vocabulary. The sentences it makes are random, so the model cannot
// memorize them and has to fall back on word statistics.
const FILLER_WORDS: &[&str] = &[
    "a", "about", "across", "after", "again", "air", "all", "also", "an", "and", "any", "area",
    "around", "as", "at", "back", "be", "because", "been", "before", "being", "best", "better",
    "between", "big", "both", "but", "by", "can", "case", "change", "child", "city", "come",
    "company", "could", "course", "day", "did", "different", "do", "does", "down", "during",
    "each", "early", "end", "even", "example", "fact", "family", "far", "few", "find", "first",
    "for", "from", "general", "get", "give", "go", "good", "government", "great", "group", "had",
    "hand", "has", "have", "high", "home", "how", "idea", "if", "important", "in", "into", "is",
    "it", "just", "keep", "kind", "know", "large", "last", "late", "later", "law", "least", "less",
    "life", "like", "line", "little", "local", "long", "look", "make", "many", "market", "may",
    "mean", "might", "money", "more", "most", "much", "must", "national", "need", "new", "next",
    "not", "now", "number", "of", "off", "often", "only", "or", "order", "other", "our", "out",
    "over", "own", "part", "people", "place", "point", "possible", "problem", "program",
    "public", "question", "rather", "real", "report", "right", "room", "same", "say", "school",
    "see", "seem", "service", "should", "show", "side", "since", "small", "so", "some", "state",
    "still", "such", "system", "take", "than", "that", "their", "them", "then", "there", "these",
    "they", "thing", "think", "this", "those", "through", "time", "to", "too", "under", "until",
    "up", "use", "very", "want", "was", "way", "week", "well", "were", "what", "when", "where",
    "which", "while", "who", "why", "will", "with", "without", "work", "world", "would", "year",
    "yet", "you", "young",
];

/// Splits text into passages at blank lines. Lines inside a block are joined
/// with `\n`; surrounding whitespace is trimmed and empty blocks are dropped.
pub fn parse_passages(text: &str) -> Vec<String> {
    let mut passages = Vec::new();
    let mut block: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !block.is_empty() {
                passages.push(block.join("\n").trim().to_string());
                block.clear();
            }
        } else {
            block.push(line.trim_end());
        }
    }
    if !block.is_empty() {
        passages.push(block.join("\n").trim().to_string());
    }
    passages
}

/// The built-in sample passages.
pub fn sample_passages() -> Vec<String> {
    parse_passages(SAMPLE_PASSAGES)
}

/// Random filler sentences totalling at least `min_chars` characters.
pub fn filler_text(min_chars: usize, rng: &mut impl Rng) -> String {
    let mut out = String::with_capacity(min_chars + 80);
    while out.len() < min_chars {
        let words = rng.random_range(5..13);
        for i in 0..words {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(FILLER_WORDS.choose(rng).expect("non-empty word list"));
        }
        out.push_str(". ");
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    /// Copies of each protected passage in the corpus.
    pub repeats: usize,
    /// Filler characters between consecutive passages, on average.
    pub filler_chars: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            repeats: 200,
            filler_chars: 200,
            seed: 0,
        }
    }
}

/// Builds a training corpus: every passage `repeats` times, in shuffled
/// order, each copy on its own line between runs of filler text.
pub fn build_corpus(protected: &[String], config: &CorpusConfig) -> Result<String> {
    if config.filler_chars == 0 && protected.is_empty() {
        return Err(ScopeError::config("filler_chars", "corpus would be empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..protected.len())
        .flat_map(|i| std::iter::repeat_n(i, config.repeats))
        .collect();
    order.shuffle(&mut rng);
    let mut out = String::new();
    out.push_str(filler_text(config.filler_chars, &mut rng).trim_end());
    for i in order {
        out.push('\n');
        out.push_str(&protected[i]);
        out.push('\n');
        let span = rng.random_range(config.filler_chars / 2..=config.filler_chars * 3 / 2);
        out.push_str(filler_text(span, &mut rng).trim_end());
    }
    out.push('\n');
    Ok(out)
}

/// Labeled text windows for SAE training: `per_label` windows of `width`
/// characters cut from protected passages (COPYRIGHTED) and from fresh
/// filler text (GENERAL).
pub fn labeled_windows(
    protected: &[String],
    width: usize,
    per_label: usize,
    seed: u64,
) -> Result<Vec<(CorpusLabel, String)>> {
    if width == 0 {
        return Err(ScopeError::config("width", "must be at least 1"));
    }
    if protected.is_empty() {
        return Err(ScopeError::domain("need at least one protected passage"));
    }
    let passages: Vec<Vec<char>> = protected.iter().map(|p| p.chars().collect()).collect();
    if let Some(p) = passages.iter().find(|p| p.len() < width) {
        return Err(ScopeError::domain(format!(
            "passage of {} chars is shorter than the window width {width}",
            p.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * per_label);
    for i in 0..per_label {
        let p = &passages[i % passages.len()];
        let start = rng.random_range(0..=p.len() - width);
        out.push((CorpusLabel::Copyrighted, p[start..start + width].iter().collect()));
    }
    for _ in 0..per_label {
        let text: Vec<char> = filler_text(width * 2, &mut rng).chars().collect();
        let start = rng.random_range(0..=text.len() - width);
        out.push((CorpusLabel::General, text[start..start + width].iter().collect()));
    }
    Ok(out)
}
