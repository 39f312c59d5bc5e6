//! Character vocabulary.

use std::collections::HashMap;

use crate::error::{Result, ScopeError};

/// A sorted set of characters; token ids are positions in it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    chars: Vec<char>,
    index: HashMap<char, u32>,
}

impl Vocab {
    /// Every distinct character appearing in `texts`.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut chars: Vec<char> = texts.into_iter().flat_map(str::chars).collect();
        chars.sort_unstable();
        chars.dedup();
        Self::from_sorted(chars)
    }

    pub fn from_chars(mut chars: Vec<char>) -> Result<Self> {
        let n = chars.len();
        chars.sort_unstable();
        chars.dedup();
        if chars.len() != n {
            return Err(ScopeError::domain("vocabulary characters must be unique"));
        }
        Ok(Self::from_sorted(chars))
    }

    fn from_sorted(chars: Vec<char>) -> Self {
        let index = chars.iter().enumerate().map(|(i, &c)| (c, i as u32)).collect();
        Vocab { chars, index }
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn char_of(&self, token: u32) -> Option<char> {
        self.chars.get(token as usize).copied()
    }

    pub fn encode(&self, text: &str) -> Result<Vec<u32>> {
        text.chars()
            .enumerate()
            .map(|(position, ch)| {
                self.index
                    .get(&ch)
                    .copied()
                    .ok_or(ScopeError::Tokenization { ch, position })
            })
            .collect()
    }

    pub fn decode(&self, tokens: &[u32]) -> String {
        tokens.iter().filter_map(|&t| self.char_of(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_unknown_char() {
        let v = Vocab::from_texts(["hello", "world"]);
        assert_eq!(v.chars(), &['d', 'e', 'h', 'l', 'o', 'r', 'w']);
        let toks = v.encode("hold").unwrap();
        assert_eq!(v.decode(&toks), "hold");
        match v.encode("hex") {
            Err(ScopeError::Tokenization { ch: 'x', position: 2 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(Vocab::from_chars(vec!['a', 'a']).is_err());
    }
}
