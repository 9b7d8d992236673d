use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const START: usize = 1;
pub const END: usize = 2;
pub const UNK: usize = 3;
pub const NUM_SPECIAL: usize = 4;

const SPECIAL_TOKENS: [&str; NUM_SPECIAL] = ["<pad>", "<s>", "</s>", "<unk>"];

/// Dense token ↔ id mapping. Ids `0..4` are reserved for pad, start, end and
/// unknown, in that order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(std::iter::empty::<String>())
    }
}

impl Vocabulary {
    /// Specials followed by `tokens` in order. Duplicates and tokens that
    /// collide with a special are skipped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for s in SPECIAL_TOKENS {
            v.insert(s.to_string());
        }
        for t in tokens {
            v.insert(t.into());
        }
        v
    }

    fn insert(&mut self, tok: String) {
        if !self.index.contains_key(&tok) {
            self.index.insert(tok.clone(), self.tokens.len());
            self.tokens.push(tok);
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn pad(&self) -> usize {
        PAD
    }

    pub fn start(&self) -> usize {
        START
    }

    pub fn end(&self) -> usize {
        END
    }

    pub fn unknown(&self) -> usize {
        UNK
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Lowercased whitespace tokens; out-of-vocabulary words map to unknown.
    pub fn encode(&self, line: &str) -> Vec<usize> {
        line.split_whitespace()
            .map(|w| self.id(&w.to_lowercase()).unwrap_or(UNK))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(SPECIAL_TOKENS[UNK]))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// One token per line; line number is the id.
    pub fn to_dump(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_dump(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < NUM_SPECIAL || lines[..NUM_SPECIAL] != SPECIAL_TOKENS {
            return Err(Error::InvalidArgument(
                "vocabulary dump must start with <pad>, <s>, </s>, <unk>".into(),
            ));
        }
        let v = Self::from_tokens(lines[NUM_SPECIAL..].iter().copied());
        if v.len() != lines.len() {
            return Err(Error::InvalidArgument("duplicate token in vocabulary dump".into()));
        }
        Ok(v)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_dump()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_dump(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn specials_are_first_and_distinct() {
        let v = Vocabulary::from_tokens(["a", "b"]);
        assert_eq!(v.len(), 6);
        assert_eq!(v.id("<pad>"), Some(PAD));
        assert_eq!(v.id("<unk>"), Some(UNK));
        assert_eq!(v.id("a"), Some(4));
        let specials = [v.pad(), v.start(), v.end(), v.unknown()];
        for (i, a) in specials.iter().enumerate() {
            for b in &specials[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn dump_round_trip() {
        let v = Vocabulary::from_tokens(["x", "y", "z"]);
        let back = Vocabulary::from_dump(&v.to_dump()).unwrap();
        assert_eq!(v, back);
        assert!(Vocabulary::from_dump("a\nb\n").is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_identity(words in proptest::collection::vec("[a-z]{1,5}", 1..20)) {
            let v = Vocabulary::from_tokens(words.iter().cloned());
            let line = words.join(" ");
            let ids = v.encode(&line);
            prop_assert_eq!(v.decode(&ids), line);
            for (i, t) in v.tokens().iter().enumerate() {
                prop_assert_eq!(v.id(t), Some(i));
            }
        }
    }
}
