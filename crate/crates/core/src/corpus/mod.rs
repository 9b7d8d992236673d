//! Corpus ingestion, vocabulary, prefix sampling and synthetic Markov
//! oracles with exact sequence probabilities.

mod oracle;
mod prefix;
mod vocab;

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

pub use oracle::{all_sequences, MarkovOracle};
pub use prefix::{sample_prefix_batch, sample_prefix_split, PrefixSplit};
pub use vocab::{Vocabulary, END, NUM_SPECIAL, PAD, START, UNK};

use crate::error::{Error, Result};

/// Integer-encoded sentences sharing one vocabulary.
#[derive(Debug, Clone)]
pub struct TokenizedCorpus {
    sentences: Vec<Vec<usize>>,
    max_len: usize,
    vocab: Arc<Vocabulary>,
}

impl TokenizedCorpus {
    /// Checks ids against the vocabulary, rejects empty sentences and
    /// truncates to `max_len`.
    pub fn new(sentences: Vec<Vec<usize>>, max_len: usize, vocab: Arc<Vocabulary>) -> Result<Self> {
        if max_len < 1 {
            return Err(Error::InvalidArgument("max_len must be >= 1".into()));
        }
        let mut out = Vec::with_capacity(sentences.len());
        for mut s in sentences {
            if s.is_empty() {
                return Err(Error::InvalidArgument("empty sentence".into()));
            }
            if let Some(&id) = s.iter().find(|&&id| id >= vocab.len()) {
                return Err(Error::IdOutOfRange { id, size: vocab.len() });
            }
            s.truncate(max_len);
            out.push(s);
        }
        if out.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(Self {
            sentences: out,
            max_len,
            vocab,
        })
    }

    pub fn sentences(&self) -> &[Vec<usize>] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn longest(&self) -> usize {
        self.sentences.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn to_lines(&self) -> Vec<String> {
        self.sentences.iter().map(|s| self.vocab.decode(s)).collect()
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

/// Builds a vocabulary from the file's tokens (frequency ≥ `min_freq`,
/// ordered by descending count, then lexicographically) and encodes it.
pub fn load_corpus(path: &Path, max_len: usize, min_freq: usize) -> Result<(TokenizedCorpus, Vocabulary)> {
    if max_len < 1 {
        return Err(Error::InvalidArgument("max_len must be >= 1".into()));
    }
    let lines = read_lines(path)?;
    if lines.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let vocab = build_vocab(&lines, min_freq);
    let corpus = encode_lines(&lines, max_len, Arc::new(vocab.clone()))?;
    Ok((corpus, vocab))
}

/// Encodes a held-out file against an existing vocabulary.
pub fn load_corpus_with_vocab(path: &Path, max_len: usize, vocab: Arc<Vocabulary>) -> Result<TokenizedCorpus> {
    let lines = read_lines(path)?;
    if lines.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    encode_lines(&lines, max_len, vocab)
}

pub fn build_vocab(lines: &[String], min_freq: usize) -> Vocabulary {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for l in lines {
        for w in l.split_whitespace() {
            *counts.entry(w.to_lowercase()).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_freq).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocabulary::from_tokens(kept.into_iter().map(|(w, _)| w))
}

pub fn encode_lines(lines: &[String], max_len: usize, vocab: Arc<Vocabulary>) -> Result<TokenizedCorpus> {
    let sentences = lines
        .iter()
        .map(|l| vocab.encode(l))
        .filter(|s| !s.is_empty())
        .collect();
    TokenizedCorpus::new(sentences, max_len, vocab)
}
