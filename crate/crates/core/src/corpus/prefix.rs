use rand::Rng;

use super::TokenizedCorpus;
use crate::error::{Error, Result};

/// A real sentence cut into a conditioning prefix and an `l`-token target
/// that directly follows it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixSplit {
    pub prefix: Vec<usize>,
    pub target: Vec<usize>,
}

impl PrefixSplit {
    pub fn k(&self) -> usize {
        self.prefix.len()
    }

    pub fn l(&self) -> usize {
        self.target.len()
    }
}

fn eligible(corpus: &TokenizedCorpus, l: usize) -> Result<Vec<usize>> {
    if l < 1 || l > corpus.max_len() {
        return Err(Error::InvalidArgument(format!(
            "target length {l} outside 1..={}",
            corpus.max_len()
        )));
    }
    let idx: Vec<usize> = (0..corpus.len())
        .filter(|&i| corpus.sentences()[i].len() >= l)
        .collect();
    if idx.is_empty() {
        return Err(Error::NoFeasibleSentence(l));
    }
    Ok(idx)
}

/// `k` was drawn for the nominal length M; a shorter sentence gets a fresh
/// draw from its own feasible range.
fn split_at(sentence: &[usize], k: usize, l: usize, rng: &mut impl Rng) -> PrefixSplit {
    let k = if k + l <= sentence.len() {
        k
    } else {
        rng.random_range(0..=sentence.len() - l)
    };
    PrefixSplit {
        prefix: sentence[..k].to_vec(),
        target: sentence[k..k + l].to_vec(),
    }
}

/// One split from a uniformly drawn sentence with length ≥ `l`.
pub fn sample_prefix_split(corpus: &TokenizedCorpus, l: usize, rng: &mut impl Rng) -> Result<PrefixSplit> {
    let idx = eligible(corpus, l)?;
    let s = &corpus.sentences()[idx[rng.random_range(0..idx.len())]];
    let k = rng.random_range(0..=corpus.max_len() - l);
    Ok(split_at(s, k, l, rng))
}

/// `batch` splits sharing one drawn `k`, as in a single training step.
pub fn sample_prefix_batch(
    corpus: &TokenizedCorpus,
    l: usize,
    batch: usize,
    rng: &mut impl Rng,
) -> Result<Vec<PrefixSplit>> {
    let idx = eligible(corpus, l)?;
    let k = rng.random_range(0..=corpus.max_len() - l);
    Ok((0..batch)
        .map(|_| {
            let s = &corpus.sentences()[idx[rng.random_range(0..idx.len())]];
            split_at(s, k, l, rng)
        })
        .collect())
}
