use std::collections::HashMap;

use crate::error::{Error, Result};

/// Floor applied to zero n-gram precisions before the geometric mean.
pub const BLEU_EPS: f64 = 1e-12;

/// n-gram counts of a sentence set, keeping repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramMultiset {
    n: usize,
    counts: HashMap<Vec<usize>, usize>,
    sentences: usize,
}

impl NGramMultiset {
    pub fn from_sentences(sentences: &[Vec<usize>], n: usize) -> Self {
        let mut counts = HashMap::new();
        for s in sentences {
            for w in ngrams(s, n) {
                *counts.entry(w.to_vec()).or_insert(0) += 1;
            }
        }
        Self {
            n,
            counts,
            sentences: sentences.len(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn counts(&self) -> &HashMap<Vec<usize>, usize> {
        &self.counts
    }

    pub fn num_sentences(&self) -> usize {
        self.sentences
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Count of `g` divided by the number of source sentences.
    pub fn rate(&self, g: &[usize]) -> f64 {
        self.counts.get(g).copied().unwrap_or(0) as f64 / self.sentences as f64
    }
}

fn ngrams(s: &[usize], n: usize) -> std::slice::Windows<'_, usize> {
    // windows(0) panics; n >= 1 is checked by every caller
    s.windows(n.max(1))
}

fn check_inputs(a: &[Vec<usize>], b: &[Vec<usize>], n: usize) -> Result<()> {
    if n < 1 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("sentence sets must be nonempty".into()));
    }
    Ok(())
}

/// Per reference n-gram: the largest count within any single reference.
fn max_ref_counts(references: &[Vec<usize>], n: usize) -> HashMap<&[usize], usize> {
    let mut out: HashMap<&[usize], usize> = HashMap::new();
    let mut local: HashMap<&[usize], usize> = HashMap::new();
    for r in references {
        local.clear();
        for w in ngrams(r, n) {
            *local.entry(w).or_insert(0) += 1;
        }
        for (&w, &c) in &local {
            let e = out.entry(w).or_insert(0);
            *e = (*e).max(c);
        }
    }
    out
}

fn closest_ref_len(sorted_lens: &[usize], c: usize) -> usize {
    let i = sorted_lens.partition_point(|&r| r < c);
    let below = i.checked_sub(1).map(|j| sorted_lens[j]);
    let above = sorted_lens.get(i).copied();
    match (below, above) {
        (Some(b), Some(a)) if c - b <= a - c => b,
        (_, Some(a)) => a,
        (Some(b), None) => b,
        (None, None) => unreachable!("references are nonempty"),
    }
}

/// Mean over candidates of sentence BLEU against the whole reference set:
/// uniform-weight geometric mean of clipped precisions for orders `1..=n`
/// (zero precisions floored at [`BLEU_EPS`]) times the brevity penalty
/// against the closest reference length.
pub fn bleu_n(candidates: &[Vec<usize>], references: &[Vec<usize>], n: usize) -> Result<f64> {
    check_inputs(candidates, references, n)?;
    if candidates.iter().any(Vec::is_empty) {
        return Err(Error::InvalidArgument("empty candidate sentence".into()));
    }
    let tables: Vec<HashMap<&[usize], usize>> = (1..=n).map(|m| max_ref_counts(references, m)).collect();
    let mut lens: Vec<usize> = references.iter().map(Vec::len).collect();
    lens.sort_unstable();

    let mut total = 0.0;
    let mut local: HashMap<&[usize], usize> = HashMap::new();
    for cand in candidates {
        let mut log_p = 0.0;
        for (m, table) in (1..=n).zip(&tables) {
            local.clear();
            for w in ngrams(cand, m) {
                *local.entry(w).or_insert(0) += 1;
            }
            let seen: usize = local.values().sum();
            let clipped: usize = local.iter().map(|(w, &c)| c.min(table.get(w).copied().unwrap_or(0))).sum();
            let p = if cand.len() >= m { clipped as f64 / seen as f64 } else { 0.0 };
            log_p += p.max(BLEU_EPS).ln();
        }
        let c = cand.len();
        let r = closest_ref_len(&lens, c);
        let log_bp = if c > r { 0.0 } else { 1.0 - r as f64 / c as f64 };
        total += (log_p / n as f64 + log_bp).exp();
    }
    Ok(total / candidates.len() as f64)
}

/// BLEU of the test sentences with the generated ones as references.
pub fn backward_bleu_n(test: &[Vec<usize>], generated: &[Vec<usize>], n: usize) -> Result<f64> {
    bleu_n(test, generated, n)
}

/// `Σ min(a_g, b_g) / Σ max(a_g, b_g)` over n-grams `g`, with counts
/// divided by each set's sentence count.
pub fn ms_jaccard_n(a: &[Vec<usize>], b: &[Vec<usize>], n: usize) -> Result<f64> {
    check_inputs(a, b, n)?;
    let ma = NGramMultiset::from_sentences(a, n);
    let mb = NGramMultiset::from_sentences(b, n);
    if ma.is_empty() && mb.is_empty() {
        return Err(Error::InvalidArgument(format!("no sentence has {n} tokens")));
    }
    let mut keys: Vec<&Vec<usize>> = ma.counts.keys().chain(mb.counts.keys().filter(|k| !ma.counts.contains_key(*k))).collect();
    keys.sort_unstable();
    let (mut lo, mut hi) = (0.0, 0.0);
    for k in keys {
        let (x, y) = (ma.rate(k), mb.rate(k));
        lo += x.min(y);
        hi += x.max(y);
    }
    Ok(lo / hi)
}

/// Geometric mean of [`ms_jaccard_n`] over orders `1..=k`.
pub fn ms_jaccard(a: &[Vec<usize>], b: &[Vec<usize>], k: usize) -> Result<f64> {
    check_inputs(a, b, k)?;
    let mut log = 0.0;
    for n in 1..=k {
        let s = ms_jaccard_n(a, b, n)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        log += s.ln();
    }
    Ok((log / k as f64).exp())
}
