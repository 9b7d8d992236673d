use std::sync::Arc;

use rand::Rng;

use super::{TokenizedCorpus, Vocabulary, NUM_SPECIAL};
use crate::error::{Error, Result};

const ROW_TOL: f64 = 1e-12;

/// First-order Markov source over symbols `0..n` with an explicit length
/// distribution, so every sequence has an exactly computable probability.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovOracle {
    initial: Vec<f64>,
    transition: Vec<Vec<f64>>,
    /// `length[i]` is the probability of length `i + 1`.
    length: Vec<f64>,
}

fn check_dist(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidArgument(format!("{what}: empty")));
    }
    if let Some(i) = p.iter().position(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::Domain {
            coord: i,
            detail: format!("{what}: entry {} is not a probability", p[i]),
        });
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > ROW_TOL {
        return Err(Error::InvalidArgument(format!("{what}: sums to {s}")));
    }
    Ok(())
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    for x in &mut v {
        *x /= s;
    }
    // Absorb the residual rounding into the largest entry so the row sums
    // to one within an ulp or two.
    let s: f64 = v.iter().sum();
    let (imax, _) = v
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) });
    v[imax] += 1.0 - s;
    v
}

fn draw(p: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding slack past the last positive entry
    p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1)
}

impl MarkovOracle {
    pub fn new(initial: Vec<f64>, transition: Vec<Vec<f64>>, length: Vec<f64>) -> Result<Self> {
        check_dist(&initial, "initial")?;
        check_dist(&length, "length")?;
        if transition.len() != initial.len() {
            return Err(Error::shape(
                "MarkovOracle",
                format!("{} transition rows for {} symbols", transition.len(), initial.len()),
            ));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != initial.len() {
                return Err(Error::shape("MarkovOracle", format!("row {i} has {} entries", row.len())));
            }
            check_dist(row, &format!("transition row {i}"))?;
        }
        Ok(Self {
            initial,
            transition,
            length,
        })
    }

    /// Random oracle with Dirichlet(1)-style rows sharpened by `skew`
    /// (entries raised to that power before normalizing). `fixed_len`
    /// puts all length mass on `max_len`.
    pub fn random(symbols: usize, max_len: usize, skew: f64, fixed_len: bool, rng: &mut impl Rng) -> Result<Self> {
        if symbols == 0 || max_len == 0 {
            return Err(Error::InvalidArgument("oracle needs >= 1 symbol and max_len >= 1".into()));
        }
        let mut row = |n: usize| -> Vec<f64> {
            normalize(
                (0..n)
                    .map(|_| {
                        let u: f64 = rng.random_range(1e-12..1.0);
                        (-u.ln()).powf(skew)
                    })
                    .collect(),
            )
        };
        let initial = row(symbols);
        let transition = (0..symbols).map(|_| row(symbols)).collect();
        let length = if fixed_len {
            let mut l = vec![0.0; max_len];
            l[max_len - 1] = 1.0;
            l
        } else {
            row(max_len)
        };
        Self::new(initial, transition, length)
    }

    pub fn symbols(&self) -> usize {
        self.initial.len()
    }

    pub fn max_len(&self) -> usize {
        self.length.len()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn length_probs(&self) -> &[f64] {
        &self.length
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<usize> {
        let len = draw(&self.length, rng) + 1;
        let mut seq = Vec::with_capacity(len);
        seq.push(draw(&self.initial, rng));
        while seq.len() < len {
            let prev = *seq.last().unwrap();
            seq.push(draw(&self.transition[prev], rng));
        }
        seq
    }

    /// `log P(len) + log initial(x₁) + Σ log transition(xᵢ₋₁, xᵢ)`.
    /// Zero-probability events give `-inf`; ids outside the support and
    /// impossible lengths are errors.
    pub fn logprob(&self, seq: &[usize]) -> Result<f64> {
        if seq.is_empty() || seq.len() > self.max_len() {
            return Err(Error::InvalidArgument(format!(
                "sequence length {} outside 1..={}",
                seq.len(),
                self.max_len()
            )));
        }
        if let Some(&id) = seq.iter().find(|&&id| id >= self.symbols()) {
            return Err(Error::IdOutOfRange { id, size: self.symbols() });
        }
        let mut lp = self.length[seq.len() - 1].ln() + self.initial[seq[0]].ln();
        for w in seq.windows(2) {
            lp += self.transition[w[0]][w[1]].ln();
        }
        Ok(lp)
    }

    /// Every sequence with nonzero length probability, paired with its
    /// probability. Exponential in `max_len`; meant for tiny oracles.
    pub fn enumerate(&self) -> Vec<(Vec<usize>, f64)> {
        let mut out = Vec::new();
        for len in 1..=self.max_len() {
            if self.length[len - 1] == 0.0 {
                continue;
            }
            for seq in all_sequences(self.symbols(), len) {
                let p = self.logprob(&seq).map(f64::exp).unwrap_or(0.0);
                out.push((seq, p));
            }
        }
        out
    }

    /// Entropy of the sequence distribution in nats, by enumeration.
    pub fn entropy(&self) -> f64 {
        self.enumerate()
            .iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(_, p)| -p * p.ln())
            .sum()
    }

    /// Vocabulary whose regular tokens `s0, s1, …` follow the specials, so
    /// oracle symbol `i` has id `i + NUM_SPECIAL`.
    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::from_tokens((0..self.symbols()).map(|i| format!("s{i}")))
    }

    pub fn to_vocab_ids(seq: &[usize]) -> Vec<usize> {
        seq.iter().map(|&s| s + NUM_SPECIAL).collect()
    }

    /// Maps vocabulary ids back to oracle symbols; `None` if any id is a
    /// special token.
    pub fn from_vocab_ids(&self, ids: &[usize]) -> Option<Vec<usize>> {
        ids.iter()
            .map(|&i| i.checked_sub(NUM_SPECIAL).filter(|&s| s < self.symbols()))
            .collect()
    }

    pub fn sample_corpus(&self, count: usize, rng: &mut impl Rng) -> Result<TokenizedCorpus> {
        let vocab = Arc::new(self.vocabulary());
        let sentences = (0..count).map(|_| Self::to_vocab_ids(&self.sample(rng))).collect();
        TokenizedCorpus::new(sentences, self.max_len(), vocab)
    }
}

/// All length-`len` sequences over `0..symbols`, in lexicographic order.
pub fn all_sequences(symbols: usize, len: usize) -> Vec<Vec<usize>> {
    let total = symbols.pow(len as u32);
    (0..total)
        .map(|mut code| {
            let mut seq = vec![0; len];
            for slot in seq.iter_mut().rev() {
                *slot = code % symbols;
                code /= symbols;
            }
            seq
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use std::collections::HashMap;

    #[test]
    fn deterministic_chain_logprob() {
        let o = MarkovOracle::new(
            vec![0.25, 0.75],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![0.4, 0.6],
        )
        .unwrap();
        let lp = o.logprob(&[1, 0]).unwrap();
        assert!((lp - (0.6f64.ln() + 0.75f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_support() {
        let mut rng = rng_for(1, "o");
        let o = MarkovOracle::random(3, 3, 1.0, false, &mut rng).unwrap();
        assert!(matches!(o.logprob(&[0, 3]), Err(Error::IdOutOfRange { .. })));
        assert!(o.logprob(&[]).is_err());
        assert!(o.logprob(&[0, 0, 0, 0]).is_err());
    }

    #[test]
    fn rejects_invalid_rows() {
        assert!(MarkovOracle::new(vec![0.5, 0.6], vec![vec![0.5, 0.5]; 2], vec![1.0]).is_err());
        assert!(MarkovOracle::new(vec![1.0], vec![vec![1.0]; 2], vec![1.0]).is_err());
        assert!(MarkovOracle::new(vec![1.5, -0.5], vec![vec![0.5, 0.5]; 2], vec![1.0]).is_err());
    }

    #[test]
    fn brute_force_normalization() {
        for seed in 0..5 {
            let mut rng = rng_for(seed, "o");
            for (v, m) in [(3, 3), (4, 4), (2, 4)] {
                let o = MarkovOracle::random(v, m, 1.5, false, &mut rng).unwrap();
                let total: f64 = o.enumerate().iter().map(|(_, p)| p).sum();
                assert!((total - 1.0).abs() < 1e-10, "{total}");
            }
        }
    }

    #[test]
    fn monte_carlo_matches_enumeration() {
        let mut rng = rng_for(5, "o");
        let mut o = MarkovOracle::random(3, 2, 1.0, true, &mut rng).unwrap();
        o.length = vec![0.0, 1.0];
        let n = 1_000_000usize;
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for _ in 0..n {
            *counts.entry(o.sample(&mut rng)).or_default() += 1;
        }
        for (seq, p) in o.enumerate() {
            let c = counts.get(&seq).copied().unwrap_or(0) as f64;
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((c - n as f64 * p).abs() <= 4.0 * sigma + 1e-9, "{seq:?}: {c} vs {}", n as f64 * p);
        }
    }

    #[test]
    fn vocab_id_mapping() {
        let mut rng = rng_for(2, "o");
        let o = MarkovOracle::random(3, 3, 1.0, false, &mut rng).unwrap();
        let ids = MarkovOracle::to_vocab_ids(&[0, 2, 1]);
        assert_eq!(o.from_vocab_ids(&ids), Some(vec![0, 2, 1]));
        assert_eq!(o.from_vocab_ids(&[1, 4]), None);
        let v = o.vocabulary();
        assert_eq!(v.token(ids[1]), Some("s2"));
    }
}
