use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub const DEFAULT_FEATURE_DIM: usize = 32;

/// Diagonal Gaussian fitted to feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGaussian {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl FeatureGaussian {
    /// Sample mean and population variance per dimension.
    pub fn fit(features: &[Vec<f64>]) -> Result<Self> {
        if features.len() < 2 {
            return Err(Error::InvalidArgument("need at least two feature vectors".into()));
        }
        let d = features[0].len();
        let n = features.len() as f64;
        let mut mean = vec![0.0; d];
        for f in features {
            mean.iter_mut().zip(f).for_each(|(m, x)| *m += x / n);
        }
        let mut var = vec![0.0; d];
        for f in features {
            var.iter_mut().zip(f).zip(&mean).for_each(|((v, x), m)| *v += (x - m) * (x - m) / n);
        }
        Ok(Self { mean, var })
    }

    /// `‖μ₁ − μ₂‖² + Σ(σ₁² + σ₂² − 2σ₁σ₂)`.
    pub fn frechet(&self, other: &Self) -> f64 {
        let mean: f64 = self.mean.iter().zip(&other.mean).map(|(a, b)| (a - b) * (a - b)).sum();
        let cov: f64 = self
            .var
            .iter()
            .zip(&other.var)
            .map(|(a, b)| a + b - 2.0 * (a * b).sqrt())
            .sum();
        (mean + cov).max(0.0)
    }
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Row of the random projection for one n-gram: `d` signs scaled by
/// `1/√d`, fixed by the seed and the n-gram alone, so the projection never
/// has to be materialized over the open n-gram space.
fn projection_row(gram: &[usize], d: usize, seed: u64) -> Vec<f64> {
    let mut state = seed ^ 0x5851_f42d_4c95_7f2d;
    splitmix(&mut state);
    state ^= gram.len() as u64;
    for &t in gram {
        state = splitmix(&mut state) ^ t as u64;
    }
    let scale = 1.0 / (d as f64).sqrt();
    let mut out = Vec::with_capacity(d);
    while out.len() < d {
        let bits = splitmix(&mut state);
        for b in 0..64.min(d - out.len()) {
            out.push(if bits >> b & 1 == 1 { scale } else { -scale });
        }
    }
    out
}

/// Bag of unigrams and bigrams with frequencies summing to one, projected
/// to `d` dimensions.
fn features(s: &[usize], d: usize, seed: u64, cache: &mut BTreeMap<Vec<usize>, Vec<f64>>) -> Vec<f64> {
    let mut bag: BTreeMap<&[usize], f64> = BTreeMap::new();
    for n in 1..=2 {
        for w in s.windows(n) {
            *bag.entry(w).or_insert(0.0) += 1.0;
        }
    }
    let total: f64 = bag.values().sum();
    let mut out = vec![0.0; d];
    for (g, c) in bag {
        let row = cache.entry(g.to_vec()).or_insert_with(|| projection_row(g, d, seed));
        out.iter_mut().zip(row.iter()).for_each(|(o, r)| *o += c / total * r);
    }
    out
}

/// Fréchet distance between diagonal Gaussians fitted to the projected
/// n-gram features of two sentence sets.
pub fn frechet_feature_distance(real: &[Vec<usize>], generated: &[Vec<usize>], d: usize, seed: u64) -> Result<f64> {
    if real.len() < 2 || generated.len() < 2 {
        return Err(Error::InvalidArgument("each set needs at least two sentences".into()));
    }
    if d < 1 {
        return Err(Error::InvalidArgument("feature dimension must be >= 1".into()));
    }
    let mut cache = BTreeMap::new();
    let fa: Vec<Vec<f64>> = real.iter().map(|s| features(s, d, seed, &mut cache)).collect();
    let fb: Vec<Vec<f64>> = generated.iter().map(|s| features(s, d, seed, &mut cache)).collect();
    Ok(FeatureGaussian::fit(&fa)?.frechet(&FeatureGaussian::fit(&fb)?))
}
