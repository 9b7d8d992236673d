//! Generators with exactly computable probabilities.

mod checkpoint;
mod mle;
mod recurrent;
mod tabular;

use std::ops::Deref;

use rand::{Rng, RngCore};

pub use checkpoint::{read_checkpoint, read_params, write_checkpoint, write_params, MAGIC};
pub use mle::mle_step;
pub use recurrent::{FixedLengthLM, RecurrentLM, INIT_SCALE};
pub use tabular::TabularDistribution;

use crate::error::{Error, Result};
use crate::tensor::{log_softmax_rows, Array, Graph, ParamSet, Var};

/// A generator whose probabilities can be evaluated exactly and
/// differentiated through its parameters.
pub trait ExplicitModel: Clone {
    type Sample: Clone;

    fn params(&self) -> &ParamSet;

    fn params_mut(&mut self) -> &mut ParamSet;

    /// Per-sample log-probabilities as a vector node on `g`, where `vars`
    /// are this model's parameters bound on the same graph.
    fn logprob_graph(&self, g: &mut Graph, vars: &[Var], xs: &[Self::Sample]) -> Result<Var>;

    fn sample_batch(&self, n: usize, temperature: f64, rng: &mut dyn RngCore) -> Result<Vec<Self::Sample>>;

    /// The model with every step distribution replaced by
    /// `softmax(logits / temperature)`.
    fn tempered(&self, temperature: f64) -> Result<Self>;

    /// Full probability vector when the support is small enough to list.
    fn domain_probs(&self) -> Option<Vec<f64>> {
        None
    }

    /// Log-probabilities as plain values.
    fn logprob_values(&self, xs: &[Self::Sample]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let vars = self.params().bind_frozen(&mut g);
        let v = self.logprob_graph(&mut g, &vars, xs)?;
        Ok(g.value(v).data().to_vec())
    }
}

/// Frozen copy of a model. Only shared access is possible, so its
/// probabilities cannot drift after the copy is taken.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<M>(M);

impl<M: Clone> Snapshot<M> {
    pub fn of(model: &M) -> Self {
        Snapshot(model.clone())
    }
}

impl<M> Deref for Snapshot<M> {
    type Target = M;

    fn deref(&self) -> &M {
        &self.0
    }
}

fn check_temperature(temperature: f64) -> Result<()> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidArgument(format!("temperature must be > 0, got {temperature}")));
    }
    Ok(())
}

/// `softmax(logits / temperature)`.
pub fn tempered_probs(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    let scaled = Array::vector(logits.iter().map(|v| v / temperature).collect())?;
    Ok(log_softmax_rows(&scaled).into_data().into_iter().map(f64::exp).collect())
}

pub fn sample_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use crate::tensor::Adam;

    #[test]
    fn snapshot_unaffected_by_training() {
        let mut m = RecurrentLM::new(5, 4, 4, &mut rng_for(0, "m")).unwrap();
        let snap = Snapshot::of(&m);
        let x = [4, 3, 2];
        let before = snap.seq_logprob(&x, &[]).unwrap();
        assert_eq!(before.to_bits(), m.seq_logprob(&x, &[]).unwrap().to_bits());
        let mut opt = Adam::new(0.05);
        for _ in 0..5 {
            mle_step(&mut m, &mut opt, &[vec![4, 4, 4]]).unwrap();
        }
        assert_ne!(before, m.seq_logprob(&x, &[]).unwrap());
        assert_eq!(before.to_bits(), snap.seq_logprob(&x, &[]).unwrap().to_bits());
    }

    #[test]
    fn tempered_sampling_consistent_with_scoring() {
        // KL(empirical ‖ tempered model) shrinks as the sample count grows.
        let t = TabularDistribution::from_logits(vec![1.2, -0.3, 0.4, 0.0]).unwrap();
        let target = tempered_probs(t.logits(), 2.0).unwrap();
        let kl_at = |n: usize| {
            let mut rng = rng_for(4, "kl");
            let s = t.sample_batch(n, 2.0, &mut rng).unwrap();
            let mut counts = vec![0.0; 4];
            for x in s {
                counts[x] += 1.0;
            }
            counts
                .iter()
                .zip(&target)
                .filter(|(c, _)| **c > 0.0)
                .map(|(c, q)| (c / n as f64) * ((c / n as f64) / q).ln())
                .sum::<f64>()
        };
        let (small, large) = (kl_at(200), kl_at(200_000));
        assert!(large < small && large < 1e-4, "{small} {large}");
    }
}
