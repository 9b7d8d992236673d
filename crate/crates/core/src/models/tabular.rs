use rand::Rng;

use super::{sample_categorical, tempered_probs, ExplicitModel};
use crate::error::{Error, Result};
use crate::tensor::{log_softmax_rows, Array, Graph, ParamSet, Var};

/// Categorical distribution over `0..n` parameterized by logits.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDistribution {
    params: ParamSet,
}

impl TabularDistribution {
    pub fn from_logits(logits: Vec<f64>) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::InvalidArgument("empty domain".into()));
        }
        let mut params = ParamSet::new();
        params.push("logits", Array::vector(logits)?);
        Ok(Self { params })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_logits(vec![0.0; n])
    }

    /// Logits drawn uniformly from `[-scale, scale]`.
    pub fn random(n: usize, scale: f64, rng: &mut impl Rng) -> Result<Self> {
        Self::from_logits((0..n).map(|_| rng.random_range(-scale..=scale)).collect())
    }

    /// Exact logits `ln p`, so the distribution equals `p` up to rounding.
    pub fn from_probs(p: &[f64]) -> Result<Self> {
        if let Some(i) = p.iter().position(|&x| !(x > 0.0)) {
            return Err(Error::Domain {
                coord: i,
                detail: "probabilities must be positive".into(),
            });
        }
        Self::from_logits(p.iter().map(|x| x.ln()).collect())
    }

    pub fn from_params(params: ParamSet) -> Result<Self> {
        let ok = params.len() == 1
            && params.name(0) == "logits"
            && params.get(0).shape().len() == 1
            && !params.get(0).is_empty();
        if !ok {
            return Err(Error::Checkpoint("expected a single rank-1 'logits' parameter".into()));
        }
        Ok(Self { params })
    }

    pub fn size(&self) -> usize {
        self.params.get(0).len()
    }

    pub fn logits(&self) -> &[f64] {
        self.params.get(0).data()
    }

    pub fn log_probs(&self) -> Vec<f64> {
        log_softmax_rows(self.params.get(0)).into_data()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs().into_iter().map(f64::exp).collect()
    }

    pub fn logprob(&self, x: usize) -> Result<f64> {
        if x >= self.size() {
            return Err(Error::IdOutOfRange { id: x, size: self.size() });
        }
        Ok(self.log_probs()[x])
    }

    /// Draw from `softmax(logits / temperature)`.
    pub fn sample(&self, temperature: f64, rng: &mut impl Rng) -> Result<usize> {
        let p = tempered_probs(self.logits(), temperature)?;
        Ok(sample_categorical(&p, rng))
    }
}

impl ExplicitModel for TabularDistribution {
    type Sample = usize;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn logprob_graph(&self, g: &mut Graph, vars: &[Var], xs: &[usize]) -> Result<Var> {
        let lp = g.log_softmax(vars[0]);
        g.gather(lp, xs)
    }

    fn tempered(&self, temperature: f64) -> Result<Self> {
        super::check_temperature(temperature)?;
        Self::from_logits(self.logits().iter().map(|v| v / temperature).collect())
    }

    fn sample_batch(&self, n: usize, temperature: f64, rng: &mut dyn rand::RngCore) -> Result<Vec<usize>> {
        let p = tempered_probs(self.logits(), temperature)?;
        Ok((0..n).map(|_| sample_categorical(&p, rng)).collect())
    }

    fn domain_probs(&self) -> Option<Vec<f64>> {
        Some(self.probs())
    }
}
