use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Real and fake batch size `B`.
    pub batch_size: usize,
    /// Outer iterations `D` (per target length on the sequence path).
    pub outer_iters: usize,
    /// Maximum sequence length `M`.
    pub max_len: usize,
    /// Temperature `T` used to draw fake samples from `Q_old`.
    pub temperature: f64,
    /// Temperature at which `Q_old` scores samples inside the loss.
    pub old_logprob_temperature: f64,
    /// Optimizer steps per outer iteration.
    pub inner_epochs: usize,
    pub learning_rate: f64,
    /// Budget in corpus passes for the sequence path; `None` runs the
    /// curriculum to the longest sentence.
    pub max_epochs: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::sequence()
    }
}

impl TrainConfig {
    /// Settings for the sequence path: `D = 5`, `T = 2`, 200 inner steps.
    pub fn sequence() -> Self {
        Self {
            batch_size: 64,
            outer_iters: 5,
            max_len: 20,
            temperature: 2.0,
            old_logprob_temperature: 1.0,
            inner_epochs: 200,
            learning_rate: 1e-3,
            max_epochs: None,
            seed: 0,
        }
    }

    /// Settings for a generator over a finite domain. Fake samples come
    /// from `Q_old` itself, and 50 inner steps form an outer iteration.
    pub fn tabular() -> Self {
        Self {
            batch_size: 1024,
            outer_iters: 40,
            max_len: 1,
            temperature: 1.0,
            old_logprob_temperature: 1.0,
            inner_epochs: 50,
            learning_rate: 0.01,
            max_epochs: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.batch_size < 1 {
            return fail("batch_size must be >= 1".into());
        }
        if self.outer_iters < 1 {
            return fail("outer_iters (D) must be >= 1".into());
        }
        if self.max_len < 1 {
            return fail("max_len (M) must be >= 1".into());
        }
        if self.inner_epochs < 1 {
            return fail("inner_epochs must be >= 1".into());
        }
        for (name, t) in [
            ("temperature", self.temperature),
            ("old_logprob_temperature", self.old_logprob_temperature),
        ] {
            if !(t > 0.0) || !t.is_finite() {
                return fail(format!("{name} must be > 0, got {t}"));
            }
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return fail(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.max_epochs == Some(0) {
            return fail("max_epochs must be >= 1".into());
        }
        Ok(())
    }
}
