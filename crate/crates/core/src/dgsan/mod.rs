//! The self-adversarial objective and its two training loops.
//!
//! Each outer iteration freezes the current generator as `Q_old` and trains
//! a new generator `Q_θ` against the discriminator
//! `D(x) = q_θ(x) / (q_θ(x) + q_old(x))`, which needs only the two models'
//! log-probabilities. Minimizing
//!
//! ```text
//! E_P[softplus(ln q_old − ln q_θ)] + E_{Q_old}[softplus(ln q_θ − ln q_old)]
//! ```
//!
//! equals maximizing the usual GAN value of that discriminator.

mod config;
mod general;
mod sequence;

pub use config::TrainConfig;
pub use general::{dgsan_general, dgsan_general_with};
pub use sequence::{dgsan_sequence, dgsan_sequence_with};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{sigmoid, softplus, Graph, Var};

/// `2 ln 2`, the loss when the new and old generators coincide.
pub const EQUILIBRIUM_LOSS: f64 = 2.0 * std::f64::consts::LN_2;

/// One record per outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub phase: String,
    /// Target span length; only set on the sequence path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    pub outer_iter: usize,
    /// Optimizer steps taken so far.
    pub step: usize,
    /// Mean loss over this iteration's inner steps.
    pub loss: f64,
    /// Loss of the last inner step.
    pub last_loss: f64,
    /// Exact `JS(P‖Q_θ)` after the iteration, when `P` is known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub js: Option<f64>,
    /// Share of coordinates where `Q_θ` lies between `Q_old` and `P`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betweenness_fraction: Option<f64>,
}

/// `sigmoid(ln q_new − ln q_old) = q_new / (q_new + q_old)`.
pub fn implied_discriminator(logq_new: f64, logq_old: f64) -> f64 {
    sigmoid(logq_new - logq_old)
}

fn check_batch(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidArgument(format!("{name} is empty")));
    }
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("{name} contains {x}")));
    }
    Ok(())
}

/// Loss value from per-example log-probabilities.
pub fn dgsan_loss(
    logq_new_real: &[f64],
    logq_old_real: &[f64],
    logq_new_fake: &[f64],
    logq_old_fake: &[f64],
) -> Result<f64> {
    for (name, v) in [
        ("logq_new_real", logq_new_real),
        ("logq_old_real", logq_old_real),
        ("logq_new_fake", logq_new_fake),
        ("logq_old_fake", logq_old_fake),
    ] {
        check_batch(name, v)?;
    }
    if logq_new_real.len() != logq_old_real.len() || logq_new_fake.len() != logq_old_fake.len() {
        return Err(Error::shape("dgsan_loss", "new and old batches differ in length"));
    }
    let real: f64 = logq_new_real
        .iter()
        .zip(logq_old_real)
        .map(|(n, o)| softplus(o - n))
        .sum::<f64>()
        / logq_new_real.len() as f64;
    let fake: f64 = logq_new_fake
        .iter()
        .zip(logq_old_fake)
        .map(|(n, o)| softplus(n - o))
        .sum::<f64>()
        / logq_new_fake.len() as f64;
    Ok(real + fake)
}

/// Loss node on `g`. The old log-probabilities are detached, so gradients
/// reach only the new generator.
pub fn dgsan_loss_graph(g: &mut Graph, new_real: Var, old_real: Var, new_fake: Var, old_fake: Var) -> Result<Var> {
    for v in [new_real, old_real, new_fake, old_fake] {
        if g.value(v).is_empty() {
            return Err(Error::InvalidArgument("empty log-probability batch".into()));
        }
        if let Some(x) = g.value(v).data().iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("log-probability {x}")));
        }
    }
    let old_real = g.detach(old_real);
    let old_fake = g.detach(old_fake);
    let d_real = g.sub(old_real, new_real)?;
    let sp_real = g.softplus(d_real);
    let real = g.mean(sp_real)?;
    let d_fake = g.sub(new_fake, old_fake)?;
    let sp_fake = g.softplus(d_fake);
    let fake = g.mean(sp_fake)?;
    g.add(real, fake)
}
