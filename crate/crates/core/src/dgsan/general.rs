use super::{dgsan_loss_graph, IterationReport, TrainConfig};
use crate::divergences::{check_betweenness, js_divergence, FiniteTriple};
use crate::error::{Error, Result};
use crate::models::{ExplicitModel, Snapshot};
use crate::rng::{rng_for, Rng};
use crate::tensor::{Adam, Array, Graph};

pub const PHASE: &str = "dgsan-general";

/// Trains `model` toward the distribution behind `real` by repeated
/// self-adversarial rounds.
///
/// `real(n, rng)` draws `n` samples from the data. When `target` holds the
/// exact data probabilities over the model's finite domain, every report
/// also carries `JS(P‖Q_θ)` and the betweenness fraction of the round.
pub fn dgsan_general<M, F>(model: M, real: F, target: Option<&[f64]>, cfg: &TrainConfig) -> Result<(M, Vec<IterationReport>)>
where
    M: ExplicitModel,
    F: FnMut(usize, &mut Rng) -> Result<Vec<M::Sample>>,
{
    dgsan_general_with(model, real, target, cfg, |_, _| Ok(()))
}

/// [`dgsan_general`] with a callback after each outer iteration.
pub fn dgsan_general_with<M, F, O>(
    mut model: M,
    mut real: F,
    target: Option<&[f64]>,
    cfg: &TrainConfig,
    mut observe: O,
) -> Result<(M, Vec<IterationReport>)>
where
    M: ExplicitModel,
    F: FnMut(usize, &mut Rng) -> Result<Vec<M::Sample>>,
    O: FnMut(&IterationReport, &M) -> Result<()>,
{
    cfg.validate()?;
    let domain = |m: &M| -> Result<Vec<f64>> {
        let q = m
            .domain_probs()
            .ok_or_else(|| Error::InvalidArgument("exact reporting needs a finite domain".into()))?;
        match target {
            Some(p) if p.len() != q.len() => Err(Error::shape(
                "dgsan_general",
                format!("target has {} entries, model domain {}", p.len(), q.len()),
            )),
            _ => Ok(q),
        }
    };
    if target.is_some() {
        domain(&model)?;
    }

    let mut real_rng = rng_for(cfg.seed, "dgsan.real");
    let mut fake_rng = rng_for(cfg.seed, "dgsan.fake");
    let mut opt = Adam::new(cfg.learning_rate);
    let mut reports = Vec::with_capacity(cfg.outer_iters);
    let mut step = 0;

    for outer in 0..cfg.outer_iters {
        let old = Snapshot::of(&model);
        let scorer = if cfg.old_logprob_temperature == 1.0 {
            (*old).clone()
        } else {
            old.tempered(cfg.old_logprob_temperature)?
        };
        let q_old = target.map(|_| domain(&old)).transpose()?;

        let mut total = 0.0;
        let mut last = 0.0;
        for _ in 0..cfg.inner_epochs {
            let xr = real(cfg.batch_size, &mut real_rng)?;
            let xf = old.sample_batch(cfg.batch_size, cfg.temperature, &mut fake_rng)?;
            let or = scorer.logprob_values(&xr)?;
            let of = scorer.logprob_values(&xf)?;

            let mut g = Graph::new();
            let vars = model.params().bind(&mut g);
            let nr = model.logprob_graph(&mut g, &vars, &xr)?;
            let nf = model.logprob_graph(&mut g, &vars, &xf)?;
            let or = g.constant(Array::vector(or)?);
            let of = g.constant(Array::vector(of)?);
            let loss = dgsan_loss_graph(&mut g, nr, or, nf, of)?;
            let value = g.scalar(loss)?;
            if !value.is_finite() {
                return Err(Error::Diverged { step, loss: value });
            }
            let grads = g.backward(loss)?;
            opt.step(model.params_mut(), &grads)?;
            step += 1;
            total += value;
            last = value;
        }

        let (js, betweenness_fraction) = match (target, q_old) {
            (Some(p), Some(q_old)) => {
                let q_theta = domain(&model)?;
                let js = js_divergence(p, &q_theta);
                let triple = FiniteTriple {
                    p: p.to_vec(),
                    q_old,
                    q_theta,
                };
                (Some(js), Some(check_betweenness(&triple).1))
            }
            _ => (None, None),
        };
        let report = IterationReport {
            phase: PHASE.into(),
            l: None,
            outer_iter: outer,
            step,
            loss: total / cfg.inner_epochs as f64,
            last_loss: last,
            js,
            betweenness_fraction,
        };
        observe(&report, &model)?;
        reports.push(report);
    }
    Ok((model, reports))
}
