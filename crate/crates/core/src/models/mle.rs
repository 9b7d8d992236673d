use super::RecurrentLM;
use crate::error::{Error, Result};
use crate::tensor::{Adam, Graph};

/// One teacher-forcing step: mean per-token negative log-likelihood of
/// `batch` (each sentence scored after the start token), then one Adam
/// update. Returns the pre-update loss.
pub fn mle_step(m: &mut RecurrentLM, opt: &mut Adam, batch: &[Vec<usize>]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let tokens: usize = batch.iter().map(Vec::len).sum();
    let mut g = Graph::new();
    let vars = m.params().bind(&mut g);
    let pairs: Vec<(&[usize], &[usize])> = batch.iter().map(|s| (&[][..], s.as_slice())).collect();
    let (lp, _) = m.score_batch(&mut g, &vars, &pairs)?;
    let total = g.sum(lp);
    let loss = g.scale(total, -1.0 / tokens as f64);
    let value = g.scalar(loss)?;
    if !value.is_finite() {
        return Err(Error::Diverged { step: opt.steps() as usize, loss: value });
    }
    let grads = g.backward(loss)?;
    opt.step(m.params_mut(), &grads)?;
    Ok(value)
}
