use super::graph::{Graph, Var};
use super::params::ParamSet;
use crate::error::{Error, Result};

pub const RESOLUTION: f64 = 1e5;

/// Compares backward-pass gradients with central finite differences over
/// every scalar in `params` and returns the worst relative error.
///
/// `build` receives a fresh graph plus the bound parameter leaves and must
/// return a scalar root. It is evaluated twice at the unperturbed point; a
/// mismatch is reported as a non-deterministic constructor.
///
/// Each entry's error is relative to the larger of the two estimates, but
/// never to less than [`RESOLUTION`] times the rounding error of a central
/// difference, `ε_mach·|f|/eps`. Smaller gradient entries cannot be
/// resolved by differencing and are compared on that absolute scale.
pub fn grad_check<F>(build: F, params: &ParamSet, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step {eps} outside [1e-7, 1e-3]"
        )));
    }
    let eval = |ps: &ParamSet| -> Result<f64> {
        let mut g = Graph::new();
        let vars = ps.bind(&mut g);
        let root = build(&mut g, &vars)?;
        g.scalar(root)
    };

    let mut g = Graph::new();
    let vars = params.bind(&mut g);
    let root = build(&mut g, &vars)?;
    let base = g.scalar(root)?;
    let again = eval(params)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::NonDeterministic(base, again));
    }
    let grads = g.backward(root)?;

    let mut work = params.clone();
    let floor = (RESOLUTION * f64::EPSILON * base.abs() / eps).max(1e-8);
    let mut worst = 0.0f64;
    for id in 0..params.len() {
        let analytic = grads.wrt(&g, vars[id]);
        for j in 0..params.get(id).len() {
            let orig = params.get(id).data()[j];
            work.get_mut(id).data_mut()[j] = orig + eps;
            let fp = eval(&work)?;
            work.get_mut(id).data_mut()[j] = orig - eps;
            let fm = eval(&work)?;
            work.get_mut(id).data_mut()[j] = orig;
            let numeric = (fp - fm) / (2.0 * eps);
            let a = analytic.data()[j];
            let denom = a.abs().max(numeric.abs()).max(floor);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
