//! Numerical checks of the decomposition and monotonicity results.

use rand::Rng;

use super::{bregman, f_divergence, FGenerator, FiniteTriple};
use crate::error::{Error, Result};

/// Required margin for a strict decrease.
pub const DECREASE_MARGIN: f64 = 1e-9;
const EQUAL_TOL: f64 = 1e-12;

/// Terms of the JS decomposition for one triple.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Report {
    /// `E_P[ln qθ/(qθ+q_old)] + E_{Q_old}[ln q_old/(qθ+q_old)]`
    pub l: f64,
    /// `E_{Q_old}[B_f(p/q_old ‖ qθ/q_old)]`
    pub bregman_old: f64,
    /// `E_P[B_f(q_old/p ‖ q_old/qθ)]`
    pub bregman_p: f64,
    /// `D_f(P‖Q_old)` for the JS generator.
    pub divergence: f64,
    pub residual: f64,
}

/// Decomposes `D_f(P‖Q_old)` (JS generator) as `L + E_{Q_old}[B_f]` and as
/// `L + E_P[B_f]` with inverted ratios. The residual is the larger of the
/// two identity errors.
pub fn verify_theorem1(t: &FiniteTriple) -> Result<Theorem1Report> {
    let f = FGenerator::js();
    let mut l = 0.0;
    let mut bregman_old = 0.0;
    let mut bregman_p = 0.0;
    for i in 0..t.dim() {
        let (p, qo, qt) = (t.p[i], t.q_old[i], t.q_theta[i]);
        l += p * (qt / (qt + qo)).ln() + qo * (qo / (qt + qo)).ln();
        bregman_old += qo * bregman(&f, p / qo, qt / qo)?;
        bregman_p += p * bregman(&f, qo / p, qo / qt)?;
    }
    let divergence = f_divergence(&f, &t.p, &t.q_old)?;
    let residual = (divergence - l - bregman_old).abs().max((divergence - l - bregman_p).abs());
    Ok(Theorem1Report {
        l,
        bregman_old,
        bregman_p,
        divergence,
        residual,
    })
}

/// Residual of `D_f(P‖Q_old) = E_P[τ] − E_{Q_old}[f*(τ)] + E_{Q_old}[B_f(p/q_old ‖ qθ/q_old)]`
/// with `τ = f′(qθ/q_old)`.
pub fn verify_theorem3(f: &FGenerator, t: &FiniteTriple) -> Result<f64> {
    let mut lower = 0.0;
    let mut breg = 0.0;
    for i in 0..t.dim() {
        let (p, qo, qt) = (t.p[i], t.q_old[i], t.q_theta[i]);
        let tau = f.fprime(qt / qo);
        let conj = f.fstar(tau).map_err(|e| Error::Domain {
            coord: i,
            detail: e.to_string(),
        })?;
        lower += p * tau - qo * conj;
        breg += qo * bregman(f, p / qo, qt / qo)?;
    }
    let d = f_divergence(f, &t.p, &t.q_old)?;
    Ok((d - lower - breg).abs())
}

/// Pointwise sandwich `min(q_old, p) < qθ < max(q_old, p)`. Where
/// `p = q_old` the coordinate only counts if `qθ` equals that value.
/// Returns whether every coordinate satisfies it, and the satisfied share.
pub fn check_betweenness(t: &FiniteTriple) -> (bool, f64) {
    let ok = (0..t.dim())
        .filter(|&i| {
            let (p, qo, qt) = (t.p[i], t.q_old[i], t.q_theta[i]);
            if (p - qo).abs() <= EQUAL_TOL {
                (qt - p).abs() <= EQUAL_TOL
            } else {
                p.min(qo) < qt && qt < p.max(qo)
            }
        })
        .count();
    (ok == t.dim(), ok as f64 / t.dim() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotoneCheck {
    /// `D_f(P‖Q_old) − D_f(P‖Qθ)`
    pub delta: f64,
    pub hypothesis_held: bool,
}

impl MonotoneCheck {
    /// The contract: a sandwiched update must strictly decrease the divergence.
    pub fn holds(&self) -> bool {
        !self.hypothesis_held || self.delta > DECREASE_MARGIN
    }
}

pub fn verify_monotone_decrease(f: &FGenerator, t: &FiniteTriple) -> Result<MonotoneCheck> {
    let delta = f_divergence(f, &t.p, &t.q_old)? - f_divergence(f, &t.p, &t.q_theta)?;
    let (hypothesis_held, _) = check_betweenness(t);
    Ok(MonotoneCheck { delta, hypothesis_held })
}

/// A triple whose `qθ` lies strictly between `q_old` and `p` at every
/// coordinate. Each coordinate moves a random fraction in `[lo, hi]` of the
/// way from `q_old` to `p`; the fractions on the side with more moved mass
/// are then scaled down so the total stays one.
pub fn random_sandwich(dim: usize, min_entry: f64, rng: &mut (impl Rng + ?Sized)) -> FiniteTriple {
    let (lo, hi) = (0.05, 0.95);
    let base = FiniteTriple::random(dim, min_entry, rng);
    let d: Vec<f64> = base.p.iter().zip(&base.q_old).map(|(p, q)| p - q).collect();
    let mut lam: Vec<f64> = (0..dim).map(|_| rng.random_range(lo..hi)).collect();
    let up: f64 = d.iter().zip(&lam).filter(|(d, _)| **d > 0.0).map(|(d, l)| d * l).sum();
    let down: f64 = -d.iter().zip(&lam).filter(|(d, _)| **d < 0.0).map(|(d, l)| d * l).sum::<f64>();
    if up > down {
        let s = down / up;
        lam.iter_mut().zip(&d).filter(|(_, d)| **d > 0.0).for_each(|(l, _)| *l *= s);
    } else if down > 0.0 {
        let s = up / down;
        lam.iter_mut().zip(&d).filter(|(_, d)| **d < 0.0).for_each(|(l, _)| *l *= s);
    }
    let q_theta: Vec<f64> = base.q_old.iter().zip(&d).zip(&lam).map(|((q, d), l)| q + l * d).collect();
    FiniteTriple {
        p: base.p,
        q_old: base.q_old,
        q_theta,
    }
}

/// Random search for a non-sandwiched triple whose divergence increases.
pub fn find_counterexample(
    f: &FGenerator,
    dim: usize,
    tries: usize,
    rng: &mut (impl Rng + ?Sized),
) -> Result<Option<(FiniteTriple, MonotoneCheck)>> {
    for _ in 0..tries {
        let t = FiniteTriple::random(dim, 1e-6, rng);
        let c = verify_monotone_decrease(f, &t)?;
        if !c.hypothesis_held && c.delta < -DECREASE_MARGIN {
            return Ok(Some((t, c)));
        }
    }
    Ok(None)
}

fn require_alpha(f: &FGenerator) -> Result<f64> {
    f.alpha().ok_or_else(|| {
        Error::InvalidArgument(format!("{} has no inverse-symmetry constant", f.name()))
    })
}

/// `|(1/x)·B_f(x‖y) − B_f(1/x ‖ 1/y)|` for generators with an `α`.
pub fn bregman_inverse_symmetry_residual(f: &FGenerator, x: f64, y: f64) -> Result<f64> {
    require_alpha(f)?;
    Ok((bregman(f, x, y)? / x - bregman(f, 1.0 / x, 1.0 / y)?).abs())
}

/// `|E_Q[B_f(p/q ‖ r)] − E_P[B_f(q/p ‖ 1/r)]|`.
pub fn bregman_expectation_symmetry_residual(f: &FGenerator, p: &[f64], q: &[f64], r: &[f64]) -> Result<f64> {
    require_alpha(f)?;
    if p.len() != q.len() || p.len() != r.len() {
        return Err(Error::shape("bregman symmetry", "length mismatch"));
    }
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for i in 0..p.len() {
        lhs += q[i] * bregman(f, p[i] / q[i], r[i])?;
        rhs += p[i] * bregman(f, q[i] / p[i], 1.0 / r[i])?;
    }
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergences::{js_divergence, random_simplex};
    use crate::rng::rng_for;
    use std::f64::consts::LN_2;

    #[test]
    fn decomposition_vanishes_at_optimum() {
        let mut rng = rng_for(1, "t1");
        let mut t = FiniteTriple::random(8, 1e-6, &mut rng);
        t.q_theta = t.p.clone();
        let r = verify_theorem1(&t).unwrap();
        assert!(r.bregman_old.abs() < 1e-15 && r.bregman_p.abs() < 1e-15);
        assert!((r.divergence - r.l).abs() < 1e-12);
    }

    #[test]
    fn decomposition_holds_on_random_triples() {
        let mut rng = rng_for(2, "t1");
        for _ in 0..1000 {
            let t = FiniteTriple::random(8, 1e-6, &mut rng);
            let r = verify_theorem1(&t).unwrap();
            assert!(r.residual < 1e-10, "{}", r.residual);
            assert!((r.bregman_old - r.bregman_p).abs() < 1e-12 * r.bregman_old.abs().max(1.0));
            // standard JS relation
            let js = js_divergence(&t.p, &t.q_old);
            assert!((r.divergence - (2.0 * js - 2.0 * LN_2)).abs() < 1e-12);
        }
    }

    #[test]
    fn conjugate_form_matches_js_decomposition() {
        let mut rng = rng_for(3, "t3");
        for _ in 0..200 {
            let t = FiniteTriple::random(8, 1e-6, &mut rng);
            let a = verify_theorem1(&t).unwrap().residual;
            let b = verify_theorem3(&FGenerator::js(), &t).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conjugate_form_for_builtins_and_degenerate_inputs() {
        let mut rng = rng_for(4, "t3");
        for f in FGenerator::builtins() {
            for _ in 0..1000 {
                let t = FiniteTriple::random(8, 1e-6, &mut rng);
                let r = verify_theorem3(&f, &t).unwrap();
                assert!(r < 1e-10, "{} {r}", f.name());
            }
            let mut t = FiniteTriple::random(8, 1e-6, &mut rng);
            t.q_theta = t.q_old.clone();
            assert!(verify_theorem3(&f, &t).unwrap() < 1e-10);
        }
    }

    #[test]
    fn betweenness_cases() {
        let t = FiniteTriple::new(vec![0.7, 0.3], vec![0.5, 0.5], vec![0.6, 0.4]).unwrap();
        assert_eq!(check_betweenness(&t), (true, 1.0));
        let t = FiniteTriple::new(vec![0.7, 0.3], vec![0.5, 0.5], vec![0.5, 0.5]).unwrap();
        assert_eq!(check_betweenness(&t), (false, 0.0));
        let t = FiniteTriple::new(vec![0.5, 0.3, 0.2], vec![0.5, 0.2, 0.3], vec![0.5, 0.25, 0.25]).unwrap();
        assert_eq!(check_betweenness(&t), (true, 1.0));
    }

    #[test]
    fn sandwich_generator_is_valid() {
        let mut rng = rng_for(5, "sw");
        for _ in 0..500 {
            let t = random_sandwich(8, 1e-6, &mut rng);
            let s: f64 = t.q_theta.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(check_betweenness(&t).0);
        }
    }

    #[test]
    fn sandwich_decreases_every_builtin() {
        let mut rng = rng_for(6, "sw");
        for _ in 0..2000 {
            let t = random_sandwich(8, 1e-6, &mut rng);
            for f in FGenerator::builtins() {
                let c = verify_monotone_decrease(&f, &t).unwrap();
                assert!(c.hypothesis_held && c.holds(), "{} {:?}", f.name(), c);
            }
        }
    }

    #[test]
    fn optimum_decreases_unless_equal() {
        let mut rng = rng_for(7, "opt");
        let mut t = FiniteTriple::random(5, 1e-6, &mut rng);
        t.q_theta = t.p.clone();
        let c = verify_monotone_decrease(&FGenerator::kl(), &t).unwrap();
        assert!(c.delta > 0.0);
    }

    #[test]
    fn counterexample_exists_without_hypothesis() {
        let mut rng = rng_for(8, "cx");
        for f in FGenerator::builtins() {
            let (t, c) = find_counterexample(&f, 8, 1000, &mut rng).unwrap().expect("counterexample");
            assert!(!check_betweenness(&t).0 && c.delta < 0.0);
        }
    }

    #[test]
    fn inverse_symmetry() {
        let f = FGenerator::js();
        assert_eq!(bregman_inverse_symmetry_residual(&f, 2.0, 2.0).unwrap(), 0.0);
        let mut rng = rng_for(9, "inv");
        for _ in 0..100 {
            let x = rng.random_range(0.05..20.0);
            let y = rng.random_range(0.05..20.0);
            assert!(bregman_inverse_symmetry_residual(&f, x, y).unwrap() < 1e-10);
        }
        for _ in 0..100 {
            let p = random_simplex(8, 1e-6, &mut rng);
            let q = random_simplex(8, 1e-6, &mut rng);
            let r: Vec<f64> = (0..8).map(|_| rng.random_range(0.05..20.0)).collect();
            assert!(bregman_expectation_symmetry_residual(&f, &p, &q, &r).unwrap() < 1e-10);
        }
        assert!(bregman_inverse_symmetry_residual(&FGenerator::kl(), 1.0, 2.0).is_err());
    }

    #[test]
    fn normalization_preserves_divergence() {
        let mut rng = rng_for(10, "norm");
        for f in FGenerator::builtins() {
            let g = f.normalized();
            let h = 1e-5;
            let d1 = (g.f(1.0 + h) - g.f(1.0 - h)) / (2.0 * h);
            assert!(d1.abs() < 1e-8, "{} {d1}", f.name());
            assert!((g.f(1.0) - f.f(1.0)).abs() < 1e-15);
            for _ in 0..100 {
                let p = random_simplex(6, 1e-6, &mut rng);
                let q = random_simplex(6, 1e-6, &mut rng);
                let a = f_divergence(&f, &p, &q).unwrap();
                let b = f_divergence(&g, &p, &q).unwrap();
                assert!((a - b).abs() < 1e-12, "{} {a} {b}", f.name());
            }
        }
    }
}
