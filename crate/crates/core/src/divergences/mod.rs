//! f-divergences, Bregman divergences and numerical checks of the identities
//! that tie the self-adversarial objective to divergence minimization.
//!
//! All functions work on explicit probability vectors over a finite domain.
//! Ratios are only formed on strictly positive vectors; use
//! [`clamp_simplex`] to move raw vectors off the boundary first.

mod fgen;
mod theorems;

use rand::Rng;

pub use fgen::{FGenerator, JS_AT_ONE};
pub use theorems::{
    bregman_expectation_symmetry_residual, bregman_inverse_symmetry_residual, check_betweenness,
    find_counterexample, random_sandwich, verify_monotone_decrease, verify_theorem1, verify_theorem3,
    MonotoneCheck, Theorem1Report, DECREASE_MARGIN,
};

use crate::error::{Error, Result};

pub const CLAMP_EPS: f64 = 1e-9;
const SUM_TOL: f64 = 1e-12;

/// Floors every entry at `eps` and renormalizes.
pub fn clamp_simplex(v: &[f64], eps: f64) -> Vec<f64> {
    let floored: Vec<f64> = v.iter().map(|&x| x.max(eps)).collect();
    let s: f64 = floored.iter().sum();
    floored.into_iter().map(|x| x / s).collect()
}

/// Dirichlet(1) draw floored at `min_entry`.
pub fn random_simplex(dim: usize, min_entry: f64, rng: &mut (impl Rng + ?Sized)) -> Vec<f64> {
    let raw: Vec<f64> = (0..dim)
        .map(|_| -rng.random_range(f64::MIN_POSITIVE..1.0).ln())
        .collect();
    let s: f64 = raw.iter().sum();
    clamp_simplex(&raw.iter().map(|x| x / s).collect::<Vec<_>>(), min_entry)
}

fn check_positive(v: &[f64], what: &str) -> Result<()> {
    match v.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
        Some(i) => Err(Error::Domain {
            coord: i,
            detail: format!("{what} entry {} must be positive and finite", v[i]),
        }),
        None => Ok(()),
    }
}

fn check_same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape("divergence", format!("lengths {} and {}", a.len(), b.len())));
    }
    Ok(())
}

/// Three strictly positive distributions over one finite domain: the data
/// distribution, the frozen generator and the new generator.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteTriple {
    pub p: Vec<f64>,
    pub q_old: Vec<f64>,
    pub q_theta: Vec<f64>,
}

impl FiniteTriple {
    pub fn new(p: Vec<f64>, q_old: Vec<f64>, q_theta: Vec<f64>) -> Result<Self> {
        check_same_len(&p, &q_old)?;
        check_same_len(&p, &q_theta)?;
        for (v, what) in [(&p, "p"), (&q_old, "q_old"), (&q_theta, "q_theta")] {
            check_positive(v, what)?;
            let s: f64 = v.iter().sum();
            if (s - 1.0).abs() > SUM_TOL {
                return Err(Error::InvalidArgument(format!("{what} sums to {s}")));
            }
        }
        Ok(Self { p, q_old, q_theta })
    }

    /// Clamps each vector away from zero by [`CLAMP_EPS`] before validating.
    pub fn clamped(p: &[f64], q_old: &[f64], q_theta: &[f64]) -> Result<Self> {
        Self::new(
            clamp_simplex(p, CLAMP_EPS),
            clamp_simplex(q_old, CLAMP_EPS),
            clamp_simplex(q_theta, CLAMP_EPS),
        )
    }

    /// Independent random distributions with entries ≥ `min_entry`.
    pub fn random(dim: usize, min_entry: f64, rng: &mut (impl Rng + ?Sized)) -> Self {
        let p = random_simplex(dim, min_entry, rng);
        let q_old = random_simplex(dim, min_entry, rng);
        let q_theta = random_simplex(dim, min_entry, rng);
        Self { p, q_old, q_theta }
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }
}

/// `Σ p·ln d + Σ q·ln(1 − d)`.
pub fn gan_value(p: &[f64], q: &[f64], d: &[f64]) -> Result<f64> {
    check_same_len(p, q)?;
    check_same_len(p, d)?;
    if let Some(i) = d.iter().position(|&x| !(x > 0.0 && x < 1.0)) {
        return Err(Error::Domain {
            coord: i,
            detail: format!("discriminator output {} not in (0, 1)", d[i]),
        });
    }
    Ok(p.iter()
        .zip(q)
        .zip(d)
        .map(|((&p, &q), &d)| p * d.ln() + q * (-d).ln_1p())
        .sum())
}

/// `p / (p + q)` elementwise.
pub fn optimal_discriminator(p: &[f64], q: &[f64]) -> Vec<f64> {
    p.iter().zip(q).map(|(&p, &q)| p / (p + q)).collect()
}

/// `D_f(P‖Q) = Σ q·f(p/q)`.
pub fn f_divergence(f: &FGenerator, p: &[f64], q: &[f64]) -> Result<f64> {
    check_same_len(p, q)?;
    check_positive(p, "p")?;
    check_positive(q, "q")?;
    Ok(p.iter().zip(q).map(|(&p, &q)| q * f.f(p / q)).sum())
}

/// `B_f(x‖y) = f(x) − f(y) − f′(y)(x − y)`.
pub fn bregman(f: &FGenerator, x: f64, y: f64) -> Result<f64> {
    if !(x > 0.0 && y > 0.0) || !x.is_finite() || !y.is_finite() {
        return Err(Error::InvalidArgument(format!("bregman arguments must be positive: ({x}, {y})")));
    }
    Ok(f.f(x) - f.f(y) - f.fprime(y) * (x - y))
}

/// `|f*(f′(x)) − (f′(x)·x − f(x))|`.
pub fn fenchel_identity_residual(f: &FGenerator, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::InvalidArgument(format!("x = {x} outside (0, ∞)")));
    }
    let t = f.fprime(x);
    Ok((f.fstar(t)? - (t * x - f.f(x))).abs())
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&p, &q)| if p == 0.0 { 0.0 } else { xlogy(p, p) - xlogy(p, q) })
        .sum()
}

/// Standard Jensen–Shannon divergence in nats, `½KL(P‖M) + ½KL(Q‖M)`.
/// Zero entries are allowed.
pub fn js_divergence(p: &[f64], q: &[f64]) -> f64 {
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    (0.5 * kl_divergence(p, &m) + 0.5 * kl_divergence(q, &m)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::LN_2;

    #[test]
    fn gan_value_cases() {
        let p = [0.2, 0.3, 0.5];
        let q = [0.6, 0.1, 0.3];
        assert!((gan_value(&p, &q, &[0.5; 3]).unwrap() + 2.0 * LN_2).abs() < 1e-15);
        let d = optimal_discriminator(&p, &p);
        assert!((gan_value(&p, &p, &d).unwrap() + 2.0 * LN_2).abs() < 1e-15);
        assert!(gan_value(&p, &q, &[0.5, 1.0, 0.5]).is_err());
        assert!(gan_value(&p, &q, &[0.0, 0.5, 0.5]).is_err());
    }

    #[test]
    fn gan_value_separated_supports_near_zero() {
        let mut last = f64::NEG_INFINITY;
        for eps in [1e-2, 1e-4, 1e-6, 1e-8] {
            let p = clamp_simplex(&[1.0, 0.0], eps);
            let q = clamp_simplex(&[0.0, 1.0], eps);
            let v = gan_value(&p, &q, &optimal_discriminator(&p, &q)).unwrap();
            assert!(v > last && v < 0.0);
            last = v;
        }
        assert!(last.abs() < 1e-6);
    }

    #[test]
    fn optimal_discriminator_closed_form_and_grid_argmax() {
        assert_eq!(optimal_discriminator(&[0.3, 0.7], &[0.3, 0.7]), vec![0.5, 0.5]);
        let d = optimal_discriminator(&[0.5], &[0.25]);
        assert!((d[0] - 2.0 / 3.0).abs() < 1e-15);
        // pointwise grid search of p ln d + q ln(1−d)
        let p = [0.1, 0.45, 0.3, 0.15];
        let q = [0.4, 0.05, 0.3, 0.25];
        let step: f64 = 1e-4;
        let best = optimal_discriminator(&p, &q);
        for i in 0..4 {
            let mut arg = 0.0;
            let mut val = f64::NEG_INFINITY;
            let mut d: f64 = step;
            while d < 1.0 {
                let v = p[i] * d.ln() + q[i] * (1.0 - d).ln();
                if v > val {
                    val = v;
                    arg = d;
                }
                d += step;
            }
            assert!((arg - best[i]).abs() <= step, "{arg} vs {}", best[i]);
        }
    }

    #[test]
    fn kl_cross_check() {
        let p = [0.7, 0.3];
        let q = [0.5, 0.5];
        let want = 0.7 * 1.4f64.ln() + 0.3 * 0.6f64.ln();
        assert!((want - 0.08228).abs() < 1e-5);
        assert!((f_divergence(&FGenerator::kl(), &p, &q).unwrap() - want).abs() < 1e-15);
        assert!((kl_divergence(&p, &q) - want).abs() < 1e-15);
    }

    #[test]
    fn js_divergence_cases() {
        let p = [0.2, 0.8];
        assert_eq!(js_divergence(&p, &p), 0.0);
        assert!((js_divergence(&[1.0, 0.0], &[0.0, 1.0]) - LN_2).abs() < 1e-15);
        let f = FGenerator::js();
        assert!((f_divergence(&f, &p, &p).unwrap() - JS_AT_ONE).abs() < 1e-15);
    }

    #[test]
    fn fjs_is_affine_in_js() {
        let mut rng = rng_for(3, "js");
        let f = FGenerator::js();
        for _ in 0..1000 {
            let p = random_simplex(6, 1e-6, &mut rng);
            let q = random_simplex(6, 1e-6, &mut rng);
            let lhs = f_divergence(&f, &p, &q).unwrap();
            let rhs = 2.0 * js_divergence(&p, &q) - 2.0 * LN_2;
            assert!((lhs - rhs).abs() < 1e-12, "{lhs} {rhs}");
        }
    }

    #[test]
    fn fenchel_closed_forms() {
        assert!(fenchel_identity_residual(&FGenerator::js(), 1.0).unwrap() < 1e-15);
        let e = std::f64::consts::E;
        assert!(fenchel_identity_residual(&FGenerator::kl(), e).unwrap() < 1e-14);
        assert!(fenchel_identity_residual(&FGenerator::kl(), 0.0).is_err());
    }

    #[test]
    fn fenchel_sweep() {
        let mut rng = rng_for(4, "fenchel");
        for f in FGenerator::builtins() {
            for _ in 0..100 {
                let x = 10f64.powf(rng.random_range(-2.0..2.0));
                let r = fenchel_identity_residual(&f, x).unwrap();
                assert!(r < 1e-10, "{} x={x} r={r}", f.name());
            }
        }
    }

    #[test]
    fn divergence_domain_errors() {
        let f = FGenerator::kl();
        assert!(matches!(
            f_divergence(&f, &[0.5, 0.5], &[1.0, 0.0]),
            Err(Error::Domain { coord: 1, .. })
        ));
        assert!(f_divergence(&f, &[1.0], &[0.5, 0.5]).is_err());
        assert!(bregman(&f, -1.0, 1.0).is_err());
    }

    #[test]
    fn triple_validation() {
        assert!(FiniteTriple::new(vec![0.5, 0.5], vec![0.5, 0.5], vec![0.6, 0.5]).is_err());
        assert!(FiniteTriple::new(vec![1.0, 0.0], vec![0.5, 0.5], vec![0.5, 0.5]).is_err());
        let t = FiniteTriple::clamped(&[1.0, 0.0], &[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert!(t.p[1] > 0.0);
    }

    proptest! {
        #[test]
        fn bregman_nonnegative_and_zero_on_diagonal(x in 1e-3f64..1e3, y in 1e-3f64..1e3) {
            for f in FGenerator::builtins() {
                let b = bregman(&f, x, y).unwrap();
                let scale = f.f(x).abs().max(f.f(y).abs()).max(1.0);
                prop_assert!(b >= -1e-12 * scale, "{} {b}", f.name());
                prop_assert_eq!(bregman(&f, x, x).unwrap(), 0.0);
            }
        }
    }
}
