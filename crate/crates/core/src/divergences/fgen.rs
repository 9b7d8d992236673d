use std::f64::consts::LN_2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    /// `u ln u − (u+1) ln(u+1)`
    Js,
    /// `u ln u`
    Kl,
    /// `−ln u`
    ReverseKl,
    /// `(u − 1)²`
    ChiSquared,
    /// `f(u) + c·(1 − u)` with `c = f′(1)` of the base.
    Shifted { base: Box<Kind>, slope: f64 },
}

/// Convex generator of an f-divergence together with its derivative and
/// Fenchel conjugate.
#[derive(Debug, Clone, PartialEq)]
pub struct FGenerator {
    name: String,
    kind: Kind,
}

impl Kind {
    fn f(&self, u: f64) -> f64 {
        match self {
            Kind::Js => u * u.ln() - (u + 1.0) * (u + 1.0).ln(),
            Kind::Kl => u * u.ln(),
            Kind::ReverseKl => -u.ln(),
            Kind::ChiSquared => (u - 1.0) * (u - 1.0),
            Kind::Shifted { base, slope } => base.f(u) + slope * (1.0 - u),
        }
    }

    fn fprime(&self, u: f64) -> f64 {
        match self {
            Kind::Js => (u / (u + 1.0)).ln(),
            Kind::Kl => u.ln() + 1.0,
            Kind::ReverseKl => -1.0 / u,
            Kind::ChiSquared => 2.0 * (u - 1.0),
            Kind::Shifted { base, slope } => base.fprime(u) - slope,
        }
    }

    /// Conjugate and whether `t` lies in its (effective) domain.
    fn fstar(&self, t: f64) -> Option<f64> {
        match self {
            Kind::Js => (t < 0.0).then(|| -(-t.exp_m1()).ln()),
            Kind::Kl => Some((t - 1.0).exp()),
            Kind::ReverseKl => (t < 0.0).then(|| -1.0 - (-t).ln()),
            // sup over u > 0 of ut − (u−1)²; interior optimum for t > −2
            Kind::ChiSquared => Some(if t > -2.0 { t + t * t / 4.0 } else { -1.0 }),
            Kind::Shifted { base, slope } => base.fstar(t + slope).map(|v| v - slope),
        }
    }

    fn alpha(&self) -> Option<f64> {
        match self {
            Kind::Js => Some(0.0),
            Kind::Kl | Kind::ReverseKl | Kind::ChiSquared => None,
            Kind::Shifted { base, slope } => base.alpha().map(|a| a - 2.0 * slope),
        }
    }
}

impl FGenerator {
    /// `f(u) = u ln u − (u+1) ln(u+1)`; its f-divergence is `2·JS − 2 ln 2`.
    pub fn js() -> Self {
        Self { name: "js".into(), kind: Kind::Js }
    }

    pub fn kl() -> Self {
        Self { name: "kl".into(), kind: Kind::Kl }
    }

    pub fn reverse_kl() -> Self {
        Self { name: "revkl".into(), kind: Kind::ReverseKl }
    }

    pub fn chi_squared() -> Self {
        Self { name: "chi2".into(), kind: Kind::ChiSquared }
    }

    /// All built-in generators. Each is strictly convex on `u > 0`.
    pub fn builtins() -> Vec<Self> {
        vec![Self::js(), Self::kl(), Self::reverse_kl(), Self::chi_squared()]
    }

    pub fn by_name(name: &str) -> Option<Self> {
        Self::builtins().into_iter().find(|g| g.name == name)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn f(&self, u: f64) -> f64 {
        self.kind.f(u)
    }

    pub fn fprime(&self, u: f64) -> f64 {
        self.kind.fprime(u)
    }

    /// Fenchel conjugate `sup_{u>0} {ut − f(u)}`.
    pub fn fstar(&self, t: f64) -> Result<f64> {
        self.kind.fstar(t).ok_or_else(|| {
            Error::InvalidArgument(format!("{}: t = {t} outside the conjugate's domain", self.name))
        })
    }

    pub fn strictly_convex(&self) -> bool {
        true
    }

    /// `α` such that `f(u) = u·f(1/u) + α(u − 1)`, when one exists.
    pub fn alpha(&self) -> Option<f64> {
        self.kind.alpha()
    }

    /// `g(u) = f′(1) − f′(1)·u + f(u)`: same divergence, `g′(1) = 0`.
    pub fn normalized(&self) -> Self {
        let slope = self.fprime(1.0);
        Self {
            name: format!("{}~norm", self.name),
            kind: Kind::Shifted { base: Box::new(self.kind.clone()), slope },
        }
    }
}

/// `f(1)` for the JS generator.
pub const JS_AT_ONE: f64 = -2.0 * LN_2;
