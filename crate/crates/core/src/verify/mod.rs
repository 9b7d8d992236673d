//! Randomized numerical checks of the divergence identities, the
//! monotonicity results and every gradient, with one record per instance.

mod ops;

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use ops::{op_cases, OpCase, GRAPH_TOL, SMOOTH_TOL};

use crate::divergences::{
    bregman_expectation_symmetry_residual, bregman_inverse_symmetry_residual, f_divergence,
    fenchel_identity_residual, find_counterexample, random_sandwich, random_simplex, verify_monotone_decrease,
    verify_theorem1, verify_theorem3, FGenerator, FiniteTriple, DECREASE_MARGIN,
};
use crate::error::{Error, Result};
use crate::rng::{rng_for, Rng};

pub const IDENTITY_TOL: f64 = 1e-10;
pub const NORMALIZED_TOL: f64 = 1e-12;
pub const DERIVATIVE_TOL: f64 = 1e-8;
pub const DEFAULT_DIM: usize = 8;
const MIN_ENTRY: f64 = 1e-6;
const COUNTEREXAMPLE_TRIES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Theorem1,
    Theorem2,
    Theorem3,
    Theorem4,
    Lemmas,
    Gradcheck,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Theorem1,
        Suite::Theorem2,
        Suite::Theorem3,
        Suite::Theorem4,
        Suite::Lemmas,
        Suite::Gradcheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Theorem1 => "theorem1",
            Suite::Theorem2 => "theorem2",
            Suite::Theorem3 => "theorem3",
            Suite::Theorem4 => "theorem4",
            Suite::Lemmas => "lemmas",
            Suite::Gradcheck => "gradcheck",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown suite '{s}'")))
    }
}

/// One checked instance. `value` is a residual for identities, the
/// divergence drop for monotonicity checks, and a relative error for
/// gradient checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRecord {
    pub theorem: String,
    pub f_name: String,
    pub dim: usize,
    pub seed: u64,
    #[serde(rename = "residual_or_delta")]
    pub value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub suite: Suite,
    pub records: Vec<VerifyRecord>,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &VerifyRecord> {
        self.records.iter().filter(|r| !r.pass)
    }

    /// The record closest to (or furthest past) its threshold: the largest
    /// residual or error, or the smallest decrease.
    pub fn worst(&self) -> Option<&VerifyRecord> {
        let key = |r: &VerifyRecord| match self.suite {
            Suite::Theorem2 | Suite::Theorem4 if r.theorem.ends_with("counterexample") => f64::NEG_INFINITY,
            Suite::Theorem2 | Suite::Theorem4 => -r.value,
            _ => r.value,
        };
        self.records
            .iter()
            .max_by(|a, b| (!a.pass).cmp(&!b.pass).then(key(a).total_cmp(&key(b))))
    }
}

fn record(theorem: &str, f_name: &str, dim: usize, seed: u64, value: f64, pass: bool) -> VerifyRecord {
    VerifyRecord {
        theorem: theorem.into(),
        f_name: f_name.into(),
        dim,
        seed,
        value,
        pass,
    }
}

/// Runs `trials` instances of `suite`. Instance `i` uses seed `seed + i`,
/// so any failing instance can be rerun alone with `trials = 1`.
pub fn run_suite(suite: Suite, trials: usize, seed: u64, dim: usize) -> Result<SuiteOutcome> {
    if trials < 1 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    if dim < 2 {
        return Err(Error::InvalidArgument("dimension must be >= 2".into()));
    }
    let mut records = Vec::new();
    for i in 0..trials as u64 {
        let s = seed.wrapping_add(i);
        let mut rng = rng_for(s, suite.name());
        match suite {
            Suite::Theorem1 => theorem1(&mut records, dim, s, &mut rng)?,
            Suite::Theorem3 => theorem3(&mut records, dim, s, &mut rng)?,
            Suite::Theorem2 => monotone(&mut records, "theorem2", &[FGenerator::js()], dim, s, &mut rng)?,
            Suite::Theorem4 => monotone(&mut records, "theorem4", &FGenerator::builtins(), dim, s, &mut rng)?,
            Suite::Lemmas => lemmas(&mut records, dim, s, &mut rng)?,
            Suite::Gradcheck => gradcheck(&mut records, s, &mut rng)?,
        }
    }
    if matches!(suite, Suite::Theorem2 | Suite::Theorem4) {
        let gens = if suite == Suite::Theorem2 { vec![FGenerator::js()] } else { FGenerator::builtins() };
        let theorem = format!("{}-counterexample", suite.name());
        for f in gens {
            let mut rng = rng_for(seed, &theorem);
            let found = find_counterexample(&f, dim, COUNTEREXAMPLE_TRIES, &mut rng)?;
            let delta = found.as_ref().map_or(f64::NAN, |(_, c)| c.delta);
            records.push(record(&theorem, f.name(), dim, seed, delta, found.is_some()));
        }
    }
    Ok(SuiteOutcome { suite, records })
}

fn theorem1(out: &mut Vec<VerifyRecord>, dim: usize, seed: u64, rng: &mut Rng) -> Result<()> {
    let t = FiniteTriple::random(dim, MIN_ENTRY, rng);
    let r = verify_theorem1(&t)?;
    out.push(record("theorem1", "js", dim, seed, r.residual, r.residual < IDENTITY_TOL));
    Ok(())
}

fn theorem3(out: &mut Vec<VerifyRecord>, dim: usize, seed: u64, rng: &mut Rng) -> Result<()> {
    for f in FGenerator::builtins() {
        let t = FiniteTriple::random(dim, MIN_ENTRY, rng);
        let r = verify_theorem3(&f, &t)?;
        out.push(record("theorem3", f.name(), dim, seed, r, r < IDENTITY_TOL));
    }
    Ok(())
}

fn monotone(out: &mut Vec<VerifyRecord>, name: &str, gens: &[FGenerator], dim: usize, seed: u64, rng: &mut Rng) -> Result<()> {
    let t = random_sandwich(dim, MIN_ENTRY, rng);
    for f in gens {
        let c = verify_monotone_decrease(f, &t)?;
        out.push(record(name, f.name(), dim, seed, c.delta, c.hypothesis_held && c.delta > DECREASE_MARGIN));
    }
    Ok(())
}

fn lemmas(out: &mut Vec<VerifyRecord>, dim: usize, seed: u64, rng: &mut Rng) -> Result<()> {
    let x = 10f64.powf(rng.random_range(-2.0..2.0));
    for f in [FGenerator::js(), FGenerator::kl()] {
        let r = fenchel_identity_residual(&f, x)?;
        out.push(record("fenchel", f.name(), 1, seed, r, r < IDENTITY_TOL));
    }
    let js = FGenerator::js();
    let y = 10f64.powf(rng.random_range(-2.0..2.0));
    let r = bregman_inverse_symmetry_residual(&js, x, y)?;
    out.push(record("inverse-symmetry", "js", 1, seed, r, r < IDENTITY_TOL));

    let p = random_simplex(dim, MIN_ENTRY, rng);
    let q = random_simplex(dim, MIN_ENTRY, rng);
    let ratio: Vec<f64> = (0..dim).map(|_| 10f64.powf(rng.random_range(-1.0..1.0))).collect();
    let r = bregman_expectation_symmetry_residual(&js, &p, &q, &ratio)?;
    out.push(record("inverse-symmetry-expectation", "js", dim, seed, r, r < IDENTITY_TOL));

    let h = 1e-5;
    for f in FGenerator::builtins() {
        let g = f.normalized();
        let d = (f_divergence(&f, &p, &q)? - f_divergence(&g, &p, &q)?).abs();
        out.push(record("normalized-divergence", f.name(), dim, seed, d, d < NORMALIZED_TOL));
        let slope = ((g.f(1.0 + h) - g.f(1.0 - h)) / (2.0 * h)).abs();
        out.push(record("normalized-derivative", f.name(), 1, seed, slope, slope < DERIVATIVE_TOL));
    }
    Ok(())
}

fn gradcheck(out: &mut Vec<VerifyRecord>, seed: u64, rng: &mut Rng) -> Result<()> {
    for c in op_cases(seed)? {
        let err = c.check(rng)?;
        out.push(record("gradcheck", c.name, c.params.num_scalars(), seed, err, err < c.tolerance()));
    }
    Ok(())
}
