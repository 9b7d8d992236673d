//! Finite-difference cases for every differentiable operation and for the
//! complete training loss.

use rand::Rng as _;

use crate::dgsan::dgsan_loss_graph;
use crate::error::Result;
use crate::models::{ExplicitModel, RecurrentLM, TabularDistribution};
use crate::rng::{rng_for, Rng};
use crate::tensor::{grad_check, Array, Graph, ParamSet, Var};

/// Bound for elementwise scalar functions.
pub const SMOOTH_TOL: f64 = 1e-6;
/// Bound for everything else, including composite graphs.
pub const GRAPH_TOL: f64 = 1e-4;
const EPS: f64 = 1e-5;

type Build = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;

pub struct OpCase {
    pub name: &'static str,
    pub smooth: bool,
    pub params: ParamSet,
    build: Build,
}

impl OpCase {
    pub fn tolerance(&self) -> f64 {
        if self.smooth {
            SMOOTH_TOL
        } else {
            GRAPH_TOL
        }
    }

    /// Worst relative error of the weighted sum `Σ wᵢ·outᵢ`, with fixed
    /// random weights so no output entry cancels another.
    pub fn check(&self, rng: &mut Rng) -> Result<f64> {
        let mut g = Graph::new();
        let vars = self.params.bind(&mut g);
        let out = (self.build)(&mut g, &vars)?;
        let shape = g.value(out).shape().to_vec();
        let w = uniform(&shape, 0.5, 1.5, rng);
        grad_check(
            |g, v| {
                let o = (self.build)(g, v)?;
                let c = g.constant(w.clone());
                let m = g.mul(o, c)?;
                Ok(g.sum(m))
            },
            &self.params,
            EPS,
        )
    }
}

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Array {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Array::new(shape.to_vec(), data).expect("finite draws")
}

fn params(items: &[(&str, Array)]) -> ParamSet {
    let mut ps = ParamSet::new();
    for (n, a) in items {
        ps.push(*n, a.clone());
    }
    ps
}

fn case(name: &'static str, smooth: bool, params: ParamSet, build: impl Fn(&mut Graph, &[Var]) -> Result<Var> + 'static) -> OpCase {
    OpCase {
        name,
        smooth,
        params,
        build: Box::new(build),
    }
}

/// Small recurrent model with all entries uniform in ±1. At the usual
/// ±0.08 initialization many gradients are near 1e-9, below what central
/// differences resolve.
fn generic_lm(r: &mut Rng) -> Result<RecurrentLM> {
    let base = RecurrentLM::new(6, 3, 4, r)?;
    let mut ps = ParamSet::new();
    for (name, a) in base.params().iter() {
        ps.push(name, uniform(a.shape(), -1.0, 1.0, r));
    }
    RecurrentLM::from_params(ps)
}

/// All cases, with parameters drawn from `seed`.
pub fn op_cases(seed: u64) -> Result<Vec<OpCase>> {
    let mut rng = rng_for(seed, "verify.gradcheck");
    let r = &mut rng;
    let m34 = |r: &mut Rng| uniform(&[3, 4], -1.0, 1.0, r);
    let mut out = vec![
        case("tanh", true, params(&[("x", m34(r))]), |g, v| Ok(g.tanh(v[0]))),
        case("sigmoid", true, params(&[("x", m34(r))]), |g, v| Ok(g.sigmoid(v[0]))),
        case("softplus", true, params(&[("x", uniform(&[3, 4], -3.0, 3.0, r))]), |g, v| Ok(g.softplus(v[0]))),
        case("scale", true, params(&[("x", m34(r))]), |g, v| Ok(g.scale(v[0], -1.7))),
        case("add", true, params(&[("a", m34(r)), ("b", m34(r))]), |g, v| g.add(v[0], v[1])),
        case("sub", true, params(&[("a", m34(r)), ("b", m34(r))]), |g, v| g.sub(v[0], v[1])),
        case("mul", true, params(&[("a", m34(r)), ("b", m34(r))]), |g, v| g.mul(v[0], v[1])),
        case(
            "add-row",
            false,
            params(&[("a", m34(r)), ("b", uniform(&[4], -1.0, 1.0, r))]),
            |g, v| g.add(v[0], v[1]),
        ),
        case(
            "matmul",
            false,
            params(&[("a", m34(r)), ("b", uniform(&[4, 2], -1.0, 1.0, r))]),
            |g, v| g.matmul(v[0], v[1]),
        ),
        case("concat-rows", false, params(&[("a", m34(r)), ("b", uniform(&[2, 4], -1.0, 1.0, r))]), |g, v| {
            g.concat(&[v[0], v[1]], 0)
        }),
        case("concat-cols", false, params(&[("a", m34(r)), ("b", uniform(&[3, 2], -1.0, 1.0, r))]), |g, v| {
            g.concat(&[v[0], v[1]], 1)
        }),
        case("slice-cols", false, params(&[("x", m34(r))]), |g, v| g.slice_cols(v[0], 1, 3)),
        case("embedding", false, params(&[("table", uniform(&[4, 3], -1.0, 1.0, r))]), |g, v| {
            g.embedding(v[0], &[2, 0, 2, 3, 1])
        }),
        case("log-softmax", false, params(&[("x", uniform(&[3, 4], -2.0, 2.0, r))]), |g, v| Ok(g.log_softmax(v[0]))),
        case("sum", false, params(&[("x", m34(r))]), |g, v| Ok(g.sum(v[0]))),
        case("mean", false, params(&[("x", m34(r))]), |g, v| g.mean(v[0])),
        case("gather", false, params(&[("x", m34(r))]), |g, v| g.gather(v[0], &[3, 0, 2])),
        case("gather-broadcast", false, params(&[("x", uniform(&[1, 4], -1.0, 1.0, r))]), |g, v| {
            g.gather(v[0], &[1, 1, 3, 0])
        }),
    ];

    let lm = generic_lm(r)?;
    let lm_params = lm.params().clone();
    let pairs: Vec<(Vec<usize>, Vec<usize>)> = vec![
        (vec![], vec![4, 5, 2]),
        (vec![4], vec![3, 3]),
        (vec![5, 1], vec![0]),
        (vec![], vec![1, 2, 3]),
    ];
    let lm_score = lm.clone();
    let score_pairs = pairs.clone();
    out.push(case("recurrent-lm", false, lm_params, move |g, v| {
        let refs: Vec<(&[usize], &[usize])> = score_pairs.iter().map(|(c, x)| (c.as_slice(), x.as_slice())).collect();
        Ok(lm_score.score_batch(g, v, &refs)?.0)
    }));

    let tab = TabularDistribution::random(5, 1.0, r)?;
    let old = TabularDistribution::random(5, 1.0, r)?;
    let (xr, xf) = (vec![0usize, 4, 4, 2, 1], vec![3usize, 3, 0, 2]);
    let (or, of) = (old.logprob_values(&xr)?, old.logprob_values(&xf)?);
    let tab_model = tab.clone();
    out.push(case("dgsan-loss-tabular", false, tab.params().clone(), move |g, v| {
        let nr = tab_model.logprob_graph(g, v, &xr)?;
        let nf = tab_model.logprob_graph(g, v, &xf)?;
        let a = g.constant(Array::vector(or.clone())?);
        let b = g.constant(Array::vector(of.clone())?);
        dgsan_loss_graph(g, nr, a, nf, b)
    }));

    let old_lm = generic_lm(r)?;
    let fakes: Vec<(Vec<usize>, Vec<usize>)> = vec![(vec![], vec![5, 5, 4]), (vec![4], vec![2, 4]), (vec![5, 1], vec![3])];
    let real_refs: Vec<(&[usize], &[usize])> = pairs.iter().map(|(c, x)| (c.as_slice(), x.as_slice())).collect();
    let fake_refs: Vec<(&[usize], &[usize])> = fakes.iter().map(|(c, x)| (c.as_slice(), x.as_slice())).collect();
    let old_real = old_lm.score_values(&real_refs)?;
    let old_fake = old_lm.score_values(&fake_refs)?;
    out.push(case("dgsan-loss-sequence", false, lm.params().clone(), move |g, v| {
        let rr: Vec<(&[usize], &[usize])> = pairs.iter().map(|(c, x)| (c.as_slice(), x.as_slice())).collect();
        let fr: Vec<(&[usize], &[usize])> = fakes.iter().map(|(c, x)| (c.as_slice(), x.as_slice())).collect();
        let (nr, order_r) = lm.score_batch(g, v, &rr)?;
        let (nf, order_f) = lm.score_batch(g, v, &fr)?;
        let a = g.constant(Array::vector(order_r.iter().map(|&i| old_real[i]).collect())?);
        let b = g.constant(Array::vector(order_f.iter().map(|&i| old_fake[i]).collect())?);
        dgsan_loss_graph(g, nr, a, nf, b)
    }));
    Ok(out)
}
