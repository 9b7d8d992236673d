use std::collections::BTreeMap;

use rand::{Rng, RngCore};

use super::{sample_categorical, tempered_probs, ExplicitModel};
use crate::corpus::START;
use crate::error::{Error, Result};
use crate::tensor::{Array, Graph, ParamSet, Var};

const EMBEDDING: usize = 0;
const CELL_WEIGHT: usize = 1;
const CELL_BIAS: usize = 2;
const PROJECTION: usize = 3;

const PARAM_NAMES: [&str; 4] = ["embedding", "cell.weight", "cell.bias", "projection"];

pub const INIT_SCALE: f64 = 0.08;

/// Autoregressive language model: token embedding, a single gated
/// recurrent cell (LSTM-style, gate order input/forget/candidate/output),
/// and a bias-free output projection, so
/// `q(xᵢ | x₁..xᵢ₋₁) = softmax(hᵢ · V)` with `hᵢ = cell(hᵢ₋₁, e(xᵢ₋₁))`
/// and `x₀` the start token.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentLM {
    vocab: usize,
    d_emb: usize,
    d_h: usize,
    params: ParamSet,
}

/// Tape handles for one forward pass.
#[derive(Debug, Clone, Copy)]
struct Bound {
    embedding: Var,
    weight: Var,
    bias: Var,
    projection: Var,
}

impl Bound {
    fn new(vars: &[Var]) -> Self {
        Self {
            embedding: vars[EMBEDDING],
            weight: vars[CELL_WEIGHT],
            bias: vars[CELL_BIAS],
            projection: vars[PROJECTION],
        }
    }
}

impl RecurrentLM {
    /// Uniform(−0.08, 0.08) weights, zero biases except the forget gate at +1.
    pub fn new(vocab: usize, d_emb: usize, d_h: usize, rng: &mut impl Rng) -> Result<Self> {
        if vocab < 1 || d_emb < 1 || d_h < 1 {
            return Err(Error::InvalidArgument("model dimensions must be >= 1".into()));
        }
        let mut uniform = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-INIT_SCALE..INIT_SCALE)).collect()
        };
        let mut params = ParamSet::new();
        params.push(PARAM_NAMES[0], Array::matrix(vocab, d_emb, uniform(vocab * d_emb))?);
        params.push(
            PARAM_NAMES[1],
            Array::matrix(d_emb + d_h, 4 * d_h, uniform((d_emb + d_h) * 4 * d_h))?,
        );
        let mut bias = vec![0.0; 4 * d_h];
        bias[d_h..2 * d_h].iter_mut().for_each(|b| *b = 1.0);
        params.push(PARAM_NAMES[2], Array::vector(bias)?);
        params.push(PARAM_NAMES[3], Array::matrix(d_h, vocab, uniform(d_h * vocab))?);
        Ok(Self {
            vocab,
            d_emb,
            d_h,
            params,
        })
    }

    pub fn from_params(params: ParamSet) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint(msg);
        if params.len() != 4 {
            return Err(bad(format!("expected 4 parameters, found {}", params.len())));
        }
        for (i, want) in PARAM_NAMES.iter().enumerate() {
            if params.name(i) != *want {
                return Err(bad(format!("parameter {i} is '{}', expected '{want}'", params.name(i))));
            }
        }
        let e = params.get(EMBEDDING).shape().to_vec();
        let w = params.get(CELL_WEIGHT).shape().to_vec();
        let b = params.get(CELL_BIAS).shape().to_vec();
        let v = params.get(PROJECTION).shape().to_vec();
        if e.len() != 2 || w.len() != 2 || b.len() != 1 || v.len() != 2 {
            return Err(bad("unexpected parameter ranks".into()));
        }
        let (vocab, d_emb, d_h) = (e[0], e[1], v[0]);
        if w != [d_emb + d_h, 4 * d_h] || b != [4 * d_h] || v != [d_h, vocab] || vocab == 0 || d_h == 0 {
            return Err(bad(format!(
                "inconsistent shapes: embedding {e:?}, cell.weight {w:?}, cell.bias {b:?}, projection {v:?}"
            )));
        }
        Ok(Self {
            vocab,
            d_emb,
            d_h,
            params,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab
    }

    pub fn d_emb(&self) -> usize {
        self.d_emb
    }

    pub fn d_h(&self) -> usize {
        self.d_h
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Projection scaled by `1 / temperature`. Logits are linear in the
    /// projection, so each step distribution becomes the tempered one.
    pub fn tempered(&self, temperature: f64) -> Result<Self> {
        super::check_temperature(temperature)?;
        let mut out = self.clone();
        let p = out.params.get_mut(PROJECTION);
        *p = p.map(|v| v / temperature);
        Ok(out)
    }

    /// Zeroes the output projection, making every step distribution uniform.
    pub fn zero_projection(&mut self) {
        let p = self.params.get_mut(PROJECTION);
        *p = Array::zeros(p.shape());
    }

    fn check_ids(&self, ids: &[usize]) -> Result<()> {
        match ids.iter().find(|&&i| i >= self.vocab) {
            Some(&id) => Err(Error::IdOutOfRange { id, size: self.vocab }),
            None => Ok(()),
        }
    }

    fn initial_state(&self, g: &mut Graph, rows: usize) -> (Var, Var) {
        let h = g.constant(Array::zeros(&[rows, self.d_h]));
        let c = g.constant(Array::zeros(&[rows, self.d_h]));
        (h, c)
    }

    fn cell(&self, g: &mut Graph, b: Bound, h: Var, c: Var, ids: &[usize]) -> Result<(Var, Var)> {
        let d = self.d_h;
        let x = g.embedding(b.embedding, ids)?;
        let xh = g.concat(&[x, h], 1)?;
        let z = g.matmul(xh, b.weight)?;
        let z = g.add(z, b.bias)?;
        let i = g.slice_cols(z, 0, d)?;
        let f = g.slice_cols(z, d, 2 * d)?;
        let cand = g.slice_cols(z, 2 * d, 3 * d)?;
        let o = g.slice_cols(z, 3 * d, 4 * d)?;
        let i = g.sigmoid(i);
        let f = g.sigmoid(f);
        let cand = g.tanh(cand);
        let o = g.sigmoid(o);
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        let c_next = g.add(keep, write)?;
        let tc = g.tanh(c_next);
        let h_next = g.mul(o, tc)?;
        Ok((h_next, c_next))
    }

    /// Runs the start token and the given prefixes (all of equal length)
    /// and returns the state from which the next token is predicted.
    fn run_prefix(&self, g: &mut Graph, b: Bound, prefixes: &[&[usize]]) -> Result<(Var, Var)> {
        let rows = prefixes.len();
        let (mut h, mut c) = self.initial_state(g, rows);
        let k = prefixes.first().map_or(0, |p| p.len());
        let start = vec![START; rows];
        (h, c) = self.cell(g, b, h, c, &start)?;
        for t in 0..k {
            let ids: Vec<usize> = prefixes.iter().map(|p| p[t]).collect();
            (h, c) = self.cell(g, b, h, c, &ids)?;
        }
        Ok((h, c))
    }

    /// Per-example `log q(target | prefix)` for a group sharing prefix and
    /// target lengths. Output shape `[rows]`.
    fn score_group(&self, g: &mut Graph, b: Bound, prefixes: &[&[usize]], targets: &[&[usize]]) -> Result<Var> {
        let l = targets[0].len();
        let (mut h, mut c) = self.run_prefix(g, b, prefixes)?;
        let mut total: Option<Var> = None;
        for t in 0..l {
            let ids: Vec<usize> = targets.iter().map(|x| x[t]).collect();
            let logits = g.matmul(h, b.projection)?;
            let lp = g.log_softmax(logits);
            let picked = g.gather(lp, &ids)?;
            total = Some(match total {
                Some(acc) => g.add(acc, picked)?,
                None => picked,
            });
            if t + 1 < l {
                (h, c) = self.cell(g, b, h, c, &ids)?;
            }
        }
        Ok(total.expect("target length >= 1"))
    }

    /// Conditional log-probabilities of each `(prefix, target)` pair.
    ///
    /// Pairs are grouped by `(prefix length, target length)` and batched; the
    /// returned vector follows the order in the second return value, which
    /// lists original indices. The ordering depends only on the lengths, so
    /// two calls on aligned inputs produce aligned outputs.
    pub fn score_batch(
        &self,
        g: &mut Graph,
        vars: &[Var],
        pairs: &[(&[usize], &[usize])],
    ) -> Result<(Var, Vec<usize>)> {
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let b = Bound::new(vars);
        let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (i, (c, x)) in pairs.iter().enumerate() {
            if x.is_empty() {
                return Err(Error::InvalidArgument("empty target sequence".into()));
            }
            self.check_ids(c)?;
            self.check_ids(x)?;
            groups.entry((c.len(), x.len())).or_default().push(i);
        }
        let mut parts = Vec::with_capacity(groups.len());
        let mut order = Vec::with_capacity(pairs.len());
        for idx in groups.values() {
            let prefixes: Vec<&[usize]> = idx.iter().map(|&i| pairs[i].0).collect();
            let targets: Vec<&[usize]> = idx.iter().map(|&i| pairs[i].1).collect();
            parts.push(self.score_group(g, b, &prefixes, &targets)?);
            order.extend_from_slice(idx);
        }
        let out = if parts.len() == 1 { parts[0] } else { g.concat(&parts, 0)? };
        Ok((out, order))
    }

    /// Values of [`Self::score_batch`] in the original input order.
    pub fn score_values(&self, pairs: &[(&[usize], &[usize])]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let vars = self.params.bind_frozen(&mut g);
        let (v, order) = self.score_batch(&mut g, &vars, pairs)?;
        let mut out = vec![0.0; pairs.len()];
        for (pos, &i) in order.iter().enumerate() {
            out[i] = g.value(v).data()[pos];
        }
        Ok(out)
    }

    /// `log q(x | c)`: sum of per-token log-probabilities of `x` after the
    /// start token and prefix `c`.
    pub fn seq_logprob(&self, x: &[usize], c: &[usize]) -> Result<f64> {
        Ok(self.score_values(&[(c, x)])?[0])
    }

    /// Next-token distribution after the start token and `prefix`.
    pub fn next_token_probs(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        self.check_ids(prefix)?;
        let mut g = Graph::new();
        let vars = self.params.bind_frozen(&mut g);
        let b = Bound::new(&vars);
        let (h, _) = self.run_prefix(&mut g, b, &[prefix])?;
        let logits = g.matmul(h, b.projection)?;
        let lp = g.log_softmax(logits);
        Ok(g.value(lp).data().iter().map(|v| v.exp()).collect())
    }

    /// Autoregressive rollout of exactly `l` tokens after `c`, each drawn
    /// from `softmax(logits / temperature)`. The prefix is not included.
    pub fn seq_sample(&self, c: &[usize], l: usize, temperature: f64, rng: &mut (impl Rng + ?Sized)) -> Result<Vec<usize>> {
        let mut out = self.sample_continuations(&[c.to_vec()], l, temperature, rng)?;
        Ok(out.pop().expect("one row"))
    }

    /// Batched [`Self::seq_sample`]; prefixes may differ in length. Draws
    /// are made row by row in input order at each step within a length
    /// group, so results are deterministic for a given rng state.
    pub fn sample_continuations(
        &self,
        prefixes: &[Vec<usize>],
        l: usize,
        temperature: f64,
        rng: &mut (impl Rng + ?Sized),
    ) -> Result<Vec<Vec<usize>>> {
        if !(temperature > 0.0) {
            return Err(Error::InvalidArgument(format!("temperature must be > 0, got {temperature}")));
        }
        if l < 1 {
            return Err(Error::InvalidArgument("sample length must be >= 1".into()));
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, p) in prefixes.iter().enumerate() {
            self.check_ids(p)?;
            groups.entry(p.len()).or_default().push(i);
        }
        let mut out = vec![Vec::with_capacity(l); prefixes.len()];
        for idx in groups.values() {
            let mut g = Graph::new();
            let vars = self.params.bind_frozen(&mut g);
            let b = Bound::new(&vars);
            let refs: Vec<&[usize]> = idx.iter().map(|&i| prefixes[i].as_slice()).collect();
            let (mut h, mut c) = self.run_prefix(&mut g, b, &refs)?;
            for t in 0..l {
                let logits = g.matmul(h, b.projection)?;
                let vals = g.value(logits);
                let mut ids = Vec::with_capacity(idx.len());
                for (r, &i) in idx.iter().enumerate() {
                    let p = tempered_probs(vals.row(r), temperature)?;
                    let tok = sample_categorical(&p, rng);
                    out[i].push(tok);
                    ids.push(tok);
                }
                if t + 1 < l {
                    (h, c) = self.cell(&mut g, b, h, c, &ids)?;
                }
            }
        }
        Ok(out)
    }
}

/// A recurrent model restricted to sequences of one fixed length, which
/// makes its support a finite domain.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedLengthLM {
    pub model: RecurrentLM,
    pub len: usize,
}

impl FixedLengthLM {
    /// Every sequence of the fixed length over the full vocabulary, in
    /// lexicographic order.
    pub fn domain(&self) -> Vec<Vec<usize>> {
        crate::corpus::all_sequences(self.model.vocab_size(), self.len)
    }
}

impl ExplicitModel for FixedLengthLM {
    type Sample = Vec<usize>;

    fn params(&self) -> &ParamSet {
        &self.model.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.model.params
    }

    fn logprob_graph(&self, g: &mut Graph, vars: &[Var], xs: &[Vec<usize>]) -> Result<Var> {
        if xs.iter().any(|x| x.len() != self.len) {
            return Err(Error::InvalidArgument(format!("samples must have length {}", self.len)));
        }
        let pairs: Vec<(&[usize], &[usize])> = xs.iter().map(|x| (&[][..], x.as_slice())).collect();
        // Equal lengths form a single group, so the order is the identity.
        let (v, _) = self.model.score_batch(g, vars, &pairs)?;
        Ok(v)
    }

    fn tempered(&self, temperature: f64) -> Result<Self> {
        Ok(Self {
            model: self.model.tempered(temperature)?,
            len: self.len,
        })
    }

    fn sample_batch(&self, n: usize, temperature: f64, rng: &mut dyn RngCore) -> Result<Vec<Vec<usize>>> {
        let prefixes = vec![Vec::new(); n];
        self.model.sample_continuations(&prefixes, self.len, temperature, rng)
    }

    fn domain_probs(&self) -> Option<Vec<f64>> {
        let domain = self.domain();
        if domain.len() > 100_000 {
            return None;
        }
        let pairs: Vec<(&[usize], &[usize])> = domain.iter().map(|x| (&[][..], x.as_slice())).collect();
        let lp = self.model.score_values(&pairs).ok()?;
        Some(lp.into_iter().map(f64::exp).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::all_sequences;
    use crate::rng::rng_for;
    use proptest::prelude::*;

    fn model(vocab: usize, seed: u64) -> RecurrentLM {
        RecurrentLM::new(vocab, 5, 4, &mut rng_for(seed, "model")).unwrap()
    }

    #[test]
    fn zero_projection_is_uniform() {
        let mut m = model(7, 0);
        m.zero_projection();
        let x = [4, 5, 6, 4];
        let lp = m.seq_logprob(&x, &[5]).unwrap();
        assert!((lp - 4.0 * (1.0f64 / 7.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn enumeration_sums_to_one() {
        let m = model(3, 1);
        let total: f64 = all_sequences(3, 2)
            .iter()
            .map(|x| m.seq_logprob(x, &[]).unwrap().exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-10, "{total}");
    }

    #[test]
    fn errors() {
        let m = model(5, 2);
        assert!(m.seq_logprob(&[], &[1]).is_err());
        assert!(matches!(m.seq_logprob(&[9], &[]), Err(Error::IdOutOfRange { .. })));
        assert!(m.seq_sample(&[], 2, 0.0, &mut rng_for(0, "s")).is_err());
        assert!(m.seq_sample(&[], 0, 1.0, &mut rng_for(0, "s")).is_err());
    }

    #[test]
    fn batch_scores_match_single() {
        let m = model(6, 3);
        let pairs: Vec<(Vec<usize>, Vec<usize>)> = vec![
            (vec![], vec![4, 5]),
            (vec![4], vec![5]),
            (vec![], vec![5, 5]),
            (vec![4, 4], vec![2, 3, 1]),
        ];
        let refs: Vec<(&[usize], &[usize])> = pairs.iter().map(|(c, x)| (c.as_slice(), x.as_slice())).collect();
        let batch = m.score_values(&refs).unwrap();
        for ((c, x), b) in pairs.iter().zip(batch) {
            let single = m.seq_logprob(x, c).unwrap();
            assert_eq!(single.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn forced_deterministic() {
        let mut m = model(2, 4);
        m.zero_projection();
        // With h bounded by 1 in magnitude, a projection column of 100
        // dominates as long as h stays positive; drive it through the bias.
        let d = m.d_h();
        let bias = m.params.get_mut(CELL_BIAS).data_mut();
        for j in 0..d {
            bias[j] = 20.0; // input gate open
            bias[2 * d + j] = 20.0; // candidate → +1
            bias[3 * d + j] = 20.0; // output gate open
        }
        let proj = m.params.get_mut(PROJECTION).data_mut();
        for r in 0..d {
            proj[r * 2 + 1] = 50.0;
        }
        let mut rng = rng_for(9, "s");
        for _ in 0..20 {
            assert_eq!(m.seq_sample(&[0], 6, 1.0, &mut rng).unwrap(), vec![1; 6]);
        }
    }

    #[test]
    fn sampling_matches_marginals() {
        let m = model(3, 5);
        let probs = m.next_token_probs(&[]).unwrap();
        let mut rng = rng_for(6, "s");
        let n = 100_000;
        let mut counts = [0usize; 3];
        let samples = m.sample_continuations(&vec![vec![]; n], 1, 1.0, &mut rng).unwrap();
        for s in samples {
            counts[s[0]] += 1;
        }
        for (c, p) in counts.iter().zip(&probs) {
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - n as f64 * p).abs() < 4.0 * sigma, "{counts:?} vs {probs:?}");
        }
    }

    #[test]
    fn temperature_flattens() {
        let mut m = model(3, 7);
        m.zero_projection();
        let d = m.d_h();
        let bias = m.params.get_mut(CELL_BIAS).data_mut();
        for j in 0..d {
            bias[j] = 20.0;
            bias[2 * d + j] = 20.0;
            bias[3 * d + j] = 20.0;
        }
        // h ≈ tanh(1) in every unit, so token 0's logit is ≈ 0.76 · 4 · 0.5
        let proj = m.params.get_mut(PROJECTION).data_mut();
        for r in 0..d {
            proj[r * 3] = 0.5;
        }
        let n = 20_000;
        let top = |t: f64| {
            let mut rng = rng_for(8, "s");
            let s = m.sample_continuations(&vec![vec![]; n], 1, t, &mut rng).unwrap();
            let mut counts = [0usize; 3];
            for x in s {
                counts[x[0]] += 1;
            }
            *counts.iter().max().unwrap()
        };
        assert!(top(2.0) < top(1.0));
    }

    #[test]
    fn tempered_model_matches_tempered_steps() {
        let m = model(6, 11);
        let t = 2.5;
        let hot = m.tempered(t).unwrap();
        for prefix in [&[][..], &[4, 5][..]] {
            let p = m.next_token_probs(prefix).unwrap();
            let w: Vec<f64> = p.iter().map(|x| x.powf(1.0 / t)).collect();
            let z: f64 = w.iter().sum();
            for (a, b) in hot.next_token_probs(prefix).unwrap().iter().zip(&w) {
                assert!((a - b / z).abs() < 1e-12);
            }
        }
        assert!(m.tempered(0.0).is_err());
    }

    #[test]
    fn from_params_checks_shapes() {
        let m = model(5, 1);
        assert_eq!(RecurrentLM::from_params(m.params().clone()).unwrap(), m);
        let mut ps = ParamSet::new();
        ps.push("embedding", Array::zeros(&[5, 2]));
        assert!(RecurrentLM::from_params(ps).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn chain_rule(seed in 0u64..500, c in proptest::collection::vec(0usize..6, 0..3),
                      x in proptest::collection::vec(0usize..6, 1..3),
                      y in proptest::collection::vec(0usize..6, 1..3)) {
            let m = model(6, seed);
            let cx: Vec<usize> = c.iter().chain(&x).copied().collect();
            let xy: Vec<usize> = x.iter().chain(&y).copied().collect();
            let lhs = m.seq_logprob(&x, &c).unwrap() + m.seq_logprob(&y, &cx).unwrap();
            let rhs = m.seq_logprob(&xy, &c).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }

        #[test]
        fn step_distributions_normalized(seed in 0u64..500, prefix in proptest::collection::vec(0usize..8, 0..5)) {
            let mut rng = rng_for(seed, "p");
            let mut m = RecurrentLM::new(8, 4, 3, &mut rng).unwrap();
            // spread weights well beyond init to exercise larger logits
            for id in 0..m.params().len() {
                for v in m.params_mut().get_mut(id).data_mut() {
                    *v *= 25.0;
                }
            }
            let p = m.next_token_probs(&prefix).unwrap();
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }
}
