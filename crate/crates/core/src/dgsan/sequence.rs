use super::{dgsan_loss_graph, IterationReport, TrainConfig};
use crate::corpus::{sample_prefix_batch, TokenizedCorpus};
use crate::error::{Error, Result};
use crate::models::{RecurrentLM, Snapshot};
use crate::rng::rng_for;
use crate::tensor::{Adam, Array, Graph};

pub const PHASE: &str = "dgsan-seq";

/// Curriculum training of a recurrent model on `corpus`.
///
/// For `l = 1, 2, …` the model runs `D` outer iterations. Each inner step
/// cuts a batch of real sentences into prefix `c` and `l`-token target,
/// samples fake continuations of the same prefixes from `Q_old`, and takes
/// one optimizer step on the loss with every probability conditioned on
/// `c`. `Q_old` carries over when `l` grows. Training stops once
/// `max_epochs` corpus passes are used up, or when `l` would exceed both
/// the configured `M` and the longest sentence.
pub fn dgsan_sequence(corpus: &TokenizedCorpus, model: RecurrentLM, cfg: &TrainConfig) -> Result<(RecurrentLM, Vec<IterationReport>)> {
    dgsan_sequence_with(corpus, model, cfg, |_, _| Ok(()))
}

/// [`dgsan_sequence`] with a callback after each outer iteration.
pub fn dgsan_sequence_with<O>(
    corpus: &TokenizedCorpus,
    mut model: RecurrentLM,
    cfg: &TrainConfig,
    mut observe: O,
) -> Result<(RecurrentLM, Vec<IterationReport>)>
where
    O: FnMut(&IterationReport, &RecurrentLM) -> Result<()>,
{
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if model.vocab_size() < corpus.vocab().len() {
        return Err(Error::InvalidArgument(format!(
            "model vocabulary {} smaller than corpus vocabulary {}",
            model.vocab_size(),
            corpus.vocab().len()
        )));
    }
    let max_l = cfg.max_len.min(corpus.max_len()).min(corpus.longest());
    let steps_per_epoch = corpus.len().div_ceil(cfg.batch_size);
    let budget = cfg.max_epochs.map(|e| e * steps_per_epoch);

    let mut real_rng = rng_for(cfg.seed, "dgsan.real");
    let mut fake_rng = rng_for(cfg.seed, "dgsan.fake");
    let mut opt = Adam::new(cfg.learning_rate);
    let mut reports = Vec::new();
    let mut step = 0;

    'curriculum: for l in 1..=max_l {
        for outer in 0..cfg.outer_iters {
            if budget.is_some_and(|b| step >= b) {
                break 'curriculum;
            }
            let old = Snapshot::of(&model);
            let scorer = if cfg.old_logprob_temperature == 1.0 {
                (*old).clone()
            } else {
                old.tempered(cfg.old_logprob_temperature)?
            };

            let mut total = 0.0;
            let mut last = 0.0;
            for _ in 0..cfg.inner_epochs {
                let splits = sample_prefix_batch(corpus, l, cfg.batch_size, &mut real_rng)?;
                let prefixes: Vec<Vec<usize>> = splits.iter().map(|s| s.prefix.clone()).collect();
                let fakes = old.sample_continuations(&prefixes, l, cfg.temperature, &mut fake_rng)?;
                let real_pairs: Vec<(&[usize], &[usize])> =
                    splits.iter().map(|s| (s.prefix.as_slice(), s.target.as_slice())).collect();
                let fake_pairs: Vec<(&[usize], &[usize])> = prefixes
                    .iter()
                    .zip(&fakes)
                    .map(|(c, x)| (c.as_slice(), x.as_slice()))
                    .collect();
                let old_real = scorer.score_values(&real_pairs)?;
                let old_fake = scorer.score_values(&fake_pairs)?;

                let mut g = Graph::new();
                let vars = model.params().bind(&mut g);
                let (nr, order_r) = model.score_batch(&mut g, &vars, &real_pairs)?;
                let (nf, order_f) = model.score_batch(&mut g, &vars, &fake_pairs)?;
                let or = g.constant(Array::vector(order_r.iter().map(|&i| old_real[i]).collect())?);
                let of = g.constant(Array::vector(order_f.iter().map(|&i| old_fake[i]).collect())?);
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
            let report = IterationReport {
                phase: PHASE.into(),
                l: Some(l),
                outer_iter: outer,
                step,
                loss: total / cfg.inner_epochs as f64,
                last_loss: last,
                js: None,
                betweenness_fraction: None,
            };
            observe(&report, &model)?;
            reports.push(report);
        }
    }
    Ok((model, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{all_sequences, MarkovOracle};
    use crate::divergences::js_divergence;
    use std::collections::BTreeMap;

    fn oracle_corpus(seed: u64, count: usize) -> (MarkovOracle, TokenizedCorpus) {
        let o = MarkovOracle::random(3, 2, 2.0, true, &mut rng_for(seed, "oracle")).unwrap();
        let c = o.sample_corpus(count, &mut rng_for(seed, "corpus")).unwrap();
        (o, c)
    }

    /// Exact JS over every length-2 sequence of the full vocabulary.
    fn exact_js(o: &MarkovOracle, m: &RecurrentLM) -> f64 {
        let mut p_of: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for (seq, p) in o.enumerate() {
            p_of.insert(MarkovOracle::to_vocab_ids(&seq), p);
        }
        let domain = all_sequences(m.vocab_size(), 2);
        let p: Vec<f64> = domain.iter().map(|x| p_of.get(x).copied().unwrap_or(0.0)).collect();
        let q: Vec<f64> = domain.iter().map(|x| m.seq_logprob(x, &[]).unwrap().exp()).collect();
        js_divergence(&p, &q)
    }

    #[test]
    fn one_report_per_length_and_iteration() {
        let (_, corpus) = oracle_corpus(0, 50);
        let m = RecurrentLM::new(corpus.vocab().len(), 4, 4, &mut rng_for(0, "m")).unwrap();
        let cfg = TrainConfig {
            inner_epochs: 3,
            batch_size: 8,
            max_len: 2,
            ..TrainConfig::sequence()
        };
        let (_, reports) = dgsan_sequence(&corpus, m, &cfg).unwrap();
        let keys: Vec<(usize, usize)> = reports.iter().map(|r| (r.l.unwrap(), r.outer_iter)).collect();
        let want: Vec<(usize, usize)> = (1..=2).flat_map(|l| (0..5).map(move |d| (l, d))).collect();
        assert_eq!(keys, want);
        assert!(reports.iter().all(|r| r.loss.is_finite()));
    }

    #[test]
    fn epoch_budget_stops_training() {
        let (_, corpus) = oracle_corpus(0, 32);
        let m = RecurrentLM::new(corpus.vocab().len(), 4, 4, &mut rng_for(0, "m")).unwrap();
        let cfg = TrainConfig {
            inner_epochs: 4,
            batch_size: 8,
            max_epochs: Some(2),
            ..TrainConfig::sequence()
        };
        // 2 epochs = 8 steps = 2 outer iterations
        let (_, reports) = dgsan_sequence(&corpus, m, &cfg).unwrap();
        assert_eq!(reports.len(), 2);
    }

    #[test]
    fn js_decreases_on_oracle() {
        let (o, corpus) = oracle_corpus(3, 2000);
        let m = RecurrentLM::new(corpus.vocab().len(), 8, 8, &mut rng_for(3, "m")).unwrap();
        let before = exact_js(&o, &m);
        let cfg = TrainConfig {
            batch_size: 64,
            inner_epochs: 60,
            learning_rate: 0.01,
            temperature: 1.0,
            max_len: 2,
            seed: 3,
            ..TrainConfig::sequence()
        };
        let (m, _) = dgsan_sequence(&corpus, m, &cfg).unwrap();
        let after = exact_js(&o, &m);
        assert!(after < before, "{before} -> {after}");
    }

    #[test]
    fn deterministic() {
        let (_, corpus) = oracle_corpus(1, 40);
        let run = || {
            let m = RecurrentLM::new(corpus.vocab().len(), 4, 4, &mut rng_for(1, "m")).unwrap();
            let cfg = TrainConfig {
                inner_epochs: 2,
                batch_size: 4,
                outer_iters: 2,
                seed: 5,
                ..TrainConfig::sequence()
            };
            dgsan_sequence(&corpus, m, &cfg).unwrap()
        };
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&ra).unwrap(), serde_json::to_string(&rb).unwrap());
    }

    #[test]
    fn rejects_small_model() {
        let (_, corpus) = oracle_corpus(0, 10);
        let m = RecurrentLM::new(2, 4, 4, &mut rng_for(0, "m")).unwrap();
        assert!(dgsan_sequence(&corpus, m, &TrainConfig::sequence()).is_err());
    }
}
