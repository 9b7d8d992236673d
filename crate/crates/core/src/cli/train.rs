use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde_json::json;

use super::config::{pick, FileConfig};
use super::manifest::{git_sha256, unix_now, CorpusHash, RunManifest};
use super::{Mode, TrainArgs, DEFAULT_OUT};
use crate::corpus::{load_corpus, TokenizedCorpus};
use crate::dgsan::{dgsan_general_with, dgsan_sequence_with, IterationReport, TrainConfig};
use crate::divergences::random_simplex;
use crate::error::{Error, Result};
use crate::models::{mle_step, sample_categorical, write_checkpoint, RecurrentLM, TabularDistribution};
use crate::rng::rng_for;
use crate::tensor::{Adam, ParamSet};

pub const DEFAULT_DOMAIN_SIZE: usize = 16;
pub const DEFAULT_D_EMB: usize = 128;
pub const DEFAULT_D_H: usize = 64;
pub const DEFAULT_MLE_EPOCHS: usize = 10;
const TARGET_MIN_ENTRY: f64 = 1e-6;

/// Streams reports to `reports.jsonl` and saves a checkpoint after every
/// `every` outer iterations.
struct RunWriter {
    out: PathBuf,
    reports: BufWriter<File>,
    reports_path: PathBuf,
    every: usize,
    checkpoints: Vec<PathBuf>,
}

impl RunWriter {
    fn new(out: &Path, every: usize) -> Result<Self> {
        let ckpt = out.join("checkpoints");
        std::fs::create_dir_all(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
        let reports_path = out.join("reports.jsonl");
        let f = File::create(&reports_path).map_err(|e| Error::io(&reports_path, e))?;
        Ok(Self {
            out: out.to_path_buf(),
            reports: BufWriter::new(f),
            reports_path,
            every,
            checkpoints: Vec::new(),
        })
    }

    fn observe(&mut self, r: &IterationReport, params: &ParamSet) -> Result<()> {
        let line = serde_json::to_string(r).expect("report serializes");
        writeln!(self.reports, "{line}")
            .and_then(|_| self.reports.flush())
            .map_err(|e| Error::io(&self.reports_path, e))?;
        if (r.outer_iter + 1).is_multiple_of(self.every) {
            let rel = PathBuf::from("checkpoints").join(format!("ckpt-{:04}.dgsn", self.checkpoints.len()));
            write_checkpoint(params, &self.out.join(&rel))?;
            self.checkpoints.push(rel);
        }
        Ok(())
    }
}

pub fn train(a: &TrainArgs, file: &FileConfig) -> Result<()> {
    let started = unix_now();
    let mode = a
        .mode
        .or(file.train.mode)
        .ok_or_else(|| Error::Config("no training mode; pass --mode or set [train] mode".into()))?;
    let seed = file.seed(a.seed)?;
    let base = match mode {
        Mode::DgsanTabular => TrainConfig::tabular(),
        Mode::DgsanSeq | Mode::Mle => TrainConfig::sequence(),
    };
    let d = &file.dgsan;
    let cfg = TrainConfig {
        batch_size: pick(a.batch_size, d.batch_size, base.batch_size),
        outer_iters: pick(a.outer_iters, d.outer_iters, base.outer_iters),
        max_len: pick(a.max_len, file.corpus.max_len, base.max_len),
        temperature: pick(a.temperature, d.temperature, base.temperature),
        old_logprob_temperature: pick(a.old_logprob_temperature, d.old_logprob_temperature, base.old_logprob_temperature),
        inner_epochs: pick(a.inner_epochs, d.inner_epochs, base.inner_epochs),
        learning_rate: pick(a.learning_rate, d.learning_rate, base.learning_rate),
        max_epochs: a.max_epochs.or(d.max_epochs),
        seed,
    };
    cfg.validate()?;
    let out = a.out.clone().or_else(|| file.train.out.clone()).unwrap_or_else(|| DEFAULT_OUT.into());
    let corpus_path = a.corpus.clone().or_else(|| file.train.corpus.clone());

    let mut artifacts = Vec::new();
    let mut config = json!({ "train": cfg });
    let mut corpus_hash = None;
    let mut writer;

    let final_params = match mode {
        Mode::DgsanTabular => {
            let n = pick(a.domain_size, file.train.domain_size, DEFAULT_DOMAIN_SIZE);
            if n < 2 {
                return Err(Error::Config(format!("domain_size must be >= 2, got {n}")));
            }
            config["domain_size"] = json!(n);
            let p = random_simplex(n, TARGET_MIN_ENTRY, &mut rng_for(seed, "tabular.target"));
            let q = TabularDistribution::random(n, 1.0, &mut rng_for(seed, "tabular.init"))?;
            writer = RunWriter::new(&out, cfg.outer_iters)?;
            let target = out.join("target.json");
            std::fs::write(&target, serde_json::to_string(&json!({ "p": p })).expect("finite") + "\n")
                .map_err(|e| Error::io(&target, e))?;
            artifacts.push(PathBuf::from("target.json"));
            let probs = p.clone();
            let real = move |k: usize, rng: &mut crate::rng::Rng| Ok((0..k).map(|_| sample_categorical(&probs, rng)).collect());
            let (m, _) = dgsan_general_with(q, real, Some(&p), &cfg, |r, m: &TabularDistribution| {
                writer.observe(r, crate::models::ExplicitModel::params(m))
            })?;
            crate::models::ExplicitModel::params(&m).clone()
        }
        Mode::DgsanSeq | Mode::Mle => {
            let path = corpus_path
                .clone()
                .ok_or_else(|| Error::Config(format!("mode {} needs --corpus", mode.name())))?;
            let min_freq = pick(a.min_freq, file.corpus.min_freq, 1);
            let (corpus, vocab) = load_corpus(&path, cfg.max_len, min_freq)?;
            corpus_hash = Some(CorpusHash {
                sha256: git_sha256(&path)?,
                path: path.clone(),
            });
            let d_emb = pick(a.d_emb, file.model.d_emb, DEFAULT_D_EMB);
            let d_h = pick(a.d_h, file.model.d_h, DEFAULT_D_H);
            config["min_freq"] = json!(min_freq);
            config["d_emb"] = json!(d_emb);
            config["d_h"] = json!(d_h);
            let model = RecurrentLM::new(vocab.len(), d_emb, d_h, &mut rng_for(seed, "model.init"))?;
            writer = RunWriter::new(&out, cfg.outer_iters)?;
            vocab.write(&out.join("vocab.txt"))?;
            artifacts.push(PathBuf::from("vocab.txt"));
            let m = if mode == Mode::Mle {
                train_mle(&corpus, model, &cfg, |r, m| writer.observe(r, m.params()))?
            } else {
                dgsan_sequence_with(&corpus, model, &cfg, |r, m| writer.observe(r, m.params()))?.0
            };
            m.params().clone()
        }
    };

    write_checkpoint(&final_params, &out.join("model.dgsn"))?;
    artifacts.push(PathBuf::from("model.dgsn"));
    let manifest = RunManifest {
        mode: mode.name().into(),
        seed,
        config,
        started_unix: started,
        finished_unix: unix_now(),
        corpus: corpus_hash,
        reports: PathBuf::from("reports.jsonl"),
        checkpoints: writer.checkpoints,
        artifacts,
    };
    manifest.write(&out.join("manifest.json"))?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

/// Teacher-forced training for `max_epochs` shuffled passes (default
/// [`DEFAULT_MLE_EPOCHS`]), reporting once per pass.
pub fn train_mle<O>(corpus: &TokenizedCorpus, mut model: RecurrentLM, cfg: &TrainConfig, mut observe: O) -> Result<RecurrentLM>
where
    O: FnMut(&IterationReport, &RecurrentLM) -> Result<()>,
{
    let mut rng = rng_for(cfg.seed, "mle.shuffle");
    let mut opt = Adam::new(cfg.learning_rate);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    for epoch in 0..cfg.max_epochs.unwrap_or(DEFAULT_MLE_EPOCHS) {
        order.shuffle(&mut rng);
        let mut losses = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Vec<usize>> = chunk.iter().map(|&i| corpus.sentences()[i].clone()).collect();
            losses.push(mle_step(&mut model, &mut opt, &batch)?);
        }
        let r = IterationReport {
            phase: "mle".into(),
            l: None,
            outer_iter: epoch,
            step: opt.steps() as usize,
            loss: losses.iter().sum::<f64>() / losses.len() as f64,
            last_loss: *losses.last().expect("corpus is nonempty"),
            js: None,
            betweenness_fraction: None,
        };
        observe(&r, &model)?;
    }
    Ok(model)
}
