use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use serde_json::json;

use super::config::{pick, FileConfig};
use super::manifest::git_sha256;
use super::{EvalArgs, InfoArgs, InfoCommand, OracleArgs, SampleArgs, VerifyArgs, DEFAULT_OUT};
use crate::corpus::{load_corpus, load_corpus_with_vocab, MarkovOracle, Vocabulary};
use crate::error::{Error, Result};
use crate::metrics::{backward_bleu_n, bleu_n, frechet_feature_distance, ms_jaccard, nll, DEFAULT_FEATURE_DIM};
use crate::models::{read_checkpoint, RecurrentLM, TabularDistribution};
use crate::rng::{rng_for, Rng};
use crate::verify::{run_suite, Suite, DEFAULT_DIM};

pub const DEFAULT_SAMPLE_COUNT: usize = 100;
pub const DEFAULT_SAMPLE_LENGTH: usize = 20;
pub const DEFAULT_TRIALS: usize = 100;
pub const METRIC_ORDERS: [usize; 3] = [3, 5, 7];
const SAMPLE_CHUNK: usize = 256;

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn required(flag: &Option<PathBuf>, file: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| file.clone())
        .ok_or_else(|| Error::Config(format!("missing --{what}")))
}

/// The vocabulary beside the checkpoint, or beside its directory for
/// files under `checkpoints/`.
fn default_vocab(checkpoint: &Path) -> Result<PathBuf> {
    let dir = checkpoint.parent().unwrap_or(Path::new("."));
    [dir.join("vocab.txt"), dir.join("..").join("vocab.txt")]
        .into_iter()
        .find(|p| p.is_file())
        .ok_or_else(|| Error::Config(format!("no vocab.txt near {}; pass --vocab", checkpoint.display())))
}

/// Recurrent model plus the vocabulary it was trained with.
fn load_model(checkpoint: &Path, vocab: Option<PathBuf>) -> Result<(RecurrentLM, Vocabulary)> {
    let model = RecurrentLM::from_params(read_checkpoint(checkpoint)?)?;
    let vpath = match vocab {
        Some(v) => v,
        None => default_vocab(checkpoint)?,
    };
    let vocab = Vocabulary::read(&vpath)?;
    if vocab.len() != model.vocab_size() {
        return Err(Error::Checkpoint(format!(
            "{} has {} tokens but the model expects {}",
            vpath.display(),
            vocab.len(),
            model.vocab_size()
        )));
    }
    Ok((model, vocab))
}

/// One sentence per entry of `lengths`, drawn in length groups.
pub fn sample_sentences(m: &RecurrentLM, lengths: &[usize], temperature: f64, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in lengths.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let mut out = vec![Vec::new(); lengths.len()];
    for (l, idx) in groups {
        for chunk in idx.chunks(SAMPLE_CHUNK) {
            let prefixes = vec![Vec::new(); chunk.len()];
            for (&i, s) in chunk.iter().zip(m.sample_continuations(&prefixes, l, temperature, rng)?) {
                out[i] = s;
            }
        }
    }
    Ok(out)
}

pub fn sample(a: &SampleArgs, file: &FileConfig) -> Result<()> {
    let s = &file.sample;
    let checkpoint = required(&a.checkpoint, &s.checkpoint, "checkpoint")?;
    let (model, vocab) = load_model(&checkpoint, a.vocab.clone().or_else(|| s.vocab.clone()))?;
    let count = pick(a.count, s.count, DEFAULT_SAMPLE_COUNT);
    let temperature = pick(a.temperature, s.temperature, 1.0);
    let length = pick(a.length, s.length, DEFAULT_SAMPLE_LENGTH);
    let seed = file.seed(a.seed)?;
    let out = a.out.clone().or_else(|| s.out.clone()).unwrap_or_else(|| DEFAULT_OUT.into());
    create_dir(&out)?;

    let path = out.join("samples.txt");
    let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(f);
    if count > 0 {
        let sents = sample_sentences(&model, &vec![length; count], temperature, &mut rng_for(seed, "sample"))?;
        for s in sents {
            writeln!(w, "{}", vocab.decode(&s)).map_err(|e| Error::io(&path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    eprintln!("wrote {count} sentences to {}", path.display());
    Ok(())
}

pub fn eval(a: &EvalArgs, file: &FileConfig) -> Result<()> {
    let e = &file.eval;
    let checkpoint = required(&a.checkpoint, &e.checkpoint, "checkpoint")?;
    let test_path = required(&a.test, &e.test, "test")?;
    let (model, vocab) = load_model(&checkpoint, a.vocab.clone().or_else(|| e.vocab.clone()))?;
    let vocab = Arc::new(vocab);
    let test = load_corpus_with_vocab(&test_path, usize::MAX, vocab.clone())?;
    let seed = file.seed(a.seed)?;
    let temperature = pick(a.temperature, e.temperature, 1.0);
    let feature_dim = pick(a.feature_dim, e.feature_dim, DEFAULT_FEATURE_DIM);

    let generated = match a.generated.clone().or_else(|| e.generated.clone()) {
        Some(p) => load_corpus_with_vocab(&p, usize::MAX, vocab)?.sentences().to_vec(),
        None => {
            let lengths: Vec<usize> = test.sentences().iter().map(Vec::len).collect();
            sample_sentences(&model, &lengths, temperature, &mut rng_for(seed, "eval.sample"))?
        }
    };
    let t = test.sentences();
    let per_order = |f: &dyn Fn(usize) -> Result<f64>| -> BTreeMap<String, Option<f64>> {
        METRIC_ORDERS.iter().map(|&n| (n.to_string(), f(n).ok())).collect()
    };
    let report = json!({
        "nll": nll(&model, &test)?,
        "bl": per_order(&|n| bleu_n(&generated, t, n)),
        "bbl": per_order(&|n| backward_bleu_n(t, &generated, n)),
        "msj": per_order(&|n| ms_jaccard(&generated, t, n)),
        "ffd": frechet_feature_distance(t, &generated, feature_dim, seed).ok(),
    });
    let text = serde_json::to_string(&report).expect("metrics serialize");
    println!("{text}");
    if let Some(out) = a.out.clone().or_else(|| e.out.clone()) {
        create_dir(&out)?;
        write_text(&out.join("metrics.json"), &(text + "\n"))?;
    }
    Ok(())
}

pub fn verify(a: &VerifyArgs, file: &FileConfig) -> Result<ExitCode> {
    let v = &file.verify;
    let suite: Suite = a.suite.parse()?;
    let trials = pick(a.trials, v.trials, DEFAULT_TRIALS);
    let dim = pick(a.dim, v.dim, DEFAULT_DIM);
    let seed = file.seed(a.seed)?;
    let outcome = run_suite(suite, trials, seed, dim)?;

    if let Some(out) = a.out.clone().or_else(|| v.out.clone()) {
        create_dir(&out)?;
        let lines: String = outcome
            .records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect();
        write_text(&out.join(format!("verify-{suite}.jsonl")), &lines)?;
    }
    let failures: Vec<_> = outcome.failures().collect();
    println!(
        "{}",
        json!({
            "suite": suite.name(),
            "trials": trials,
            "seed": seed,
            "records": outcome.records.len(),
            "failures": failures.len(),
            "pass": outcome.passed(),
            "worst": outcome.worst(),
        })
    );
    if failures.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    for r in failures.iter().take(10) {
        eprintln!(
            "FAIL {} f={} seed={} value={:e}; rerun with --seed {} --trials 1",
            r.theorem, r.f_name, r.seed, r.value, r.seed
        );
    }
    Ok(ExitCode::from(1))
}

pub fn info(a: InfoArgs, file: &FileConfig) -> Result<()> {
    let v = match a.what {
        InfoCommand::Corpus { path, max_len, min_freq } => {
            let max_len = pick(max_len, file.corpus.max_len, usize::MAX);
            let min_freq = pick(min_freq, file.corpus.min_freq, 1);
            let (c, vocab) = load_corpus(&path, max_len, min_freq)?;
            let tokens: usize = c.sentences().iter().map(Vec::len).sum();
            json!({
                "path": path,
                "sentences": c.len(),
                "tokens": tokens,
                "vocab_size": vocab.len(),
                "longest": c.longest(),
                "mean_len": tokens as f64 / c.len() as f64,
                "sha256": git_sha256(&path)?,
            })
        }
        InfoCommand::Checkpoint { path } => {
            let params = read_checkpoint(&path)?;
            let listed: Vec<_> = params.iter().map(|(n, a)| json!({ "name": n, "shape": a.shape() })).collect();
            let mut v = json!({ "path": path, "scalars": params.num_scalars(), "params": listed });
            if let Ok(m) = RecurrentLM::from_params(params.clone()) {
                v["kind"] = json!("recurrent");
                v["vocab_size"] = json!(m.vocab_size());
                v["d_emb"] = json!(m.d_emb());
                v["d_h"] = json!(m.d_h());
            } else if let Ok(t) = TabularDistribution::from_params(params) {
                v["kind"] = json!("tabular");
                v["size"] = json!(t.size());
            } else {
                v["kind"] = json!("unknown");
            }
            v
        }
        InfoCommand::Oracle(o) => oracle(&o, file)?,
    };
    println!("{}", serde_json::to_string_pretty(&v).expect("info serializes"));
    Ok(())
}

fn oracle(a: &OracleArgs, file: &FileConfig) -> Result<serde_json::Value> {
    let o = &file.oracle;
    let symbols = pick(a.symbols, o.symbols, 3);
    let max_len = pick(a.max_len, o.max_len, 3);
    let count = pick(a.count, o.count, 1000);
    let skew = pick(a.skew, o.skew, 2.0);
    let fixed_len = a.fixed_len || o.fixed_len.unwrap_or(false);
    let seed = file.seed(a.seed)?;
    let out = a.out.clone().or_else(|| o.out.clone()).unwrap_or_else(|| DEFAULT_OUT.into());

    let oracle = MarkovOracle::random(symbols, max_len, skew, fixed_len, &mut rng_for(seed, "oracle"))?;
    let corpus = oracle.sample_corpus(count, &mut rng_for(seed, "oracle.corpus"))?;
    create_dir(&out)?;
    let mut text = corpus.to_lines().join("\n");
    text.push('\n');
    write_text(&out.join("corpus.txt"), &text)?;
    let v = json!({
        "symbols": symbols,
        "max_len": max_len,
        "count": count,
        "seed": seed,
        "initial": oracle.initial(),
        "transition": oracle.transition(),
        "length": oracle.length_probs(),
        "entropy": oracle.entropy(),
    });
    write_text(&out.join("oracle.json"), &(serde_json::to_string_pretty(&v).expect("finite") + "\n"))?;
    Ok(v)
}
