use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use dgsan::cli::RunManifest;
use dgsan::dgsan::IterationReport;
use dgsan::models::{write_checkpoint, RecurrentLM};
use dgsan::rng::rng_for;

fn dgsan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dgsan"))
        .current_dir(dir)
        .args(args)
        .env_remove("DGSAN_SEED")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn reports(path: &Path) -> Vec<IterationReport> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn oracle_corpus(dir: &Path, out: &str, extra: &[&str]) {
    let mut args = vec!["info", "oracle", "--symbols", "3", "--M", "3", "--count", "2000", "--seed", "7", "--out", out];
    args.extend_from_slice(extra);
    ok(&dgsan(dir, &args));
}

#[test]
fn tabular_run_converges_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    ok(&dgsan(dir.path(), &["train", "--mode", "dgsan-tabular", "--domain-size", "16", "--seed", "1"]));
    let run = dir.path().join("dgsan-out");
    let r = reports(&run.join("reports.jsonl"));
    assert_eq!(r.len(), 40);
    let js = r.last().unwrap().js.unwrap();
    assert!(js < 1e-3, "final JS {js}");

    let m = RunManifest::read(&run.join("manifest.json")).unwrap();
    assert_eq!((m.mode.as_str(), m.seed), ("dgsan-tabular", 1));
    assert!(m.finished_unix >= m.started_unix);
    assert!(!m.checkpoints.is_empty());
    for p in m.checkpoints.iter().chain(&m.artifacts).chain([&m.reports]) {
        assert!(run.join(p).is_file(), "{} missing", p.display());
    }
    let info: Value = serde_json::from_str(&ok(&dgsan(&run, &["info", "checkpoint", "model.dgsn"]))).unwrap();
    assert_eq!(info["kind"], "tabular");
    assert_eq!(info["size"], 16);
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    oracle_corpus(dir.path(), "data", &[]);
    for out in ["a", "b"] {
        ok(&dgsan(dir.path(), &["train", "--mode", "dgsan-tabular", "--seed", "3", "--out", out]));
        ok(&dgsan(
            dir.path(),
            &[
                "train", "--mode", "dgsan-seq", "--corpus", "data/corpus.txt", "--seed", "3", "--D", "2",
                "--inner-epochs", "5", "--d-emb", "8", "--d-h", "8", "--out", &format!("{out}-seq"),
            ],
        ));
    }
    for f in ["reports.jsonl", "model.dgsn", "checkpoints/ckpt-0000.dgsn"] {
        let read = |d: &str| fs::read(dir.path().join(d).join(f)).unwrap();
        assert_eq!(read("a"), read("b"), "{f}");
        assert_eq!(read("a-seq"), read("b-seq"), "{f}");
    }
    let other = dir.path().join("c");
    ok(&dgsan(dir.path(), &["train", "--mode", "dgsan-tabular", "--seed", "4", "--out", "c"]));
    assert_ne!(fs::read(other.join("reports.jsonl")).unwrap(), fs::read(dir.path().join("a/reports.jsonl")).unwrap());
}

#[test]
fn sequence_run_with_default_settings_settles_near_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    oracle_corpus(dir.path(), "data", &[]);
    ok(&dgsan(
        dir.path(),
        &["train", "--mode", "dgsan-seq", "--corpus", "data/corpus.txt", "--D", "5", "--T", "2.0", "--d-emb", "16", "--d-h", "16", "--out", "run"],
    ));
    let run = dir.path().join("run");
    let r = reports(&run.join("reports.jsonl"));
    // one report per (l, outer iteration) over l = 1..=3
    assert_eq!(r.len(), 15);
    assert_eq!(r.iter().filter_map(|x| x.l).max(), Some(3));
    let last = r.last().unwrap().loss;
    assert!((1.3..=1.45).contains(&last), "final loss {last}");

    let m = RunManifest::read(&run.join("manifest.json")).unwrap();
    assert_eq!(m.checkpoints.len(), 3);
    let corpus = m.corpus.unwrap();
    assert_eq!(corpus.sha256, dgsan::cli::git_sha256(&dir.path().join("data/corpus.txt")).unwrap());
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dgsan(dir.path(), &["train", "--mode", "dgsan-seq", "--corpus", "missing.txt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.txt"));

    assert_eq!(dgsan(dir.path(), &["train"]).status.code(), Some(2));
    assert_eq!(dgsan(dir.path(), &["train", "--mode", "dgsan-tabular", "--D", "0"]).status.code(), Some(2));
    assert_eq!(dgsan(dir.path(), &["train", "--mode", "dgsan-tabular", "--T", "-1"]).status.code(), Some(2));
    assert_eq!(dgsan(dir.path(), &["train", "--mode", "nope"]).status.code(), Some(2));
    assert_eq!(dgsan(dir.path(), &["verify", "theorem9"]).status.code(), Some(2));

    fs::write(dir.path().join("bad.toml"), "[dgsan]\nbatch = 3\n").unwrap();
    let out = dgsan(dir.path(), &["--config", "bad.toml", "train", "--mode", "dgsan-tabular"]);
    assert_eq!(out.status.code(), Some(2));

    // steps of this size overflow the logits within two updates
    let out = dgsan(dir.path(), &["train", "--mode", "dgsan-tabular", "--lr", "1e308"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_file_values_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "seed = 5\n[train]\nmode = \"dgsan-tabular\"\nout = \"from-config\"\ndomain_size = 6\n[dgsan]\nouter_iters = 3\ninner_epochs = 4\n",
    )
    .unwrap();
    ok(&dgsan(dir.path(), &["--config", "run.toml", "train"]));
    let m = RunManifest::read(&dir.path().join("from-config/manifest.json")).unwrap();
    assert_eq!(m.seed, 5);
    assert_eq!(m.config["domain_size"], 6);
    assert_eq!(reports(&dir.path().join("from-config/reports.jsonl")).len(), 3);

    ok(&dgsan(dir.path(), &["--config", "run.toml", "train", "--D", "2", "--seed", "9", "--out", "flags"]));
    let m = RunManifest::read(&dir.path().join("flags/manifest.json")).unwrap();
    assert_eq!(m.seed, 9);
    assert_eq!(m.config["train"]["inner_epochs"], 4);
    assert_eq!(reports(&dir.path().join("flags/reports.jsonl")).len(), 2);
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |extra: &[&str], env: Option<&str>, out: &str| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_dgsan"));
        c.current_dir(dir.path())
            .args(["train", "--mode", "dgsan-tabular", "--D", "2", "--out", out])
            .args(extra)
            .env_remove("DGSAN_SEED");
        if let Some(s) = env {
            c.env("DGSAN_SEED", s);
        }
        ok(&c.output().unwrap());
        RunManifest::read(&dir.path().join(out).join("manifest.json")).unwrap().seed
    };
    assert_eq!(run(&[], None, "a"), 0);
    assert_eq!(run(&[], Some("42"), "b"), 42);
    assert_eq!(run(&["--seed", "7"], Some("42"), "c"), 7);
    let read = |d: &str| fs::read(dir.path().join(d).join("reports.jsonl")).unwrap();
    ok(&dgsan(dir.path(), &["train", "--mode", "dgsan-tabular", "--D", "2", "--seed", "42", "--out", "d"]));
    assert_eq!(read("b"), read("d"));
}

#[test]
fn sampling() {
    let dir = tempfile::tempdir().unwrap();
    oracle_corpus(dir.path(), "data", &[]);
    ok(&dgsan(
        dir.path(),
        &["train", "--mode", "mle", "--corpus", "data/corpus.txt", "--max-epochs", "1", "--d-emb", "8", "--d-h", "8", "--out", "run"],
    ));
    ok(&dgsan(dir.path(), &["sample", "--checkpoint", "run/model.dgsn", "--count", "0", "--out", "empty"]));
    assert_eq!(fs::read(dir.path().join("empty/samples.txt")).unwrap(), b"");

    ok(&dgsan(dir.path(), &["sample", "--checkpoint", "run/model.dgsn", "--count", "7", "--length", "4", "--seed", "2", "--out", "s"]));
    let text = fs::read_to_string(dir.path().join("s/samples.txt")).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().all(|l| l.split_whitespace().count() == 4));
    ok(&dgsan(dir.path(), &["sample", "--checkpoint", "run/model.dgsn", "--count", "7", "--length", "4", "--seed", "2", "--out", "s2"]));
    assert_eq!(text, fs::read_to_string(dir.path().join("s2/samples.txt")).unwrap());

    // a vocabulary of the wrong size, and a checkpoint of the wrong kind
    fs::write(dir.path().join("small.txt"), "<pad>\n<s>\n</s>\n<unk>\n").unwrap();
    let out = dgsan(dir.path(), &["sample", "--checkpoint", "run/model.dgsn", "--vocab", "small.txt"]);
    assert_eq!(out.status.code(), Some(2));
    ok(&dgsan(dir.path(), &["train", "--mode", "dgsan-tabular", "--D", "1", "--out", "tab"]));
    let out = dgsan(dir.path(), &["sample", "--checkpoint", "tab/model.dgsn", "--vocab", "run/vocab.txt"]);
    assert_eq!(out.status.code(), Some(2));
    let out = dgsan(dir.path(), &["sample", "--checkpoint", "nothing.dgsn", "--vocab", "run/vocab.txt"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_on_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let lines = [
        "the cat sat on the warm mat today",
        "a dog ran across the wide green park",
        "she read the long book by the window",
        "we walked to the old market after lunch",
        "rain fell over the quiet town all night",
    ];
    fs::write(dir.path().join("test.txt"), lines.join("\n") + "\n").unwrap();
    ok(&dgsan(
        dir.path(),
        &["train", "--mode", "mle", "--corpus", "test.txt", "--max-epochs", "1", "--d-emb", "4", "--d-h", "4", "--out", "run"],
    ));
    let text = ok(&dgsan(
        dir.path(),
        &["eval", "--checkpoint", "run/model.dgsn", "--test", "test.txt", "--generated", "test.txt", "--out", "ev"],
    ));
    let v: Value = serde_json::from_str(&text).unwrap();
    for k in ["3", "5", "7"] {
        for m in ["bl", "bbl", "msj"] {
            let x = v[m][k].as_f64().unwrap();
            assert!((x - 1.0).abs() < 1e-12, "{m}{k} = {x}");
        }
    }
    assert_eq!(v["ffd"].as_f64().unwrap(), 0.0);
    assert!(v["nll"].as_f64().unwrap() > 0.0);
    let saved: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("ev/metrics.json")).unwrap()).unwrap();
    assert_eq!(saved, v);
}

#[test]
fn trained_model_beats_its_initialization_on_msj() {
    let dir = tempfile::tempdir().unwrap();
    oracle_corpus(dir.path(), "train", &["--fixed-len"]);
    let test_out = dgsan(
        dir.path(),
        &["info", "oracle", "--symbols", "3", "--M", "3", "--count", "500", "--seed", "7", "--fixed-len", "--out", "test"],
    );
    ok(&test_out);
    ok(&dgsan(
        dir.path(),
        &[
            "train", "--mode", "dgsan-seq", "--corpus", "train/corpus.txt", "--T", "1.0", "--lr", "0.01", "--d-emb", "16", "--d-h",
            "16", "--seed", "1", "--out", "run",
        ],
    ));
    // the same initialization the run started from
    let vocab = dgsan::corpus::Vocabulary::read(&dir.path().join("run/vocab.txt")).unwrap();
    let init = RecurrentLM::new(vocab.len(), 16, 16, &mut rng_for(1, "model.init")).unwrap();
    write_checkpoint(init.params(), &dir.path().join("run/init.dgsn")).unwrap();

    let msj3 = |ckpt: &str| -> f64 {
        let text = ok(&dgsan(dir.path(), &["eval", "--checkpoint", ckpt, "--test", "test/corpus.txt", "--seed", "3"]));
        let v: Value = serde_json::from_str(&text).unwrap();
        v["msj"]["3"].as_f64().unwrap()
    };
    let (before, after) = (msj3("run/init.dgsn"), msj3("run/model.dgsn"));
    assert!(after > before, "msj3 {before} -> {after}");
}

#[test]
fn verify_suites() {
    let dir = tempfile::tempdir().unwrap();
    let v: Value = serde_json::from_str(&ok(&dgsan(dir.path(), &["verify", "theorem1", "--trials", "1000", "--out", "v"]))).unwrap();
    assert_eq!(v["pass"], true);
    assert!(v["worst"]["residual_or_delta"].as_f64().unwrap() < 1e-10);
    let lines = fs::read_to_string(dir.path().join("v/verify-theorem1.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 1000);

    let v: Value = serde_json::from_str(&ok(&dgsan(dir.path(), &["verify", "gradcheck"]))).unwrap();
    assert_eq!(v["pass"], true);
    assert!(v["worst"]["residual_or_delta"].as_f64().unwrap() < 1e-4);

    let v: Value = serde_json::from_str(&ok(&dgsan(dir.path(), &["verify", "theorem2", "--trials", "10000"]))).unwrap();
    assert_eq!(v["pass"], true);
    assert_eq!(v["failures"], 0);

    for s in ["theorem3", "theorem4", "lemmas"] {
        ok(&dgsan(dir.path(), &["verify", s, "--trials", "50", "--seed", "11"]));
    }
    assert_eq!(dgsan(dir.path(), &["verify", "theorem1", "--trials", "0"]).status.code(), Some(2));
}

#[test]
fn info_describes_corpora() {
    let dir = tempfile::tempdir().unwrap();
    let o: Value = serde_json::from_str(&ok(&dgsan(
        dir.path(),
        &["info", "oracle", "--symbols", "4", "--M", "5", "--count", "300", "--out", "o"],
    )))
    .unwrap();
    assert!(o["entropy"].as_f64().unwrap() > 0.0);
    let c: Value = serde_json::from_str(&ok(&dgsan(dir.path(), &["info", "corpus", "o/corpus.txt"]))).unwrap();
    assert_eq!(c["sentences"], 300);
    assert_eq!(c["vocab_size"], 8);
    assert!(c["longest"].as_u64().unwrap() <= 5);
}

#[test]
fn checkpoint_info_reports_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let m = RecurrentLM::new(9, 5, 6, &mut rng_for(0, "m")).unwrap();
    write_checkpoint(m.params(), &dir.path().join("m.dgsn")).unwrap();
    let v: Value = serde_json::from_str(&ok(&dgsan(dir.path(), &["info", "checkpoint", "m.dgsn"]))).unwrap();
    assert_eq!((v["kind"].as_str(), v["vocab_size"].as_u64(), v["d_emb"].as_u64(), v["d_h"].as_u64()), (Some("recurrent"), Some(9), Some(5), Some(6)));
    assert_eq!(v["scalars"].as_u64().unwrap() as usize, m.params().num_scalars());
}
