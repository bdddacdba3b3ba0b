//! End-to-end tests against the compiled binary: flag surface, exit codes,
//! synth determinism, and the graph-free inference contract.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_botdistill"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// Generates the 60-user fixture corpus under `<root>/data/tiny`.
fn synth_tiny(root: &Path) {
    let out = run(&[
        "synth",
        "--users",
        "60",
        "--vocab-size",
        "40",
        "--tokens-per-user",
        "20",
        "--relations",
        "1",
        "--p-in",
        "0.2",
        "--seed",
        "5",
        "--data-dir",
        root.join("data").to_str().unwrap(),
        "--name",
        "tiny",
    ]);
    assert_eq!(code(&out), 0, "synth failed: {}", stderr(&out));
}

/// Writes a fast-converging pipeline config scaled for the fixture corpus.
fn write_tiny_config(root: &Path) -> PathBuf {
    let path = root.join("tiny.toml");
    let text = format!(
        r#"
seed = 11
dataset = "tiny"
data_dir = {data:?}
runs_dir = {runs:?}

[split]
ratios = [2, 2, 6]

[lm]
embed_dim = 16
head_hidden = 16
lr = 5e-3
finetune_epochs = 2

[gnn]
hidden = 8
epochs = 15
patience = 5
lr = 5e-3

[distill]
max_iterations = 2
min_iterations = 1
student_epochs = 1
"#,
        data = root.join("data").to_str().unwrap(),
        runs = root.join("runs").to_str().unwrap(),
    );
    std::fs::write(&path, text).unwrap();
    path
}

/// Synth + distill; returns (run dir, distill output). Exit 0 means the
/// loop converged, 3 means the budget ran out; both leave a usable run.
fn fixture_run(root: &Path) -> (PathBuf, Output) {
    synth_tiny(root);
    let cfg = write_tiny_config(root);
    let out = run(&["distill", "--config", cfg.to_str().unwrap()]);
    let c = code(&out);
    assert!(c == 0 || c == 3, "distill exit {c}: {}", stderr(&out));
    (root.join("runs").join("tiny_seed11"), out)
}

#[test]
fn help_lists_every_flag_per_subcommand() {
    let top = stdout(&run(&["--help"]));
    for sub in ["synth", "distill", "infer", "eval", "sweep", "ablate"] {
        assert!(top.contains(sub), "top-level help misses {sub}");
    }
    assert!(top.contains("BOTDISTILL_RUNS"), "help misses the env var");

    let cases: &[(&str, &[&str])] = &[
        (
            "synth",
            &[
                "--config",
                "--users",
                "--relations",
                "--p-in",
                "--p-out",
                "--label-fraction",
                "--vocab-size",
                "--tokens-per-user",
                "--bot-prior",
                "--seed",
                "--data-dir",
                "--name",
            ],
        ),
        (
            "distill",
            &[
                "--config",
                "--seed",
                "--dataset",
                "--data-dir",
                "--runs-dir",
                "--run-name",
                "--teacher",
                "--temperature",
                "--alpha",
                "--max-iterations",
                "--lm-lr",
                "--gnn-lr",
                "--skip-adaptation",
                "--desk",
                "--resume",
            ],
        ),
        ("infer", &["--run", "--users", "--out"]),
        ("eval", &["--run", "--consistency", "--data-dir"]),
        ("sweep", &["--axis", "--grid", "--config", "--seed", "--dataset"]),
        ("ablate", &["--setting", "--config", "--seed", "--dataset"]),
    ];
    for (sub, flags) in cases {
        let text = stdout(&run(&[sub, "--help"]));
        for flag in *flags {
            assert!(text.contains(flag), "{sub} --help misses {flag}");
        }
    }
}

#[test]
fn synth_same_seed_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    for sub in ["a", "b"] {
        let out = run(&[
            "synth",
            "--users",
            "50",
            "--relations",
            "1",
            "--seed",
            "7",
            "--data-dir",
            tmp.path().join(sub).to_str().unwrap(),
            "--name",
            "tiny",
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    for file in ["users.jsonl", "edges.jsonl", "schema.json"] {
        let a = std::fs::read(tmp.path().join("a/tiny").join(file)).unwrap();
        let b = std::fs::read(tmp.path().join("b/tiny").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical-seed runs");
    }

    let out = run(&[
        "synth",
        "--users",
        "50",
        "--relations",
        "1",
        "--seed",
        "8",
        "--data-dir",
        tmp.path().join("c").to_str().unwrap(),
        "--name",
        "tiny",
    ]);
    assert_eq!(code(&out), 0);
    let a = std::fs::read(tmp.path().join("a/tiny/users.jsonl")).unwrap();
    let c = std::fs::read(tmp.path().join("c/tiny/users.jsonl")).unwrap();
    assert_ne!(a, c, "different seeds produced identical corpora");
}

#[test]
fn synth_p_out_tracks_p_in() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "synth",
        "--users",
        "50",
        "--relations",
        "1",
        "--p-in",
        "0.4",
        "--data-dir",
        tmp.path().join("d").to_str().unwrap(),
        "--name",
        "tiny",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("p_in = 0.4"), "echo misses p_in: {text}");
    assert!(
        text.contains("p_out = 0.04"),
        "p_out should default to p_in / 10: {text}"
    );
}

#[test]
fn distill_echoes_config_and_reports_iterations() {
    let tmp = tempfile::tempdir().unwrap();
    let (run_dir, out) = fixture_run(tmp.path());
    let text = stdout(&out);
    assert!(text.contains("# resolved configuration"), "missing config echo");
    assert!(text.contains("temperature = 3.0"), "echo misses kd defaults");
    assert!(text.contains("max_iterations = 2"), "echo misses file override");
    assert!(text.contains("teacher_val"), "missing per-iteration table");
    assert!(text.contains("best student"), "missing summary line");

    for file in ["config.toml", "vocab.json", "state.json", "iterations.jsonl"] {
        assert!(run_dir.join(file).is_file(), "run dir misses {file}");
    }
    assert!(run_dir.join("lm/best/student.json").is_file(), "missing best checkpoint");
}

#[test]
fn infer_ignores_graph_and_preserves_order() {
    let tmp = tempfile::tempdir().unwrap();
    let (run_dir, _) = fixture_run(tmp.path());
    let users = tmp.path().join("data/tiny/users.jsonl");

    // Inference must run off serialized text alone: a destroyed edge file
    // can only break it if it ever touches the graph.
    std::fs::write(tmp.path().join("data/tiny/edges.jsonl"), b"{not json").unwrap();

    let preds_path = tmp.path().join("preds.jsonl");
    let out = run(&[
        "infer",
        "--run",
        run_dir.to_str().unwrap(),
        "--users",
        users.to_str().unwrap(),
        "--out",
        preds_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "infer failed: {}", stderr(&out));

    let input_ids: Vec<String> = std::fs::read_to_string(&users)
        .unwrap()
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            v["user_id"].as_str().unwrap().to_string()
        })
        .collect();
    let preds: Vec<serde_json::Value> = std::fs::read_to_string(&preds_path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();

    assert_eq!(preds.len(), input_ids.len(), "one prediction per input row");
    for (pred, id) in preds.iter().zip(&input_ids) {
        assert_eq!(pred["user_id"].as_str().unwrap(), id, "row order changed");
        let h = pred["p_human"].as_f64().unwrap();
        let b = pred["p_bot"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&h) && (0.0..=1.0).contains(&b));
        assert!((h + b - 1.0).abs() < 1e-6, "probabilities must pair-sum to 1");
    }
}

#[test]
fn infer_rejects_checkpoint_without_student_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let (run_dir, _) = fixture_run(tmp.path());
    let manifest_path = run_dir.join("lm/best/student.manifest.json");
    let manifest = std::fs::read_to_string(&manifest_path).unwrap();
    std::fs::write(&manifest_path, manifest.replace("\"student\"", "\"teacher\"")).unwrap();

    let out = run(&[
        "infer",
        "--run",
        run_dir.to_str().unwrap(),
        "--users",
        tmp.path().join("data/tiny/users.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1, "non-student checkpoint must be a config error");
    assert!(stderr(&out).contains("not a student model"));
}

#[test]
fn eval_writes_metrics_and_consistency() {
    let tmp = tempfile::tempdir().unwrap();
    let (run_dir, _) = fixture_run(tmp.path());
    let out = run(&["eval", "--run", run_dir.to_str().unwrap(), "--consistency"]);
    assert_eq!(code(&out), 0, "eval failed: {}", stderr(&out));

    let metrics = std::fs::read_to_string(run_dir.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("split,n,accuracy"), "bad metrics header");
    assert!(metrics.contains("student_test,"), "missing student row");
    assert!(metrics.contains("teacher_test,"), "missing teacher row");

    let consistency = std::fs::read_to_string(run_dir.join("consistency.csv")).unwrap();
    assert!(consistency.starts_with("n,agreement,"), "bad consistency header");
    assert_eq!(consistency.lines().count(), 2, "expected header plus one row");
}

#[test]
fn exit_code_1_on_bad_config_value() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[kd]\nalpha = 1.5\n").unwrap();
    let out = run(&["distill", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("alpha"));

    // flags hit the same validation
    let out = run(&["distill", "--temperature", "-2"]);
    assert_eq!(code(&out), 1);

    // so do usage mistakes
    let out = run(&["distill", "--no-such-flag"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn exit_code_2_on_missing_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "distill",
        "--data-dir",
        tmp.path().join("nowhere").to_str().unwrap(),
        "--runs-dir",
        tmp.path().join("runs").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "missing data must exit 2: {}", stderr(&out));
    // the echo still happened before the failure, with the flag applied
    assert!(stdout(&out).contains("# resolved configuration"));
    assert!(stdout(&out).contains("nowhere"));
}

#[test]
fn exit_code_3_when_budget_exhausted_without_convergence() {
    let tmp = tempfile::tempdir().unwrap();
    synth_tiny(tmp.path());
    let cfg = write_tiny_config(tmp.path());
    // iteration 1 always improves on the empty history, so a budget of one
    // iteration can never satisfy the convergence rule
    let out = run(&[
        "distill",
        "--config",
        cfg.to_str().unwrap(),
        "--max-iterations",
        "1",
        "--run-name",
        "budget1",
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("did not converge"));
}

#[test]
fn env_var_sets_default_run_root() {
    let tmp = tempfile::tempdir().unwrap();
    synth_tiny(tmp.path());
    // config without runs_dir: the env var supplies the root
    let cfg = tmp.path().join("noruns.toml");
    let text = format!(
        "seed = 11\ndataset = \"tiny\"\ndata_dir = {:?}\n\n[split]\nratios = [2, 2, 6]\n\n[lm]\nembed_dim = 16\nhead_hidden = 16\nlr = 5e-3\nfinetune_epochs = 1\n\n[gnn]\nhidden = 8\nepochs = 5\npatience = 5\nlr = 5e-3\n\n[distill]\nmax_iterations = 1\nmin_iterations = 1\nstudent_epochs = 1\n",
        tmp.path().join("data").to_str().unwrap()
    );
    std::fs::write(&cfg, text).unwrap();

    let env_root = tmp.path().join("envruns");
    let out = bin()
        .args(["distill", "--config", cfg.to_str().unwrap()])
        .env("BOTDISTILL_RUNS", env_root.to_str().unwrap())
        .output()
        .unwrap();
    let c = code(&out);
    assert!(c == 0 || c == 3, "distill exit {c}: {}", stderr(&out));
    assert!(
        env_root.join("tiny_seed11/config.toml").is_file(),
        "run did not land under BOTDISTILL_RUNS"
    );

    // an explicit flag still beats the env var
    let flag_root = tmp.path().join("flagruns");
    let out = bin()
        .args([
            "distill",
            "--config",
            cfg.to_str().unwrap(),
            "--runs-dir",
            flag_root.to_str().unwrap(),
        ])
        .env("BOTDISTILL_RUNS", env_root.to_str().unwrap())
        .output()
        .unwrap();
    let c = code(&out);
    assert!(c == 0 || c == 3);
    assert!(flag_root.join("tiny_seed11/config.toml").is_file());
}

#[test]
fn sweep_rejects_malformed_grid() {
    let out = run(&["sweep", "--axis", "labels", "--grid", "0.5:0.1:0.2"]);
    assert_eq!(code(&out), 1, "descending grid must be a config error");
    let out = run(&["sweep", "--axis", "sideways", "--grid", "0.5"]);
    assert_eq!(code(&out), 1, "unknown axis must be a config error");
}
