//! Command-line entry point: synth, distill, infer, eval, sweep, ablate.
//!
//! Every command resolves its configuration (file, then `BOTDISTILL_RUNS`,
//! then flags), echoes the result, and only then runs. Exit codes: 0
//! success, 1 configuration error, 2 data error, 3 training failure.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use botdistill_core::config::{self, Overrides, RunConfig};
use botdistill_core::corpus::{self, UserRecord};
use botdistill_core::distill;
use botdistill_core::eval::{self, AblationVariant, SweepAxis};
use botdistill_core::serialize::serialize_user;
use botdistill_core::synth::{generate_synthetic, SyntheticConfig};
use botdistill_core::teacher::TeacherKind;
use botdistill_core::{Error, Result};

/// Environment variable overriding the default run root.
const RUNS_ENV: &str = "BOTDISTILL_RUNS";

#[derive(Parser)]
#[command(
    name = "botdistill",
    version,
    about = "Teacher-student distillation pipeline for graph-free bot detection",
    after_help = "Environment:\n  BOTDISTILL_RUNS  default run root when neither config nor --runs-dir set one"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic labeled corpus with planted class signal
    Synth(SynthArgs),
    /// Run the alternating teacher/student training loop
    Distill(DistillArgs),
    /// Classify users from their serialized text alone (no graph access)
    Infer(InferArgs),
    /// Evaluate a finished run: metrics.csv and optional consistency.csv
    Eval(EvalArgs),
    /// Rerun the pipeline along a label- or edge-retention grid
    Sweep(SweepArgs),
    /// Run ablation variants against the same corpus
    Ablate(AblateArgs),
}

/// Flags shared by every pipeline-running command. Precedence: built-in
/// defaults, then the config file, then these flags.
#[derive(Args, Debug)]
struct ConfigArgs {
    /// TOML configuration file; omitted keys keep their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for every random stream
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset name under the data directory
    #[arg(long)]
    dataset: Option<String>,
    /// Directory holding dataset directories
    #[arg(long)]
    data_dir: Option<String>,
    /// Root directory for run outputs
    #[arg(long)]
    runs_dir: Option<String>,
    /// Run directory name (default: <dataset>_seed<seed>)
    #[arg(long)]
    run_name: Option<String>,
    /// Teacher kind: relational_gnn, attention_gnn, plain_gnn, or mlp
    #[arg(long)]
    teacher: Option<String>,
    /// Soft-label temperature
    #[arg(long, allow_negative_numbers = true)]
    temperature: Option<f64>,
    /// Soft-term weight in the student loss
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// Iteration budget for the alternating loop
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Sequence-encoder learning rate
    #[arg(long, allow_negative_numbers = true)]
    lm_lr: Option<f64>,
    /// Teacher learning rate
    #[arg(long, allow_negative_numbers = true)]
    gnn_lr: Option<f64>,
    /// Skip the hard-label warmup stage
    #[arg(long)]
    skip_adaptation: bool,
    /// Desk profile: from-scratch encoder learning rate (lm.lr 2e-3)
    #[arg(long)]
    desk: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if self.runs_dir.is_none() && cfg.runs_dir == "runs" {
            if let Ok(root) = std::env::var(RUNS_ENV) {
                cfg.runs_dir = root;
            }
        }
        if self.desk {
            cfg.lm.lr = RunConfig::desk().lm.lr;
        }
        let teacher = match &self.teacher {
            Some(s) => Some(s.parse::<TeacherKind>()?),
            None => None,
        };
        cfg.apply(&Overrides {
            seed: self.seed,
            dataset: self.dataset.clone(),
            data_dir: self.data_dir.clone(),
            runs_dir: self.runs_dir.clone(),
            run_name: self.run_name.clone(),
            teacher,
            temperature: self.temperature,
            alpha: self.alpha,
            max_iterations: self.max_iterations,
            lm_lr: self.lm_lr,
            gnn_lr: self.gnn_lr,
            skip_adaptation: self.skip_adaptation,
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

fn echo<T: serde::Serialize>(label: &str, value: &T) -> Result<()> {
    println!("# resolved {label}");
    print!("{}", config::toml_string(value)?);
    println!("# end {label}");
    Ok(())
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// TOML file with generator settings; flags below override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of accounts
    #[arg(long)]
    users: Option<usize>,
    /// Number of edge relations (0 = graph-less corpus)
    #[arg(long)]
    relations: Option<usize>,
    /// Intra-class edge probability per pair
    #[arg(long)]
    p_in: Option<f64>,
    /// Inter-class edge probability per pair (default: p_in / 10)
    #[arg(long)]
    p_out: Option<f64>,
    /// Fraction of accounts keeping their label
    #[arg(long)]
    label_fraction: Option<f64>,
    /// Distinct content words in the generator vocabulary
    #[arg(long)]
    vocab_size: Option<usize>,
    /// Content tokens rendered per account
    #[arg(long)]
    tokens_per_user: Option<usize>,
    /// Fraction of accounts labeled bot
    #[arg(long)]
    bot_prior: Option<f64>,
    /// Generator seed
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory to hold the dataset directory
    #[arg(long, default_value = "data")]
    data_dir: String,
    /// Dataset (and directory) name
    #[arg(long, default_value = "synthetic")]
    name: String,
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            toml::from_str::<SyntheticConfig>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => SyntheticConfig::default(),
    };
    if let Some(v) = args.users {
        cfg.n_users = v;
    }
    if let Some(v) = args.relations {
        cfg.relations = v;
    }
    if let Some(v) = args.vocab_size {
        cfg.vocab_size = v;
    }
    if let Some(v) = args.tokens_per_user {
        cfg.tokens_per_user = v;
    }
    if let Some(v) = args.bot_prior {
        cfg.bot_prior = v;
    }
    if let Some(v) = args.label_fraction {
        cfg.label_fraction = v;
    }
    if let Some(v) = args.p_in {
        cfg.p_in = v;
        // an explicit --p-out wins; otherwise it tracks p_in at a tenth
        cfg.p_out = v / 10.0;
    }
    if let Some(v) = args.p_out {
        cfg.p_out = v;
    }

    echo("generator configuration", &cfg)?;
    println!("seed = {}", args.seed);

    let mut dataset = generate_synthetic(&cfg, args.seed)?;
    dataset.name = args.name.clone();
    let dir = Path::new(&args.data_dir).join(&args.name);
    corpus::save_dataset(&dataset, &dir)?;
    println!(
        "wrote {} users ({} labeled) and {} edges to {}",
        dataset.records.len(),
        dataset.labeled_indices().len(),
        dataset.graph.as_ref().map_or(0, |g| g.edge_count()),
        dir.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
struct DistillArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Continue a run from its last completed iteration
    #[arg(long)]
    resume: bool,
}

fn cmd_distill(args: &DistillArgs) -> Result<()> {
    let cfg = args.cfg.resolve()?;
    echo("configuration", &cfg)?;

    let data = distill::prepare_from_disk(&cfg)?;
    println!(
        "dataset {}: {} users, {} train / {} valid / {} test",
        cfg.dataset,
        data.dataset.records.len(),
        data.split.train.len(),
        data.split.valid.len(),
        data.split.test.len()
    );

    let report = distill::run_pipeline(&cfg, &data, args.resume)?;
    if let Some(adapt) = &report.adaptation {
        println!("adaptation: best val acc {:.4} at epoch {}", adapt.best_val_acc, adapt.best_epoch);
    }
    println!("iter  teacher_ep  teacher_val  student_val  converged");
    for rec in &report.iterations {
        println!(
            "{:<4}  {:<10}  {:<11.4}  {:<11.4}  {}",
            rec.iteration,
            rec.teacher_epochs_run,
            rec.teacher_val_acc,
            rec.student_val_acc,
            if rec.converged_after { "yes" } else { "no" }
        );
    }
    println!(
        "best student: val acc {:.4} ({}); test acc {:.4}, f1 {:.4}",
        report.best_student_val_acc,
        report.best_stage,
        report.student_test.accuracy,
        report.student_test.f1
    );
    println!("run directory: {}", report.run_dir.display());

    if report.converged {
        Ok(())
    } else {
        Err(Error::Training(format!(
            "loop did not converge within {} iterations; partial results in {}",
            cfg.distill.max_iterations,
            report.run_dir.display()
        )))
    }
}

#[derive(Args, Debug)]
struct InferArgs {
    /// Run directory of a finished training run
    #[arg(long)]
    run: PathBuf,
    /// JSONL file of user records to classify
    #[arg(long)]
    users: PathBuf,
    /// Output JSONL path (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(serde::Serialize)]
struct Prediction<'a> {
    user_id: &'a str,
    p_human: f64,
    p_bot: f64,
}

fn cmd_infer(args: &InferArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.run.join("config.toml"))?;
    echo("configuration", &cfg)?;

    let manifest = distill::read_manifest(&args.run.join("lm").join("best"), "student")?;
    if manifest["model"] != "student" {
        return Err(Error::Config(format!(
            "checkpoint manifests {:?}, not a student model",
            manifest["model"]
        )));
    }
    let student = distill::load_best_student(&args.run)?;
    let vocab = botdistill_core::serialize::Vocabulary::load(&args.run.join("vocab.json"))?;
    if vocab.fingerprint() != student.vocab_fingerprint {
        return Err(Error::Data(format!(
            "vocabulary fingerprint {:016x} does not match checkpoint {:016x}",
            vocab.fingerprint(),
            student.vocab_fingerprint
        )));
    }

    let file = std::fs::File::open(&args.users).map_err(|e| Error::io(&args.users, e))?;
    let mut records: Vec<UserRecord> = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&args.users, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: UserRecord = serde_json::from_str(&line).map_err(|e| {
            Error::Data(format!("{}:{}: {e}", args.users.display(), lineno + 1))
        })?;
        records.push(record);
    }
    println!("read {} records from {}", records.len(), args.users.display());

    let mut out: Box<dyn Write> = match &args.out {
        Some(path) => {
            Box::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?)
        }
        None => Box::new(std::io::stdout()),
    };
    for record in &records {
        let seq = serialize_user(record, &vocab, &cfg.serialize, Default::default());
        let p = student.predict(&seq)?;
        let row = Prediction { user_id: &record.user_id, p_human: p[0], p_bot: p[1] };
        let line = serde_json::to_string(&row).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| {
            Error::io(args.out.as_deref().unwrap_or_else(|| Path::new("stdout")), e)
        })?;
    }
    if let Some(path) = &args.out {
        println!("wrote {} predictions to {}", records.len(), path.display());
    }
    Ok(())
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Run directory of a finished training run
    #[arg(long)]
    run: PathBuf,
    /// Also compute teacher/student agreement (consistency.csv)
    #[arg(long)]
    consistency: bool,
    /// Override the data directory recorded in the run config
    #[arg(long)]
    data_dir: Option<String>,
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&args.run.join("config.toml"))?;
    if let Some(dir) = &args.data_dir {
        cfg.data_dir = dir.clone();
    }
    echo("configuration", &cfg)?;

    let data = distill::prepare_from_disk(&cfg)?;
    let student = distill::load_best_student(&args.run)?;
    let test_labels: Vec<usize> = data
        .split
        .test
        .iter()
        .map(|&i| data.dataset.label_of(i).expect("labeled").class_index())
        .collect();
    let student_probs = distill::student_bot_probs(&student, &data.seqs, &data.split.test)?;
    let mut rows =
        vec![("student_test".to_string(), eval::compute_metrics(&student_probs, &test_labels))];

    let teacher_probs = match distill::load_last_teacher(&args.run) {
        Ok((teacher, _)) => {
            let features = student.embed_all(&data.seqs)?;
            let logits = teacher.predict_logits(&features, data.view.as_ref())?;
            let probs: Vec<f64> = data
                .split
                .test
                .iter()
                .map(|&i| botdistill_core::nn::softmax(&logits.row(i).to_owned())[1])
                .collect();
            rows.push(("teacher_test".to_string(), eval::compute_metrics(&probs, &test_labels)));
            Some(probs)
        }
        Err(_) => None,
    };

    let metrics_path = args.run.join("metrics.csv");
    std::fs::write(&metrics_path, eval::metrics_csv(&rows))
        .map_err(|e| Error::io(&metrics_path, e))?;
    println!("wrote {}", metrics_path.display());
    for (name, m) in &rows {
        println!("{name}: acc {:.4}, f1 {:.4} (n = {})", m.accuracy, m.f1, m.n);
    }

    if args.consistency {
        let teacher_probs = teacher_probs.ok_or_else(|| {
            Error::Config("consistency needs a run with at least one completed iteration".into())
        })?;
        let c = eval::consistency_analysis(&teacher_probs, &student_probs);
        let path = args.run.join("consistency.csv");
        std::fs::write(&path, eval::consistency_csv(&c)).map_err(|e| Error::io(&path, e))?;
        println!("wrote {}; agreement {:.4}", path.display(), c.agreement);
    }
    Ok(())
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Sweep axis: labels or edges
    #[arg(long)]
    axis: String,
    /// Retention grid: start:end:step (inclusive) or comma list
    #[arg(long, default_value = "0.1:1.0:0.1")]
    grid: String,
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad grid number {s:?} in {spec:?}")))
    };
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("grid {spec:?} is not start:end:step")));
        }
        let (start, end, step) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
        if step <= 0.0 || end < start {
            return Err(Error::Config(format!("grid {spec:?} must ascend with positive step")));
        }
        let n = ((end - start) / step).round() as usize;
        let mut out: Vec<f64> = (0..=n).map(|i| start + i as f64 * step).collect();
        for v in &mut out {
            *v = (*v * 1e9).round() / 1e9; // tidy accumulated float error
        }
        out.retain(|&v| v <= end + 1e-9);
        Ok(out)
    } else {
        spec.split(',').map(parse).collect()
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let cfg = args.cfg.resolve()?;
    let axis: SweepAxis = args.axis.parse()?;
    let grid = parse_grid(&args.grid)?;
    echo("configuration", &cfg)?;
    println!("axis = {}, grid = {:?}", axis.as_str(), grid);

    let dir = Path::new(&cfg.data_dir).join(&cfg.dataset);
    let dataset = corpus::load_dataset(&dir, &cfg.dataset)?;
    let points = eval::data_efficiency_sweep(&cfg, &dataset, axis, &grid)?;

    let csv_path = Path::new(&cfg.runs_dir)
        .join(format!("{}_sweep_{}.csv", cfg.effective_run_name(), axis.as_str()));
    eval::write_sweep_csv(&csv_path, axis, &points)?;
    println!("wrote {}", csv_path.display());
    for p in &points {
        println!(
            "fraction {:.2}: test acc {:.4}, f1 {:.4}, {} iterations",
            p.fraction, p.test_accuracy, p.test_f1, p.iterations
        );
    }
    Ok(())
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Variants to run (comma-separable): no_teacher, no_student,
    /// teacher_as_mlp, no_metadata, no_description, no_tweets
    #[arg(long, value_delimiter = ',', required = true)]
    setting: Vec<String>,
}

fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    let cfg = args.cfg.resolve()?;
    echo("configuration", &cfg)?;

    let dir = Path::new(&cfg.data_dir).join(&cfg.dataset);
    let dataset = corpus::load_dataset(&dir, &cfg.dataset)?;

    let mut outcomes = Vec::new();
    for setting in &args.setting {
        let variant: AblationVariant = setting.parse()?;
        println!("running {}", variant.as_str());
        outcomes.push(eval::run_ablation(&cfg, &dataset, variant)?);
    }

    let csv_path = Path::new(&cfg.runs_dir)
        .join(format!("{}_ablation.csv", cfg.effective_run_name()));
    std::fs::write(&csv_path, eval::ablation_csv(&outcomes))
        .map_err(|e| Error::io(&csv_path, e))?;
    println!("wrote {}", csv_path.display());
    for o in &outcomes {
        println!(
            "{}: test acc {:.4}, f1 {:.4} ({} iterations)",
            o.variant.as_str(),
            o.test.accuracy,
            o.test.f1,
            o.iterations
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Synth(args) => cmd_synth(args),
        Cmd::Distill(args) => cmd_distill(args),
        Cmd::Infer(args) => cmd_infer(args),
        Cmd::Eval(args) => cmd_eval(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::Ablate(args) => cmd_ablate(args),
    }
}

fn main() -> ExitCode {
    // usage mistakes are configuration errors and share their exit code
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
