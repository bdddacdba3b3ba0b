//! The alternating training loop and its on-disk run layout.
//!
//! A run directory looks like:
//!
//! ```text
//! runs/<name>/
//!   config.toml                  exact configuration the run used
//!   vocab.json                   token table (fingerprint pinned in checkpoints)
//!   split_<seed>.json            train/valid/test assignment
//!   adaptation.json              hard-label warmup report (unless skipped)
//!   iterations.jsonl             one record per completed iteration
//!   soft_labels_iter_<k>.jsonl   teacher targets the student saw at iteration k
//!   state.json                   loop bookkeeping; enables --resume
//!   lm/adapted/  lm/iter_<k>/  lm/best/
//!   teacher/iter_<k>/
//! ```
//!
//! Each iteration refreshes user embeddings from the current student,
//! trains the teacher on them (it persists across iterations), softens its
//! logits into distillation targets, then trains the student against the
//! mixed hard/soft objective. Both models keep the best-scoring parameters
//! seen in a round, the incumbent included, so a round never ends worse
//! than it began. The loop stops once neither side improves beyond the
//! tolerance (after a minimum number of iterations) or the budget runs out.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::corpus::{self, Dataset, SplitAssignment};
use crate::error::{Error, Result};
use crate::eval::{self, Metrics};
use crate::serialize::{
    build_vocabulary, serialize_user, user_token_strings, SectionDrop, TextualSequence, Vocabulary,
};
use crate::student::{DistillExample, Student};
use crate::teacher::{make_soft_labels, GraphView, SoftLabelTable, Teacher};
use crate::{par, rng};

// --- checkpoint files ---------------------------------------------------------

/// Serializes `model` to `<dir>/<label>.json` with a sibling
/// `<label>.manifest.json`, via a temp file and rename so readers never see
/// a half-written checkpoint.
pub fn write_checkpoint<T: Serialize>(
    dir: &Path,
    label: &str,
    manifest: &serde_json::Value,
    model: &T,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write_atomic = |name: String, bytes: Vec<u8>| -> Result<()> {
        let tmp = dir.join(format!("{name}.tmp"));
        let dest = dir.join(name);
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &dest).map_err(|e| Error::io(&dest, e))
    };
    let state = serde_json::to_vec(model).map_err(|e| Error::Data(e.to_string()))?;
    write_atomic(format!("{label}.json"), state)?;
    let mf = serde_json::to_vec_pretty(manifest).map_err(|e| Error::Data(e.to_string()))?;
    write_atomic(format!("{label}.manifest.json"), mf)
}

pub fn read_checkpoint<T: DeserializeOwned>(dir: &Path, label: &str) -> Result<T> {
    let path = dir.join(format!("{label}.json"));
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Error::Data(format!("{}: corrupt checkpoint: {e}", path.display())))
}

pub fn read_manifest(dir: &Path, label: &str) -> Result<serde_json::Value> {
    let path = dir.join(format!("{label}.manifest.json"));
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Error::Data(format!("{}: corrupt manifest: {e}", path.display())))
}

// --- prepared inputs ----------------------------------------------------------

/// Everything the loop needs, loaded and rendered once.
pub struct PipelineData {
    pub dataset: Dataset,
    pub split: SplitAssignment,
    pub vocab: Vocabulary,
    pub seqs: Vec<TextualSequence>,
    pub view: Option<GraphView>,
}

impl PipelineData {
    /// Class index of node `i`; only call for labeled nodes.
    fn class(&self, i: usize) -> usize {
        self.dataset.label_of(i).expect("labeled node").class_index()
    }

    fn labeled_pairs(&self, nodes: &[usize]) -> Vec<(usize, usize)> {
        nodes.iter().map(|&i| (i, self.class(i))).collect()
    }
}

/// Builds pipeline inputs from an in-memory dataset: splits the labeled
/// population, builds the vocabulary over the full corpus, renders every
/// account.
pub fn prepare(cfg: &RunConfig, dataset: Dataset) -> Result<PipelineData> {
    cfg.validate()?;
    dataset.validate()?;
    if cfg.gnn.kind.needs_graph() && dataset.graph.is_none() {
        return Err(Error::Config(format!(
            "teacher kind {} requires a graph but dataset {} has no edges",
            cfg.gnn.kind.as_str(),
            dataset.name
        )));
    }
    let split = corpus::split_dataset(&dataset, cfg.split.ratios, cfg.seed)?;
    let token_lists: Vec<Vec<String>> = par::map_indexed(dataset.records.len(), |i| {
        user_token_strings(&dataset.records[i], SectionDrop::default())
    });
    let vocab = build_vocabulary(token_lists, cfg.serialize.min_count);
    let seqs = render_all(&dataset, &vocab, cfg, SectionDrop::default());
    let view = dataset.graph.as_ref().map(|g| GraphView::new(g, dataset.records.len()));
    Ok(PipelineData { dataset, split, vocab, seqs, view })
}

/// Like [`prepare`] but loading the dataset from `cfg.data_dir/<dataset>`.
pub fn prepare_from_disk(cfg: &RunConfig) -> Result<PipelineData> {
    let dir = Path::new(&cfg.data_dir).join(&cfg.dataset);
    let dataset = corpus::load_dataset(&dir, &cfg.dataset)?;
    prepare(cfg, dataset)
}

pub fn render_all(
    dataset: &Dataset,
    vocab: &Vocabulary,
    cfg: &RunConfig,
    drop: SectionDrop,
) -> Vec<TextualSequence> {
    par::map_indexed(dataset.records.len(), |i| {
        serialize_user(&dataset.records[i], vocab, &cfg.serialize, drop)
    })
}

// --- evaluation helpers ---------------------------------------------------------

/// Fraction of `nodes` whose predicted class matches the label.
pub fn student_accuracy(student: &Student, data: &PipelineData, nodes: &[usize]) -> Result<f64> {
    let hits = par::map_indexed(nodes.len(), |k| {
        let i = nodes[k];
        let p = student.predict(&data.seqs[i])?;
        Ok(usize::from((p[1] >= p[0]) == (data.class(i) == 1)))
    })
    .into_iter()
    .collect::<Result<Vec<usize>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / nodes.len().max(1) as f64)
}

fn teacher_accuracy(logits: &Array2<f64>, pairs: &[(usize, usize)]) -> f64 {
    let hits = pairs
        .iter()
        .filter(|&&(i, y)| usize::from(logits[[i, 1]] >= logits[[i, 0]]) == y)
        .count();
    hits as f64 / pairs.len().max(1) as f64
}

/// Student bot probabilities over `nodes` (graph never consulted).
pub fn student_bot_probs(
    student: &Student,
    seqs: &[TextualSequence],
    nodes: &[usize],
) -> Result<Vec<f64>> {
    par::map_indexed(nodes.len(), |k| Ok(student.predict(&seqs[nodes[k]])?[1]))
        .into_iter()
        .collect()
}

// --- stage reports --------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageReport {
    pub epochs_run: usize,
    pub best_val_acc: f64,
    /// Epoch where the best score appeared; 0 means the incumbent won.
    pub best_epoch: usize,
    pub train_losses: Vec<f64>,
    pub val_accs: Vec<f64>,
}

/// One record in `iterations.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub teacher_epochs_run: usize,
    pub teacher_val_acc: f64,
    pub teacher_train_loss: f64,
    pub student_val_acc: f64,
    pub student_train_loss: f64,
    pub converged_after: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunState {
    adaptation_done: bool,
    completed_iterations: usize,
    prev_teacher_val: f64,
    prev_student_val: f64,
    global_best_val: f64,
    global_best_stage: String,
    converged: bool,
}

impl Default for RunState {
    fn default() -> Self {
        RunState {
            adaptation_done: false,
            completed_iterations: 0,
            prev_teacher_val: f64::NEG_INFINITY,
            prev_student_val: f64::NEG_INFINITY,
            global_best_val: f64::NEG_INFINITY,
            global_best_stage: String::new(),
            converged: false,
        }
    }
}

/// Final pipeline outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub run_dir: PathBuf,
    pub adaptation: Option<StageReport>,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    pub best_student_val_acc: f64,
    /// Stage that produced the returned student: `adaptation` or `iter_<k>`.
    pub best_stage: String,
    pub student_test: Metrics,
    pub teacher_test: Option<Metrics>,
}

/// Convergence rule: at least `min_iterations` done and neither side
/// improved its best validation accuracy by more than `tolerance`.
pub fn check_convergence(
    completed: usize,
    min_iterations: usize,
    tolerance: f64,
    prev_teacher: f64,
    teacher: f64,
    prev_student: f64,
    student: f64,
) -> bool {
    let teacher_improved = teacher > prev_teacher + tolerance;
    let student_improved = student > prev_student + tolerance;
    completed >= min_iterations && !teacher_improved && !student_improved
}

// --- training rounds -------------------------------------------------------------

/// Hard-label training with best-including-incumbent selection. Used for
/// the adaptation stage and for teacher-free baselines. Rolls the student
/// back to the best epoch before returning.
pub fn hard_train_student(
    student: &mut Student,
    data: &PipelineData,
    epochs: usize,
    master_seed: u64,
    tag: &str,
) -> Result<StageReport> {
    let mut best = student.clone();
    let mut best_val = student_accuracy(student, data, &data.split.valid)?;
    let mut best_epoch = 0usize;
    let mut train_losses = Vec::new();
    let mut val_accs = Vec::new();

    let mut dropout = rng::stream(master_seed, &format!("{tag}_dropout"), 0);
    for epoch in 0..epochs {
        let mut order = data.split.train.clone();
        order.shuffle(&mut rng::stream(master_seed, &format!("{tag}_shuffle"), epoch as u64));
        let mut loss = 0.0;
        for chunk in order.chunks(student.cfg.batch_size) {
            let batch: Vec<(&TextualSequence, usize)> =
                chunk.iter().map(|&i| (&data.seqs[i], data.class(i))).collect();
            loss += student.finetune_step(&batch, &mut dropout)?;
        }
        let val = student_accuracy(student, data, &data.split.valid)?;
        train_losses.push(loss);
        val_accs.push(val);
        // ties keep the newer parameters: on a validation plateau the round
        // must accumulate training instead of discarding it
        if val >= best_val {
            best_val = val;
            best = student.clone();
            best_epoch = epoch + 1;
        }
    }
    *student = best;
    Ok(StageReport { epochs_run: epochs, best_val_acc: best_val, best_epoch, train_losses, val_accs })
}

/// One teacher round over frozen features: up to `cfg.gnn.epochs` steps
/// with early stopping, best-including-incumbent rollback.
pub fn teacher_round(
    teacher: &mut Teacher,
    features: &Array2<f64>,
    view: Option<&GraphView>,
    data: &PipelineData,
    master_seed: u64,
    iteration: usize,
) -> Result<StageReport> {
    let train_pairs = data.labeled_pairs(&data.split.train);
    let valid_pairs = data.labeled_pairs(&data.split.valid);
    if train_pairs.is_empty() {
        return Err(Error::Training("teacher training set is empty".into()));
    }

    let epochs = teacher.cfg.epochs;
    let patience = teacher.cfg.patience;
    let mut best = teacher.clone();
    let mut best_val = teacher_accuracy(&teacher.predict_logits(features, view)?, &valid_pairs);
    let mut best_epoch = 0usize;
    let mut bad = 0usize;
    let mut train_losses = Vec::new();
    let mut val_accs = Vec::new();

    let mut dropout = rng::stream(master_seed, "teacher_dropout", iteration as u64);
    for epoch in 0..epochs {
        let loss = teacher.train_step(features, view, &train_pairs, &mut dropout)?;
        let val = teacher_accuracy(&teacher.predict_logits(features, view)?, &valid_pairs);
        train_losses.push(loss);
        val_accs.push(val);
        if val > best_val {
            best_val = val;
            best = teacher.clone();
            best_epoch = epoch + 1;
            bad = 0;
        } else {
            bad += 1;
            if bad >= patience {
                break;
            }
        }
    }
    let epochs_run = train_losses.len();
    *teacher = best;
    Ok(StageReport { epochs_run, best_val_acc: best_val, best_epoch, train_losses, val_accs })
}

/// One student round against fixed soft labels, mixing the hard term over
/// training nodes with the soft term over the whole distillation set.
pub fn student_round(
    student: &mut Student,
    data: &PipelineData,
    soft: &SoftLabelTable,
    alpha: f64,
    epochs: usize,
    master_seed: u64,
    iteration: usize,
) -> Result<StageReport> {
    let soft_map = soft.lookup();
    let targets: Vec<usize> = soft.rows.iter().map(|&(i, _)| i).collect();
    let train_set: std::collections::HashSet<usize> = data.split.train.iter().copied().collect();

    let mut best = student.clone();
    let mut best_val = student_accuracy(student, data, &data.split.valid)?;
    let mut best_epoch = 0usize;
    let mut train_losses = Vec::new();
    let mut val_accs = Vec::new();

    let mut dropout = rng::stream(master_seed, "student_dropout", iteration as u64);
    for epoch in 0..epochs {
        let mut order = targets.clone();
        order.shuffle(&mut rng::stream(
            master_seed,
            &format!("student_shuffle_i{iteration}"),
            epoch as u64,
        ));
        let mut loss = 0.0;
        for chunk in order.chunks(student.cfg.batch_size) {
            let batch: Vec<DistillExample<'_>> = chunk
                .iter()
                .map(|&i| DistillExample {
                    seq: &data.seqs[i],
                    hard: train_set.contains(&i).then(|| data.class(i)),
                    soft: Some(soft_map[&i]),
                })
                .collect();
            loss += student.distill_step(&batch, alpha, &mut dropout)?;
        }
        let val = student_accuracy(student, data, &data.split.valid)?;
        train_losses.push(loss);
        val_accs.push(val);
        // same tie rule as hard training: plateaus keep the newer state
        if val >= best_val {
            best_val = val;
            best = student.clone();
            best_epoch = epoch + 1;
        }
    }
    *student = best;
    Ok(StageReport { epochs_run: epochs, best_val_acc: best_val, best_epoch, train_losses, val_accs })
}

// --- the full loop ----------------------------------------------------------------

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn write_iterations(path: &Path, records: &[IterationRecord]) -> Result<()> {
    let mut out = Vec::new();
    for rec in records {
        let line = serde_json::to_string(rec).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(out, "{line}").expect("vec write");
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, out).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_iterations(path: &Path) -> Result<Vec<IterationRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
        })
        .collect()
}

/// Runs the full pipeline. With `resume` the run directory must already
/// hold a `state.json`; training continues after the last completed
/// iteration and reproduces the trajectory an uninterrupted run would have
/// taken (all randomness is keyed by iteration and epoch).
pub fn run_pipeline(cfg: &RunConfig, data: &PipelineData, resume: bool) -> Result<RunReport> {
    cfg.validate()?;
    let run_dir = cfg.run_dir();
    let state_path = run_dir.join("state.json");
    let iter_path = run_dir.join("iterations.jsonl");

    let mut state;
    let mut records: Vec<IterationRecord>;
    let mut adaptation: Option<StageReport>;
    let mut student;
    let mut teacher;
    let mut best_student;

    if resume {
        if !state_path.exists() {
            return Err(Error::Config(format!(
                "cannot resume: {} does not exist",
                state_path.display()
            )));
        }
        state = read_json::<RunState>(&state_path)?;
        records = if iter_path.exists() { read_iterations(&iter_path)? } else { Vec::new() };
        records.truncate(state.completed_iterations);
        adaptation = if state.adaptation_done {
            Some(read_json(&run_dir.join("adaptation.json"))?)
        } else {
            None
        };
        let student_dir = if state.completed_iterations > 0 {
            run_dir.join("lm").join(format!("iter_{}", state.completed_iterations))
        } else {
            run_dir.join("lm").join("adapted")
        };
        student = if state.adaptation_done || state.completed_iterations > 0 {
            Student::load(&student_dir)?
        } else {
            fresh_student(cfg, data)?
        };
        teacher = if state.completed_iterations > 0 {
            Teacher::load(&run_dir.join("teacher").join(format!("iter_{}", state.completed_iterations)))?
        } else {
            fresh_teacher(cfg, data)?
        };
        best_student = if state.global_best_stage.is_empty() {
            student.clone()
        } else {
            Student::load(&run_dir.join("lm").join("best"))?
        };
    } else {
        fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
        cfg.save(&run_dir.join("config.toml"))?;
        data.vocab.save(&run_dir.join("vocab.json"))?;
        corpus::save_split(&data.split, &run_dir)?;
        state = RunState::default();
        records = Vec::new();
        adaptation = None;
        student = fresh_student(cfg, data)?;
        teacher = fresh_teacher(cfg, data)?;
        best_student = student.clone();
    }

    if student.vocab_fingerprint != data.vocab.fingerprint() {
        return Err(Error::Data(format!(
            "vocabulary fingerprint mismatch: student has {:016x}, corpus renders {:016x}",
            student.vocab_fingerprint,
            data.vocab.fingerprint()
        )));
    }

    // hard-label warmup on the target corpus
    if !cfg.distill.skip_adaptation && !state.adaptation_done {
        let report =
            hard_train_student(&mut student, data, cfg.lm.finetune_epochs, cfg.seed, "adapt")?;
        write_json(&run_dir.join("adaptation.json"), &report)?;
        student.save(&run_dir.join("lm").join("adapted"))?;
        state.adaptation_done = true;
        state.prev_student_val = report.best_val_acc;
        if report.best_val_acc > state.global_best_val {
            state.global_best_val = report.best_val_acc;
            state.global_best_stage = "adaptation".into();
            best_student = student.clone();
            best_student.save(&run_dir.join("lm").join("best"))?;
        }
        adaptation = Some(report);
        write_json(&state_path, &state)?;
    }

    let soft_targets = data.split.train_valid();
    while state.completed_iterations < cfg.distill.max_iterations && !state.converged {
        let k = state.completed_iterations + 1;

        // teacher sees the current student's view of every account
        let features = student.embed_all(&data.seqs)?;
        let t_report =
            teacher_round(&mut teacher, &features, data.view.as_ref(), data, cfg.seed, k)?;

        let logits = teacher.predict_logits(&features, data.view.as_ref())?;
        let soft = make_soft_labels(&logits, &soft_targets, cfg.kd.temperature)?;
        let ids: Vec<String> =
            data.dataset.records.iter().map(|r| r.user_id.clone()).collect();
        soft.save_jsonl(&run_dir.join(format!("soft_labels_iter_{k}.jsonl")), &ids)?;

        let s_report = student_round(
            &mut student,
            data,
            &soft,
            cfg.kd.alpha,
            cfg.distill.student_epochs,
            cfg.seed,
            k,
        )?;

        let converged_after = check_convergence(
            k,
            cfg.distill.min_iterations,
            cfg.distill.tolerance,
            state.prev_teacher_val,
            t_report.best_val_acc,
            state.prev_student_val,
            s_report.best_val_acc,
        );

        records.push(IterationRecord {
            iteration: k,
            teacher_epochs_run: t_report.epochs_run,
            teacher_val_acc: t_report.best_val_acc,
            teacher_train_loss: t_report.train_losses.last().copied().unwrap_or(f64::NAN),
            student_val_acc: s_report.best_val_acc,
            student_train_loss: s_report.train_losses.last().copied().unwrap_or(f64::NAN),
            converged_after,
        });

        teacher.save(&run_dir.join("teacher").join(format!("iter_{k}")))?;
        student.save(&run_dir.join("lm").join(format!("iter_{k}")))?;

        state.prev_teacher_val = t_report.best_val_acc;
        state.prev_student_val = s_report.best_val_acc;
        state.completed_iterations = k;
        state.converged = converged_after;
        if s_report.best_val_acc > state.global_best_val {
            state.global_best_val = s_report.best_val_acc;
            state.global_best_stage = format!("iter_{k}");
            best_student = student.clone();
            best_student.save(&run_dir.join("lm").join("best"))?;
        }
        write_iterations(&iter_path, &records)?;
        write_json(&state_path, &state)?;
    }

    // graph-less test evaluation with the best student seen anywhere
    let test_probs = student_bot_probs(&best_student, &data.seqs, &data.split.test)?;
    let test_labels: Vec<usize> = data.split.test.iter().map(|&i| data.class(i)).collect();
    let student_test = eval::compute_metrics(&test_probs, &test_labels);

    let teacher_test = if state.completed_iterations > 0 {
        let features = best_student.embed_all(&data.seqs)?;
        let logits = teacher.predict_logits(&features, data.view.as_ref())?;
        let probs: Vec<f64> = data
            .split
            .test
            .iter()
            .map(|&i| {
                let row = logits.row(i).to_owned();
                let p = crate::nn::softmax(&row);
                p[1]
            })
            .collect();
        Some(eval::compute_metrics(&probs, &test_labels))
    } else {
        None
    };

    Ok(RunReport {
        run_dir,
        adaptation,
        iterations: records,
        converged: state.converged,
        best_student_val_acc: state.global_best_val,
        best_stage: state.global_best_stage.clone(),
        student_test,
        teacher_test,
    })
}

fn fresh_student(cfg: &RunConfig, data: &PipelineData) -> Result<Student> {
    Student::new(
        data.vocab.len(),
        data.vocab.fingerprint(),
        cfg.lm.clone(),
        rng::subseed(cfg.seed, "student", 0),
    )
}

fn fresh_teacher(cfg: &RunConfig, data: &PipelineData) -> Result<Teacher> {
    let relations = data
        .dataset
        .graph
        .as_ref()
        .map(|g| g.relation_names().into_iter().map(String::from).collect())
        .unwrap_or_default();
    Teacher::new(
        cfg.gnn.clone(),
        cfg.lm.embed_dim,
        relations,
        rng::subseed(cfg.seed, "teacher", 0),
    )
}

/// Loads the best student a finished run produced.
pub fn load_best_student(run_dir: &Path) -> Result<Student> {
    Student::load(&run_dir.join("lm").join("best"))
}

/// Loads the teacher from the last completed iteration of a run.
pub fn load_last_teacher(run_dir: &Path) -> Result<(Teacher, usize)> {
    let state: RunState = read_json(&run_dir.join("state.json"))?;
    if state.completed_iterations == 0 {
        return Err(Error::Config(format!(
            "{}: run has no completed iterations, so no teacher exists",
            run_dir.display()
        )));
    }
    let dir = run_dir.join("teacher").join(format!("iter_{}", state.completed_iterations));
    Ok((Teacher::load(&dir)?, state.completed_iterations))
}

/// Reads back the iteration records a run wrote.
pub fn load_iterations(run_dir: &Path) -> Result<Vec<IterationRecord>> {
    read_iterations(&run_dir.join("iterations.jsonl"))
}
