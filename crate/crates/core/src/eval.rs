//! Metrics, teacher/student agreement, data-efficiency sweeps, ablations.
//!
//! Predictions are thresholded at `p_bot >= 0.5`, ties landing on the bot
//! side. F1 treats bot as the positive class and degenerate 0/0 ratios as
//! zero rather than NaN.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::corpus::{self, Dataset};
use crate::distill::{self, RunReport};
use crate::error::{Error, Result};
use crate::serialize::SectionDrop;
use crate::student::Student;
use crate::teacher::TeacherKind;

pub fn predict_bot(p_bot: f64) -> bool {
    p_bot >= 0.5
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    /// Bot-positive binary F1.
    pub f1: f64,
    /// Mean of the bot-positive and human-positive F1 scores.
    pub f1_macro: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

/// Confusion-matrix metrics from bot probabilities and class indices
/// (0 human, 1 bot).
pub fn compute_metrics(p_bot: &[f64], labels: &[usize]) -> Metrics {
    assert_eq!(p_bot.len(), labels.len(), "probability/label length mismatch");
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &y) in p_bot.iter().zip(labels) {
        match (predict_bot(p), y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let n = p_bot.len();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 =
        if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    // human-positive side for the macro average
    let prec_h = ratio(tn, tn + fn_);
    let rec_h = ratio(tn, tn + fp);
    let f1_h = if prec_h + rec_h == 0.0 { 0.0 } else { 2.0 * prec_h * rec_h / (prec_h + rec_h) };
    Metrics {
        n,
        accuracy: ratio(tp + tn, n),
        precision,
        recall,
        f1,
        f1_macro: (f1 + f1_h) / 2.0,
        tp,
        fp,
        tn,
        fn_,
    }
}

pub fn metrics_csv(rows: &[(String, Metrics)]) -> String {
    let mut out = String::from("split,n,accuracy,precision,recall,f1,f1_macro,tp,fp,tn,fn\n");
    for (name, m) in rows {
        writeln!(
            out,
            "{name},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{}",
            m.n, m.accuracy, m.precision, m.recall, m.f1, m.f1_macro, m.tp, m.fp, m.tn, m.fn_
        )
        .expect("string write");
    }
    out
}

// --- teacher/student agreement ------------------------------------------------

/// Quadrant counts of thresholded teacher and student predictions over the
/// same nodes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Consistency {
    pub n: usize,
    /// Fraction predicted on the same side by both models.
    pub agreement: f64,
    pub both_bot: usize,
    pub both_human: usize,
    pub teacher_bot_only: usize,
    pub student_bot_only: usize,
}

pub fn consistency_analysis(teacher_p: &[f64], student_p: &[f64]) -> Consistency {
    assert_eq!(teacher_p.len(), student_p.len(), "probability length mismatch");
    let (mut bb, mut hh, mut tb, mut sb) = (0usize, 0usize, 0usize, 0usize);
    for (&t, &s) in teacher_p.iter().zip(student_p) {
        match (predict_bot(t), predict_bot(s)) {
            (true, true) => bb += 1,
            (false, false) => hh += 1,
            (true, false) => tb += 1,
            (false, true) => sb += 1,
        }
    }
    let n = teacher_p.len();
    Consistency {
        n,
        agreement: if n == 0 { 0.0 } else { (bb + hh) as f64 / n as f64 },
        both_bot: bb,
        both_human: hh,
        teacher_bot_only: tb,
        student_bot_only: sb,
    }
}

pub fn consistency_csv(c: &Consistency) -> String {
    format!(
        "n,agreement,both_bot,both_human,teacher_bot_only,student_bot_only\n{},{:.6},{},{},{},{}\n",
        c.n, c.agreement, c.both_bot, c.both_human, c.teacher_bot_only, c.student_bot_only
    )
}

// --- data-efficiency sweeps -----------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Shrink the hard-labeled training set.
    Labels,
    /// Shrink every relation's edge set.
    Edges,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<SweepAxis> {
        match s {
            "labels" => Ok(SweepAxis::Labels),
            "edges" => Ok(SweepAxis::Edges),
            other => Err(Error::Config(format!("unknown sweep axis {other}; expected labels or edges"))),
        }
    }
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Labels => "labels",
            SweepAxis::Edges => "edges",
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SweepPoint {
    pub fraction: f64,
    pub train_size: usize,
    pub edge_count: usize,
    pub iterations: usize,
    pub val_acc: f64,
    pub test_accuracy: f64,
    pub test_f1: f64,
    /// Teacher test accuracy; absent when the loop never ran an iteration.
    pub teacher_accuracy: Option<f64>,
}

/// Reruns the pipeline at each retention fraction along one axis. Every
/// point gets its own run directory under the configured root.
pub fn data_efficiency_sweep(
    base: &RunConfig,
    dataset: &Dataset,
    axis: SweepAxis,
    fractions: &[f64],
) -> Result<Vec<SweepPoint>> {
    if fractions.is_empty() {
        return Err(Error::Config("sweep needs at least one fraction".into()));
    }
    if axis == SweepAxis::Edges && dataset.graph.is_none() {
        return Err(Error::Config("edge sweep requires a dataset with a graph".into()));
    }
    let mut points = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        if !(0.0..=1.0).contains(&fraction) || fraction == 0.0 {
            return Err(Error::Config(format!("sweep fraction {fraction} outside (0, 1]")));
        }
        let mut cfg = base.clone();
        cfg.run_name =
            format!("{}_{}_{:03}", base.effective_run_name(), axis.as_str(), (fraction * 100.0).round() as u32);

        let (data, train_size, edge_count) = match axis {
            SweepAxis::Labels => {
                let mut data = distill::prepare(&cfg, dataset.clone())?;
                data.split = corpus::trim_labels(&data.split, fraction, cfg.seed)?;
                let train_size = data.split.train.len();
                let edges = data.dataset.graph.as_ref().map_or(0, |g| g.edge_count());
                (data, train_size, edges)
            }
            SweepAxis::Edges => {
                let mut trimmed = dataset.clone();
                let graph = trimmed.graph.take().expect("checked above");
                trimmed.graph = Some(corpus::trim_edges(&graph, fraction, cfg.seed)?);
                let edges = trimmed.graph.as_ref().map_or(0, |g| g.edge_count());
                let data = distill::prepare(&cfg, trimmed)?;
                let train_size = data.split.train.len();
                (data, train_size, edges)
            }
        };

        let report = distill::run_pipeline(&cfg, &data, false)?;
        points.push(SweepPoint {
            fraction,
            train_size,
            edge_count,
            iterations: report.iterations.len(),
            val_acc: report.best_student_val_acc,
            test_accuracy: report.student_test.accuracy,
            test_f1: report.student_test.f1,
            teacher_accuracy: report.teacher_test.map(|m| m.accuracy),
        });
    }
    Ok(points)
}

pub fn sweep_csv(axis: SweepAxis, points: &[SweepPoint]) -> String {
    let mut out = String::from(
        "axis,fraction,train_size,edge_count,iterations,val_acc,test_accuracy,test_f1,teacher_accuracy\n",
    );
    for p in points {
        let teacher = p.teacher_accuracy.map_or(String::new(), |a| format!("{a:.6}"));
        writeln!(
            out,
            "{},{:.4},{},{},{},{:.6},{:.6},{:.6},{teacher}",
            axis.as_str(),
            p.fraction,
            p.train_size,
            p.edge_count,
            p.iterations,
            p.val_acc,
            p.test_accuracy,
            p.test_f1
        )
        .expect("string write");
    }
    out
}

pub fn write_sweep_csv(path: &Path, axis: SweepAxis, points: &[SweepPoint]) -> Result<()> {
    std::fs::write(path, sweep_csv(axis, points)).map_err(|e| Error::io(path, e))
}

// --- ablations --------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    /// Hard-label training only; no teacher, no soft targets.
    NoTeacher,
    /// Teacher trained once on the untrained student's embeddings.
    NoStudent,
    /// Full loop with the teacher downgraded to an MLP.
    TeacherAsMlp,
    NoMetadata,
    NoDescription,
    NoTweets,
}

impl std::str::FromStr for AblationVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<AblationVariant> {
        match s {
            "no_teacher" => Ok(AblationVariant::NoTeacher),
            "no_student" => Ok(AblationVariant::NoStudent),
            "teacher_as_mlp" => Ok(AblationVariant::TeacherAsMlp),
            "no_metadata" => Ok(AblationVariant::NoMetadata),
            "no_description" => Ok(AblationVariant::NoDescription),
            "no_tweets" => Ok(AblationVariant::NoTweets),
            other => Err(Error::Config(format!("unknown ablation variant {other}"))),
        }
    }
}

impl AblationVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            AblationVariant::NoTeacher => "no_teacher",
            AblationVariant::NoStudent => "no_student",
            AblationVariant::TeacherAsMlp => "teacher_as_mlp",
            AblationVariant::NoMetadata => "no_metadata",
            AblationVariant::NoDescription => "no_description",
            AblationVariant::NoTweets => "no_tweets",
        }
    }

    fn section_drop(self) -> Option<SectionDrop> {
        match self {
            AblationVariant::NoMetadata => Some(SectionDrop { metadata: true, ..Default::default() }),
            AblationVariant::NoDescription => {
                Some(SectionDrop { description: true, ..Default::default() })
            }
            AblationVariant::NoTweets => Some(SectionDrop { tweets: true, ..Default::default() }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationOutcome {
    pub variant: AblationVariant,
    pub test: Metrics,
    pub val_acc: f64,
    pub iterations: usize,
}

/// Runs one ablation variant. Settings that cannot change anything are
/// rejected: downgrading an MLP teacher, or dropping a section every
/// record already lacks.
pub fn run_ablation(
    base: &RunConfig,
    dataset: &Dataset,
    variant: AblationVariant,
) -> Result<AblationOutcome> {
    let mut cfg = base.clone();
    cfg.run_name = format!("{}_{}", base.effective_run_name(), variant.as_str());

    if let Some(drop) = variant.section_drop() {
        let present = dataset.records.iter().any(|r| match variant {
            AblationVariant::NoMetadata => !r.metadata.is_empty(),
            AblationVariant::NoDescription => !r.description.is_empty(),
            AblationVariant::NoTweets => !r.tweets.is_empty(),
            _ => unreachable!(),
        });
        if !present {
            return Err(Error::Config(format!(
                "ablation {} is inapplicable: no record carries that section",
                variant.as_str()
            )));
        }
        let mut data = distill::prepare(&cfg, dataset.clone())?;
        data.seqs = distill::render_all(&data.dataset, &data.vocab, &cfg, drop);
        let report = distill::run_pipeline(&cfg, &data, false)?;
        return Ok(outcome(variant, &report));
    }

    match variant {
        AblationVariant::NoTeacher => {
            // same epoch budget the full loop would grant the student
            let epochs = cfg.lm.finetune_epochs
                + cfg.distill.max_iterations * cfg.distill.student_epochs;
            let data = distill::prepare(&cfg, dataset.clone())?;
            let mut student = Student::new(
                data.vocab.len(),
                data.vocab.fingerprint(),
                cfg.lm.clone(),
                crate::rng::subseed(cfg.seed, "student", 0),
            )?;
            let stage = distill::hard_train_student(&mut student, &data, epochs, cfg.seed, "adapt")?;
            let probs = distill::student_bot_probs(&student, &data.seqs, &data.split.test)?;
            let labels: Vec<usize> = data
                .split
                .test
                .iter()
                .map(|&i| data.dataset.label_of(i).expect("labeled").class_index())
                .collect();
            Ok(AblationOutcome {
                variant,
                test: compute_metrics(&probs, &labels),
                val_acc: stage.best_val_acc,
                iterations: 0,
            })
        }
        AblationVariant::NoStudent => {
            let data = distill::prepare(&cfg, dataset.clone())?;
            let student = Student::new(
                data.vocab.len(),
                data.vocab.fingerprint(),
                cfg.lm.clone(),
                crate::rng::subseed(cfg.seed, "student", 0),
            )?;
            let mut teacher = crate::teacher::Teacher::new(
                cfg.gnn.clone(),
                cfg.lm.embed_dim,
                data.dataset
                    .graph
                    .as_ref()
                    .map(|g| g.relation_names().into_iter().map(String::from).collect())
                    .unwrap_or_default(),
                crate::rng::subseed(cfg.seed, "teacher", 0),
            )?;
            let features = student.embed_all(&data.seqs)?;
            let stage =
                distill::teacher_round(&mut teacher, &features, data.view.as_ref(), &data, cfg.seed, 1)?;
            let logits = teacher.predict_logits(&features, data.view.as_ref())?;
            let probs: Vec<f64> = data
                .split
                .test
                .iter()
                .map(|&i| {
                    let row = logits.row(i).to_owned();
                    crate::nn::softmax(&row)[1]
                })
                .collect();
            let labels: Vec<usize> = data
                .split
                .test
                .iter()
                .map(|&i| data.dataset.label_of(i).expect("labeled").class_index())
                .collect();
            Ok(AblationOutcome {
                variant,
                test: compute_metrics(&probs, &labels),
                val_acc: stage.best_val_acc,
                iterations: 0,
            })
        }
        AblationVariant::TeacherAsMlp => {
            if cfg.gnn.kind == TeacherKind::Mlp {
                return Err(Error::Config(
                    "teacher_as_mlp is inapplicable: the teacher is already an mlp".into(),
                ));
            }
            cfg.gnn.kind = TeacherKind::Mlp;
            let data = distill::prepare(&cfg, dataset.clone())?;
            let report = distill::run_pipeline(&cfg, &data, false)?;
            Ok(outcome(variant, &report))
        }
        _ => unreachable!("section variants handled above"),
    }
}

fn outcome(variant: AblationVariant, report: &RunReport) -> AblationOutcome {
    AblationOutcome {
        variant,
        test: report.student_test,
        val_acc: report.best_student_val_acc,
        iterations: report.iterations.len(),
    }
}

pub fn ablation_csv(outcomes: &[AblationOutcome]) -> String {
    let mut out = String::from("variant,iterations,val_acc,test_accuracy,test_f1\n");
    for o in outcomes {
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6}",
            o.variant.as_str(),
            o.iterations,
            o.val_acc,
            o.test.accuracy,
            o.test.f1
        )
        .expect("string write");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_matrix_hand_case() {
        let p = [0.9, 0.4, 0.6, 0.1];
        let y = [1, 1, 0, 0];
        let m = compute_metrics(&p, &y);
        assert_eq!((m.tp, m.fn_, m.fp, m.tn), (1, 1, 1, 1));
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.precision, 0.5);
        assert_eq!(m.recall, 0.5);
        assert_eq!(m.f1, 0.5);
    }

    #[test]
    fn threshold_ties_go_to_bot() {
        let m = compute_metrics(&[0.5], &[1]);
        assert_eq!(m.tp, 1);
        assert_eq!(m.accuracy, 1.0);
    }

    #[test]
    fn degenerate_f1_is_zero_not_nan() {
        // nothing predicted bot, nothing labeled bot
        let m = compute_metrics(&[0.1, 0.2], &[0, 0]);
        assert_eq!(m.f1, 0.0);
        assert_eq!(m.accuracy, 1.0);
        assert!(m.f1_macro > 0.0); // human side is perfect
        // everything bot on an all-human set
        let m = compute_metrics(&[0.9, 0.8], &[0, 0]);
        assert_eq!(m.f1, 0.0);
        assert_eq!(m.accuracy, 0.0);
    }

    #[test]
    fn agreement_counts_quadrants() {
        let teacher = [0.9, 0.9, 0.1, 0.1];
        let student = [0.8, 0.2, 0.7, 0.3];
        let c = consistency_analysis(&teacher, &student);
        assert_eq!(c.both_bot, 1);
        assert_eq!(c.teacher_bot_only, 1);
        assert_eq!(c.student_bot_only, 1);
        assert_eq!(c.both_human, 1);
        assert_eq!(c.agreement, 0.5);
    }

    #[test]
    fn csv_emitters_are_parseable() {
        let m = compute_metrics(&[0.9, 0.1], &[1, 0]);
        let csv = metrics_csv(&[("test".into(), m)]);
        assert!(csv.starts_with("split,n,"));
        assert_eq!(csv.lines().count(), 2);
        let row = csv.lines().nth(1).unwrap();
        assert!(row.starts_with("test,2,1.000000"));

        let c = consistency_analysis(&[0.9], &[0.9]);
        assert!(consistency_csv(&c).contains("1,1.000000,1,0,0,0"));
    }

    #[test]
    fn sweep_rejects_bad_inputs() {
        let cfg = RunConfig::default();
        let synth = crate::synth::SyntheticConfig {
            n_users: 20,
            vocab_size: 40,
            relations: 0,
            ..Default::default()
        };
        let dataset = crate::synth::generate_synthetic(&synth, 1).unwrap();
        assert!(data_efficiency_sweep(&cfg, &dataset, SweepAxis::Labels, &[]).is_err());
        assert!(data_efficiency_sweep(&cfg, &dataset, SweepAxis::Edges, &[0.5]).is_err());
        assert!(data_efficiency_sweep(&cfg, &dataset, SweepAxis::Labels, &[0.0]).is_err());
        assert!(data_efficiency_sweep(&cfg, &dataset, SweepAxis::Labels, &[1.5]).is_err());
    }

    #[test]
    fn variant_strings_roundtrip() {
        for v in [
            AblationVariant::NoTeacher,
            AblationVariant::NoStudent,
            AblationVariant::TeacherAsMlp,
            AblationVariant::NoMetadata,
            AblationVariant::NoDescription,
            AblationVariant::NoTweets,
        ] {
            assert_eq!(v.as_str().parse::<AblationVariant>().unwrap(), v);
        }
        assert!("no_graph".parse::<AblationVariant>().is_err());
    }

    #[test]
    fn mlp_ablation_rejects_mlp_teacher() {
        let mut cfg = RunConfig::default();
        cfg.gnn.kind = TeacherKind::Mlp;
        let synth = crate::synth::SyntheticConfig {
            n_users: 20,
            vocab_size: 40,
            relations: 0,
            ..Default::default()
        };
        let dataset = crate::synth::generate_synthetic(&synth, 1).unwrap();
        let err = run_ablation(&cfg, &dataset, AblationVariant::TeacherAsMlp).unwrap_err();
        assert!(err.to_string().contains("inapplicable"));
    }
}
