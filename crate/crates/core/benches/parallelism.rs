//! Times the rayon fan-out against its sequential twin on the three hot
//! paths: corpus rendering, per-user encoding, and teacher message passing.
//! Both variants run in one binary via the runtime override, so the numbers
//! are directly comparable.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use botdistill_core::config::RunConfig;
use botdistill_core::distill::{prepare, render_all};
use botdistill_core::par;
use botdistill_core::rng;
use botdistill_core::synth::{generate_synthetic, SyntheticConfig};
use botdistill_core::teacher::Teacher;

const PATHS: [(&str, bool); 2] = [("parallel", false), ("sequential", true)];

fn bench_paths(c: &mut Criterion) {
    let synth = SyntheticConfig {
        n_users: 500,
        vocab_size: 150,
        tokens_per_user: 40,
        relations: 2,
        p_in: 0.03,
        p_out: 0.003,
        ..Default::default()
    };
    let dataset = generate_synthetic(&synth, 7).expect("synth");
    let mut cfg = RunConfig::desk();
    cfg.split.ratios = (2, 2, 6);
    let data = prepare(&cfg, dataset).expect("prepare");
    let student = botdistill_core::student::Student::new(
        data.vocab.len(),
        data.vocab.fingerprint(),
        cfg.lm.clone(),
        rng::subseed(cfg.seed, "student", 0),
    )
    .expect("student");
    let relations = data
        .dataset
        .graph
        .as_ref()
        .map(|g| g.relation_names().into_iter().map(String::from).collect())
        .unwrap_or_default();
    let teacher = Teacher::new(
        cfg.gnn.clone(),
        cfg.lm.embed_dim,
        relations,
        rng::subseed(cfg.seed, "teacher", 0),
    )
    .expect("teacher");
    let features = student.embed_all(&data.seqs).expect("features");
    let view = data.view.as_ref();

    let mut group = c.benchmark_group("corpus_rendering");
    for (label, seq) in PATHS {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            par::force_sequential(seq);
            b.iter(|| render_all(&data.dataset, &data.vocab, &cfg, Default::default()));
            par::force_sequential(false);
        });
    }
    group.finish();

    let mut group = c.benchmark_group("user_encoding");
    for (label, seq) in PATHS {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            par::force_sequential(seq);
            b.iter(|| student.embed_all(&data.seqs).expect("embed"));
            par::force_sequential(false);
        });
    }
    group.finish();

    let mut group = c.benchmark_group("message_passing");
    for (label, seq) in PATHS {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            par::force_sequential(seq);
            b.iter(|| teacher.predict_logits(&features, view).expect("forward"));
            par::force_sequential(false);
        });
    }
    group.finish();
}

criterion_group!(benches, bench_paths);
criterion_main!(benches);
