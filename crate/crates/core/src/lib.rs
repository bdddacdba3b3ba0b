//! Core library for graph-free social bot detection via teacher-student
//! distillation.
//!
//! A sequence encoder (the student) reads a textual rendering of each
//! account and predicts bot vs human on its own. During training a graph
//! model (the teacher) sees the follow graph, and its temperature-softened
//! predictions are distilled into the student in alternating rounds. At
//! inference time only the student runs, so no neighbor lookups are needed.
//!
//! Modules mirror the pipeline stages:
//!
//! * [`corpus`] / [`synth`]  -- datasets, graphs, splits, synthetic data
//! * [`serialize`]           -- account-to-text rendering and vocabulary
//! * [`student`]             -- trainable sequence encoder + classifier head
//! * [`teacher`]             -- relational / attention / plain GNN and MLP teachers
//! * [`distill`]             -- alternating optimization driver
//! * [`eval`]                -- metrics, consistency, sweeps, ablations

pub mod config;
pub mod corpus;
pub mod distill;
pub mod error;
pub mod eval;
pub mod nn;
pub mod optim;
pub mod par;
pub mod rng;
pub mod serialize;
pub mod student;
pub mod synth;
pub mod teacher;

pub use error::{Error, Result};
