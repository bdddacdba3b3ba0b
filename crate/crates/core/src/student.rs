//! The student: a sequence encoder plus classifier head that predicts bot
//! vs human from rendered text alone.
//!
//! The encoder backend is pluggable through [`EncoderBackend`]; the
//! trainable desk backend is an embedding bag whose per-token states are
//! embedding rows. A user embedding is the mean of its token states
//! (padding excluded), so the encoder is order-invariant by construction.
//! The head stacks affine layers with LeakyReLU after each one, including
//! the last: an identity-like single layer maps (1, -1) to (1, -0.01).
//!
//! Two losses are trained here, both with analytic gradients:
//!
//! * hard-label finetuning:  sum CE(label, prediction) + lambda * sum(theta^2)
//! * distillation:           (1 - alpha) * sum CE over hard-labeled batch
//!                           members + alpha * sum KL(teacher || student)
//!                           over soft-labeled members + lambda * sum(theta^2)
//!
//! The temperature lives in the teacher's soft labels only; the student's
//! own log-probabilities are never rescaled.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{kl_to_logits, leaky, leaky_prime, log_softmax, softmax, Affine};
use crate::optim::AdamW;
use crate::par;
use crate::serialize::TextualSequence;

/// Anything that maps a token sequence to per-token hidden states.
///
/// The desk backend below is trainable; a full-scale deployment would wrap
/// a pretrained encoder behind this same trait and reuse the pooling,
/// head, and training loops unchanged.
pub trait EncoderBackend {
    fn hidden_width(&self) -> usize;
    /// One row per non-padding token, in sequence order.
    fn token_states(&self, seq: &TextualSequence) -> Array2<f64>;
}

/// Mean-pools token states into one user embedding.
pub fn encode_user(backend: &dyn EncoderBackend, seq: &TextualSequence) -> Result<Array1<f64>> {
    let states = backend.token_states(seq);
    if states.nrows() == 0 {
        return Err(Error::Data("cannot encode an empty token sequence".into()));
    }
    Ok(states.mean_axis(Axis(0)).unwrap())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudentConfig {
    /// Encoder width (token embedding size).
    pub embed_dim: usize,
    pub head_hidden: usize,
    pub head_layers: usize,
    pub lr: f64,
    pub dropout: f64,
    /// L2 coefficient (lambda1) applied inside both losses.
    pub l2: f64,
    pub batch_size: usize,
    pub finetune_epochs: usize,
}

impl Default for StudentConfig {
    fn default() -> Self {
        StudentConfig {
            embed_dim: 64,
            head_hidden: 128,
            head_layers: 2,
            lr: 1e-5,
            dropout: 0.1,
            l2: 1e-2,
            batch_size: 32,
            finetune_epochs: 5,
        }
    }
}

impl StudentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.head_hidden == 0 || self.head_layers == 0 {
            return Err(Error::Config("student widths and depth must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("student lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.l2 < 0.0 {
            return Err(Error::Config("l2 must be nonnegative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// One element of a distillation batch. `hard` is a class index; `soft` is
/// the teacher's tempered distribution (human, bot).
#[derive(Debug, Clone, Copy)]
pub struct DistillExample<'a> {
    pub seq: &'a TextualSequence,
    pub hard: Option<usize>,
    pub soft: Option<[f64; 2]>,
}

enum LossMode {
    Hard,
    Distill { alpha: f64 },
}

/// Per-example forward cache for the backward pass.
struct Cache {
    non_pad: Vec<usize>,
    inputs: Vec<Array1<f64>>,  // input to each head layer, dropout applied
    preacts: Vec<Array1<f64>>, // pre-activation of each head layer
    masks: Vec<Array1<f64>>,   // dropout keep masks (already scaled), one per layer input
    logits: Array1<f64>,
}

/// Trainable student model: embedding-bag encoder + LeakyReLU head + AdamW.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Student {
    pub cfg: StudentConfig,
    pub vocab_size: usize,
    pub vocab_fingerprint: u64,
    embedding: Array2<f64>, // vocab x embed_dim
    g_embedding: Array2<f64>,
    head: Vec<Affine>,
    opt: AdamW,
}

impl EncoderBackend for Student {
    fn hidden_width(&self) -> usize {
        self.cfg.embed_dim
    }

    fn token_states(&self, seq: &TextualSequence) -> Array2<f64> {
        let rows: Vec<usize> = seq.token_ids.iter().copied().filter(|&t| t != 0).collect();
        let mut out = Array2::zeros((rows.len(), self.cfg.embed_dim));
        for (i, &tok) in rows.iter().enumerate() {
            out.row_mut(i).assign(&self.embedding.row(tok));
        }
        out
    }
}

impl Student {
    pub fn new(vocab_size: usize, vocab_fingerprint: u64, cfg: StudentConfig, seed: u64) -> Result<Student> {
        cfg.validate()?;
        if vocab_size == 0 {
            return Err(Error::Config("vocab_size must be positive".into()));
        }
        let mut rng = crate::rng::stream(seed, "student_init", 0);
        let embedding =
            Array2::from_shape_fn((vocab_size, cfg.embed_dim), |_| rng.gen_range(-0.1..0.1));
        let mut head = Vec::new();
        let mut in_dim = cfg.embed_dim;
        for l in 0..cfg.head_layers {
            let out_dim = if l + 1 == cfg.head_layers { 2 } else { cfg.head_hidden };
            head.push(Affine::new(in_dim, out_dim, &mut rng));
            in_dim = out_dim;
        }
        let opt = AdamW::new(cfg.lr);
        let g_embedding = Array2::zeros((vocab_size, cfg.embed_dim));
        Ok(Student { cfg, vocab_size, vocab_fingerprint, embedding, g_embedding, head, opt })
    }

    /// Layer output widths, encoder first; used in checkpoint manifests.
    pub fn widths(&self) -> Vec<usize> {
        let mut out = vec![self.cfg.embed_dim];
        out.extend(self.head.iter().map(Affine::out_dim));
        out
    }

    /// Mean of non-padding token embeddings.
    pub fn encode(&self, seq: &TextualSequence) -> Result<Array1<f64>> {
        let mut sum = Array1::zeros(self.cfg.embed_dim);
        let mut count = 0usize;
        for &tok in &seq.token_ids {
            if tok == 0 {
                continue;
            }
            sum += &self.embedding.row(tok);
            count += 1;
        }
        if count == 0 {
            return Err(Error::Data("cannot encode an empty token sequence".into()));
        }
        Ok(sum / count as f64)
    }

    /// Embeddings for every sequence, row per user. This is the hot path
    /// refreshed before each teacher round; it fans out over rayon.
    pub fn embed_all(&self, seqs: &[TextualSequence]) -> Result<Array2<f64>> {
        let rows = par::map_indexed(seqs.len(), |i| self.encode(&seqs[i]));
        let mut out = Array2::zeros((seqs.len(), self.cfg.embed_dim));
        for (i, row) in rows.into_iter().enumerate() {
            out.row_mut(i).assign(&row?);
        }
        Ok(out)
    }

    /// Head forward in evaluation mode (no dropout).
    pub fn classify(&self, embedding: &Array1<f64>) -> Array1<f64> {
        let mut x = embedding.clone();
        for layer in &self.head {
            x = layer.apply_vec(&x).mapv(leaky);
        }
        x
    }

    /// Class probabilities (human, bot) for one sequence; never touches the
    /// graph.
    pub fn predict(&self, seq: &TextualSequence) -> Result<Array1<f64>> {
        Ok(softmax(&self.classify(&self.encode(seq)?)))
    }

    /// Probabilities for many sequences, in order.
    pub fn predict_batch(&self, seqs: &[TextualSequence]) -> Result<Vec<Array1<f64>>> {
        par::map_indexed(seqs.len(), |i| self.predict(&seqs[i])).into_iter().collect()
    }

    fn forward_cached(&self, seq: &TextualSequence, dropout_rng: Option<&mut ChaCha8Rng>) -> Result<Cache> {
        let non_pad: Vec<usize> = seq.token_ids.iter().copied().filter(|&t| t != 0).collect();
        if non_pad.is_empty() {
            return Err(Error::Data("cannot encode an empty token sequence".into()));
        }
        let z = self.encode(seq)?;
        let p = self.cfg.dropout;
        let mut local_rng = dropout_rng;

        let mut make_mask = |dim: usize| -> Array1<f64> {
            match (&mut local_rng, p > 0.0) {
                (Some(rng), true) => {
                    let scale = 1.0 / (1.0 - p);
                    Array1::from_shape_fn(dim, |_| if rng.gen::<f64>() >= p { scale } else { 0.0 })
                }
                _ => Array1::ones(dim),
            }
        };

        let mut inputs = Vec::with_capacity(self.head.len());
        let mut preacts = Vec::with_capacity(self.head.len());
        let mut masks = Vec::with_capacity(self.head.len());

        let mut x = z;
        for (l, layer) in self.head.iter().enumerate() {
            let mask = make_mask(x.len());
            let dropped = &x * &mask;
            let u = layer.apply_vec(&dropped);
            x = u.mapv(leaky);
            inputs.push(dropped);
            preacts.push(u);
            masks.push(mask);
            let _ = l;
        }
        Ok(Cache { non_pad, inputs, preacts, masks, logits: x })
    }

    fn zero_grads(&mut self) {
        self.g_embedding.fill(0.0);
        for layer in &mut self.head {
            layer.zero_grad();
        }
    }

    /// Backpropagates one example's logit gradient through head and encoder.
    fn backward_example(&mut self, cache: &Cache, dlogits: Array1<f64>) {
        let mut d = dlogits;
        for l in (0..self.head.len()).rev() {
            let du = &d * &cache.preacts[l].mapv(leaky_prime);
            d = self.head[l].backward_vec(&cache.inputs[l], &du);
            d *= &cache.masks[l];
        }
        let m = cache.non_pad.len() as f64;
        for &tok in &cache.non_pad {
            let mut row = self.g_embedding.row_mut(tok);
            row += &(&d / m);
        }
    }

    fn sum_squares(&self) -> f64 {
        self.embedding.iter().map(|v| v * v).sum::<f64>()
            + self.head.iter().map(Affine::sum_squares).sum::<f64>()
    }

    /// Computes loss and gradients for a batch under the given mode.
    fn batch_loss_grad(
        &mut self,
        batch: &[DistillExample<'_>],
        mode: &LossMode,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<f64> {
        self.zero_grads();
        let mut loss = 0.0;
        for ex in batch {
            let cache = self.forward_cached(ex.seq, dropout_rng.as_deref_mut())?;
            let p = softmax(&cache.logits);
            let logp = log_softmax(&cache.logits);
            let mut dlogits = Array1::zeros(2);

            match mode {
                LossMode::Hard => {
                    let y = ex.hard.ok_or_else(|| {
                        Error::Training("finetune batch element lacks a hard label".into())
                    })?;
                    loss += -logp[y];
                    dlogits += &p;
                    dlogits[y] -= 1.0;
                }
                LossMode::Distill { alpha } => {
                    if ex.hard.is_none() && ex.soft.is_none() {
                        return Err(Error::Training(
                            "distill batch element carries neither hard nor soft label".into(),
                        ));
                    }
                    if let Some(y) = ex.hard {
                        loss += (1.0 - alpha) * -logp[y];
                        dlogits += &((&p - &onehot(y)) * (1.0 - *alpha));
                    }
                    if let Some(soft) = ex.soft {
                        let reference = Array1::from(soft.to_vec());
                        loss += alpha * kl_to_logits(&reference, &cache.logits);
                        dlogits += &((&p - &reference) * *alpha);
                    }
                }
            }
            self.backward_example(&cache, dlogits);
        }

        // L2 over all student parameters
        let lambda = self.cfg.l2;
        loss += lambda * self.sum_squares();
        ndarray::Zip::from(&mut self.g_embedding)
            .and(&self.embedding)
            .for_each(|g, &w| *g += 2.0 * lambda * w);
        for layer in &mut self.head {
            layer.add_l2_grad(lambda);
        }
        Ok(loss)
    }

    fn apply_update(&mut self) {
        let mut pairs: Vec<(ArrayViewMutD<f64>, ArrayViewD<f64>)> = Vec::new();
        pairs.push((self.embedding.view_mut().into_dyn(), self.g_embedding.view().into_dyn()));
        for layer in &mut self.head {
            let Affine { w, b, gw, gb } = layer;
            pairs.push((w.view_mut().into_dyn(), gw.view().into_dyn()));
            pairs.push((b.view_mut().into_dyn(), gb.view().into_dyn()));
        }
        self.opt.step(pairs);
    }

    /// One hard-label training step; returns the batch loss.
    pub fn finetune_step(
        &mut self,
        batch: &[(&TextualSequence, usize)],
        dropout_rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let batch: Vec<DistillExample<'_>> = batch
            .iter()
            .map(|&(seq, y)| DistillExample { seq, hard: Some(y), soft: None })
            .collect();
        let loss = self.batch_loss_grad(&batch, &LossMode::Hard, Some(dropout_rng))?;
        self.apply_update();
        Ok(loss)
    }

    /// One distillation step mixing hard CE and soft KL; returns the loss.
    pub fn distill_step(
        &mut self,
        batch: &[DistillExample<'_>],
        alpha: f64,
        dropout_rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let loss = self.batch_loss_grad(batch, &LossMode::Distill { alpha }, Some(dropout_rng))?;
        self.apply_update();
        Ok(loss)
    }

    /// Hard-label loss at the current parameters, dropout off, no update.
    pub fn finetune_loss(&mut self, batch: &[(&TextualSequence, usize)]) -> Result<f64> {
        let batch: Vec<DistillExample<'_>> = batch
            .iter()
            .map(|&(seq, y)| DistillExample { seq, hard: Some(y), soft: None })
            .collect();
        self.batch_loss_grad(&batch, &LossMode::Hard, None)
    }

    /// Distillation loss at the current parameters, dropout off, no update.
    pub fn distill_loss(&mut self, batch: &[DistillExample<'_>], alpha: f64) -> Result<f64> {
        self.batch_loss_grad(batch, &LossMode::Distill { alpha }, None)
    }

    /// Mutable parameter tensors, encoder first then head layers; the order
    /// matches [`Student::grad_tensors`].
    pub fn param_tensors(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out = vec![self.embedding.view_mut().into_dyn()];
        for layer in &mut self.head {
            let Affine { w, b, .. } = layer;
            out.push(w.view_mut().into_dyn());
            out.push(b.view_mut().into_dyn());
        }
        out
    }

    pub fn grad_tensors(&self) -> Vec<ArrayViewD<'_, f64>> {
        let mut out = vec![self.g_embedding.view().into_dyn()];
        for layer in &self.head {
            out.push(layer.gw.view().into_dyn());
            out.push(layer.gb.view().into_dyn());
        }
        out
    }

    // --- checkpointing ------------------------------------------------------

    pub fn save(&self, dir: &Path) -> Result<()> {
        crate::distill::write_checkpoint(dir, "student", &self.manifest(), self)
    }

    pub fn load(dir: &Path) -> Result<Student> {
        let student: Student = crate::distill::read_checkpoint(dir, "student")?;
        student.cfg.validate()?;
        Ok(student)
    }

    pub fn manifest(&self) -> serde_json::Value {
        serde_json::json!({
            "model": "student",
            "backend": "embedding_bag",
            "vocab_size": self.vocab_size,
            "vocab_fingerprint": format!("{:016x}", self.vocab_fingerprint),
            "widths": self.widths(),
            "config": self.cfg,
        })
    }

    /// Test hook: overwrite head weights (used by hand-built examples).
    pub fn set_head(&mut self, layers: Vec<Affine>) {
        assert_eq!(layers.last().map(Affine::out_dim), Some(2));
        self.head = layers;
    }

    /// Test hook: direct embedding access.
    pub fn embedding_mut(&mut self) -> &mut Array2<f64> {
        &mut self.embedding
    }
}

fn onehot(y: usize) -> Array1<f64> {
    let mut v = Array1::zeros(2);
    v[y] = 1.0;
    v
}
