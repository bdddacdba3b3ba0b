//! The teacher: a graph model (or MLP) over frozen student embeddings.
//!
//! All kinds share one frame: an affine input projection to the hidden
//! width, `L` stacked layers, then `logits = W_o LeakyReLU(h_L) + b_o`.
//! The layers differ only in how they aggregate neighbors:
//!
//! * `relational_gnn` -- per-relation mean aggregation,
//!   `h_i' = LeakyReLU(W_self h_i + sum_r mean_{j in N_r(i)} W_r h_j)`
//! * `plain_gnn`      -- one weight over all relations merged
//! * `attention_gnn`  -- single-head softmax attention over merged neighbors
//! * `mlp`            -- no aggregation, `h' = LeakyReLU(W h + b)`; equals a
//!   relational layer on an edgeless graph when the bias is zero
//!
//! Nodes with no in-edges under a relation receive a zero aggregate from
//! it. The teacher trains with summed cross-entropy over labeled training
//! nodes plus `lambda2 * sum(theta^2)`; its tempered softmax over logits
//! becomes the student's soft labels.

use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::HeteroGraph;
use crate::error::{Error, Result};
use crate::nn::{leaky, leaky_prime, log_softmax, Affine};
use crate::optim::AdamW;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherKind {
    RelationalGnn,
    AttentionGnn,
    PlainGnn,
    Mlp,
}

impl TeacherKind {
    pub fn needs_graph(self) -> bool {
        !matches!(self, TeacherKind::Mlp)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TeacherKind::RelationalGnn => "relational_gnn",
            TeacherKind::AttentionGnn => "attention_gnn",
            TeacherKind::PlainGnn => "plain_gnn",
            TeacherKind::Mlp => "mlp",
        }
    }
}

impl FromStr for TeacherKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<TeacherKind> {
        match s {
            "relational_gnn" => Ok(TeacherKind::RelationalGnn),
            "attention_gnn" => Ok(TeacherKind::AttentionGnn),
            "plain_gnn" => Ok(TeacherKind::PlainGnn),
            "mlp" => Ok(TeacherKind::Mlp),
            other => Err(Error::Config(format!(
                "unknown teacher kind {other}; expected relational_gnn, attention_gnn, plain_gnn, or mlp"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherConfig {
    pub kind: TeacherKind,
    pub layers: usize,
    pub hidden: usize,
    pub dropout: f64,
    /// L2 coefficient (lambda2) inside the teacher loss.
    pub l2: f64,
    pub lr: f64,
    /// Epoch budget per teacher round.
    pub epochs: usize,
    /// Rounds of no validation improvement before an early stop.
    pub patience: usize,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            kind: TeacherKind::RelationalGnn,
            layers: 2,
            hidden: 128,
            dropout: 0.4,
            l2: 1e-5,
            lr: 5e-4,
            epochs: 300,
            patience: 30,
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 {
            return Err(Error::Config("teacher depth and width must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("teacher lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("teacher dropout {} outside [0, 1)", self.dropout)));
        }
        if self.l2 < 0.0 {
            return Err(Error::Config("l2 must be nonnegative".into()));
        }
        Ok(())
    }
}

/// In-neighbor lists derived from a [`HeteroGraph`], relations in name
/// order, plus the merged multiset view used by plain and attention layers.
pub struct GraphView {
    pub node_count: usize,
    pub per_relation: Vec<Vec<Vec<usize>>>,
    pub merged: Vec<Vec<usize>>,
}

impl GraphView {
    pub fn new(graph: &HeteroGraph, node_count: usize) -> GraphView {
        let per_relation = graph.in_neighbors(node_count);
        let mut merged = vec![Vec::new(); node_count];
        for rel in &per_relation {
            for (i, nbrs) in rel.iter().enumerate() {
                merged[i].extend_from_slice(nbrs);
            }
        }
        GraphView { node_count, per_relation, merged }
    }

    /// A view with no edges; lets the MLP kind share the forward frame.
    pub fn empty(node_count: usize) -> GraphView {
        GraphView { node_count, per_relation: Vec::new(), merged: vec![Vec::new(); node_count] }
    }
}

/// Aggregation-specific parameters of one layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum LayerParams {
    Relational {
        w_rel: Vec<Array2<f64>>,
        g_rel: Vec<Array2<f64>>,
    },
    Plain {
        w_nbr: Array2<f64>,
        g_nbr: Array2<f64>,
    },
    Attention {
        w_nbr: Array2<f64>,
        g_nbr: Array2<f64>,
        a_src: Array1<f64>,
        g_src: Array1<f64>,
        a_dst: Array1<f64>,
        g_dst: Array1<f64>,
    },
    Mlp {
        bias: Array1<f64>,
        g_bias: Array1<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TeacherLayer {
    pub w_self: Array2<f64>,
    pub g_self: Array2<f64>,
    pub params: LayerParams,
}

impl TeacherLayer {
    pub fn new<R: Rng>(kind: TeacherKind, hidden: usize, relations: usize, rng: &mut R) -> TeacherLayer {
        let bound = (6.0 / (2 * hidden) as f64).sqrt();
        let mut mat = || Array2::from_shape_fn((hidden, hidden), |_| rng.gen_range(-bound..bound));
        let w_self = mat();
        let params = match kind {
            TeacherKind::RelationalGnn => LayerParams::Relational {
                w_rel: (0..relations).map(|_| mat()).collect(),
                g_rel: (0..relations).map(|_| Array2::zeros((hidden, hidden))).collect(),
            },
            TeacherKind::PlainGnn => LayerParams::Plain {
                w_nbr: mat(),
                g_nbr: Array2::zeros((hidden, hidden)),
            },
            TeacherKind::AttentionGnn => {
                let vbound = (6.0 / (hidden + 1) as f64).sqrt();
                let vec1 = |rng: &mut R| {
                    Array1::from_shape_fn(hidden, |_| rng.gen_range(-vbound..vbound))
                };
                LayerParams::Attention {
                    w_nbr: mat(),
                    g_nbr: Array2::zeros((hidden, hidden)),
                    a_src: vec1(rng),
                    g_src: Array1::zeros(hidden),
                    a_dst: vec1(rng),
                    g_dst: Array1::zeros(hidden),
                }
            }
            TeacherKind::Mlp => LayerParams::Mlp {
                bias: Array1::zeros(hidden),
                g_bias: Array1::zeros(hidden),
            },
        };
        TeacherLayer { w_self, g_self: Array2::zeros((hidden, hidden)), params }
    }

    fn zero_grad(&mut self) {
        self.g_self.fill(0.0);
        match &mut self.params {
            LayerParams::Relational { g_rel, .. } => g_rel.iter_mut().for_each(|g| g.fill(0.0)),
            LayerParams::Plain { g_nbr, .. } => g_nbr.fill(0.0),
            LayerParams::Attention { g_nbr, g_src, g_dst, .. } => {
                g_nbr.fill(0.0);
                g_src.fill(0.0);
                g_dst.fill(0.0);
            }
            LayerParams::Mlp { g_bias, .. } => g_bias.fill(0.0),
        }
    }

    fn sum_squares(&self) -> f64 {
        let sq = |a: &Array2<f64>| a.iter().map(|v| v * v).sum::<f64>();
        let sqv = |a: &Array1<f64>| a.iter().map(|v| v * v).sum::<f64>();
        self.w_self.iter().map(|v| v * v).sum::<f64>()
            + match &self.params {
                LayerParams::Relational { w_rel, .. } => w_rel.iter().map(sq).sum(),
                LayerParams::Plain { w_nbr, .. } => sq(w_nbr),
                LayerParams::Attention { w_nbr, a_src, a_dst, .. } => {
                    sq(w_nbr) + sqv(a_src) + sqv(a_dst)
                }
                LayerParams::Mlp { bias, .. } => sqv(bias),
            }
    }

    fn add_l2_grad(&mut self, lambda: f64) {
        let add2 = |g: &mut Array2<f64>, w: &Array2<f64>| {
            ndarray::Zip::from(g).and(w).for_each(|g, &w| *g += 2.0 * lambda * w)
        };
        let add1 = |g: &mut Array1<f64>, w: &Array1<f64>| {
            ndarray::Zip::from(g).and(w).for_each(|g, &w| *g += 2.0 * lambda * w)
        };
        add2(&mut self.g_self, &self.w_self);
        match &mut self.params {
            LayerParams::Relational { w_rel, g_rel } => {
                for (g, w) in g_rel.iter_mut().zip(w_rel.iter()) {
                    add2(g, w);
                }
            }
            LayerParams::Plain { w_nbr, g_nbr } => add2(g_nbr, w_nbr),
            LayerParams::Attention { w_nbr, g_nbr, a_src, g_src, a_dst, g_dst } => {
                add2(g_nbr, w_nbr);
                add1(g_src, a_src);
                add1(g_dst, a_dst);
            }
            LayerParams::Mlp { bias, g_bias } => add1(g_bias, bias),
        }
    }
}

/// Per-node softmax attention state kept for the backward pass.
#[derive(Debug, Clone, Default)]
struct AttnNode {
    scores: Vec<f64>,
    alpha: Vec<f64>,
}

struct LayerCache {
    preact: Array2<f64>,
    /// Per-relation messages `x W_r^T` (relational), or the single message
    /// matrix (plain / attention). Empty for mlp.
    msgs: Vec<Array2<f64>>,
    attn: Vec<AttnNode>,
}

/// Forward cache: post-dropout stage inputs, dropout masks, layer caches.
pub struct TeacherCache {
    states: Vec<Array2<f64>>, // states[l] feeds layer l+1; states[L] feeds the output stage
    masks: Option<Vec<Array2<f64>>>,
    layers: Vec<LayerCache>,
    s_out: Array2<f64>, // LeakyReLU(states[L])
}

/// Row-normalized mean aggregation of per-relation messages.
///
/// This is the message-passing core: node `i` receives the mean of
/// `msgs[j]` over its in-neighbors `j`, summed across relations. Rows with
/// no in-edges contribute nothing. Fans out over rayon per node.
fn aggregate_mean(msgs: &[Array2<f64>], nbr_sets: &[&Vec<Vec<usize>>], n: usize, h: usize) -> Array2<f64> {
    let rows = par::map_indexed(n, |i| {
        let mut row = vec![0.0f64; h];
        for (msg, nbrs) in msgs.iter().zip(nbr_sets) {
            let list = &nbrs[i];
            if list.is_empty() {
                continue;
            }
            let inv = 1.0 / list.len() as f64;
            for &j in list {
                let src = msg.row(j);
                for (acc, &v) in row.iter_mut().zip(src.iter()) {
                    *acc += v * inv;
                }
            }
        }
        row
    });
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((n, h), flat).expect("aggregate shape")
}

/// One message-passing (or mlp) layer: returns `LeakyReLU(U)` and the
/// cache needed to backpropagate through it.
pub fn message_passing_layer(
    layer: &TeacherLayer,
    x: &Array2<f64>,
    view: &GraphView,
) -> (Array2<f64>, Array2<f64>) {
    let (out, cache) = layer_forward(layer, x, view);
    (out, cache.preact)
}

fn layer_forward(layer: &TeacherLayer, x: &Array2<f64>, view: &GraphView) -> (Array2<f64>, LayerCache) {
    let n = x.nrows();
    let h = layer.w_self.nrows();
    let mut preact = x.dot(&layer.w_self.t());
    let mut msgs = Vec::new();
    let mut attn = Vec::new();

    match &layer.params {
        LayerParams::Relational { w_rel, .. } => {
            for w in w_rel {
                msgs.push(x.dot(&w.t()));
            }
            let sets: Vec<&Vec<Vec<usize>>> = view.per_relation.iter().collect();
            if !sets.is_empty() {
                preact += &aggregate_mean(&msgs, &sets, n, h);
            }
        }
        LayerParams::Plain { w_nbr, .. } => {
            msgs.push(x.dot(&w_nbr.t()));
            preact += &aggregate_mean(&msgs[..1], &[&view.merged], n, h);
        }
        LayerParams::Attention { w_nbr, a_src, a_dst, .. } => {
            let g = x.dot(&w_nbr.t());
            let src_score: Array1<f64> = g.dot(a_src);
            let dst_score: Array1<f64> = g.dot(a_dst);
            let per_node = par::map_indexed(n, |i| {
                let nbrs = &view.merged[i];
                if nbrs.is_empty() {
                    return (AttnNode::default(), vec![0.0; h]);
                }
                let scores: Vec<f64> =
                    nbrs.iter().map(|&j| leaky(src_score[j] + dst_score[i])).collect();
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
                let total: f64 = exps.iter().sum();
                let alpha: Vec<f64> = exps.iter().map(|&e| e / total).collect();
                let mut row = vec![0.0f64; h];
                for (&j, &a) in nbrs.iter().zip(alpha.iter()) {
                    for (acc, &v) in row.iter_mut().zip(g.row(j).iter()) {
                        *acc += a * v;
                    }
                }
                // raw (pre-activation) scores are needed for the backward pass
                let raw: Vec<f64> = nbrs.iter().map(|&j| src_score[j] + dst_score[i]).collect();
                (AttnNode { scores: raw, alpha }, row)
            });
            let mut agg = Array2::zeros((n, h));
            for (i, (node, row)) in per_node.into_iter().enumerate() {
                attn.push(node);
                agg.row_mut(i).assign(&Array1::from(row));
            }
            preact += &agg;
            msgs.push(g);
        }
        LayerParams::Mlp { bias, .. } => {
            preact += bias;
        }
    }

    let out = preact.mapv(leaky);
    (out, LayerCache { preact, msgs, attn })
}

/// Scatter of aggregate gradients back to message rows:
/// `dmsg[j] += du[i] / deg(i)` for each in-edge `j -> i`. Sequential so the
/// accumulation order is fixed.
fn scatter_mean_grad(du: &Array2<f64>, nbrs: &[Vec<usize>], dmsg: &mut Array2<f64>) {
    for (i, list) in nbrs.iter().enumerate() {
        if list.is_empty() {
            continue;
        }
        let inv = 1.0 / list.len() as f64;
        let grad_row = du.row(i);
        for &j in list {
            let mut target = dmsg.row_mut(j);
            ndarray::Zip::from(&mut target).and(&grad_row).for_each(|t, &g| *t += g * inv);
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Teacher {
    pub cfg: TeacherConfig,
    pub input_dim: usize,
    pub relation_names: Vec<String>,
    input: Affine,
    layers: Vec<TeacherLayer>,
    output: Affine,
    opt: AdamW,
}

impl Teacher {
    pub fn new(
        cfg: TeacherConfig,
        input_dim: usize,
        relation_names: Vec<String>,
        seed: u64,
    ) -> Result<Teacher> {
        cfg.validate()?;
        if cfg.kind.needs_graph() && cfg.kind == TeacherKind::RelationalGnn && relation_names.is_empty()
        {
            return Err(Error::Config("relational teacher requires at least one relation".into()));
        }
        let mut rng = crate::rng::stream(seed, "teacher_init", 0);
        let input = Affine::new(input_dim, cfg.hidden, &mut rng);
        let layers = (0..cfg.layers)
            .map(|_| TeacherLayer::new(cfg.kind, cfg.hidden, relation_names.len(), &mut rng))
            .collect();
        let output = Affine::new(cfg.hidden, 2, &mut rng);
        let opt = AdamW::new(cfg.lr);
        Ok(Teacher { cfg, input_dim, relation_names, input, layers, output, opt })
    }

    /// Checks a graph view against the kind and bound relations.
    fn check_view<'v>(&self, view: Option<&'v GraphView>, n: usize) -> Result<GraphViewRef<'v>> {
        match (self.cfg.kind.needs_graph(), view) {
            (true, None) => Err(Error::Config(format!(
                "teacher kind {} requires a graph",
                self.cfg.kind.as_str()
            ))),
            (true, Some(v)) => {
                if v.node_count != n {
                    return Err(Error::Data(format!(
                        "graph has {} nodes but features have {n} rows",
                        v.node_count
                    )));
                }
                if self.cfg.kind == TeacherKind::RelationalGnn
                    && v.per_relation.len() != self.relation_names.len()
                {
                    return Err(Error::Data(format!(
                        "graph has {} relations but teacher was built for {}",
                        v.per_relation.len(),
                        self.relation_names.len()
                    )));
                }
                Ok(GraphViewRef::Borrowed(v))
            }
            (false, _) => Ok(GraphViewRef::Empty(GraphView::empty(n))),
        }
    }

    /// Full forward pass. `dropout_rng` enables training-mode dropout.
    pub fn forward(
        &self,
        features: &Array2<f64>,
        view: Option<&GraphView>,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Array2<f64>, TeacherCache)> {
        if features.ncols() != self.input_dim {
            return Err(Error::Data(format!(
                "features have width {} but teacher expects {}",
                features.ncols(),
                self.input_dim
            )));
        }
        let owned = self.check_view(view, features.nrows())?;
        self.forward_with(features, owned.get(), dropout_rng)
    }

    /// Logits in evaluation mode.
    pub fn predict_logits(&self, features: &Array2<f64>, view: Option<&GraphView>) -> Result<Array2<f64>> {
        Ok(self.forward(features, view, None)?.0)
    }

    /// Summed CE over `train` plus the L2 term, at current parameters.
    pub fn loss(
        &self,
        features: &Array2<f64>,
        view: Option<&GraphView>,
        train: &[(usize, usize)],
    ) -> Result<f64> {
        let (logits, _) = self.forward(features, view, None)?;
        let mut loss = 0.0;
        for &(node, y) in train {
            let row = logits.row(node).to_owned();
            loss += -log_softmax(&row)[y];
        }
        Ok(loss + self.cfg.l2 * self.sum_squares())
    }

    fn sum_squares(&self) -> f64 {
        self.input.sum_squares()
            + self.output.sum_squares()
            + self.layers.iter().map(TeacherLayer::sum_squares).sum::<f64>()
    }

    fn zero_grads(&mut self) {
        self.input.zero_grad();
        self.output.zero_grad();
        for layer in &mut self.layers {
            layer.zero_grad();
        }
    }

    /// Backward pass from logit gradients; fills every gradient buffer.
    fn backward(
        &mut self,
        features: &Array2<f64>,
        view: &GraphView,
        cache: &TeacherCache,
        dlogits: &Array2<f64>,
    ) {
        let n = features.nrows();
        let h = self.cfg.hidden;

        let ds = self.output.backward_mat(&cache.s_out, dlogits);
        let last = &cache.states[self.cfg.layers];
        let mut dstate = &ds * &last.mapv(leaky_prime);
        if let Some(masks) = &cache.masks {
            dstate *= &masks[self.cfg.layers];
        }

        for l in (0..self.layers.len()).rev() {
            let lcache = &cache.layers[l];
            let input = &cache.states[l];
            let du = &dstate * &lcache.preact.mapv(leaky_prime);

            let layer = &mut self.layers[l];
            layer.g_self += &du.t().dot(input);
            let mut dx = du.dot(&layer.w_self);

            match &mut layer.params {
                LayerParams::Relational { w_rel, g_rel } => {
                    for (r, nbrs) in view.per_relation.iter().enumerate() {
                        let mut dmsg = Array2::zeros((n, h));
                        scatter_mean_grad(&du, nbrs, &mut dmsg);
                        g_rel[r] += &dmsg.t().dot(input);
                        dx += &dmsg.dot(&w_rel[r]);
                    }
                }
                LayerParams::Plain { w_nbr, g_nbr } => {
                    let mut dmsg = Array2::zeros((n, h));
                    scatter_mean_grad(&du, &view.merged, &mut dmsg);
                    *g_nbr += &dmsg.t().dot(input);
                    dx += &dmsg.dot(&*w_nbr);
                }
                LayerParams::Attention { w_nbr, g_nbr, a_src, g_src, a_dst, g_dst } => {
                    let g = &lcache.msgs[0];
                    let mut dg = Array2::zeros((n, h));
                    for i in 0..n {
                        let nbrs = &view.merged[i];
                        if nbrs.is_empty() {
                            continue;
                        }
                        let node = &lcache.attn[i];
                        let da_i = du.row(i);
                        // through the convex combination
                        let mut dalpha = vec![0.0f64; nbrs.len()];
                        for (k, &j) in nbrs.iter().enumerate() {
                            let mut row = dg.row_mut(j);
                            ndarray::Zip::from(&mut row)
                                .and(&g.row(j))
                                .and(&da_i)
                                .for_each(|t, _, &d| *t += node.alpha[k] * d);
                            dalpha[k] = g.row(j).dot(&da_i);
                        }
                        // softmax jacobian
                        let dot: f64 =
                            node.alpha.iter().zip(dalpha.iter()).map(|(&a, &d)| a * d).sum();
                        for (k, &j) in nbrs.iter().enumerate() {
                            let de = node.alpha[k] * (dalpha[k] - dot);
                            let ds = de * leaky_prime(node.scores[k]);
                            ndarray::Zip::from(&mut *g_src)
                                .and(&g.row(j))
                                .for_each(|acc, &v| *acc += ds * v);
                            ndarray::Zip::from(&mut *g_dst)
                                .and(&g.row(i))
                                .for_each(|acc, &v| *acc += ds * v);
                            let mut row_j = dg.row_mut(j);
                            ndarray::Zip::from(&mut row_j)
                                .and(&*a_src)
                                .for_each(|t, &v| *t += ds * v);
                            let mut row_i = dg.row_mut(i);
                            ndarray::Zip::from(&mut row_i)
                                .and(&*a_dst)
                                .for_each(|t, &v| *t += ds * v);
                        }
                    }
                    *g_nbr += &dg.t().dot(input);
                    dx += &dg.dot(&*w_nbr);
                }
                LayerParams::Mlp { g_bias, .. } => {
                    *g_bias += &du.sum_axis(Axis(0));
                }
            }

            dstate = dx;
            if let Some(masks) = &cache.masks {
                dstate *= &masks[l];
            }
        }

        self.input.backward_mat(features, &dstate);
    }

    /// One training step: summed CE over `train` pairs `(node, class)` plus
    /// L2, one AdamW update. Returns the loss.
    pub fn train_step(
        &mut self,
        features: &Array2<f64>,
        view: Option<&GraphView>,
        train: &[(usize, usize)],
        dropout_rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        if train.is_empty() {
            return Err(Error::Training("teacher training set is empty".into()));
        }
        let n = features.nrows();
        let owned_view = self.check_view(view, n)?;
        let (logits, cache) = {
            let v = owned_view.get();
            // re-dispatch through forward to share the dropout plumbing
            let rng = if self.cfg.dropout > 0.0 { Some(dropout_rng) } else { None };
            self.forward_with(features, v, rng)?
        };

        self.zero_grads();
        let mut loss = 0.0;
        let mut dlogits = Array2::zeros((n, 2));
        for &(node, y) in train {
            let row = logits.row(node).to_owned();
            let logp = log_softmax(&row);
            loss += -logp[y];
            let p = logp.mapv(f64::exp);
            let mut drow = dlogits.row_mut(node);
            drow += &p;
            drow[y] -= 1.0;
        }
        loss += self.cfg.l2 * self.sum_squares();

        let v = owned_view.get();
        self.backward(features, v, &cache, &dlogits);
        self.input.add_l2_grad(self.cfg.l2);
        self.output.add_l2_grad(self.cfg.l2);
        for layer in &mut self.layers {
            layer.add_l2_grad(self.cfg.l2);
        }
        self.apply_update();
        Ok(loss)
    }

    /// Forward against an already-checked view.
    fn forward_with(
        &self,
        features: &Array2<f64>,
        view: &GraphView,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Array2<f64>, TeacherCache)> {
        // identical to `forward` but skips the kind/view re-check
        let n = features.nrows();
        let p = self.cfg.dropout;
        let mut masks = dropout_rng.map(|rng| {
            let scale = 1.0 / (1.0 - p);
            let mut make = |dim: (usize, usize)| {
                Array2::from_shape_fn(dim, |_| if rng.gen::<f64>() >= p { scale } else { 0.0 })
            };
            (0..=self.cfg.layers).map(|_| make((n, self.cfg.hidden))).collect::<Vec<_>>()
        });
        if p == 0.0 {
            masks = None;
        }

        let proj = self.input.apply_mat(features);
        let mut states = Vec::with_capacity(self.cfg.layers + 1);
        let mut layer_caches = Vec::with_capacity(self.cfg.layers);
        let mut x = match &masks {
            Some(m) => &proj * &m[0],
            None => proj,
        };
        states.push(x.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let (h, cache) = layer_forward(layer, &x, view);
            layer_caches.push(cache);
            x = match &masks {
                Some(m) => &h * &m[l + 1],
                None => h,
            };
            states.push(x.clone());
        }
        let s_out = states[self.cfg.layers].mapv(leaky);
        let logits = self.output.apply_mat(&s_out);
        Ok((logits, TeacherCache { states, masks, layers: layer_caches, s_out }))
    }

    fn apply_update(&mut self) {
        let mut pairs: Vec<(ArrayViewMutD<f64>, ArrayViewD<f64>)> = Vec::new();
        {
            let Affine { w, b, gw, gb } = &mut self.input;
            pairs.push((w.view_mut().into_dyn(), gw.view().into_dyn()));
            pairs.push((b.view_mut().into_dyn(), gb.view().into_dyn()));
        }
        for layer in &mut self.layers {
            let TeacherLayer { w_self, g_self, params } = layer;
            pairs.push((w_self.view_mut().into_dyn(), g_self.view().into_dyn()));
            match params {
                LayerParams::Relational { w_rel, g_rel } => {
                    for (w, g) in w_rel.iter_mut().zip(g_rel.iter()) {
                        pairs.push((w.view_mut().into_dyn(), g.view().into_dyn()));
                    }
                }
                LayerParams::Plain { w_nbr, g_nbr } => {
                    pairs.push((w_nbr.view_mut().into_dyn(), g_nbr.view().into_dyn()));
                }
                LayerParams::Attention { w_nbr, g_nbr, a_src, g_src, a_dst, g_dst } => {
                    pairs.push((w_nbr.view_mut().into_dyn(), g_nbr.view().into_dyn()));
                    pairs.push((a_src.view_mut().into_dyn(), g_src.view().into_dyn()));
                    pairs.push((a_dst.view_mut().into_dyn(), g_dst.view().into_dyn()));
                }
                LayerParams::Mlp { bias, g_bias } => {
                    pairs.push((bias.view_mut().into_dyn(), g_bias.view().into_dyn()));
                }
            }
        }
        {
            let Affine { w, b, gw, gb } = &mut self.output;
            pairs.push((w.view_mut().into_dyn(), gw.view().into_dyn()));
            pairs.push((b.view_mut().into_dyn(), gb.view().into_dyn()));
        }
        self.opt.step(pairs);
    }

    /// Mutable parameter tensors in optimizer order (gradient-check hook).
    pub fn param_tensors(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out = Vec::new();
        {
            let Affine { w, b, .. } = &mut self.input;
            out.push(w.view_mut().into_dyn());
            out.push(b.view_mut().into_dyn());
        }
        for layer in &mut self.layers {
            let TeacherLayer { w_self, params, .. } = layer;
            out.push(w_self.view_mut().into_dyn());
            match params {
                LayerParams::Relational { w_rel, .. } => {
                    for w in w_rel.iter_mut() {
                        out.push(w.view_mut().into_dyn());
                    }
                }
                LayerParams::Plain { w_nbr, .. } => out.push(w_nbr.view_mut().into_dyn()),
                LayerParams::Attention { w_nbr, a_src, a_dst, .. } => {
                    out.push(w_nbr.view_mut().into_dyn());
                    out.push(a_src.view_mut().into_dyn());
                    out.push(a_dst.view_mut().into_dyn());
                }
                LayerParams::Mlp { bias, .. } => out.push(bias.view_mut().into_dyn()),
            }
        }
        {
            let Affine { w, b, .. } = &mut self.output;
            out.push(w.view_mut().into_dyn());
            out.push(b.view_mut().into_dyn());
        }
        out
    }

    /// Gradient tensors aligned with [`Teacher::param_tensors`].
    pub fn grad_tensors(&self) -> Vec<ArrayViewD<'_, f64>> {
        let mut out = Vec::new();
        out.push(self.input.gw.view().into_dyn());
        out.push(self.input.gb.view().into_dyn());
        for layer in &self.layers {
            out.push(layer.g_self.view().into_dyn());
            match &layer.params {
                LayerParams::Relational { g_rel, .. } => {
                    for g in g_rel {
                        out.push(g.view().into_dyn());
                    }
                }
                LayerParams::Plain { g_nbr, .. } => out.push(g_nbr.view().into_dyn()),
                LayerParams::Attention { g_nbr, g_src, g_dst, .. } => {
                    out.push(g_nbr.view().into_dyn());
                    out.push(g_src.view().into_dyn());
                    out.push(g_dst.view().into_dyn());
                }
                LayerParams::Mlp { g_bias, .. } => out.push(g_bias.view().into_dyn()),
            }
        }
        out.push(self.output.gw.view().into_dyn());
        out.push(self.output.gb.view().into_dyn());
        out
    }

    /// Computes gradients for the training loss without updating; used by
    /// the gradient-check suite.
    pub fn loss_and_grad(
        &mut self,
        features: &Array2<f64>,
        view: Option<&GraphView>,
        train: &[(usize, usize)],
    ) -> Result<f64> {
        let n = features.nrows();
        let owned_view = self.check_view(view, n)?;
        let (logits, cache) = self.forward_with(features, owned_view.get(), None)?;
        self.zero_grads();
        let mut loss = 0.0;
        let mut dlogits = Array2::zeros((n, 2));
        for &(node, y) in train {
            let row = logits.row(node).to_owned();
            let logp = log_softmax(&row);
            loss += -logp[y];
            let p = logp.mapv(f64::exp);
            let mut drow = dlogits.row_mut(node);
            drow += &p;
            drow[y] -= 1.0;
        }
        loss += self.cfg.l2 * self.sum_squares();
        let v = owned_view.get();
        self.backward(features, v, &cache, &dlogits);
        self.input.add_l2_grad(self.cfg.l2);
        self.output.add_l2_grad(self.cfg.l2);
        for layer in &mut self.layers {
            layer.add_l2_grad(self.cfg.l2);
        }
        Ok(loss)
    }

    // --- checkpointing ------------------------------------------------------

    pub fn save(&self, dir: &Path) -> Result<()> {
        crate::distill::write_checkpoint(dir, "teacher", &self.manifest(), self)
    }

    pub fn load(dir: &Path) -> Result<Teacher> {
        let teacher: Teacher = crate::distill::read_checkpoint(dir, "teacher")?;
        teacher.cfg.validate()?;
        Ok(teacher)
    }

    pub fn manifest(&self) -> serde_json::Value {
        serde_json::json!({
            "model": "teacher",
            "kind": self.cfg.kind.as_str(),
            "layers": self.cfg.layers,
            "hidden": self.cfg.hidden,
            "input_dim": self.input_dim,
            "relations": self.relation_names,
            "config": self.cfg,
        })
    }

    /// Test hook: layer access for hand-built fixtures.
    pub fn layers_mut(&mut self) -> &mut Vec<TeacherLayer> {
        &mut self.layers
    }

    pub fn input_mut(&mut self) -> &mut Affine {
        &mut self.input
    }

    pub fn output_mut(&mut self) -> &mut Affine {
        &mut self.output
    }
}

/// Either a caller-provided view or an owned empty one (mlp path).
enum GraphViewRef<'a> {
    Borrowed(&'a GraphView),
    Empty(GraphView),
}

impl<'a> GraphViewRef<'a> {
    fn get(&self) -> &GraphView {
        match self {
            GraphViewRef::Borrowed(v) => v,
            GraphViewRef::Empty(v) => v,
        }
    }
}

// --- soft labels -------------------------------------------------------------

/// Temperature-softened teacher predictions for a node set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SoftLabelTable {
    pub temperature: f64,
    /// `(node index, [p_human, p_bot])`, tempered.
    pub rows: Vec<(usize, [f64; 2])>,
}

impl SoftLabelTable {
    pub fn lookup(&self) -> std::collections::HashMap<usize, [f64; 2]> {
        self.rows.iter().copied().collect()
    }
}

/// Softmax of `logits / temperature` for every node in `nodes`.
pub fn make_soft_labels(
    logits: &Array2<f64>,
    nodes: &[usize],
    temperature: f64,
) -> Result<SoftLabelTable> {
    if !(temperature > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
    }
    if nodes.is_empty() {
        return Err(Error::Config("soft-label node set is empty".into()));
    }
    let mut rows = Vec::with_capacity(nodes.len());
    for &i in nodes {
        let row = logits.row(i).to_owned() / temperature;
        let p = log_softmax(&row).mapv(f64::exp);
        rows.push((i, [p[0], p[1]]));
    }
    Ok(SoftLabelTable { temperature, rows })
}

#[derive(Serialize, Deserialize)]
struct SoftLabelRow {
    user_id: String,
    p_human: f64,
    p_bot: f64,
    temperature: f64,
}

impl SoftLabelTable {
    /// Writes one JSON row per node: user_id, p_human, p_bot, temperature.
    pub fn save_jsonl(&self, path: &Path, user_ids: &[String]) -> Result<()> {
        use std::io::Write;
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for &(node, [p_human, p_bot]) in &self.rows {
            let row = SoftLabelRow {
                user_id: user_ids[node].clone(),
                p_human,
                p_bot,
                temperature: self.temperature,
            };
            let line = serde_json::to_string(&row).map_err(|e| Error::Data(e.to_string()))?;
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}
