//! Small heterogeneous message-passing network used as a reference model.
//!
//! Each layer computes, for every node `v`,
//!
//! ```text
//! h'_v = tanh(W_self h_v + b + sum_r W_r mean_{u -> v in r} h_u)
//! ```
//!
//! over eight relations: the four note relations, note->beat, beat->note,
//! note->measure and measure->note. A linear readout plus softmax gives the
//! per-note class distribution. Forward and backward passes are written out
//! by hand; all parameters live in one flat vector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{default_label_names, softmax, NodeClassifier, Predictions};
use crate::error::{Error, Result};
use crate::features::{hierarchy_features, note_features, FEATURE_LAYOUT, FEATURE_WIDTH};
use crate::graph::{EdgeType, NodeRef, ScoreGraph};
use crate::note::NoteId;

pub const CHECKPOINT_FORMAT: &str = "scorecf-reference-gnn";
pub const CHECKPOINT_VERSION: u32 = 1;

const RELATIONS: [&str; 8] = [
    "onset",
    "consecutive",
    "during",
    "rest",
    "note_to_beat",
    "beat_to_note",
    "note_to_measure",
    "measure_to_note",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnnConfig {
    pub input_width: usize,
    pub hidden_width: usize,
    pub layers: usize,
    pub num_classes: usize,
    pub seed: u64,
    pub label_names: Vec<String>,
}

impl Default for GnnConfig {
    fn default() -> Self {
        GnnConfig {
            input_width: FEATURE_WIDTH,
            hidden_width: 16,
            layers: 2,
            num_classes: 2,
            seed: 0,
            label_names: default_label_names(2),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Group {
    name: String,
    offset: usize,
    rows: usize,
    cols: usize,
}

impl Group {
    fn len(&self) -> usize {
        self.rows * self.cols
    }
}

/// Graph compiled into dense node indices and per-relation in-neighbour lists.
struct Prepared {
    inputs: Vec<Vec<f64>>,
    note_ids: Vec<NoteId>,
    /// `incoming[r][v]` lists the sources of relation `r` edges into `v`.
    incoming: Vec<Vec<Vec<usize>>>,
}

impl Prepared {
    fn new(graph: &ScoreGraph) -> Prepared {
        let mut index = std::collections::HashMap::new();
        let mut inputs = Vec::new();
        let mut note_ids = Vec::new();
        for n in graph.active_notes() {
            index.insert(NodeRef::note(&n.id), inputs.len());
            inputs.push(note_features(n).to_vec());
            note_ids.push(n.id.clone());
        }
        if let Some(h) = graph.hierarchy() {
            for b in &h.beats {
                index.insert(NodeRef::Beat(*b), inputs.len());
                inputs.push(hierarchy_features().to_vec());
            }
            for m in &h.measures {
                index.insert(NodeRef::Measure(*m), inputs.len());
                inputs.push(hierarchy_features().to_vec());
            }
        }
        let mut incoming = vec![vec![Vec::new(); inputs.len()]; RELATIONS.len()];
        for e in graph.edges() {
            let (Some(&s), Some(&d)) = (index.get(&e.src), index.get(&e.dst)) else {
                continue;
            };
            match e.kind {
                EdgeType::Onset => incoming[0][d].push(s),
                EdgeType::Consecutive => incoming[1][d].push(s),
                EdgeType::During => incoming[2][d].push(s),
                EdgeType::Rest => incoming[3][d].push(s),
                EdgeType::NoteToBeat => {
                    incoming[4][d].push(s);
                    incoming[5][s].push(d);
                }
                EdgeType::NoteToMeasure => {
                    incoming[6][d].push(s);
                    incoming[7][s].push(d);
                }
            }
        }
        Prepared {
            inputs,
            note_ids,
            incoming,
        }
    }

    fn num_nodes(&self) -> usize {
        self.inputs.len()
    }
}

/// Per-layer activations kept for the backward pass.
struct Trace {
    /// `hidden[0]` is the input; `hidden[l + 1]` the output of layer `l`.
    hidden: Vec<Vec<Vec<f64>>>,
    probs: Vec<Vec<f64>>,
}

/// Gradient of the loss with respect to every parameter group.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub flat: Vec<f64>,
    pub groups: Vec<(String, std::ops::Range<usize>)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceGnn {
    config: GnnConfig,
    groups: Vec<Group>,
    params: Vec<f64>,
}

fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate().take(rows) {
        let row = &w[r * cols..(r + 1) * cols];
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

fn matvec_t(w: &[f64], rows: usize, cols: usize, y: &[f64], out: &mut [f64]) {
    for (r, yr) in y.iter().enumerate().take(rows) {
        if *yr == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * yr;
        }
    }
}

fn add_outer(g: &mut [f64], cols: usize, y: &[f64], x: &[f64], scale: f64) {
    for (r, yr) in y.iter().enumerate() {
        if *yr == 0.0 {
            continue;
        }
        let row = &mut g[r * cols..(r + 1) * cols];
        for (gv, xv) in row.iter_mut().zip(x) {
            *gv += scale * yr * xv;
        }
    }
}

fn mean_of(rows: &[Vec<f64>], idx: &[usize], width: usize) -> Vec<f64> {
    let mut m = vec![0.0; width];
    for &u in idx {
        for (a, b) in m.iter_mut().zip(&rows[u]) {
            *a += b;
        }
    }
    let k = idx.len() as f64;
    m.iter_mut().for_each(|a| *a /= k);
    m
}

impl ReferenceGnn {
    pub fn new(config: GnnConfig) -> Result<Self> {
        if config.num_classes < 2 {
            return Err(Error::validation("reference model needs at least two classes"));
        }
        if config.hidden_width == 0 || config.input_width == 0 {
            return Err(Error::validation("layer widths must be positive"));
        }
        if config.label_names.len() != config.num_classes {
            return Err(Error::validation("label_names must have one entry per class"));
        }
        let mut groups = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, rows: usize, cols: usize| {
            groups.push(Group {
                name,
                offset,
                rows,
                cols,
            });
            offset += rows * cols;
        };
        let mut width = config.input_width;
        for l in 0..config.layers {
            push(format!("layer{l}.self"), config.hidden_width, width);
            push(format!("layer{l}.bias"), config.hidden_width, 1);
            for rel in RELATIONS {
                push(format!("layer{l}.rel.{rel}"), config.hidden_width, width);
            }
            width = config.hidden_width;
        }
        push("readout.weight".into(), config.num_classes, width);
        push("readout.bias".into(), config.num_classes, 1);

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = vec![0.0; offset];
        for g in &groups {
            if g.cols == 1 {
                continue;
            }
            let a = (6.0 / (g.rows + g.cols) as f64).sqrt();
            for p in &mut params[g.offset..g.offset + g.len()] {
                *p = rng.gen_range(-a..a);
            }
        }
        Ok(ReferenceGnn { config, groups, params })
    }

    pub fn config(&self) -> &GnnConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn group_names(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.name.clone()).collect()
    }

    // Groups are laid out as [self, bias, rel x 8] per layer, then readout.
    fn self_group(l: usize) -> usize {
        l * (2 + RELATIONS.len())
    }

    fn bias_group(l: usize) -> usize {
        Self::self_group(l) + 1
    }

    fn rel_group(l: usize, r: usize) -> usize {
        Self::self_group(l) + 2 + r
    }

    fn readout_group(&self) -> usize {
        Self::self_group(self.config.layers)
    }

    fn weights(&self, group: usize) -> (&[f64], usize, usize) {
        let g = &self.groups[group];
        (&self.params[g.offset..g.offset + g.len()], g.rows, g.cols)
    }

    fn check_graph(&self, graph: &ScoreGraph) -> Result<()> {
        if self.config.input_width != FEATURE_WIDTH || graph.meta.feature_layout != FEATURE_LAYOUT {
            return Err(Error::validation(format!(
                "model input width {} does not match feature layout `{}` (width {})",
                self.config.input_width, graph.meta.feature_layout, FEATURE_WIDTH
            )));
        }
        Ok(())
    }

    fn forward(&self, prep: &Prepared) -> Trace {
        let n = prep.num_nodes();
        let hw = self.config.hidden_width;
        let mut hidden = vec![prep.inputs.clone()];
        let mut width = self.config.input_width;
        for l in 0..self.config.layers {
            let h = hidden.last().expect("input layer");
            let (ws, _, _) = self.weights(Self::self_group(l));
            let (b, _, _) = self.weights(Self::bias_group(l));
            let mut next = vec![vec![0.0; hw]; n];
            for v in 0..n {
                let z = &mut next[v];
                z.copy_from_slice(b);
                matvec(ws, hw, width, &h[v], z);
                for r in 0..RELATIONS.len() {
                    let src = &prep.incoming[r][v];
                    if src.is_empty() {
                        continue;
                    }
                    let m = mean_of(h, src, width);
                    let (wr, _, _) = self.weights(Self::rel_group(l, r));
                    matvec(wr, hw, width, &m, z);
                }
                z.iter_mut().for_each(|x| *x = x.tanh());
            }
            hidden.push(next);
            width = hw;
        }
        let (wo, c, _) = self.weights(self.readout_group());
        let (bo, _, _) = self.weights(self.readout_group() + 1);
        let last = hidden.last().expect("at least the input");
        let probs = (0..prep.note_ids.len())
            .map(|v| {
                let mut logits = bo.to_vec();
                matvec(wo, c, width, &last[v], &mut logits);
                softmax(&logits)
            })
            .collect();
        Trace { hidden, probs }
    }

    /// Per-note distributions; removed notes are neither inputs nor outputs.
    pub fn reference_forward(&self, graph: &ScoreGraph) -> Result<Predictions> {
        self.check_graph(graph)?;
        let prep = Prepared::new(graph);
        let trace = self.forward(&prep);
        Ok(prep.note_ids.into_iter().zip(trace.probs).collect())
    }

    fn check_labels(&self, graph: &ScoreGraph, labels: &[usize]) -> Result<()> {
        if labels.len() != graph.num_active_notes() {
            return Err(Error::validation(format!(
                "{} labels for {} active notes",
                labels.len(),
                graph.num_active_notes()
            )));
        }
        if let Some(bad) = labels.iter().find(|l| **l >= self.config.num_classes) {
            return Err(Error::validation(format!(
                "label {bad} >= {} classes",
                self.config.num_classes
            )));
        }
        Ok(())
    }

    /// Summed cross-entropy over the graph's notes and its gradient,
    /// accumulated (scaled by `scale`) into `grad`.
    fn accumulate(&self, prep: &Prepared, labels: &[usize], scale: f64, grad: &mut [f64]) -> f64 {
        let trace = self.forward(prep);
        let n = prep.num_nodes();
        let hw = self.config.hidden_width;
        let layers = self.config.layers;
        let top_width = if layers == 0 { self.config.input_width } else { hw };
        let mut loss = 0.0;

        let go = self.groups[self.readout_group()].clone();
        let gb = self.groups[self.readout_group() + 1].clone();
        let (wo, c, _) = self.weights(self.readout_group());
        let mut dh = vec![vec![0.0; top_width]; n];
        let last = &trace.hidden[layers];
        for (v, (p, y)) in trace.probs.iter().zip(labels).enumerate() {
            loss -= p[*y].max(1e-300).ln();
            let mut dlogit = p.clone();
            dlogit[*y] -= 1.0;
            dlogit.iter_mut().for_each(|x| *x *= scale);
            add_outer(
                &mut grad[go.offset..go.offset + go.len()],
                top_width,
                &dlogit,
                &last[v],
                1.0,
            );
            for (gbv, d) in grad[gb.offset..gb.offset + gb.len()].iter_mut().zip(&dlogit) {
                *gbv += d;
            }
            matvec_t(wo, c, top_width, &dlogit, &mut dh[v]);
        }

        for l in (0..layers).rev() {
            let h_in = &trace.hidden[l];
            let h_out = &trace.hidden[l + 1];
            let width = if l == 0 { self.config.input_width } else { hw };
            let dz: Vec<Vec<f64>> = dh
                .iter()
                .zip(h_out)
                .map(|(d, h)| d.iter().zip(h).map(|(a, b)| a * (1.0 - b * b)).collect())
                .collect();
            let mut dh_in = vec![vec![0.0; width]; n];
            let gs = self.groups[Self::self_group(l)].clone();
            let gbias = self.groups[Self::bias_group(l)].clone();
            let (ws, _, _) = self.weights(Self::self_group(l));
            for v in 0..n {
                add_outer(&mut grad[gs.offset..gs.offset + gs.len()], width, &dz[v], &h_in[v], 1.0);
                for (g, d) in grad[gbias.offset..gbias.offset + gbias.len()].iter_mut().zip(&dz[v]) {
                    *g += d;
                }
                matvec_t(ws, hw, width, &dz[v], &mut dh_in[v]);
            }
            for r in 0..RELATIONS.len() {
                let gr = self.groups[Self::rel_group(l, r)].clone();
                let (wr, _, _) = self.weights(Self::rel_group(l, r));
                for (src, dzv) in prep.incoming[r].iter().zip(&dz) {
                    if src.is_empty() {
                        continue;
                    }
                    let m = mean_of(h_in, src, width);
                    add_outer(&mut grad[gr.offset..gr.offset + gr.len()], width, dzv, &m, 1.0);
                    let mut dm = vec![0.0; width];
                    matvec_t(wr, hw, width, dzv, &mut dm);
                    let k = src.len() as f64;
                    for &u in src {
                        for (a, b) in dh_in[u].iter_mut().zip(&dm) {
                            *a += b / k;
                        }
                    }
                }
            }
            dh = dh_in;
        }
        loss
    }

    fn empty_gradients(&self) -> Gradients {
        Gradients {
            flat: vec![0.0; self.params.len()],
            groups: self
                .groups
                .iter()
                .map(|g| (g.name.clone(), g.offset..g.offset + g.len()))
                .collect(),
        }
    }

    /// Mean cross-entropy over the graph's notes.
    pub fn loss(&self, graph: &ScoreGraph, labels: &[usize]) -> Result<f64> {
        self.check_graph(graph)?;
        self.check_labels(graph, labels)?;
        let out = self.reference_forward(graph)?;
        let total: f64 = out.values().zip(labels).map(|(p, y)| -p[*y].max(1e-300).ln()).sum();
        Ok(total / labels.len().max(1) as f64)
    }

    /// Mean cross-entropy and its analytic gradient.
    pub fn gradients(&self, graph: &ScoreGraph, labels: &[usize]) -> Result<(f64, Gradients)> {
        self.check_graph(graph)?;
        self.check_labels(graph, labels)?;
        let prep = Prepared::new(graph);
        let mut grads = self.empty_gradients();
        let k = labels.len().max(1) as f64;
        let loss = self.accumulate(&prep, labels, 1.0 / k, &mut grads.flat);
        Ok((loss / k, grads))
    }

    /// Adam on per-graph steps, graphs visited in dataset order.
    pub fn train(&mut self, dataset: &[super::LabeledGraph], cfg: &TrainConfig) -> Result<TrainReport> {
        if dataset.is_empty() {
            return Err(Error::validation("training dataset is empty"));
        }
        if !(cfg.learning_rate.is_finite() && cfg.learning_rate >= 0.0) {
            return Err(Error::validation("learning rate must be finite and >= 0"));
        }
        let mut prepared = Vec::with_capacity(dataset.len());
        for item in dataset {
            self.check_graph(&item.graph)?;
            self.check_labels(&item.graph, &item.labels)?;
            prepared.push(Prepared::new(&item.graph));
        }
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let mut m = vec![0.0; self.params.len()];
        let mut v = vec![0.0; self.params.len()];
        let mut step = 0i32;
        let mut epoch_loss = Vec::with_capacity(cfg.epochs);
        for _ in 0..cfg.epochs {
            let mut total = 0.0;
            let mut count = 0usize;
            for (prep, item) in prepared.iter().zip(dataset) {
                if item.labels.is_empty() {
                    continue;
                }
                let k = item.labels.len() as f64;
                let mut grad = vec![0.0; self.params.len()];
                total += self.accumulate(prep, &item.labels, 1.0 / k, &mut grad);
                count += item.labels.len();
                step += 1;
                let (c1, c2) = (1.0 - b1.powi(step), 1.0 - b2.powi(step));
                for i in 0..self.params.len() {
                    m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
                    v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
                    self.params[i] -= cfg.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                }
            }
            epoch_loss.push(total / count.max(1) as f64);
        }
        Ok(TrainReport { epoch_loss })
    }

    /// Fraction of notes whose argmax matches the label.
    pub fn accuracy(&self, dataset: &[super::LabeledGraph]) -> Result<f64> {
        let mut hit = 0usize;
        let mut total = 0usize;
        for item in dataset {
            let out = self.reference_forward(&item.graph)?;
            for (p, y) in out.values().zip(&item.labels) {
                hit += (super::argmax(p) == *y) as usize;
                total += 1;
            }
        }
        Ok(if total == 0 { 0.0 } else { hit as f64 / total as f64 })
    }

    pub fn to_checkpoint(&self) -> GnnCheckpoint {
        GnnCheckpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            feature_layout: FEATURE_LAYOUT.into(),
            config: self.config.clone(),
            weights: self
                .groups
                .iter()
                .map(|g| CheckpointGroup {
                    name: g.name.clone(),
                    rows: g.rows,
                    cols: g.cols,
                    values: self.params[g.offset..g.offset + g.len()]
                        .iter()
                        .map(|x| x.to_string())
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: &GnnCheckpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::validation(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        if ck.feature_layout != FEATURE_LAYOUT {
            return Err(Error::validation(format!(
                "checkpoint feature layout `{}` unsupported",
                ck.feature_layout
            )));
        }
        let mut model = ReferenceGnn::new(ck.config.clone())?;
        if ck.weights.len() != model.groups.len() {
            return Err(Error::validation(
                "checkpoint parameter groups do not match the architecture",
            ));
        }
        for (g, w) in model.groups.clone().iter().zip(&ck.weights) {
            if g.name != w.name || g.rows != w.rows || g.cols != w.cols || w.values.len() != g.len() {
                return Err(Error::validation(format!(
                    "checkpoint group `{}` has the wrong shape",
                    w.name
                )));
            }
            for (i, s) in w.values.iter().enumerate() {
                let x: f64 = s
                    .parse()
                    .map_err(|_| Error::validation(format!("bad weight `{s}` in group `{}`", w.name)))?;
                if !x.is_finite() {
                    return Err(Error::validation(format!("non-finite weight in group `{}`", w.name)));
                }
                model.params[g.offset + i] = x;
            }
        }
        Ok(model)
    }
}

impl NodeClassifier for ReferenceGnn {
    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn label_names(&self) -> Vec<String> {
        self.config.label_names.clone()
    }

    fn classify(&self, graph: &ScoreGraph) -> Result<Predictions> {
        self.reference_forward(graph)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            learning_rate: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_loss: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointGroup {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<String>,
}

/// Versioned JSON checkpoint; weights are stored as decimal strings that
/// parse back to the identical `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnnCheckpoint {
    pub format: String,
    pub version: u32,
    pub feature_layout: String,
    pub config: GnnConfig,
    pub weights: Vec<CheckpointGroup>,
}
