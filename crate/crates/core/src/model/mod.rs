//! Node classifiers treated as black boxes by the explainer.

mod gnn;
mod rule;
mod synth;

pub use gnn::{
    GnnCheckpoint, GnnConfig, Gradients, ReferenceGnn, TrainConfig, TrainReport, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use rule::{Rule, RuleClassifier};
pub use synth::{synth_dataset, synth_notes, synth_piece, Dataset, LabeledGraph, SynthConfig};

use indexmap::IndexMap;

use crate::distance::check_distribution;
use crate::error::{Error, Result};
use crate::graph::ScoreGraph;
use crate::note::NoteId;

/// Class distribution per active note, in graph order.
pub type Predictions = IndexMap<NoteId, Vec<f64>>;

/// Graph in, per-note class distribution out.
pub trait NodeClassifier: Send + Sync {
    fn num_classes(&self) -> usize;

    fn label_names(&self) -> Vec<String> {
        default_label_names(self.num_classes())
    }

    fn classify(&self, graph: &ScoreGraph) -> Result<Predictions>;
}

/// `["NC", "PAC"]` for two classes, `class{i}` otherwise.
pub fn default_label_names(num_classes: usize) -> Vec<String> {
    if num_classes == 2 {
        vec!["NC".into(), "PAC".into()]
    } else {
        (0..num_classes).map(|i| format!("class{i}")).collect()
    }
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / s).collect()
}

/// Returns the same distribution for every note.
#[derive(Clone, Debug)]
pub struct ConstantClassifier {
    distribution: Vec<f64>,
}

impl ConstantClassifier {
    pub fn new(distribution: Vec<f64>) -> Result<Self> {
        if distribution.len() < 2 {
            return Err(Error::validation("a classifier needs at least two classes"));
        }
        check_distribution(&distribution)?;
        Ok(ConstantClassifier { distribution })
    }

    pub fn one_hot(num_classes: usize, class: usize) -> Result<Self> {
        if class >= num_classes {
            return Err(Error::validation(format!("class {class} >= {num_classes}")));
        }
        let mut d = vec![0.0; num_classes];
        d[class] = 1.0;
        Self::new(d)
    }

    pub fn uniform(num_classes: usize) -> Result<Self> {
        Self::new(vec![1.0 / num_classes as f64; num_classes])
    }
}

impl NodeClassifier for ConstantClassifier {
    fn num_classes(&self) -> usize {
        self.distribution.len()
    }

    fn classify(&self, graph: &ScoreGraph) -> Result<Predictions> {
        Ok(graph
            .active_notes()
            .map(|n| (n.id.clone(), self.distribution.clone()))
            .collect())
    }
}
