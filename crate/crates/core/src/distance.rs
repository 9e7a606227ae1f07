//! Counterfactual loss: a weighted cross-entropy towards the desired label
//! plus node-feature distance and edit distance from the original graph.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::edits::EditLog;
use crate::error::{Error, Result};
use crate::features::{l1_distance, l1_norm, note_features};
use crate::graph::{Edge, NodeRef, ScoreGraph};
use crate::model::NodeClassifier;
use crate::note::NoteId;

/// Floor applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;
/// Allowed deviation of a distribution's total mass from 1.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the cross-entropy (counterfactual) term.
    pub lambda: f64,
    pub lambda_nd: f64,
    pub lambda_gp: f64,
}

impl LossConfig {
    /// Distance-leaning balance: lambda 2.0, lambda_nd = lambda_gp = 0.1.
    pub fn distance_balance() -> Self {
        LossConfig {
            lambda: 2.0,
            lambda_nd: 0.1,
            lambda_gp: 0.1,
        }
    }

    /// Counterfactual-leaning balance: lambda 2.0, lambda_nd = lambda_gp = 0.01.
    pub fn counterfactual_balance() -> Self {
        LossConfig {
            lambda: 2.0,
            lambda_nd: 0.01,
            lambda_gp: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("lambda_nd", self.lambda_nd),
            ("lambda_gp", self.lambda_gp),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn combine(&self, entropy_term: f64, nd_term: f64, gp_term: f64) -> LossBreakdown {
        LossBreakdown {
            entropy_term,
            nd_term,
            gp_term,
            total: self.lambda * entropy_term + (self.lambda_nd * nd_term + self.lambda_gp * gp_term),
        }
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        Self::distance_balance()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub entropy_term: f64,
    pub nd_term: f64,
    pub gp_term: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// The weighted distance part of the total.
    pub fn weighted_distance(&self, config: &LossConfig) -> f64 {
        config.lambda_nd * self.nd_term + config.lambda_gp * self.gp_term
    }
}

/// Feature distance between two graphs over a shared id namespace: L1
/// differences for notes active in both, plus the L1 mass of notes active
/// in only one of them.
pub fn node_distance(cf: &ScoreGraph, original: &ScoreGraph) -> Result<f64> {
    if cf.meta.feature_layout != original.meta.feature_layout {
        return Err(Error::validation(format!(
            "feature layouts differ: `{}` vs `{}`",
            cf.meta.feature_layout, original.meta.feature_layout
        )));
    }
    let mut total = 0.0;
    for n in original.notes() {
        let other = cf.note(&n.id);
        match (n.removed, other.filter(|o| !o.removed)) {
            (false, Some(o)) => total += l1_distance(&note_features(n), &note_features(o)),
            (false, None) => total += l1_norm(&note_features(n)),
            (true, Some(o)) => total += l1_norm(&note_features(o)),
            (true, None) => {}
        }
    }
    for n in cf.active_notes().filter(|n| !original.contains(&n.id)) {
        total += l1_norm(&note_features(n));
    }
    Ok(total)
}

/// Net change accumulated over a log: an edge added and later removed (or
/// the reverse) cancels out.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NetDelta {
    pub added_edges: BTreeSet<Edge>,
    pub removed_edges: BTreeSet<Edge>,
    pub added_nodes: BTreeSet<NodeRef>,
    pub removed_nodes: BTreeSet<NodeRef>,
}

fn compose<T: Ord + Clone>(
    added: &mut BTreeSet<T>,
    removed: &mut BTreeSet<T>,
    step_added: &BTreeSet<T>,
    step_removed: &BTreeSet<T>,
) {
    for x in step_removed {
        if !added.remove(x) {
            removed.insert(x.clone());
        }
    }
    for x in step_added {
        if !removed.remove(x) {
            added.insert(x.clone());
        }
    }
}

pub fn net_delta(log: &EditLog) -> NetDelta {
    let mut net = NetDelta::default();
    for entry in &log.entries {
        let d = &entry.delta;
        compose(
            &mut net.added_edges,
            &mut net.removed_edges,
            &d.added_edges,
            &d.removed_edges,
        );
        compose(
            &mut net.added_nodes,
            &mut net.removed_nodes,
            &d.added_nodes,
            &d.removed_nodes,
        );
    }
    net
}

/// Graph edit distance recovered from the tracked edits.
pub fn graph_distance(log: &EditLog) -> f64 {
    let net = net_delta(log);
    (net.added_edges.len() + net.removed_edges.len() + net.added_nodes.len() + net.removed_nodes.len()) as f64
}

pub fn check_distribution(prediction: &[f64]) -> Result<()> {
    if prediction.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::validation(format!(
            "distribution has negative or non-finite entries: {prediction:?}"
        )));
    }
    let sum: f64 = prediction.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::validation(format!("distribution sums to {sum}, not 1")));
    }
    Ok(())
}

pub fn cross_entropy(prediction: &[f64], target: usize) -> Result<f64> {
    check_distribution(prediction)?;
    let p = prediction
        .get(target)
        .ok_or_else(|| Error::validation(format!("target class {target} >= {} classes", prediction.len())))?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// Loss terms together with the prediction they were computed from.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: LossBreakdown,
    pub prediction: Vec<f64>,
}

/// Full loss evaluation of a counterfactual graph.
pub fn evaluate(
    cf: &ScoreGraph,
    original: &ScoreGraph,
    log: &EditLog,
    target_node: &NoteId,
    target_label: usize,
    model: &dyn NodeClassifier,
    config: &LossConfig,
) -> Result<Evaluation> {
    match cf.note(target_node) {
        None => return Err(Error::UnknownNode(target_node.to_string())),
        Some(n) if n.removed => {
            return Err(Error::Evaluation(format!(
                "target note `{target_node}` is removed in the counterfactual"
            )))
        }
        _ => {}
    }
    let outputs = model.classify(cf)?;
    let prediction = outputs
        .get(target_node)
        .cloned()
        .ok_or_else(|| Error::Evaluation(format!("model produced no output for `{target_node}`")))?;
    let entropy = cross_entropy(&prediction, target_label)?;
    let nd = node_distance(cf, original)?;
    let gp = graph_distance(log);
    Ok(Evaluation {
        loss: config.combine(entropy, nd, gp),
        prediction,
    })
}

pub fn loss(
    cf: &ScoreGraph,
    original: &ScoreGraph,
    log: &EditLog,
    target_node: &NoteId,
    target_label: usize,
    model: &dyn NodeClassifier,
    config: &LossConfig,
) -> Result<LossBreakdown> {
    evaluate(cf, original, log, target_node, target_label, model, config).map(|e| e.loss)
}
