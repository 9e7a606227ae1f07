//! Iterative counterfactual search.
//!
//! Starting from the input graph, each round proposes every legal one-edit
//! extension of the last committed graph, trains an inner model on their
//! losses and commits its choice, so explanation `k` carries the edits of
//! explanation `k - 1` plus one more. Two inner models are available:
//! an exhaustive greedy search and a learned score-function policy.

mod experiment;
mod features;
mod policy;
mod report;

pub use experiment::{run_experiment, CellSummary, ExperimentCell, ExperimentTable, RunRecord, Stat, METRIC_ROWS};
pub use features::{candidate_features, initial_policy, FEATURE_DIM};
pub use policy::{CandidateFeatures, InnerPolicy};
pub use report::{OriginalDump, ParsedReport, SequenceReport, StepReport, REPORT_VERSION};

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::{evaluate, graph_distance, node_distance, Evaluation, LossBreakdown, LossConfig};
use crate::edits::{apply_edit, candidate_edits, CandidateSpec, EditLog, EditOp, OpKind};
use crate::error::{Error, Result};
use crate::graph::ScoreGraph;
use crate::model::{argmax, NodeClassifier};
use crate::note::NoteId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Greedy,
    Learned,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "greedy" => Ok(Mode::Greedy),
            "learned" => Ok(Mode::Learned),
            other => Err(Error::validation(format!(
                "unknown mode `{other}` (expected greedy or learned)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplainConfig {
    /// Number of explanations (rounds).
    pub n: usize,
    /// Inner training steps per round. Greedy mode evaluates the whole
    /// candidate set once regardless of `t`.
    pub t: usize,
    pub target_node: NoteId,
    pub target_label: usize,
    pub loss: LossConfig,
    pub mode: Mode,
    pub allowed_ops: Option<BTreeSet<OpKind>>,
    /// One op type per round; overrides `allowed_ops`.
    pub op_path: Option<Vec<OpKind>>,
    pub policy_learning_rate: f64,
    pub pitch_window: u8,
    pub max_candidates: usize,
    pub seed: u64,
    /// Seconds; rounds stop once it is exceeded.
    pub time_budget: Option<f64>,
}

impl ExplainConfig {
    pub fn new(target_node: impl Into<NoteId>, target_label: usize) -> Self {
        ExplainConfig {
            n: 10,
            t: 50,
            target_node: target_node.into(),
            target_label,
            loss: LossConfig::default(),
            mode: Mode::Greedy,
            allowed_ops: None,
            op_path: None,
            policy_learning_rate: 0.25,
            pitch_window: 12,
            max_candidates: 4096,
            seed: 0,
            time_budget: None,
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.n == 0 || self.t == 0 {
            return Err(Error::validation("n and t must be at least 1"));
        }
        if self.target_label >= num_classes {
            return Err(Error::validation(format!(
                "target label {} >= {num_classes} classes",
                self.target_label
            )));
        }
        self.loss.validate()?;
        if let Some(path) = &self.op_path {
            if path.len() != self.n {
                return Err(Error::validation(format!(
                    "op path has {} entries but n = {}",
                    path.len(),
                    self.n
                )));
            }
        }
        if let Some(allowed) = &self.allowed_ops {
            if allowed.is_empty() {
                return Err(Error::validation("allowed op set is empty"));
            }
        }
        if !(self.policy_learning_rate.is_finite() && self.policy_learning_rate >= 0.0) {
            return Err(Error::validation("policy learning rate must be finite and >= 0"));
        }
        if self.max_candidates == 0 {
            return Err(Error::validation("max_candidates must be positive"));
        }
        if let Some(b) = self.time_budget {
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::validation("time budget must be positive"));
            }
        }
        Ok(())
    }

    /// Candidate space of round `round` (0-based).
    pub fn candidate_spec(&self, round: usize) -> CandidateSpec {
        let allowed = match &self.op_path {
            Some(path) => Some([path[round]].into()),
            None => self.allowed_ops.clone(),
        };
        CandidateSpec {
            allowed,
            pitch_window: self.pitch_window,
            max_candidates: self.max_candidates,
            seed: self.seed.wrapping_add(round as u64),
            protected: Some(self.target_node.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExplanationResult {
    pub step_index: usize,
    pub graph: ScoreGraph,
    /// Cumulative from the original graph.
    pub log: EditLog,
    pub prediction: Vec<f64>,
    pub valid: bool,
    pub loss: LossBreakdown,
    /// Seconds spent producing this result.
    pub wall_time: f64,
}

impl ExplanationResult {
    /// The op added in this step.
    pub fn last_op(&self) -> Option<&EditOp> {
        self.log.entries.last().map(|e| &e.op)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Truncation {
    NoCandidates { round: usize },
    TimeBudget { round: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    /// Index of the first valid result (0 when the input already has the
    /// desired label).
    pub first_valid_step: Option<usize>,
    /// Op type of the edit that produced the first valid result.
    pub flipping_op: Option<OpKind>,
    /// Most frequent op type in the final edit log.
    pub dominant_op: Option<OpKind>,
    pub num_results: usize,
    pub total_time: f64,
    pub truncated: Option<Truncation>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExplanationSequence {
    pub original: ExplanationResult,
    pub results: Vec<ExplanationResult>,
    pub summary: Summary,
}

impl ExplanationSequence {
    /// The input followed by every explanation.
    pub fn all(&self) -> impl Iterator<Item = &ExplanationResult> {
        std::iter::once(&self.original).chain(&self.results)
    }

    pub fn first_valid(&self) -> Option<&ExplanationResult> {
        self.all().find(|r| r.valid)
    }
}

/// Most frequent op type; ties go to the canonical order.
pub fn dominant_op<'a>(ops: impl IntoIterator<Item = &'a EditOp>) -> Option<OpKind> {
    let mut counts: BTreeMap<OpKind, usize> = BTreeMap::new();
    for op in ops {
        *counts.entry(op.kind()).or_default() += 1;
    }
    let max = *counts.values().max()?;
    counts.into_iter().find(|(_, c)| *c == max).map(|(k, _)| k)
}

/// Loss evaluation of one-edit extensions of a fixed graph.
pub struct Extension<'a> {
    pub model: &'a dyn NodeClassifier,
    pub original: &'a ScoreGraph,
    pub current: &'a ScoreGraph,
    pub log: &'a EditLog,
    pub target_node: &'a NoteId,
    pub target_label: usize,
    pub loss: &'a LossConfig,
}

/// A fully evaluated one-edit extension.
#[derive(Clone, Debug, PartialEq)]
pub struct Extended {
    pub graph: ScoreGraph,
    pub log: EditLog,
    pub evaluation: Evaluation,
}

impl Extension<'_> {
    pub fn apply(&self, op: &EditOp) -> Result<Extended> {
        let (graph, delta) = apply_edit(self.current, op)?;
        let log = self.log.extended(op.clone(), delta);
        let evaluation = evaluate(
            &graph,
            self.original,
            &log,
            self.target_node,
            self.target_label,
            self.model,
            self.loss,
        )?;
        Ok(Extended { graph, log, evaluation })
    }
}

/// One row of the greedy evaluation table.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub op: EditOp,
    pub loss: LossBreakdown,
    pub edge_changes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreedyStep {
    pub chosen: usize,
    pub table: Vec<Scored>,
}

impl GreedyStep {
    pub fn op(&self) -> &EditOp {
        &self.table[self.chosen].op
    }

    pub fn loss(&self) -> LossBreakdown {
        self.table[self.chosen].loss
    }
}

fn greedy_order(a: &Scored, b: &Scored) -> std::cmp::Ordering {
    a.loss
        .total
        .total_cmp(&b.loss.total)
        .then(a.edge_changes.cmp(&b.edge_changes))
        .then_with(|| a.op.cmp(&b.op))
}

/// Evaluates every candidate and picks the lowest total loss, breaking
/// ties by fewer edge changes and then by op order.
pub fn inner_step_greedy(ext: &Extension<'_>, spec: &CandidateSpec) -> Result<GreedyStep> {
    let candidates = candidate_edits(ext.current, spec);
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let table = candidates
        .into_par_iter()
        .map(|op| {
            let (graph, delta) = apply_edit(ext.current, &op)?;
            let edge_changes = delta.edge_changes();
            let log = ext.log.extended(op.clone(), delta);
            let loss = evaluate(
                &graph,
                ext.original,
                &log,
                ext.target_node,
                ext.target_label,
                ext.model,
                ext.loss,
            )?
            .loss;
            Ok(Scored { op, loss, edge_changes })
        })
        .collect::<Result<Vec<_>>>()?;
    let chosen = (0..table.len())
        .min_by(|&i, &j| greedy_order(&table[i], &table[j]))
        .expect("nonempty table");
    Ok(GreedyStep { chosen, table })
}

/// State of one learned round: the candidate set of the current graph,
/// its features and the losses observed so far.
pub struct LearnedRound<'a> {
    ext: Extension<'a>,
    pub candidates: Vec<EditOp>,
    pub features: CandidateFeatures,
    cache: BTreeMap<usize, LossBreakdown>,
}

impl<'a> LearnedRound<'a> {
    pub fn new(ext: Extension<'a>, spec: &CandidateSpec) -> Result<Self> {
        let candidates = candidate_edits(ext.current, spec);
        if candidates.is_empty() {
            return Err(Error::NoCandidates);
        }
        let features = candidate_features(ext.current, ext.target_node, &candidates);
        Ok(LearnedRound {
            ext,
            candidates,
            features,
            cache: BTreeMap::new(),
        })
    }

    pub fn loss_of(&mut self, i: usize) -> Result<LossBreakdown> {
        if let Some(l) = self.cache.get(&i) {
            return Ok(*l);
        }
        let l = self.ext.apply(&self.candidates[i])?.evaluation.loss;
        self.cache.insert(i, l);
        Ok(l)
    }

    pub fn evaluated(&self) -> usize {
        self.cache.len()
    }
}

/// One training iteration: sample a candidate from `policy`, evaluate it
/// and update the policy.
pub fn inner_step_learned(
    policy: &mut InnerPolicy,
    round: &mut LearnedRound<'_>,
    learning_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(EditOp, LossBreakdown)> {
    let features = std::mem::take(&mut round.features);
    let out = policy.step(&features, learning_rate, rng, |i| round.loss_of(i).map(|l| l.total));
    round.features = features;
    let (i, _) = out?;
    Ok((round.candidates[i].clone(), round.loss_of(i)?))
}

fn result_from(step_index: usize, ext: Extended, target_label: usize, wall_time: f64) -> ExplanationResult {
    ExplanationResult {
        step_index,
        valid: argmax(&ext.evaluation.prediction) == target_label,
        prediction: ext.evaluation.prediction,
        loss: ext.evaluation.loss,
        graph: ext.graph,
        log: ext.log,
        wall_time,
    }
}

/// Produces `config.n` explanations, each extending the previous one by
/// one edit.
pub fn explain(
    model: &dyn NodeClassifier,
    original: &ScoreGraph,
    config: &ExplainConfig,
) -> Result<ExplanationSequence> {
    config.validate(model.num_classes())?;
    match original.note(&config.target_node) {
        None => return Err(Error::UnknownNode(config.target_node.to_string())),
        Some(n) if n.removed => {
            return Err(Error::validation(format!(
                "target note `{}` is removed",
                config.target_node
            )))
        }
        _ => {}
    }
    let start = Instant::now();
    let empty = EditLog::new();
    let evaluation = evaluate(
        original,
        original,
        &empty,
        &config.target_node,
        config.target_label,
        model,
        &config.loss,
    )?;
    let initial = result_from(
        0,
        Extended {
            graph: original.clone(),
            log: empty,
            evaluation,
        },
        config.target_label,
        start.elapsed().as_secs_f64(),
    );

    let mut results: Vec<ExplanationResult> = Vec::with_capacity(config.n);
    let mut policy = initial_policy();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut truncated = None;
    for round in 0..config.n {
        if config.time_budget.is_some_and(|b| start.elapsed().as_secs_f64() > b) {
            truncated = Some(Truncation::TimeBudget { round: round + 1 });
            break;
        }
        let round_start = Instant::now();
        let current = results.last().unwrap_or(&initial);
        let ext = Extension {
            model,
            original,
            current: &current.graph,
            log: &current.log,
            target_node: &config.target_node,
            target_label: config.target_label,
            loss: &config.loss,
        };
        let spec = config.candidate_spec(round);
        let chosen = match config.mode {
            Mode::Greedy => inner_step_greedy(&ext, &spec).map(|s| s.op().clone()),
            Mode::Learned => learned_round(&mut policy, ext, &spec, config, &mut rng),
        };
        let op = match chosen {
            Ok(op) => op,
            Err(Error::NoCandidates) => {
                truncated = Some(Truncation::NoCandidates { round: round + 1 });
                break;
            }
            Err(e) => return Err(e),
        };
        let extended = Extension {
            model,
            original,
            current: &current.graph,
            log: &current.log,
            target_node: &config.target_node,
            target_label: config.target_label,
            loss: &config.loss,
        }
        .apply(&op)?;
        results.push(result_from(
            round + 1,
            extended,
            config.target_label,
            round_start.elapsed().as_secs_f64(),
        ));
    }

    let mut sequence = ExplanationSequence {
        original: initial,
        results,
        summary: Summary {
            first_valid_step: None,
            flipping_op: None,
            dominant_op: None,
            num_results: 0,
            total_time: start.elapsed().as_secs_f64(),
            truncated,
        },
    };
    let first = sequence
        .first_valid()
        .map(|r| (r.step_index, r.last_op().map(EditOp::kind)));
    sequence.summary.first_valid_step = first.map(|f| f.0);
    sequence.summary.flipping_op = first.and_then(|f| f.1);
    sequence.summary.num_results = sequence.results.len();
    sequence.summary.dominant_op = sequence.results.last().and_then(|r| dominant_op(r.log.ops()));
    Ok(sequence)
}

fn learned_round(
    policy: &mut InnerPolicy,
    ext: Extension<'_>,
    spec: &CandidateSpec,
    config: &ExplainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<EditOp> {
    let current_loss = evaluate(
        ext.current,
        ext.original,
        ext.log,
        ext.target_node,
        ext.target_label,
        ext.model,
        ext.loss,
    )?
    .loss
    .total;
    let mut round = LearnedRound::new(ext, spec)?;
    policy.reset_baseline(Some(current_loss));
    for _ in 0..config.t {
        inner_step_learned(policy, &mut round, config.policy_learning_rate, rng)?;
    }
    let best = policy.best(&round.features).ok_or(Error::NoCandidates)?;
    Ok(round.candidates[best].clone())
}

/// Quality summary of a single explanation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoreReport {
    pub flip: bool,
    pub nd_term: f64,
    pub gp_term: f64,
    pub num_ops: usize,
    pub op_histogram: BTreeMap<OpKind, usize>,
}

pub fn score_explanation(result: &ExplanationResult, original: &ScoreGraph) -> Result<ScoreReport> {
    let mut op_histogram = BTreeMap::new();
    for op in result.log.ops() {
        *op_histogram.entry(op.kind()).or_default() += 1;
    }
    Ok(ScoreReport {
        flip: result.valid,
        nd_term: node_distance(&result.graph, original)?,
        gp_term: graph_distance(&result.log),
        num_ops: result.log.len(),
        op_histogram,
    })
}
