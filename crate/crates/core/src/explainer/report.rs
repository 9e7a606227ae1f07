//! JSON report of an explanation sequence.

use serde::{Deserialize, Serialize};

use super::{ExplainConfig, ExplanationSequence, Summary};
use crate::distance::LossBreakdown;
use crate::edits::{apply_edit, EditDelta, EditOp};
use crate::error::{Error, Result};
use crate::graph::ScoreGraph;
use crate::note::{Note, NoteId};
use crate::rational::{self, Rational};

pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchySpec {
    #[serde(with = "rational::serde_str")]
    pub beat_length: Rational,
    #[serde(with = "rational::serde_str")]
    pub measure_length: Rational,
}

/// Everything needed to rebuild the input graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OriginalDump {
    #[serde(default)]
    pub piece: String,
    pub notes: Vec<Note>,
    #[serde(default)]
    pub hierarchy: Option<HierarchySpec>,
}

impl OriginalDump {
    pub fn new(graph: &ScoreGraph) -> Self {
        OriginalDump {
            piece: graph.meta.piece.clone(),
            notes: graph.notes().cloned().collect(),
            hierarchy: graph.hierarchy().map(|h| HierarchySpec {
                beat_length: h.beat_length,
                measure_length: h.measure_length,
            }),
        }
    }

    pub fn graph(&self) -> Result<ScoreGraph> {
        let g = ScoreGraph::build(self.notes.clone())?.with_piece(self.piece.clone());
        match self.hierarchy {
            Some(h) => g.attach_hierarchy(h.beat_length, h.measure_length),
            None => Ok(g),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepReport<'a> {
    pub step: usize,
    pub op: Option<&'a EditOp>,
    pub delta: Option<&'a EditDelta>,
    pub prediction: &'a [f64],
    pub predicted_label: usize,
    pub valid: bool,
    pub loss: LossBreakdown,
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SequenceReport<'a> {
    pub version: u32,
    pub target_node: &'a NoteId,
    pub target_label: usize,
    pub label_names: Vec<String>,
    pub config: &'a ExplainConfig,
    pub original: OriginalDump,
    pub steps: Vec<StepReport<'a>>,
    pub summary: &'a Summary,
}

impl<'a> SequenceReport<'a> {
    pub fn new(seq: &'a ExplanationSequence, config: &'a ExplainConfig, label_names: Vec<String>) -> Self {
        let steps = seq
            .all()
            .map(|r| StepReport {
                step: r.step_index,
                op: r.log.entries.last().map(|e| &e.op),
                delta: r.log.entries.last().map(|e| &e.delta),
                prediction: &r.prediction,
                predicted_label: crate::model::argmax(&r.prediction),
                valid: r.valid,
                loss: r.loss,
                wall_time: r.wall_time,
            })
            .collect();
        SequenceReport {
            version: REPORT_VERSION,
            target_node: &config.target_node,
            target_label: config.target_label,
            label_names,
            config,
            original: OriginalDump::new(&seq.original.graph),
            steps,
            summary: &seq.summary,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct ParsedStep {
    pub step: usize,
    #[serde(default)]
    pub op: Option<EditOp>,
}

/// The parts of a report needed to re-derive every step's graph.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct ParsedReport {
    pub version: u32,
    pub original: OriginalDump,
    #[serde(default)]
    pub steps: Vec<ParsedStep>,
}

impl ParsedReport {
    pub fn parse(text: &str) -> Result<ParsedReport> {
        let r: ParsedReport = serde_json::from_str(text)?;
        if r.version != REPORT_VERSION {
            return Err(Error::validation(format!("unsupported report version {}", r.version)));
        }
        Ok(r)
    }

    /// `(step, graph, ops so far)` for every step after the input.
    pub fn replay(&self) -> Result<Vec<(usize, ScoreGraph, Vec<EditOp>)>> {
        let mut g = self.original.graph()?;
        let mut ops = Vec::new();
        let mut out = Vec::new();
        for s in self.steps.iter().filter(|s| s.step > 0) {
            let op =
                s.op.as_ref()
                    .ok_or_else(|| Error::validation(format!("step {} has no op", s.step)))?;
            g = apply_edit(&g, op)?.0;
            ops.push(op.clone());
            out.push((s.step, g.clone(), ops.clone()));
        }
        Ok(out)
    }
}
