use std::collections::BTreeSet;

use serde::Serialize;

use crate::edits::EditOp;
use crate::graph::{Edge, ScoreGraph};
use crate::note::{Note, NoteId};
use crate::rational::{self, Rational};

pub const DUMP_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HierarchyDump {
    #[serde(with = "rational::serde_str")]
    pub beat_length: Rational,
    #[serde(with = "rational::serde_str")]
    pub measure_length: Rational,
    pub beats: Vec<i64>,
    pub measures: Vec<i64>,
}

/// Graph in the interchange form consumed by external viewers. Edges are
/// `[src, dst, type]` triples; beat and measure nodes are written as
/// `beat:i` and `measure:i`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphDump<'a> {
    pub version: u32,
    pub piece: &'a str,
    pub feature_layout: &'a str,
    pub notes: Vec<&'a Note>,
    pub edges: Vec<&'a Edge>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hierarchy: Option<HierarchyDump>,
    /// Notes touched by the edits that produced this graph.
    #[serde(skip_serializing_if = "BTreeSet::is_empty")]
    pub edited: BTreeSet<NoteId>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub ops: Vec<&'a EditOp>,
}

impl<'a> GraphDump<'a> {
    pub fn new(graph: &'a ScoreGraph) -> Self {
        GraphDump {
            version: DUMP_VERSION,
            piece: &graph.meta.piece,
            feature_layout: &graph.meta.feature_layout,
            notes: graph.notes().collect(),
            edges: graph.edges().iter().collect(),
            hierarchy: graph.hierarchy().map(|h| HierarchyDump {
                beat_length: h.beat_length,
                measure_length: h.measure_length,
                beats: h.beats.iter().copied().collect(),
                measures: h.measures.iter().copied().collect(),
            }),
            edited: BTreeSet::new(),
            ops: Vec::new(),
        }
    }

    /// Annotates the dump with the ops applied so far.
    pub fn with_ops(mut self, ops: impl IntoIterator<Item = &'a EditOp>) -> Self {
        for op in ops {
            self.edited.insert(op.node().clone());
            self.ops.push(op);
        }
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph dump serializes")
    }
}
