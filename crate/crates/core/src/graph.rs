//! Heterogeneous score graph.
//!
//! Note nodes are connected by four relations derived purely from onset and
//! duration: `Onset` (same start), `Consecutive` (one ends where the other
//! starts), `During` (a note starting while another sounds, pointing from
//! the later note to the sounding one) and `Rest` (from a note to the notes
//! at the first onset after a gap following it). Optional beat and measure
//! nodes group notes by the span containing their onset.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::ops::Bound;

use indexmap::IndexMap;
use num_traits::Signed;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FEATURE_LAYOUT;
use crate::note::{Note, NoteId};
use crate::rational::{floor_div, format_rational, Rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeType {
    Onset,
    Consecutive,
    During,
    Rest,
    NoteToBeat,
    NoteToMeasure,
}

impl EdgeType {
    pub const NOTE_RELATIONS: [EdgeType; 4] =
        [EdgeType::Onset, EdgeType::Consecutive, EdgeType::During, EdgeType::Rest];
    pub const ALL: [EdgeType; 6] = [
        EdgeType::Onset,
        EdgeType::Consecutive,
        EdgeType::During,
        EdgeType::Rest,
        EdgeType::NoteToBeat,
        EdgeType::NoteToMeasure,
    ];

    pub fn is_hierarchy(self) -> bool {
        matches!(self, EdgeType::NoteToBeat | EdgeType::NoteToMeasure)
    }

    pub fn name(self) -> &'static str {
        match self {
            EdgeType::Onset => "onset",
            EdgeType::Consecutive => "consecutive",
            EdgeType::During => "during",
            EdgeType::Rest => "rest",
            EdgeType::NoteToBeat => "note_to_beat",
            EdgeType::NoteToMeasure => "note_to_measure",
        }
    }

    pub fn from_name(name: &str) -> Option<EdgeType> {
        EdgeType::ALL.into_iter().find(|t| t.name() == name)
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A graph node: a note, or a beat/measure identified by its index
/// `floor(onset / length)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeRef {
    Note(NoteId),
    Beat(i64),
    Measure(i64),
}

impl NodeRef {
    pub fn note(id: &NoteId) -> Self {
        NodeRef::Note(id.clone())
    }

    pub fn as_note(&self) -> Option<&NoteId> {
        match self {
            NodeRef::Note(id) => Some(id),
            _ => None,
        }
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeRef::Note(id) => write!(f, "{id}"),
            NodeRef::Beat(i) => write!(f, "beat:{i}"),
            NodeRef::Measure(i) => write!(f, "measure:{i}"),
        }
    }
}

impl Serialize for NodeRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub src: NodeRef,
    pub dst: NodeRef,
    pub kind: EdgeType,
}

impl Edge {
    pub fn notes(src: &NoteId, dst: &NoteId, kind: EdgeType) -> Self {
        Edge {
            src: NodeRef::note(src),
            dst: NodeRef::note(dst),
            kind,
        }
    }

    pub fn touches(&self, id: &NoteId) -> bool {
        self.src.as_note() == Some(id) || self.dst.as_note() == Some(id)
    }
}

impl Serialize for Edge {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        (&self.src, &self.dst, self.kind.name()).serialize(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hierarchy {
    pub beat_length: Rational,
    pub measure_length: Rational,
    pub beats: BTreeSet<i64>,
    pub measures: BTreeSet<i64>,
}

impl Hierarchy {
    pub fn beat_of(&self, onset: &Rational) -> i64 {
        floor_div(onset, &self.beat_length)
    }

    pub fn measure_of(&self, onset: &Rational) -> i64 {
        floor_div(onset, &self.measure_length)
    }

    pub(crate) fn note_edges(&self, note: &Note) -> [Edge; 2] {
        [
            Edge {
                src: NodeRef::note(&note.id),
                dst: NodeRef::Beat(self.beat_of(&note.onset)),
                kind: EdgeType::NoteToBeat,
            },
            Edge {
                src: NodeRef::note(&note.id),
                dst: NodeRef::Measure(self.measure_of(&note.onset)),
                kind: EdgeType::NoteToMeasure,
            },
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub piece: String,
    pub num_classes: usize,
    pub feature_layout: String,
}

impl Default for GraphMeta {
    fn default() -> Self {
        GraphMeta {
            piece: String::new(),
            num_classes: 2,
            feature_layout: FEATURE_LAYOUT.to_string(),
        }
    }
}

/// Notes active (non-removed) in a graph, indexed by onset.
pub(crate) struct OnsetIndex<'a> {
    by_onset: BTreeMap<Rational, Vec<&'a NoteId>>,
}

impl<'a> OnsetIndex<'a> {
    pub(crate) fn new(notes: impl IntoIterator<Item = &'a Note>) -> Self {
        let mut by_onset: BTreeMap<Rational, Vec<&'a NoteId>> = BTreeMap::new();
        for n in notes.into_iter().filter(|n| !n.removed) {
            by_onset.entry(n.onset).or_default().push(&n.id);
        }
        OnsetIndex { by_onset }
    }

    pub(crate) fn at(&self, onset: &Rational) -> &[&'a NoteId] {
        self.by_onset.get(onset).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Smallest onset strictly greater than `time`.
    pub(crate) fn next_after(&self, time: &Rational) -> Option<(&Rational, &[&'a NoteId])> {
        self.by_onset
            .range((Bound::Excluded(*time), Bound::Unbounded))
            .next()
            .map(|(k, v)| (k, v.as_slice()))
    }

    /// Notes whose onset lies strictly between `lo` and `hi`.
    pub(crate) fn strictly_between(&self, lo: &Rational, hi: &Rational) -> impl Iterator<Item = &&'a NoteId> {
        let range = if lo < hi {
            Some(self.by_onset.range((Bound::Excluded(*lo), Bound::Excluded(*hi))))
        } else {
            None
        };
        range.into_iter().flatten().flat_map(|(_, v)| v.iter())
    }
}

/// Outgoing `Rest` edges of `u` given the active onset index.
pub(crate) fn rest_edges_from(u: &Note, index: &OnsetIndex<'_>) -> Vec<Edge> {
    match index.next_after(&u.end()) {
        Some((_, targets)) => targets.iter().map(|v| Edge::notes(&u.id, v, EdgeType::Rest)).collect(),
        None => Vec::new(),
    }
}

/// All rule-derived note edges over the active notes.
pub(crate) fn derive_note_edges<'a>(notes: impl IntoIterator<Item = &'a Note> + Clone) -> BTreeSet<Edge> {
    let index = OnsetIndex::new(notes.clone());
    let mut edges = BTreeSet::new();
    for u in notes.into_iter().filter(|n| !n.removed) {
        let end = u.end();
        for v in index.at(&u.onset) {
            if **v != u.id {
                edges.insert(Edge::notes(&u.id, v, EdgeType::Onset));
            }
        }
        for v in index.at(&end) {
            edges.insert(Edge::notes(&u.id, v, EdgeType::Consecutive));
        }
        for v in index.strictly_between(&u.onset, &end) {
            edges.insert(Edge::notes(v, &u.id, EdgeType::During));
        }
        edges.extend(rest_edges_from(u, &index));
    }
    edges
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScoreGraph {
    pub meta: GraphMeta,
    notes: IndexMap<NoteId, Note>,
    edges: BTreeSet<Edge>,
    hierarchy: Option<Hierarchy>,
}

impl ScoreGraph {
    /// Builds the graph over `notes`, evaluating the four edge rules with
    /// exact arithmetic. Notes flagged `removed` are kept but left isolated.
    pub fn build(notes: Vec<Note>) -> Result<ScoreGraph> {
        let mut map = IndexMap::with_capacity(notes.len());
        for n in notes {
            n.validate()?;
            if map.contains_key(&n.id) {
                return Err(Error::validation(format!("duplicate note id `{}`", n.id)));
            }
            map.insert(n.id.clone(), n);
        }
        let edges = derive_note_edges(map.values());
        Ok(ScoreGraph {
            meta: GraphMeta::default(),
            notes: map,
            edges,
            hierarchy: None,
        })
    }

    pub fn with_piece(mut self, piece: impl Into<String>) -> Self {
        self.meta.piece = piece.into();
        self
    }

    /// Adds beat and measure nodes for every span containing a note onset,
    /// with an edge from each note to its beat and to its measure.
    pub fn attach_hierarchy(mut self, beat_length: Rational, measure_length: Rational) -> Result<ScoreGraph> {
        if !beat_length.is_positive() || !measure_length.is_positive() {
            return Err(Error::validation(format!(
                "beat length {} and measure length {} must be positive",
                format_rational(&beat_length),
                format_rational(&measure_length)
            )));
        }
        if !(measure_length / beat_length).is_integer() {
            return Err(Error::validation(format!(
                "measure length {} is not a multiple of beat length {}",
                format_rational(&measure_length),
                format_rational(&beat_length)
            )));
        }
        self.edges.retain(|e| !e.kind.is_hierarchy());
        let mut h = Hierarchy {
            beat_length,
            measure_length,
            beats: BTreeSet::new(),
            measures: BTreeSet::new(),
        };
        self.hierarchy = None;
        fill_hierarchy(&mut h, &mut self.edges, self.notes.values());
        self.hierarchy = Some(h);
        Ok(self)
    }

    /// Recomputes every edge from note attributes.
    pub fn rebuild_edges(&self) -> ScoreGraph {
        let mut g = self.clone();
        g.edges = derive_note_edges(g.notes.values());
        if let Some(h) = g.hierarchy.as_mut() {
            h.beats.clear();
            h.measures.clear();
            fill_hierarchy(h, &mut g.edges, g.notes.values());
        }
        g
    }

    pub fn notes(&self) -> impl Iterator<Item = &Note> + Clone {
        self.notes.values()
    }

    pub fn active_notes(&self) -> impl Iterator<Item = &Note> + Clone {
        self.notes.values().filter(|n| !n.removed)
    }

    pub fn num_notes(&self) -> usize {
        self.notes.len()
    }

    pub fn num_active_notes(&self) -> usize {
        self.active_notes().count()
    }

    pub fn note(&self, id: &NoteId) -> Option<&Note> {
        self.notes.get(id)
    }

    pub fn contains(&self, id: &NoteId) -> bool {
        self.notes.contains_key(id)
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    pub fn hierarchy(&self) -> Option<&Hierarchy> {
        self.hierarchy.as_ref()
    }

    /// Edges whose source or destination is the given note.
    pub fn degree(&self, id: &NoteId) -> usize {
        self.edges.iter().filter(|e| e.touches(id)).count()
    }

    pub fn has_spellings(&self) -> bool {
        self.notes.values().any(|n| n.spelling.is_some())
    }

    /// Active node set: non-removed notes plus beat and measure nodes.
    pub fn active_nodes(&self) -> BTreeSet<NodeRef> {
        let mut nodes: BTreeSet<NodeRef> = self.active_notes().map(|n| NodeRef::note(&n.id)).collect();
        if let Some(h) = &self.hierarchy {
            nodes.extend(h.beats.iter().map(|b| NodeRef::Beat(*b)));
            nodes.extend(h.measures.iter().map(|m| NodeRef::Measure(*m)));
        }
        nodes
    }

    pub fn edge_counts(&self) -> BTreeMap<EdgeType, usize> {
        let mut counts: BTreeMap<EdgeType, usize> = EdgeType::ALL.iter().map(|t| (*t, 0)).collect();
        for e in &self.edges {
            *counts.entry(e.kind).or_default() += 1;
        }
        counts
    }

    /// Fresh note id of the form `{prefix}{k}`.
    pub fn fresh_id(&self, prefix: &str) -> NoteId {
        (0..)
            .map(|k| NoteId(format!("{prefix}{k}")))
            .find(|id| !self.notes.contains_key(id))
            .expect("unbounded id space")
    }

    /// Checks every structural invariant: rule consistency of the edge set,
    /// no self edges, pairwise exclusivity of Onset/Consecutive/During,
    /// isolation of removed notes and hierarchy consistency.
    pub fn check_invariants(&self) -> Result<()> {
        for n in self.notes.values() {
            n.validate()?;
        }
        let mut pair_kinds: HashSet<(&NodeRef, &NodeRef)> = HashSet::new();
        for e in &self.edges {
            if e.src == e.dst {
                return Err(Error::Integrity(format!("self edge on {}", e.src)));
            }
            for end in [&e.src, &e.dst] {
                if let NodeRef::Note(id) = end {
                    match self.notes.get(id) {
                        None => return Err(Error::Integrity(format!("edge references unknown note `{id}`"))),
                        Some(n) if n.removed => {
                            return Err(Error::Integrity(format!("removed note `{id}` still has edges")))
                        }
                        _ => {}
                    }
                }
            }
            if matches!(e.kind, EdgeType::Onset | EdgeType::Consecutive | EdgeType::During)
                && !pair_kinds.insert((&e.src, &e.dst))
            {
                return Err(Error::Integrity(format!(
                    "pair {} -> {} carries more than one of onset/consecutive/during",
                    e.src, e.dst
                )));
            }
        }
        let expected = self.rebuild_edges();
        if expected.edges != self.edges {
            let missing = expected.edges.difference(&self.edges).count();
            let extra = self.edges.difference(&expected.edges).count();
            return Err(Error::Integrity(format!(
                "edge set deviates from note attributes ({missing} missing, {extra} extra)"
            )));
        }
        if expected.hierarchy != self.hierarchy {
            return Err(Error::Integrity("hierarchy nodes out of date".into()));
        }
        Ok(())
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut IndexMap<NoteId, Note>, &mut BTreeSet<Edge>, Option<&mut Hierarchy>) {
        (&mut self.notes, &mut self.edges, self.hierarchy.as_mut())
    }

    /// Replaces a note's attributes without touching edges. Callers must
    /// restore consistency (see [`ScoreGraph::rebuild_edges`]).
    pub fn set_note_unchecked(&mut self, note: Note) {
        self.notes.insert(note.id.clone(), note);
    }
}

fn fill_hierarchy<'a>(h: &mut Hierarchy, edges: &mut BTreeSet<Edge>, notes: impl Iterator<Item = &'a Note>) {
    for n in notes.filter(|n| !n.removed) {
        h.beats.insert(h.beat_of(&n.onset));
        h.measures.insert(h.measure_of(&n.onset));
        edges.extend(h.note_edges(n));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn note(id: &str, on: Rational, dur: Rational) -> Note {
        Note::new(id, on, dur, 60)
    }

    fn edge_list(g: &ScoreGraph) -> Vec<(String, String, EdgeType)> {
        g.edges()
            .iter()
            .map(|e| (e.src.to_string(), e.dst.to_string(), e.kind))
            .collect()
    }

    #[test]
    fn single_note_has_no_edges() {
        let g = ScoreGraph::build(vec![note("u", r(0, 1), r(1, 1))]).unwrap();
        assert!(g.edges().is_empty());
    }

    #[test]
    fn consecutive_pair() {
        let g = ScoreGraph::build(vec![note("u", r(0, 1), r(1, 1)), note("v", r(1, 1), r(1, 1))]).unwrap();
        assert_eq!(edge_list(&g), vec![("u".into(), "v".into(), EdgeType::Consecutive)]);
    }

    #[test]
    fn rest_and_symmetric_onset_edges() {
        let g = ScoreGraph::build(vec![
            note("u", r(0, 1), r(1, 1)),
            note("v", r(3, 1), r(1, 1)),
            note("w", r(3, 1), r(1, 1)),
        ])
        .unwrap();
        let got: BTreeSet<_> = edge_list(&g).into_iter().collect();
        let want: BTreeSet<_> = [
            ("v", "w", EdgeType::Onset),
            ("w", "v", EdgeType::Onset),
            ("u", "v", EdgeType::Rest),
            ("u", "w", EdgeType::Rest),
        ]
        .into_iter()
        .map(|(a, b, t)| (a.to_string(), b.to_string(), t))
        .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn during_points_from_later_note() {
        let g = ScoreGraph::build(vec![note("u", r(0, 1), r(2, 1)), note("v", r(1, 1), r(1, 1))]).unwrap();
        assert_eq!(edge_list(&g), vec![("v".into(), "u".into(), EdgeType::During)]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = ScoreGraph::build(vec![note("a", r(0, 1), r(1, 1)), note("a", r(1, 1), r(1, 1))]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn hierarchy_single_note() {
        let g = ScoreGraph::build(vec![note("u", r(0, 1), r(1, 1))])
            .unwrap()
            .attach_hierarchy(r(1, 1), r(4, 1))
            .unwrap();
        let h = g.hierarchy().unwrap();
        assert_eq!(h.beats.len(), 1);
        assert_eq!(h.measures.len(), 1);
        assert_eq!(g.edges().len(), 2);
    }

    #[test]
    fn hierarchy_measure_containment() {
        let g = ScoreGraph::build(vec![note("a", r(0, 1), r(1, 1)), note("b", r(5, 1), r(1, 1))])
            .unwrap()
            .attach_hierarchy(r(1, 1), r(4, 1))
            .unwrap();
        let measures: Vec<_> = g
            .edges()
            .iter()
            .filter(|e| e.kind == EdgeType::NoteToMeasure)
            .map(|e| (e.src.to_string(), e.dst.clone()))
            .collect();
        assert_eq!(
            measures,
            vec![
                ("a".to_string(), NodeRef::Measure(0)),
                ("b".to_string(), NodeRef::Measure(1))
            ]
        );
    }

    #[test]
    fn hierarchy_on_empty_graph() {
        let g = ScoreGraph::build(vec![])
            .unwrap()
            .attach_hierarchy(r(1, 1), r(4, 1))
            .unwrap();
        assert!(g.edges().is_empty());
        assert!(g.hierarchy().unwrap().beats.is_empty());
    }

    #[test]
    fn hierarchy_rejects_bad_lengths() {
        let g = ScoreGraph::build(vec![]).unwrap();
        assert!(g.clone().attach_hierarchy(r(0, 1), r(4, 1)).is_err());
        assert!(g.clone().attach_hierarchy(r(1, 1), r(-4, 1)).is_err());
        assert!(g.attach_hierarchy(r(3, 2), r(4, 1)).is_err());
    }

    #[test]
    fn rebuild_after_external_mutation() {
        let g = ScoreGraph::build(vec![note("u", r(0, 1), r(1, 1)), note("v", r(1, 1), r(1, 1))]).unwrap();
        assert_eq!(g.rebuild_edges(), g);
        let mut m = g.clone();
        let mut v = m.note(&NoteId::from("v")).unwrap().clone();
        v.onset = r(0, 1);
        m.set_note_unchecked(v);
        assert!(m.check_invariants().is_err());
        let rebuilt = m.rebuild_edges();
        let fresh = ScoreGraph::build(m.notes().cloned().collect()).unwrap();
        assert_eq!(rebuilt.edges(), fresh.edges());
        rebuilt.check_invariants().unwrap();
    }

    #[test]
    fn removed_note_is_isolated_after_rebuild() {
        let mut g = ScoreGraph::build(vec![note("u", r(0, 1), r(1, 1)), note("v", r(1, 1), r(1, 1))]).unwrap();
        let mut v = g.note(&NoteId::from("v")).unwrap().clone();
        v.removed = true;
        g.set_note_unchecked(v);
        let g = g.rebuild_edges();
        assert_eq!(g.degree(&NoteId::from("v")), 0);
        assert!(g.contains(&NoteId::from("v")));
    }
}
