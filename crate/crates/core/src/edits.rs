//! Musically coherent graph edits.
//!
//! Five operations are supported: change the pitch, onset or duration of a
//! note, remove a note, and add a note. New onsets are always copied from an
//! existing (anchor) note and durations are limited to whole, half, quarter
//! and eighth notes, so every edited graph is still a plausible score.
//!
//! [`apply_edit`] maintains the edge set incrementally and reports the exact
//! node/edge delta, which is what the graph edit distance is computed from.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{rest_edges_from, Edge, EdgeType, NodeRef, OnsetIndex, ScoreGraph};
use crate::note::{Note, NoteId, Spelling};
use crate::rational::{self, Rational};

/// Whole, half, quarter and eighth note, in quarter-note units.
pub fn allowed_durations() -> [Rational; 4] {
    [
        Rational::from_integer(4),
        Rational::from_integer(2),
        Rational::from_integer(1),
        Rational::new(1, 2),
    ]
}

pub fn is_allowed_duration(d: &Rational) -> bool {
    allowed_durations().contains(d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    ChangePitch,
    ChangeOnset,
    ChangeDuration,
    RemoveNote,
    AddNote,
}

impl OpKind {
    pub const ALL: [OpKind; 5] = [
        OpKind::ChangePitch,
        OpKind::ChangeOnset,
        OpKind::ChangeDuration,
        OpKind::RemoveNote,
        OpKind::AddNote,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Short names used on the command line and in tables.
    pub fn short_name(self) -> &'static str {
        match self {
            OpKind::ChangePitch => "pitch",
            OpKind::ChangeOnset => "onset",
            OpKind::ChangeDuration => "dur",
            OpKind::RemoveNote => "rem",
            OpKind::AddNote => "add",
        }
    }

    pub fn parse(name: &str) -> Option<OpKind> {
        let name = name.trim();
        OpKind::ALL.into_iter().find(|k| {
            k.short_name() == name
                || serde_json::to_value(k).ok().and_then(|v| v.as_str().map(|s| s == name)) == Some(true)
        })
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditOp {
    ChangePitch {
        node: NoteId,
        pitch: u8,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        spelling: Option<Spelling>,
    },
    ChangeOnset {
        node: NoteId,
        anchor: NoteId,
    },
    ChangeDuration {
        node: NoteId,
        #[serde(with = "rational::serde_str")]
        duration: Rational,
    },
    RemoveNote {
        node: NoteId,
    },
    AddNote {
        id: NoteId,
        pitch: u8,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        spelling: Option<Spelling>,
        anchor: NoteId,
        #[serde(with = "rational::serde_str")]
        duration: Rational,
    },
}

impl EditOp {
    pub fn kind(&self) -> OpKind {
        match self {
            EditOp::ChangePitch { .. } => OpKind::ChangePitch,
            EditOp::ChangeOnset { .. } => OpKind::ChangeOnset,
            EditOp::ChangeDuration { .. } => OpKind::ChangeDuration,
            EditOp::RemoveNote { .. } => OpKind::RemoveNote,
            EditOp::AddNote { .. } => OpKind::AddNote,
        }
    }

    /// The note whose attributes the op changes (the new note for AddNote).
    pub fn node(&self) -> &NoteId {
        match self {
            EditOp::ChangePitch { node, .. }
            | EditOp::ChangeOnset { node, .. }
            | EditOp::ChangeDuration { node, .. }
            | EditOp::RemoveNote { node } => node,
            EditOp::AddNote { id, .. } => id,
        }
    }

    pub fn anchor(&self) -> Option<&NoteId> {
        match self {
            EditOp::ChangeOnset { anchor, .. } | EditOp::AddNote { anchor, .. } => Some(anchor),
            _ => None,
        }
    }
}

impl fmt::Display for EditOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EditOp::ChangePitch { node, pitch, .. } => write!(f, "pitch({node} -> {pitch})"),
            EditOp::ChangeOnset { node, anchor } => write!(f, "onset({node} -> onset of {anchor})"),
            EditOp::ChangeDuration { node, duration } => {
                write!(f, "dur({node} -> {})", rational::format_rational(duration))
            }
            EditOp::RemoveNote { node } => write!(f, "rem({node})"),
            EditOp::AddNote {
                id,
                pitch,
                anchor,
                duration,
                ..
            } => write!(
                f,
                "add({id}: pitch {pitch} at onset of {anchor}, dur {})",
                rational::format_rational(duration)
            ),
        }
    }
}

/// Exact change caused by one edit.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EditDelta {
    pub added_edges: BTreeSet<Edge>,
    pub removed_edges: BTreeSet<Edge>,
    pub added_nodes: BTreeSet<NodeRef>,
    pub removed_nodes: BTreeSet<NodeRef>,
}

impl EditDelta {
    pub fn edge_changes(&self) -> usize {
        self.added_edges.len() + self.removed_edges.len()
    }

    pub fn size(&self) -> usize {
        self.edge_changes() + self.added_nodes.len() + self.removed_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.size() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LogEntry {
    pub op: EditOp,
    pub delta: EditDelta,
}

/// Ordered record of applied edits and their deltas.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct EditLog {
    pub entries: Vec<LogEntry>,
}

impl EditLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, op: EditOp, delta: EditDelta) {
        self.entries.push(LogEntry { op, delta });
    }

    pub fn ops(&self) -> impl Iterator<Item = &EditOp> {
        self.entries.iter().map(|e| &e.op)
    }

    pub fn extended(&self, op: EditOp, delta: EditDelta) -> EditLog {
        let mut log = self.clone();
        log.push(op, delta);
        log
    }

    pub fn is_prefix_of(&self, other: &EditLog) -> bool {
        self.len() <= other.len() && self.entries[..] == other.entries[..self.len()]
    }
}

fn active<'a>(graph: &'a ScoreGraph, id: &NoteId) -> Result<&'a Note> {
    match graph.note(id) {
        None => Err(Error::UnknownNode(id.to_string())),
        Some(n) if n.removed => Err(Error::validation(format!("note `{id}` has been removed"))),
        Some(n) => Ok(n),
    }
}

fn check_duration(d: &Rational) -> Result<()> {
    if is_allowed_duration(d) {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "duration {} is not one of 4, 2, 1, 1/2",
            rational::format_rational(d)
        )))
    }
}

fn check_pitch(pitch: u8, spelling: &Option<Spelling>) -> Result<()> {
    if pitch > 127 {
        return Err(Error::validation(format!("pitch {pitch} outside [0, 127]")));
    }
    if let Some(sp) = spelling {
        if sp.pitch_class() != (pitch % 12) as i32 {
            return Err(Error::validation(format!("spelling does not match pitch {pitch}")));
        }
    }
    Ok(())
}

/// Resolves `op` against `graph` into (previous state, new state) of the
/// affected note.
fn resolve(graph: &ScoreGraph, op: &EditOp) -> Result<(Option<Note>, Note)> {
    let spell = |pitch: u8, given: &Option<Spelling>| match given {
        Some(s) => Some(*s),
        None if graph.has_spellings() => Some(Spelling::simplest(pitch)),
        None => None,
    };
    match op {
        EditOp::ChangePitch { node, pitch, spelling } => {
            let old = active(graph, node)?;
            check_pitch(*pitch, spelling)?;
            let mut new = old.clone();
            new.midi_pitch = *pitch;
            new.spelling = spell(*pitch, spelling);
            Ok((Some(old.clone()), new))
        }
        EditOp::ChangeOnset { node, anchor } => {
            let old = active(graph, node)?;
            if node == anchor {
                return Err(Error::validation(format!("note `{node}` cannot anchor its own onset")));
            }
            let anchor = active(graph, anchor)?;
            let mut new = old.clone();
            new.onset = anchor.onset;
            Ok((Some(old.clone()), new))
        }
        EditOp::ChangeDuration { node, duration } => {
            let old = active(graph, node)?;
            check_duration(duration)?;
            let mut new = old.clone();
            new.duration = *duration;
            Ok((Some(old.clone()), new))
        }
        EditOp::RemoveNote { node } => {
            let old = active(graph, node)?;
            let mut new = old.clone();
            new.removed = true;
            Ok((Some(old.clone()), new))
        }
        EditOp::AddNote {
            id,
            pitch,
            spelling,
            anchor,
            duration,
        } => {
            if graph.contains(id) {
                return Err(Error::validation(format!("note id `{id}` already exists")));
            }
            let anchor = active(graph, anchor)?;
            check_pitch(*pitch, spelling)?;
            check_duration(duration)?;
            let mut new = Note::new(id.as_str(), anchor.onset, *duration, *pitch);
            new.spelling = spell(*pitch, spelling);
            new.voice = anchor.voice;
            Ok((None, new))
        }
    }
}

/// Outgoing edges of a note, using the (src, dst, kind) ordering of the set.
fn out_edges<'a>(edges: &'a BTreeSet<Edge>, id: &'a NoteId) -> impl Iterator<Item = &'a Edge> {
    let start = Edge {
        src: NodeRef::note(id),
        dst: NodeRef::Note(NoteId(String::new())),
        kind: EdgeType::Onset,
    };
    edges.range(start..).take_while(move |e| e.src.as_note() == Some(id))
}

/// Applies one edit, returning the new graph and the exact delta.
pub fn apply_edit(graph: &ScoreGraph, op: &EditOp) -> Result<(ScoreGraph, EditDelta)> {
    let (old, new) = resolve(graph, op)?;
    let mut next = graph.clone();
    next.set_note_unchecked(new.clone());
    if matches!(op, EditOp::ChangePitch { .. }) {
        return Ok((next, EditDelta::default()));
    }

    let x = &new.id;
    let old_active = old.as_ref().filter(|n| !n.removed);
    let new_active = (!new.removed).then_some(&new);

    let mut removed: BTreeSet<Edge> = BTreeSet::new();
    let mut added: BTreeSet<Edge> = BTreeSet::new();

    if old_active.is_some() {
        removed.extend(graph.edges().iter().filter(|e| e.touches(x)).cloned());
    }

    let old_index = OnsetIndex::new(graph.notes());
    let new_index = OnsetIndex::new(next.notes());

    // Rest edges of other notes depend on the global onset set.
    for u in next.active_notes().filter(|u| &u.id != x) {
        let end = u.end();
        let old_next = old_index.next_after(&end).map(|(k, _)| *k);
        let new_next = new_index.next_after(&end).map(|(k, _)| *k);
        if old_next != new_next {
            removed.extend(
                out_edges(graph.edges(), &u.id)
                    .filter(|e| e.kind == EdgeType::Rest)
                    .cloned(),
            );
            added.extend(rest_edges_from(u, &new_index));
        } else if let Some(xn) = new_active {
            if new_next == Some(xn.onset) {
                added.insert(Edge::notes(&u.id, x, EdgeType::Rest));
            }
        }
    }

    if let Some(xn) = new_active {
        let end = xn.end();
        for v in new_index.at(&xn.onset).iter().filter(|v| **v != x) {
            added.insert(Edge::notes(x, v, EdgeType::Onset));
            added.insert(Edge::notes(v, x, EdgeType::Onset));
        }
        for v in new_index.at(&end) {
            added.insert(Edge::notes(x, v, EdgeType::Consecutive));
        }
        for v in new_index.strictly_between(&xn.onset, &end) {
            added.insert(Edge::notes(v, x, EdgeType::During));
        }
        for u in next.active_notes().filter(|u| &u.id != x) {
            if u.end() == xn.onset {
                added.insert(Edge::notes(&u.id, x, EdgeType::Consecutive));
            }
            if u.onset < xn.onset && xn.onset < u.end() {
                added.insert(Edge::notes(x, &u.id, EdgeType::During));
            }
        }
        added.extend(rest_edges_from(xn, &new_index));
    }

    let mut delta = EditDelta::default();
    match (old_active, new_active) {
        (None, Some(_)) => {
            delta.added_nodes.insert(NodeRef::note(x));
        }
        (Some(_), None) => {
            delta.removed_nodes.insert(NodeRef::note(x));
        }
        _ => {}
    }

    if let Some(h) = graph.hierarchy() {
        if let Some(o) = old_active {
            removed.extend(h.note_edges(o));
        }
        if let Some(n) = new_active {
            added.extend(h.note_edges(n));
        }
        let mut beats: BTreeMap<i64, usize> = BTreeMap::new();
        let mut measures: BTreeMap<i64, usize> = BTreeMap::new();
        for n in next.active_notes() {
            *beats.entry(h.beat_of(&n.onset)).or_default() += 1;
            *measures.entry(h.measure_of(&n.onset)).or_default() += 1;
        }
        let beats: BTreeSet<i64> = beats.into_keys().collect();
        let measures: BTreeSet<i64> = measures.into_keys().collect();
        for b in h.beats.difference(&beats) {
            delta.removed_nodes.insert(NodeRef::Beat(*b));
        }
        for b in beats.difference(&h.beats) {
            delta.added_nodes.insert(NodeRef::Beat(*b));
        }
        for m in h.measures.difference(&measures) {
            delta.removed_nodes.insert(NodeRef::Measure(*m));
        }
        for m in measures.difference(&h.measures) {
            delta.added_nodes.insert(NodeRef::Measure(*m));
        }
        let (_, _, nh) = next.parts_mut();
        let nh = nh.expect("hierarchy cloned with graph");
        nh.beats = beats;
        nh.measures = measures;
    }

    delta.removed_edges = removed.difference(&added).cloned().collect();
    delta.added_edges = added.difference(&removed).cloned().collect();
    debug_assert!(delta.removed_edges.iter().all(|e| graph.edges().contains(e)));
    debug_assert!(delta.added_edges.iter().all(|e| !graph.edges().contains(e)));

    let (_, edges, _) = next.parts_mut();
    for e in &delta.removed_edges {
        edges.remove(e);
    }
    edges.extend(delta.added_edges.iter().cloned());
    Ok((next, delta))
}

/// Re-applies a log from `original`, verifying every recorded delta.
pub fn replay(original: &ScoreGraph, log: &EditLog) -> Result<ScoreGraph> {
    let mut g = original.clone();
    for (step, entry) in log.entries.iter().enumerate() {
        let (next, delta) = apply_edit(&g, &entry.op)?;
        if delta != entry.delta {
            return Err(Error::Integrity(format!(
                "replay diverged at step {step} ({}): recorded delta has {} changes, recomputed {}",
                entry.op,
                entry.delta.size(),
                delta.size()
            )));
        }
        g = next;
    }
    Ok(g)
}

/// Parameters of the legal edit space explored by the explainer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateSpec {
    /// `None` allows every op type.
    pub allowed: Option<BTreeSet<OpKind>>,
    /// Pitch changes range over `current ± pitch_window` semitones.
    pub pitch_window: u8,
    pub max_candidates: usize,
    pub seed: u64,
    /// Note that may not be removed (the explained prediction site).
    pub protected: Option<NoteId>,
}

impl Default for CandidateSpec {
    fn default() -> Self {
        CandidateSpec {
            allowed: None,
            pitch_window: 12,
            max_candidates: 4096,
            seed: 0,
            protected: None,
        }
    }
}

impl CandidateSpec {
    pub fn allows(&self, kind: OpKind) -> bool {
        self.allowed.as_ref().is_none_or(|a| a.contains(&kind))
    }
}

fn pitch_range(center: u8, window: u8) -> impl Iterator<Item = u8> {
    let lo = center.saturating_sub(window);
    let hi = (center as u16 + window as u16).min(127) as u8;
    lo..=hi
}

/// Enumerates legal edits in canonical order (op type, then note order,
/// then parameter), subsampled deterministically above `max_candidates`.
pub fn candidate_edits(graph: &ScoreGraph, spec: &CandidateSpec) -> Vec<EditOp> {
    let notes: Vec<&Note> = graph.active_notes().collect();
    let spelled = graph.has_spellings();
    let spelling = |p: u8| spelled.then(|| Spelling::simplest(p));
    // First note (in graph order) at each distinct onset.
    let mut anchors: Vec<&Note> = Vec::new();
    {
        let mut seen = BTreeSet::new();
        for n in &notes {
            if seen.insert(n.onset) {
                anchors.push(n);
            }
        }
    }
    let mut out = Vec::new();

    if spec.allows(OpKind::ChangePitch) {
        for n in &notes {
            for p in pitch_range(n.midi_pitch, spec.pitch_window).filter(|p| *p != n.midi_pitch) {
                out.push(EditOp::ChangePitch {
                    node: n.id.clone(),
                    pitch: p,
                    spelling: spelling(p),
                });
            }
        }
    }
    if spec.allows(OpKind::ChangeOnset) {
        for n in &notes {
            for a in anchors.iter().filter(|a| a.onset != n.onset) {
                out.push(EditOp::ChangeOnset {
                    node: n.id.clone(),
                    anchor: a.id.clone(),
                });
            }
        }
    }
    if spec.allows(OpKind::ChangeDuration) {
        for n in &notes {
            for d in allowed_durations().into_iter().filter(|d| *d != n.duration) {
                out.push(EditOp::ChangeDuration {
                    node: n.id.clone(),
                    duration: d,
                });
            }
        }
    }
    if spec.allows(OpKind::RemoveNote) {
        for n in notes.iter().filter(|n| spec.protected.as_ref() != Some(&n.id)) {
            out.push(EditOp::RemoveNote { node: n.id.clone() });
        }
    }
    if spec.allows(OpKind::AddNote) && !anchors.is_empty() {
        let id = graph.fresh_id("add");
        for a in &anchors {
            let sounding: BTreeSet<u8> = notes
                .iter()
                .filter(|n| n.onset == a.onset)
                .map(|n| n.midi_pitch)
                .collect();
            for p in pitch_range(a.midi_pitch, spec.pitch_window).filter(|p| !sounding.contains(p)) {
                for d in allowed_durations() {
                    out.push(EditOp::AddNote {
                        id: id.clone(),
                        pitch: p,
                        spelling: spelling(p),
                        anchor: a.id.clone(),
                        duration: d,
                    });
                }
            }
        }
    }

    if out.len() > spec.max_candidates {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut keep = index::sample(&mut rng, out.len(), spec.max_candidates).into_vec();
        keep.sort_unstable();
        let mut it = keep.into_iter().peekable();
        out = out
            .into_iter()
            .enumerate()
            .filter_map(|(i, op)| {
                if it.peek() == Some(&i) {
                    it.next();
                    Some(op)
                } else {
                    None
                }
            })
            .collect();
    }
    out
}
