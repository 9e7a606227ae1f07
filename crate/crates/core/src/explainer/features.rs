//! Candidate descriptors for the learned policy.
//!
//! | block        | width | content                                            |
//! |--------------|-------|----------------------------------------------------|
//! | op           | 5     | op type one-hot                                    |
//! | note         | 5x15  | features of the edited note, one slot per op type  |
//! | pitch        | 15    | new pitch class, semitone distance / 12, up, down  |
//! | duration     | 4     | new duration one-hot                               |
//! | anchor       | 15    | features of the onset anchor                       |
//! | relation     | 6     | relation of the edited note to the target          |

use std::collections::BTreeMap;

use super::policy::{CandidateFeatures, InnerPolicy};
use crate::edits::{allowed_durations, EditOp, OpKind};
use crate::features::{note_features, FEATURE_WIDTH};
use crate::graph::ScoreGraph;
use crate::note::{Note, NoteId};
use crate::rational::Rational;

const OP: usize = 0;
const NOTE: usize = OP + 5;
const PITCH: usize = NOTE + 5 * FEATURE_WIDTH;
const DURATION: usize = PITCH + 15;
const ANCHOR: usize = DURATION + 4;
const RELATION: usize = ANCHOR + FEATURE_WIDTH;
pub const FEATURE_DIM: usize = RELATION + 6;

/// Relation slots: the target itself, same onset, ends where the target
/// starts, starts where the target ends, overlapping, unrelated.
const IS_TARGET: usize = 0;
const SAME_ONSET: usize = 1;
const ENDS_AT_TARGET: usize = 2;
const STARTS_AT_TARGET_END: usize = 3;
const OVERLAPS: usize = 4;
const UNRELATED: usize = 5;

/// Initial relation weights: edits near the target are tried first.
const LOCALITY_PRIOR: [f64; 6] = [2.0, 1.0, 1.0, 0.5, 0.5, 0.0];

pub fn initial_policy() -> InnerPolicy {
    let mut w = vec![0.0; FEATURE_DIM];
    w[RELATION..].copy_from_slice(&LOCALITY_PRIOR);
    InnerPolicy::new(w)
}

fn relation(onset: Rational, end: Rational, is_target: bool, target: &Note) -> usize {
    if is_target {
        IS_TARGET
    } else if onset == target.onset {
        SAME_ONSET
    } else if end == target.onset {
        ENDS_AT_TARGET
    } else if onset == target.end() {
        STARTS_AT_TARGET_END
    } else if onset < target.end() && target.onset < end {
        OVERLAPS
    } else {
        UNRELATED
    }
}

fn put_pitch(row: &mut [f64], from: u8, to: u8) {
    row[PITCH + (to % 12) as usize] = 1.0;
    row[PITCH + 12] = (to as f64 - from as f64).abs() / 12.0;
    if to > from {
        row[PITCH + 13] = 1.0;
    } else if to < from {
        row[PITCH + 14] = 1.0;
    }
}

fn put_duration(row: &mut [f64], d: &Rational) {
    if let Some(i) = allowed_durations().iter().position(|x| x == d) {
        row[DURATION + i] = 1.0;
    }
}

/// Feature rows for `candidates` on `graph`. Each op type gets the same
/// total prior mass, so large families (pitch or note additions) do not
/// crowd out small ones (removals).
pub fn candidate_features(graph: &ScoreGraph, target: &NoteId, candidates: &[EditOp]) -> CandidateFeatures {
    let mut counts: BTreeMap<OpKind, usize> = BTreeMap::new();
    for c in candidates {
        *counts.entry(c.kind()).or_default() += 1;
    }
    let target_note = graph.note(target);
    let mut out = CandidateFeatures::new(FEATURE_DIM);
    let mut row = vec![0.0; FEATURE_DIM];
    for op in candidates {
        row.iter_mut().for_each(|x| *x = 0.0);
        let kind = op.kind();
        row[OP + kind.index()] = 1.0;
        let anchor = op.anchor().and_then(|a| graph.note(a));
        if let Some(a) = anchor {
            row[ANCHOR..ANCHOR + FEATURE_WIDTH].copy_from_slice(&note_features(a));
        }
        let edited = match op {
            EditOp::AddNote { .. } => anchor,
            _ => graph.note(op.node()),
        };
        if let Some(n) = edited {
            let slot = NOTE + kind.index() * FEATURE_WIDTH;
            row[slot..slot + FEATURE_WIDTH].copy_from_slice(&note_features(n));
        }
        // Onset and end of the edited note once the op is applied.
        let span = match (op, edited) {
            (EditOp::ChangePitch { pitch, .. }, Some(n)) => {
                put_pitch(&mut row, n.midi_pitch, *pitch);
                Some((n.onset, n.end()))
            }
            (EditOp::ChangeOnset { .. }, Some(n)) => anchor.map(|a| (a.onset, a.onset + n.duration)),
            (EditOp::ChangeDuration { duration, .. }, Some(n)) => {
                put_duration(&mut row, duration);
                Some((n.onset, n.onset + duration))
            }
            (EditOp::RemoveNote { .. }, Some(n)) => Some((n.onset, n.end())),
            (EditOp::AddNote { pitch, duration, .. }, Some(a)) => {
                put_pitch(&mut row, a.midi_pitch, *pitch);
                put_duration(&mut row, duration);
                Some((a.onset, a.onset + duration))
            }
            _ => None,
        };
        let rel = match (span, target_note) {
            (Some((on, end)), Some(t)) => relation(on, end, op.node() == target, t),
            _ => UNRELATED,
        };
        row[RELATION + rel] = 1.0;
        out.push(&row, -(counts[&kind] as f64).ln());
    }
    out
}
