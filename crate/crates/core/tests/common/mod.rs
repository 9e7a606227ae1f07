//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scorecf::edits::{allowed_durations, apply_edit, candidate_edits, CandidateSpec, EditLog, EditOp};
use scorecf::explainer::{CandidateFeatures, InnerPolicy};
use scorecf::graph::{Edge, EdgeType, NodeRef};
use scorecf::model::{argmax, synth_notes, NodeClassifier, ReferenceGnn, Rule, RuleClassifier, SynthConfig};
use scorecf::{Note, NoteId, Rational, ScoreGraph};

pub fn q(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

/// Random notes on a grid: onsets in steps of 1/2 up to 8, durations from
/// {1/2, 1, 3/2, 2, 4}, distinct ids.
pub fn grid_notes(rng: &mut impl Rng, max_notes: usize) -> Vec<Note> {
    let n = rng.gen_range(0..=max_notes);
    let durations = [q(1, 2), q(1, 1), q(3, 2), q(2, 1), q(4, 1)];
    (0..n)
        .map(|i| {
            Note::new(
                format!("g{i}"),
                q(rng.gen_range(0..16), 2),
                durations[rng.gen_range(0..durations.len())],
                rng.gen_range(36..=84),
            )
        })
        .collect()
}

/// The four note relations evaluated pair by pair, straight from their
/// definitions.
pub fn oracle_edges(notes: &[Note]) -> BTreeSet<Edge> {
    let active: Vec<&Note> = notes.iter().filter(|n| !n.removed).collect();
    let mut out = BTreeSet::new();
    for u in &active {
        for v in &active {
            if u.id == v.id {
                continue;
            }
            let end_u = u.onset + u.duration;
            if u.onset == v.onset {
                out.insert(Edge::notes(&u.id, &v.id, EdgeType::Onset));
            }
            if end_u == v.onset {
                out.insert(Edge::notes(&u.id, &v.id, EdgeType::Consecutive));
            }
            if u.onset < v.onset && end_u > v.onset {
                out.insert(Edge::notes(&v.id, &u.id, EdgeType::During));
            }
            if end_u < v.onset && !active.iter().any(|w| w.onset < v.onset && end_u < w.onset) {
                out.insert(Edge::notes(&u.id, &v.id, EdgeType::Rest));
            }
        }
    }
    out
}

/// Hierarchy edges for beat length 1 and measure length 4.
pub fn oracle_hierarchy(notes: &[Note]) -> (BTreeSet<Edge>, BTreeSet<NodeRef>) {
    let mut edges = BTreeSet::new();
    let mut nodes = BTreeSet::new();
    for n in notes.iter().filter(|n| !n.removed) {
        let beat = n.onset.floor().to_integer();
        let measure = (n.onset / q(4, 1)).floor().to_integer();
        nodes.insert(NodeRef::Beat(beat));
        nodes.insert(NodeRef::Measure(measure));
        edges.insert(Edge {
            src: NodeRef::Note(n.id.clone()),
            dst: NodeRef::Beat(beat),
            kind: EdgeType::NoteToBeat,
        });
        edges.insert(Edge {
            src: NodeRef::Note(n.id.clone()),
            dst: NodeRef::Measure(measure),
            kind: EdgeType::NoteToMeasure,
        });
    }
    (edges, nodes)
}

/// Full node set (active notes plus hierarchy) and edge set of a graph
/// built from scratch on `notes`.
pub fn oracle_sets(notes: &[Note], hierarchy: bool) -> (BTreeSet<Edge>, BTreeSet<NodeRef>) {
    let mut edges = oracle_edges(notes);
    let mut nodes: BTreeSet<NodeRef> = notes
        .iter()
        .filter(|n| !n.removed)
        .map(|n| NodeRef::Note(n.id.clone()))
        .collect();
    if hierarchy {
        let (e, n) = oracle_hierarchy(notes);
        edges.extend(e);
        nodes.extend(n);
    }
    (edges, nodes)
}

/// Boolean rules the greedy completeness suite draws from.
pub fn rule_family() -> Vec<Rule> {
    let not = |r: Rule| Rule::Not { inner: Box::new(r) };
    vec![
        Rule::PitchClassIn { classes: vec![0] },
        Rule::PitchClassIn { classes: vec![0, 4, 7] },
        Rule::OnsetHasPitchClass { class: 0 },
        Rule::OnsetHasPitchClass { class: 7 },
        Rule::MinDuration { duration: q(2, 1) },
        not(Rule::MinDuration { duration: q(1, 1) }),
        Rule::HasPredecessor,
        not(Rule::HasPredecessor),
        Rule::MinChordSize { size: 2 },
        not(Rule::MinChordSize { size: 2 }),
        Rule::OnBeat,
        not(Rule::OnBeat),
        Rule::All {
            rules: vec![Rule::PitchClassIn { classes: vec![0] }, Rule::OnBeat],
        },
        Rule::Any {
            rules: vec![
                Rule::OnsetHasPitchClass { class: 2 },
                Rule::MinDuration { duration: q(4, 1) },
            ],
        },
        Rule::CadenceLike,
    ]
}

/// A single edit spelled out on the note list, independent of the library
/// edit machinery.
#[derive(Clone, Debug)]
pub enum RawEdit {
    Pitch(usize, u8),
    Onset(usize, Rational),
    Duration(usize, Rational),
    Remove(usize),
    Add(Rational, u8, Rational),
}

pub const PITCH_WINDOW: i32 = 12;

/// Every legal single edit of the active notes: pitch within the window,
/// onset copied from another onset, allowed durations, removals of
/// non-target notes and additions at an existing onset with a pitch near a
/// note there that is not already sounding.
pub fn all_single_edits(notes: &[Note], target: &NoteId) -> Vec<RawEdit> {
    let active: Vec<(usize, &Note)> = notes.iter().enumerate().filter(|(_, n)| !n.removed).collect();
    let onsets: BTreeSet<Rational> = active.iter().map(|(_, n)| n.onset).collect();
    let mut out = Vec::new();
    for &(i, n) in &active {
        let p = n.midi_pitch as i32;
        for np in (p - PITCH_WINDOW).max(0)..=(p + PITCH_WINDOW).min(127) {
            if np != p {
                out.push(RawEdit::Pitch(i, np as u8));
            }
        }
        for o in onsets.iter().filter(|o| **o != n.onset) {
            out.push(RawEdit::Onset(i, *o));
        }
        for d in allowed_durations().into_iter().filter(|d| *d != n.duration) {
            out.push(RawEdit::Duration(i, d));
        }
        if &n.id != target {
            out.push(RawEdit::Remove(i));
        }
    }
    for o in &onsets {
        let sounding: BTreeSet<i32> = active
            .iter()
            .filter(|(_, n)| n.onset == *o)
            .map(|(_, n)| n.midi_pitch as i32)
            .collect();
        let mut pitches = BTreeSet::new();
        for s in &sounding {
            for np in (s - PITCH_WINDOW).max(0)..=(s + PITCH_WINDOW).min(127) {
                if !sounding.contains(&np) {
                    pitches.insert(np);
                }
            }
        }
        for np in pitches {
            for d in allowed_durations() {
                out.push(RawEdit::Add(*o, np as u8, d));
            }
        }
    }
    out
}

pub fn apply_raw(notes: &[Note], edit: &RawEdit) -> Vec<Note> {
    let mut out = notes.to_vec();
    match edit {
        RawEdit::Pitch(i, p) => {
            out[*i].midi_pitch = *p;
            out[*i].spelling = None;
        }
        RawEdit::Onset(i, o) => out[*i].onset = *o,
        RawEdit::Duration(i, d) => out[*i].duration = *d,
        RawEdit::Remove(i) => out[*i].removed = true,
        RawEdit::Add(o, p, d) => out.push(Note::new("oracle-added", *o, *d, *p)),
    }
    out
}

pub fn build_with_hierarchy(notes: Vec<Note>) -> ScoreGraph {
    ScoreGraph::build(notes)
        .unwrap()
        .attach_hierarchy(q(1, 1), q(4, 1))
        .unwrap()
}

/// A completeness case: a small graph, a rule model and a target note
/// whose label should flip.
pub struct FlipCase {
    pub seed: u64,
    pub graph: ScoreGraph,
    pub model: RuleClassifier,
    pub rule_index: usize,
    pub target: NoteId,
    pub target_label: usize,
}

/// Draws a case from `seed`; `None` when no single edit flips it.
pub fn flip_case(seed: u64) -> Option<FlipCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SynthConfig {
        notes_per_piece: rng.gen_range(2..=8),
        ..SynthConfig::default()
    };
    let notes = synth_notes(&cfg, &mut rng);
    let family = rule_family();
    let rule_index = rng.gen_range(0..family.len());
    let model = RuleClassifier::new(family[rule_index].clone());
    let t = rng.gen_range(0..notes.len());
    let target = notes[t].id.clone();
    let graph = build_with_hierarchy(notes.clone()).with_piece(format!("case-{seed}"));
    let current = argmax(&model.classify(&graph).unwrap()[&target]);
    let target_label = 1 - current;
    let flips = all_single_edits(&notes, &target).iter().any(|e| {
        let g = build_with_hierarchy(apply_raw(&notes, e));
        argmax(&model.classify(&g).unwrap()[&target]) == target_label
    });
    flips.then_some(FlipCase {
        seed,
        graph,
        model,
        rule_index,
        target,
        target_label,
    })
}

/// The first `count` flippable cases in seed order.
pub fn flip_suite(count: usize) -> Vec<FlipCase> {
    (0..).filter_map(flip_case).take(count).collect()
}

/// A random legal edit of `graph`, drawn from the library's candidate
/// space; `None` when the space is empty.
pub fn random_edit(rng: &mut impl Rng, graph: &ScoreGraph, protected: Option<&NoteId>) -> Option<EditOp> {
    let spec = CandidateSpec {
        seed: rng.gen(),
        max_candidates: 512,
        protected: protected.cloned(),
        ..CandidateSpec::default()
    };
    let cands = candidate_edits(graph, &spec);
    (!cands.is_empty()).then(|| cands[rng.gen_range(0..cands.len())].clone())
}

/// Edge and node sets of `graph` equal the ones the oracle derives from its
/// note list.
pub fn matches_oracle(graph: &ScoreGraph) -> bool {
    let notes: Vec<Note> = graph.notes().cloned().collect();
    let (edges, nodes) = oracle_sets(&notes, graph.hierarchy().is_some());
    graph.edges() == &edges && graph.active_nodes() == nodes
}

/// Size of the symmetric difference between the node and edge sets of two
/// graphs.
pub fn set_distance(a: &ScoreGraph, b: &ScoreGraph) -> usize {
    let edges = a.edges().symmetric_difference(b.edges()).count();
    let (na, nb) = (a.active_nodes(), b.active_nodes());
    edges + na.symmetric_difference(&nb).count()
}

/// Applies `len` random edits in sequence, returning every intermediate
/// graph (the input first) and the log.
pub fn random_walk(rng: &mut impl Rng, start: &ScoreGraph, len: usize) -> (Vec<ScoreGraph>, EditLog) {
    let mut graphs = vec![start.clone()];
    let mut log = EditLog::new();
    for _ in 0..len {
        let g = graphs.last().unwrap();
        let Some(op) = random_edit(rng, g, None) else { break };
        let (next, delta) = apply_edit(g, &op).unwrap();
        log.push(op, delta);
        graphs.push(next);
    }
    (graphs, log)
}

/// Largest per-group relative error between the analytic gradient and
/// central finite differences.
pub fn worst_gradient_error(model: &ReferenceGnn, graph: &ScoreGraph, labels: &[usize]) -> f64 {
    let (_, grads) = model.gradients(graph, labels).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (_, range) in &grads.groups {
        let mut diff = 0.0;
        let mut scale = 0.0;
        for i in range.clone() {
            let mut plus = model.clone();
            plus.params_mut()[i] += h;
            let mut minus = model.clone();
            minus.params_mut()[i] -= h;
            let numeric = (plus.loss(graph, labels).unwrap() - minus.loss(graph, labels).unwrap()) / (2.0 * h);
            diff += (grads.flat[i] - numeric).powi(2);
            scale += grads.flat[i].powi(2).max(numeric.powi(2));
        }
        let rel = diff.sqrt() / scale.sqrt().max(1e-8);
        worst = worst.max(rel);
    }
    worst
}

/// Two arms with identity features and fixed losses.
pub fn bandit_commits_to(seed: u64, t: usize, lr: f64) -> usize {
    let mut c = CandidateFeatures::new(2);
    c.push(&[1.0, 0.0], 0.0);
    c.push(&[0.0, 1.0], 0.0);
    let losses = [0.1, 2.0];
    let mut policy = InnerPolicy::zeros(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..t {
        policy.step(&c, lr, &mut rng, |i| Ok(losses[i])).unwrap();
    }
    policy.best(&c).unwrap()
}
