//! Synthetic training and evaluation scores.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{argmax, NodeClassifier};
use crate::error::Result;
use crate::graph::ScoreGraph;
use crate::note::Note;
use crate::rational::Rational;

#[derive(Clone, Debug)]
pub struct LabeledGraph {
    pub graph: ScoreGraph,
    /// One label per active note, in graph order.
    pub labels: Vec<usize>,
}

pub type Dataset = Vec<LabeledGraph>;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub notes_per_piece: usize,
    pub chord_probability: f64,
    pub rest_probability: f64,
    /// Attach beat (1 quarter) and measure (4 quarters) nodes.
    pub hierarchy: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            notes_per_piece: 16,
            chord_probability: 0.3,
            rest_probability: 0.1,
            hierarchy: true,
        }
    }
}

const MAJOR: [i32; 7] = [0, 2, 4, 5, 7, 9, 11];

fn diatonic(degree: i32) -> i32 {
    let octave = degree.div_euclid(7);
    12 * octave + MAJOR[degree.rem_euclid(7) as usize]
}

// Scale degrees spanning MIDI 36..=84 in C major.
const LOW_DEGREE: i32 = 21;
const HIGH_DEGREE: i32 = 49;

/// Random C-major note list: a stepwise line on a half-beat grid with
/// occasional chord tones and rests. Pitches stay in 36..=84.
pub fn synth_notes(cfg: &SynthConfig, rng: &mut impl Rng) -> Vec<Note> {
    let durations = [
        Rational::from_integer(2),
        Rational::from_integer(1),
        Rational::from_integer(1),
        Rational::new(1, 2),
        Rational::new(1, 2),
        Rational::from_integer(4),
    ];
    let mut notes = Vec::with_capacity(cfg.notes_per_piece);
    let mut cursor = Rational::from_integer(0);
    let mut degree = rng.gen_range(28..=42);
    while notes.len() < cfg.notes_per_piece {
        let allow_whole = rng.gen_bool(0.1) as usize;
        let dur = durations[rng.gen_range(0..durations.len() - 1 + allow_whole)];
        degree = (degree + rng.gen_range(-3..=3)).clamp(LOW_DEGREE, HIGH_DEGREE);
        notes.push(Note::new(
            format!("n{}", notes.len()),
            cursor,
            dur,
            diatonic(degree) as u8,
        ));
        if notes.len() < cfg.notes_per_piece && rng.gen_bool(cfg.chord_probability) {
            let below = (degree - rng.gen_range(2..=4)).max(LOW_DEGREE);
            let chord_dur = if rng.gen_bool(0.7) {
                dur
            } else {
                durations[rng.gen_range(0..4)]
            };
            notes.push(Note::new(
                format!("n{}", notes.len()),
                cursor,
                chord_dur,
                diatonic(below) as u8,
            ));
        }
        cursor += dur;
        if rng.gen_bool(cfg.rest_probability) {
            cursor += Rational::new(rng.gen_range(1..=2), 2);
        }
    }
    notes
}

pub fn synth_piece(cfg: &SynthConfig, seed: u64) -> Result<ScoreGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = ScoreGraph::build(synth_notes(cfg, &mut rng))?.with_piece(format!("synthetic-{seed}"));
    if cfg.hierarchy {
        graph.attach_hierarchy(Rational::from_integer(1), Rational::from_integer(4))
    } else {
        Ok(graph)
    }
}

/// `num_pieces` synthetic pieces labelled by `labeler`'s argmax.
pub fn synth_dataset(
    num_pieces: usize,
    notes_per_piece: usize,
    labeler: &dyn NodeClassifier,
    seed: u64,
) -> Result<Dataset> {
    let cfg = SynthConfig {
        notes_per_piece,
        ..SynthConfig::default()
    };
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    (0..num_pieces)
        .map(|_| {
            let graph = synth_piece(&cfg, seeds.gen())?;
            let out = labeler.classify(&graph)?;
            let labels = out.values().map(|p| argmax(p)).collect();
            Ok(LabeledGraph { graph, labels })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RuleClassifier;

    #[test]
    fn single_note_piece() {
        let d = synth_dataset(1, 1, &RuleClassifier::cadence_like(), 3).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].graph.num_notes(), 1);
        assert_eq!(d[0].labels.len(), 1);
    }

    #[test]
    fn deterministic_given_seed() {
        let m = RuleClassifier::cadence_like();
        let a = synth_dataset(3, 12, &m, 11).unwrap();
        let b = synth_dataset(3, 12, &m, 11).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.graph, y.graph);
            assert_eq!(x.labels, y.labels);
        }
    }

    #[test]
    fn pieces_are_coherent() {
        for seed in 0..20 {
            let g = synth_piece(&SynthConfig::default(), seed).unwrap();
            g.check_invariants().unwrap();
            assert!(g.notes().all(|n| (36..=84).contains(&n.midi_pitch)));
            assert!(g.notes().all(|n| (n.onset * 2).is_integer()));
        }
    }
}
