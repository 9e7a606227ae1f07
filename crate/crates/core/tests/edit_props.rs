mod common;

use common::{build_with_hierarchy, grid_notes, matches_oracle, q, random_walk, set_distance};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scorecf::distance::graph_distance;
use scorecf::edits::{apply_edit, replay, EditLog, EditOp};
use scorecf::{Note, NoteId, ScoreGraph};

fn start(seed: u64) -> ScoreGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut notes = grid_notes(&mut rng, 12);
    if notes.is_empty() {
        notes.push(Note::new("g0", q(0, 1), q(1, 1), 60));
    }
    build_with_hierarchy(notes)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn incremental_matches_rebuild(seed in any::<u64>(), len in 1usize..=10) {
        let (graphs, _) = random_walk(&mut ChaCha8Rng::seed_from_u64(seed ^ 7), &start(seed), len);
        for g in &graphs {
            let rebuilt = g.rebuild_edges();
            prop_assert_eq!(g.edges(), rebuilt.edges());
            prop_assert!(matches_oracle(g));
            g.check_invariants().unwrap();
        }
    }

    #[test]
    fn replay_reproduces_final_graph(seed in any::<u64>(), len in 1usize..=10) {
        let g0 = start(seed);
        let (graphs, log) = random_walk(&mut ChaCha8Rng::seed_from_u64(seed ^ 9), &g0, len);
        prop_assert_eq!(&replay(&g0, &log).unwrap(), graphs.last().unwrap());
    }

    #[test]
    fn tracked_distance_equals_set_difference(seed in any::<u64>(), len in 1usize..=10) {
        let g0 = start(seed);
        let (graphs, log) = random_walk(&mut ChaCha8Rng::seed_from_u64(seed ^ 11), &g0, len);
        for (k, g) in graphs.iter().enumerate() {
            let prefix = EditLog { entries: log.entries[..k].to_vec() };
            prop_assert_eq!(graph_distance(&prefix), set_distance(&g0, g) as f64);
        }
    }
}

fn apply_all(g: &ScoreGraph, ops: &[EditOp]) -> (ScoreGraph, EditLog) {
    let mut g = g.clone();
    let mut log = EditLog::new();
    for op in ops {
        let (next, d) = apply_edit(&g, op).unwrap();
        log.push(op.clone(), d);
        g = next;
    }
    (g, log)
}

#[test]
fn self_cancelling_pairs_have_zero_distance() {
    let g = build_with_hierarchy(vec![
        Note::new("a", q(0, 1), q(1, 1), 60),
        Note::new("b", q(1, 1), q(1, 1), 62),
        Note::new("c", q(3, 1), q(2, 1), 65),
        Note::new("d", q(5, 1), q(1, 1), 67),
    ]);
    let id = |s: &str| NoteId::from(s);
    let pairs = vec![
        vec![
            EditOp::ChangeDuration {
                node: id("a"),
                duration: q(2, 1),
            },
            EditOp::ChangeDuration {
                node: id("a"),
                duration: q(1, 1),
            },
        ],
        vec![
            EditOp::ChangeOnset {
                node: id("b"),
                anchor: id("c"),
            },
            EditOp::ChangeOnset {
                node: id("b"),
                anchor: id("a"),
            },
            EditOp::ChangeOnset {
                node: id("b"),
                anchor: id("a"),
            },
        ],
        vec![
            EditOp::AddNote {
                id: id("add0"),
                pitch: 70,
                spelling: None,
                anchor: id("d"),
                duration: q(4, 1),
            },
            EditOp::RemoveNote { node: id("add0") },
        ],
        vec![
            EditOp::ChangePitch {
                node: id("c"),
                pitch: 66,
                spelling: None,
            },
            EditOp::ChangePitch {
                node: id("c"),
                pitch: 65,
                spelling: None,
            },
        ],
    ];
    for ops in pairs {
        let (g2, log) = apply_all(&g, &ops);
        let dist = graph_distance(&log);
        assert_eq!(dist, set_distance(&g, &g2) as f64, "{ops:?}");
        if !matches!(ops[0], EditOp::ChangeOnset { .. }) {
            assert_eq!(dist, 0.0, "{ops:?}");
        }
    }
}

#[test]
fn onset_round_trip_cancels() {
    let g = build_with_hierarchy(vec![
        Note::new("a", q(0, 1), q(1, 1), 60),
        Note::new("x", q(0, 1), q(1, 1), 55),
        Note::new("b", q(1, 1), q(1, 1), 62),
        Note::new("c", q(3, 1), q(2, 1), 65),
    ]);
    let ops = [
        EditOp::ChangeOnset {
            node: "a".into(),
            anchor: "c".into(),
        },
        EditOp::ChangeOnset {
            node: "a".into(),
            anchor: "x".into(),
        },
    ];
    let (g2, log) = apply_all(&g, &ops);
    assert_eq!(g2.edges(), g.edges());
    assert_eq!(graph_distance(&log), 0.0);
}

#[test]
fn removed_notes_stay_isolated() {
    let g = build_with_hierarchy(vec![
        Note::new("a", q(0, 1), q(1, 1), 60),
        Note::new("b", q(0, 1), q(1, 1), 64),
        Note::new("c", q(1, 1), q(1, 1), 62),
    ]);
    let (g2, _) = apply_all(&g, &[EditOp::RemoveNote { node: "b".into() }]);
    assert!(g2.contains(&"b".into()));
    assert_eq!(g2.degree(&"b".into()), 0);
    assert!(matches_oracle(&g2));
}
