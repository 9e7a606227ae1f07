mod common;

use common::{grid_notes, matches_oracle, oracle_sets, q};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scorecf::io::{parse_musicxml, parse_notes_json, write_musicxml, write_notes_json, ExportOptions};
use scorecf::{EdgeType, Note, ScoreGraph};

fn notes_from_seed(seed: u64, max: usize) -> Vec<Note> {
    grid_notes(&mut ChaCha8Rng::seed_from_u64(seed), max)
}

fn sorted_triples(notes: &[Note]) -> Vec<(scorecf::Rational, scorecf::Rational, u8)> {
    let mut v: Vec<_> = notes.iter().map(|n| (n.onset, n.duration, n.midi_pitch)).collect();
    v.sort();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn edges_match_pairwise_rules(seed in any::<u64>(), hierarchy in any::<bool>()) {
        let notes = notes_from_seed(seed, 30);
        let g = ScoreGraph::build(notes.clone()).unwrap();
        let g = if hierarchy { g.attach_hierarchy(q(1, 1), q(4, 1)).unwrap() } else { g };
        prop_assert!(matches_oracle(&g));
        g.check_invariants().unwrap();
    }

    #[test]
    fn note_order_does_not_matter(seed in any::<u64>()) {
        let notes = notes_from_seed(seed, 25);
        let mut shuffled = notes.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let a = ScoreGraph::build(notes).unwrap();
        let b = ScoreGraph::build(shuffled).unwrap();
        prop_assert_eq!(a.edges(), b.edges());
    }

    #[test]
    fn rebuild_is_idempotent(seed in any::<u64>()) {
        let g = common::build_with_hierarchy(notes_from_seed(seed, 25));
        let once = g.rebuild_edges();
        let twice = once.rebuild_edges();
        prop_assert_eq!(once.edges(), g.edges());
        prop_assert_eq!(twice.edges(), g.edges());
    }

    #[test]
    fn json_and_musicxml_agree(seed in any::<u64>()) {
        let notes = notes_from_seed(seed, 20);
        let from_json = parse_notes_json(&write_notes_json(&notes)).unwrap();
        let xml = write_musicxml(&notes, &ExportOptions::default()).unwrap();
        roxmltree::Document::parse(&xml).unwrap();
        let from_xml = parse_musicxml(&xml).unwrap();
        prop_assert_eq!(sorted_triples(&from_json), sorted_triples(&notes));
        prop_assert_eq!(sorted_triples(&from_xml), sorted_triples(&notes));
        let (a, b) = (ScoreGraph::build(from_json).unwrap(), ScoreGraph::build(from_xml).unwrap());
        let counts = |g: &ScoreGraph| g.edge_counts().into_iter().collect::<Vec<_>>();
        prop_assert_eq!(counts(&a), counts(&b));
    }
}

#[test]
fn chord_gets_symmetric_onset_edges() {
    let notes = vec![
        Note::new("a", q(0, 1), q(1, 1), 60),
        Note::new("b", q(0, 1), q(2, 1), 64),
    ];
    let g = ScoreGraph::build(notes.clone()).unwrap();
    assert_eq!(g.edge_counts().get(&EdgeType::Onset), Some(&2));
    assert_eq!(g.edges(), &oracle_sets(&notes, false).0);
}

#[test]
fn rest_edge_only_to_next_onset() {
    let notes = vec![
        Note::new("a", q(0, 1), q(1, 1), 60),
        Note::new("b", q(2, 1), q(1, 1), 62),
        Note::new("c", q(4, 1), q(1, 1), 64),
    ];
    let g = ScoreGraph::build(notes).unwrap();
    assert_eq!(g.edge_counts().get(&EdgeType::Rest), Some(&2));
    assert!(matches_oracle(&g));
}
