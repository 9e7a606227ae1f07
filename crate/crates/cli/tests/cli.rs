use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_scorecf"));
    c.env_remove("SCORECF_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_notes(dir: &Path, name: &str, notes: &[(&str, &str, &str, u8)]) -> PathBuf {
    let list: Vec<Value> = notes
        .iter()
        .map(|(id, on, d, p)| serde_json::json!({"id": id, "onset": on, "duration": d, "midi_pitch": p}))
        .collect();
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string(&list).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn cadence_piece(dir: &Path) -> PathBuf {
    write_notes(
        dir,
        "cadence.json",
        &[
            ("lead", "0", "1", 71),
            ("tonic", "1", "1", 72),
            ("bass", "1", "1", 48),
            ("tail", "2", "2", 67),
        ],
    )
}

#[test]
fn build_two_consecutive_notes() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_notes(dir.path(), "two.json", &[("a", "0", "1", 60), ("b", "1", "1", 62)]);
    let out = dir.path().join("out");
    let o = run(&["build", "--input", s(&input), "--out", s(&out)]);
    assert!(o.status.success(), "{o:?}");
    let counts: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(counts["notes"], 2);
    assert_eq!(counts["beats"], 2);
    assert_eq!(counts["measures"], 1);
    assert_eq!(counts["edges"]["consecutive"], 1);
    assert_eq!(counts["edges"]["onset"], 0);
    assert_eq!(counts["edges"]["during"], 0);
    assert_eq!(counts["edges"]["rest"], 0);
    let dump: Value = serde_json::from_str(&std::fs::read_to_string(out.join("graph.json")).unwrap()).unwrap();
    assert_eq!(dump["notes"].as_array().unwrap().len(), 2);
}

#[test]
fn build_empty_piece() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_notes(dir.path(), "empty.json", &[]);
    let o = run(&["build", "--input", s(&input), "--out", s(&dir.path().join("o"))]);
    assert!(o.status.success(), "{o:?}");
    let counts: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(counts["notes"], 0);
    assert_eq!(counts["beats"], 0);
    assert_eq!(counts["measures"], 0);
}

/// Edge counts per relation, evaluated pair by pair from the definitions.
fn oracle_counts(notes: &[(i64, i64)]) -> BTreeMap<&'static str, usize> {
    let mut c = BTreeMap::new();
    for (i, &(ou, du)) in notes.iter().enumerate() {
        for (j, &(ov, _)) in notes.iter().enumerate() {
            if i == j {
                continue;
            }
            let end = ou + du;
            if ou == ov {
                *c.entry("onset").or_default() += 1;
            }
            if end == ov {
                *c.entry("consecutive").or_default() += 1;
            }
            if ou < ov && end > ov {
                *c.entry("during").or_default() += 1;
            }
            if end < ov && !notes.iter().any(|&(ow, _)| ow < ov && end < ow) {
                *c.entry("rest").or_default() += 1;
            }
        }
    }
    c
}

#[test]
fn build_fifty_notes_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    // Half-beat units; a small LCG keeps the piece fixed.
    let mut x: u64 = 12345;
    let mut next = |m: u64| {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (x >> 33) % m
    };
    let mut raw = Vec::new();
    let mut ids = Vec::new();
    let mut fields = Vec::new();
    for i in 0..50 {
        let on = next(60) as i64;
        let d = [1, 2, 3, 4, 8][next(5) as usize];
        raw.push((on, d));
        ids.push(format!("x{i}"));
        fields.push((format!("{on}/2"), format!("{d}/2"), 40 + next(40) as u8));
    }
    let notes: Vec<(&str, &str, &str, u8)> = ids
        .iter()
        .zip(&fields)
        .map(|(id, (on, d, p))| (id.as_str(), on.as_str(), d.as_str(), *p))
        .collect();
    let input = write_notes(dir.path(), "fifty.json", &notes);
    let o = run(&["build", "--input", s(&input), "--out", s(&dir.path().join("o"))]);
    assert!(o.status.success(), "{o:?}");
    let counts: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let expected = oracle_counts(&raw);
    for kind in ["onset", "consecutive", "during", "rest"] {
        assert_eq!(
            counts["edges"][kind].as_u64().unwrap() as usize,
            expected.get(kind).copied().unwrap_or(0),
            "{kind}"
        );
    }
    let beats: std::collections::BTreeSet<i64> = raw.iter().map(|(on, _)| on.div_euclid(2)).collect();
    let measures: std::collections::BTreeSet<i64> = raw.iter().map(|(on, _)| on.div_euclid(8)).collect();
    assert_eq!(counts["beats"].as_u64().unwrap() as usize, beats.len());
    assert_eq!(counts["measures"].as_u64().unwrap() as usize, measures.len());
    assert_eq!(counts["edges"]["note_to_beat"], 50);
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn explain_flips_at_step_one_and_writes_steps() {
    let dir = tempfile::tempdir().unwrap();
    let input = cadence_piece(dir.path());
    let out = dir.path().join("e");
    let o = run(&[
        "explain",
        "--input",
        s(&input),
        "--model",
        "cadence-rule",
        "--target-node",
        "tonic",
        "--target-label",
        "NC",
        "--n",
        "10",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("first valid step: 1"));
    let r = report(&out);
    let steps = r["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 11);
    assert_eq!(steps[0]["op"], Value::Null);
    assert_eq!(steps[1]["valid"], true);
    for k in 1..=10 {
        assert!(out.join(format!("step-{k:03}.musicxml")).exists());
        assert!(out.join(format!("step-{k:03}.graph.json")).exists());
    }
    let xml = std::fs::read_to_string(out.join("step-001.musicxml")).unwrap();
    let doc = roxmltree::Document::parse(&xml).unwrap();
    let colored = doc
        .descendants()
        .filter(|n| n.has_tag_name("note") && n.attribute("color").is_some())
        .count();
    assert!(colored >= 1);
}

#[test]
fn explain_honors_op_path() {
    let dir = tempfile::tempdir().unwrap();
    let input = cadence_piece(dir.path());
    for mode in ["greedy", "learned"] {
        let out = dir.path().join(mode);
        let o = run(&[
            "explain",
            "--input",
            s(&input),
            "--target-node",
            "tonic",
            "--target-label",
            "NC",
            "--op-path",
            "rem,pitch,dur",
            "--mode",
            mode,
            "--t",
            "10",
            "--out",
            s(&out),
        ]);
        assert!(o.status.success(), "{o:?}");
        let r = report(&out);
        let ops: Vec<&str> = r["steps"].as_array().unwrap()[1..]
            .iter()
            .map(|st| st["op"]["op"].as_str().unwrap())
            .collect();
        assert_eq!(ops, ["remove_note", "change_pitch", "change_duration"], "{mode}");
    }
}

#[test]
fn unknown_target_lists_ids() {
    let dir = tempfile::tempdir().unwrap();
    let input = cadence_piece(dir.path());
    let o = run(&[
        "explain",
        "--input",
        s(&input),
        "--target-node",
        "nope",
        "--target-label",
        "NC",
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("lead") && err.contains("tonic"), "{err}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["build"]).status.code(), Some(2));
    let missing = dir.path().join("missing.json");
    assert_eq!(run(&["build", "--input", s(&missing)]).status.code(), Some(2));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"[{"id":"a","onset":0,"duration":0,"midi_pitch":60}]"#).unwrap();
    let o = run(&["build", "--input", s(&bad), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains('a'));
    let input = cadence_piece(dir.path());
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = run(&["build", "--input", s(&input), "--out", s(&blocker.join("sub"))]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn experiment_with_constant_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = run(&[
        "experiment",
        "--synthetic",
        "2",
        "--model",
        "constant:NC",
        "--directions",
        "*->NC",
        "--balance",
        "distance",
        "--t",
        "5",
        "--n",
        "2",
        "--repeats",
        "2",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{o:?}");
    let csv = stdout(&o);
    let rows: Vec<&str> = csv.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        rows,
        ["metric", "accuracy", "min. changes", "operation", "distance", "time"]
    );
    assert!(csv.lines().nth(1).unwrap().contains("100.0%"));
    assert!(out.join("table.csv").exists() && out.join("table.json").exists());
}

#[test]
fn export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let input = cadence_piece(dir.path());
    let e = dir.path().join("e");
    let o = run(&[
        "explain",
        "--input",
        s(&input),
        "--target-node",
        "tonic",
        "--target-label",
        "NC",
        "--n",
        "2",
        "--out",
        s(&e),
    ]);
    assert!(o.status.success(), "{o:?}");
    let x = dir.path().join("x");
    let o = run(&[
        "export",
        "--report",
        s(&e.join("report.json")),
        "--format",
        "musicxml",
        "--out",
        s(&x),
    ]);
    assert!(o.status.success(), "{o:?}");
    for k in 1..=2 {
        let name = format!("step-{k:03}.musicxml");
        assert_eq!(
            std::fs::read(e.join(&name)).unwrap(),
            std::fs::read(x.join(&name)).unwrap()
        );
        assert!(!x.join(format!("step-{k:03}.graph.json")).exists());
    }
    // An exported step parses back as an input piece.
    let o = run(&[
        "build",
        "--input",
        s(&x.join("step-001.musicxml")),
        "--out",
        s(&dir.path().join("b")),
    ]);
    assert!(o.status.success(), "{o:?}");
    let counts: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(counts["notes"].as_u64().unwrap() >= 3);
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let input = cadence_piece(dir.path());
    let saved = dir.path().join("run.toml");
    let a = dir.path().join("a");
    let o = run(&[
        "explain",
        "--input",
        s(&input),
        "--target-node",
        "tonic",
        "--target-label",
        "NC",
        "--n",
        "3",
        "--out",
        s(&a),
        "--save-config",
        s(&saved),
    ]);
    assert!(o.status.success(), "{o:?}");
    let b = dir.path().join("b");
    let o = run(&["explain", "--config", s(&saved), "--out", s(&b)]);
    assert!(o.status.success(), "{o:?}");
    let (ra, rb) = (report(&a), report(&b));
    let ops = |r: &Value| {
        r["steps"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| s["op"].clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(ops(&ra), ops(&rb));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "nonsense-key = 1\n").unwrap();
    assert_eq!(run(&["explain", "--config", s(&bad)]).status.code(), Some(2));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let input = cadence_piece(dir.path());
    let env_out = dir.path().join("from-env");
    let o = bin()
        .args(["build", "--input", s(&input)])
        .env("SCORECF_OUT", &env_out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{o:?}");
    assert!(env_out.join("graph.json").exists());
    let o = bin()
        .args(["build", "--input", s(&input)])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{o:?}");
    assert!(dir.path().join("scorecf-out/graph.json").exists());
}

#[test]
fn train_writes_loadable_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("model.json");
    let o = run(&["train", "--out", s(&ck), "--pieces", "10", "--epochs", "2"]);
    assert!(o.status.success(), "{o:?}");
    let input = cadence_piece(dir.path());
    let o = run(&[
        "explain",
        "--input",
        s(&input),
        "--model",
        s(&ck),
        "--target-node",
        "tonic",
        "--target-label",
        "PAC",
        "--n",
        "1",
        "--out",
        s(&dir.path().join("e")),
    ]);
    assert!(o.status.success(), "{o:?}");
}
