use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use scorecf::distance::LossConfig;
use scorecf::edits::OpKind;
use scorecf::explainer::{explain, run_experiment, ExperimentCell, ExplainConfig, Mode, ParsedReport, SequenceReport};
use scorecf::io::{parse_notes, write_musicxml, ExportOptions, Format, GraphDump};
use scorecf::model::{argmax, synth_piece, SynthConfig};
use scorecf::rational::{parse_rational, Rational};
use scorecf::{NoteId, ScoreGraph};

use crate::error::{CliError, Result};
use crate::manifest::RunManifest;
use crate::models;

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn length(text: Option<&str>, default: i64, what: &str) -> Result<Rational> {
    match text {
        None => Ok(Rational::from_integer(default)),
        Some(t) => parse_rational(t).map_err(|e| CliError::Usage(format!("invalid {what}: {e}"))),
    }
}

pub struct GraphOptions {
    pub beat_length: Rational,
    pub measure_length: Rational,
    pub hierarchy: bool,
}

impl GraphOptions {
    pub fn from_manifest(m: &RunManifest) -> Result<Self> {
        Ok(GraphOptions {
            beat_length: length(m.beat_length.as_deref(), 1, "beat length")?,
            measure_length: length(m.measure_length.as_deref(), 4, "measure length")?,
            hierarchy: !m.no_hierarchy,
        })
    }

    fn finish(&self, graph: ScoreGraph) -> Result<ScoreGraph> {
        if self.hierarchy {
            Ok(graph.attach_hierarchy(self.beat_length, self.measure_length)?)
        } else {
            Ok(graph)
        }
    }
}

pub fn load_graph(path: &Path, opts: &GraphOptions) -> Result<ScoreGraph> {
    let text = read(path)?;
    let notes = parse_notes(&text, Format::detect(path, &text))?;
    let piece = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    opts.finish(ScoreGraph::build(notes)?.with_piece(piece))
}

pub fn cmd_build(input: &Path, out: &Path, opts: &GraphOptions) -> Result<()> {
    let graph = load_graph(input, opts)?;
    let mut edges = BTreeMap::new();
    for (kind, count) in graph.edge_counts() {
        edges.insert(kind.name(), count);
    }
    let counts = serde_json::json!({
        "notes": graph.num_notes(),
        "beats": graph.hierarchy().map_or(0, |h| h.beats.len()),
        "measures": graph.hierarchy().map_or(0, |h| h.measures.len()),
        "edges": edges,
    });
    let path = out.join("graph.json");
    write(&path, &GraphDump::new(&graph).to_json())?;
    println!("{}", serde_json::to_string_pretty(&counts).expect("counts serialize"));
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn op_kinds(names: &[String]) -> Result<Vec<OpKind>> {
    names
        .iter()
        .map(|n| {
            OpKind::parse(n)
                .ok_or_else(|| CliError::Usage(format!("unknown op `{n}`; expected pitch, onset, dur, rem or add")))
        })
        .collect()
}

fn mode(m: &RunManifest) -> Result<Mode> {
    Ok(m.mode.as_deref().unwrap_or("greedy").parse::<Mode>()?)
}

/// Explain settings from the manifest, leaving target fields unset.
fn base_config(m: &RunManifest) -> Result<ExplainConfig> {
    let mut c = ExplainConfig::new("", 0);
    c.n = m.n.unwrap_or(c.n);
    c.mode = mode(m)?;
    let defaults = LossConfig::default();
    c.loss = LossConfig {
        lambda: m.lambda.unwrap_or(defaults.lambda),
        lambda_nd: m.lambda_nd.unwrap_or(defaults.lambda_nd),
        lambda_gp: m.lambda_gp.unwrap_or(defaults.lambda_gp),
    };
    c.policy_learning_rate = m.policy_lr.unwrap_or(c.policy_learning_rate);
    if !m.ops.is_empty() {
        c.allowed_ops = Some(op_kinds(&m.ops)?.into_iter().collect::<BTreeSet<_>>());
    }
    if !m.op_path.is_empty() {
        c.op_path = Some(op_kinds(&m.op_path)?);
        if m.n.is_none() {
            c.n = m.op_path.len();
        }
    }
    c.seed = m.seed.unwrap_or(c.seed);
    c.time_budget = m.time_budget;
    c.pitch_window = m.pitch_window.unwrap_or(c.pitch_window);
    c.max_candidates = m.max_candidates.unwrap_or(c.max_candidates);
    Ok(c)
}

/// Writes a MusicXML score and a graph dump for every step after the input.
pub fn export_steps(report: &ParsedReport, out: &Path, musicxml: bool, graph: bool) -> Result<Vec<PathBuf>> {
    let measure_length = report.original.hierarchy.map(|h| h.measure_length);
    let mut written = Vec::new();
    for (step, g, ops) in report.replay()? {
        let stem = format!("step-{step:03}");
        if musicxml {
            let opts = ExportOptions {
                measure_length,
                title: Some(format!("{} (step {step})", report.original.piece)),
                highlight: ops.iter().map(|op| op.node().clone()).collect(),
                ..ExportOptions::default()
            };
            let path = out.join(format!("{stem}.musicxml"));
            write(&path, &write_musicxml(g.notes(), &opts)?)?;
            written.push(path);
        }
        if graph {
            let path = out.join(format!("{stem}.graph.json"));
            write(&path, &GraphDump::new(&g).with_ops(&ops).to_json())?;
            written.push(path);
        }
    }
    Ok(written)
}

fn unknown_target(graph: &ScoreGraph, id: &str) -> CliError {
    let ids: Vec<&str> = graph.active_notes().map(|n| n.id.as_str()).collect();
    CliError::Usage(format!("unknown target note `{id}`; valid ids: {}", ids.join(", ")))
}

pub fn cmd_explain(m: &RunManifest) -> Result<()> {
    let input = match m.input.as_slice() {
        [one] => one,
        [] => return Err(CliError::Usage("explain needs --input".into())),
        _ => return Err(CliError::Usage("explain takes a single --input".into())),
    };
    let graph = load_graph(input, &GraphOptions::from_manifest(m)?)?;
    let model = models::resolve(m.model.as_deref().unwrap_or(models::DEFAULT_MODEL))?;
    let names = model.label_names();
    let mut config = base_config(m)?;
    config.t = match m.t.as_slice() {
        [] => config.t,
        [t] => *t,
        _ => return Err(CliError::Usage("explain takes a single --t".into())),
    };
    let target = m
        .target_node
        .as_deref()
        .ok_or_else(|| CliError::Usage("explain needs --target-node".into()))?;
    if graph.note(&NoteId::from(target)).is_none_or(|n| n.removed) {
        return Err(unknown_target(&graph, target));
    }
    config.target_node = NoteId::from(target);
    let label = m
        .target_label
        .as_deref()
        .ok_or_else(|| CliError::Usage("explain needs --target-label".into()))?;
    config.target_label = models::parse_label(label, &names)?;

    let seq = explain(model.as_ref(), &graph, &config)?;
    let report = SequenceReport::new(&seq, &config, names.clone());
    let json = report.to_json();
    let out = m.out_dir();
    write(&out.join("report.json"), &json)?;
    let parsed = ParsedReport::parse(&json)?;
    export_steps(&parsed, &out, true, true)?;

    for r in seq.all() {
        let label = argmax(&r.prediction);
        let op = r.last_op().map_or("input".to_string(), |op| op.to_string());
        println!(
            "step {:>2}  {:<40} {} (p={:.3})  valid={}  loss={:.4}",
            r.step_index, op, names[label], r.prediction[label], r.valid, r.loss.total
        );
    }
    match seq.summary.first_valid_step {
        Some(s) => println!("first valid step: {s}"),
        None => println!("first valid step: none"),
    }
    if let Some(t) = seq.summary.truncated {
        println!(
            "truncated: {}",
            serde_json::to_string(&t).expect("truncation serializes")
        );
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn balances(m: &RunManifest) -> Result<Vec<(String, LossConfig)>> {
    let lambda = m.lambda.unwrap_or(2.0);
    let named = |name: &str| -> Result<(String, LossConfig)> {
        let mut l = match name {
            "distance" => LossConfig::distance_balance(),
            "counterfactual" => LossConfig::counterfactual_balance(),
            other => {
                return Err(CliError::Usage(format!(
                    "unknown balance `{other}`; expected distance or counterfactual"
                )))
            }
        };
        l.lambda = lambda;
        Ok((name.to_string(), l))
    };
    if !m.balance.is_empty() {
        return m.balance.iter().map(|b| named(b)).collect();
    }
    if m.lambda_nd.is_some() || m.lambda_gp.is_some() {
        let d = LossConfig::default();
        return Ok(vec![(
            "custom".into(),
            LossConfig {
                lambda,
                lambda_nd: m.lambda_nd.unwrap_or(d.lambda_nd),
                lambda_gp: m.lambda_gp.unwrap_or(d.lambda_gp),
            },
        )]);
    }
    Ok(vec![named("distance")?, named("counterfactual")?])
}

fn directions(m: &RunManifest, names: &[String]) -> Result<Vec<(String, Option<usize>, usize)>> {
    let list: Vec<String> = if m.directions.is_empty() {
        if names.len() == 2 {
            vec![
                format!("{}->{}", names[0], names[1]),
                format!("{}->{}", names[1], names[0]),
            ]
        } else {
            return Err(CliError::Usage(
                "--directions is required for more than two classes".into(),
            ));
        }
    } else {
        m.directions.clone()
    };
    list.iter()
        .map(|d| {
            let (from, to) = d
                .split_once("->")
                .ok_or_else(|| CliError::Usage(format!("direction `{d}` is not of the form FROM->TO")))?;
            let from = match from.trim() {
                "*" => None,
                f => Some(models::parse_label(f, names)?),
            };
            let to = models::parse_label(to, names)?;
            let name = format!("{}->{}", from.map_or("*", |f| names[f].as_str()), names[to]);
            Ok((name, from, to))
        })
        .collect()
}

pub fn cmd_experiment(m: &RunManifest) -> Result<()> {
    let opts = GraphOptions::from_manifest(m)?;
    let seed = m.seed.unwrap_or(0);
    let pieces: Vec<ScoreGraph> = if m.input.is_empty() {
        let count = m.synthetic.unwrap_or(5);
        (0..count)
            .map(|i| -> Result<ScoreGraph> {
                let g = synth_piece(
                    &SynthConfig {
                        hierarchy: false,
                        ..SynthConfig::default()
                    },
                    seed.wrapping_add(i as u64),
                )?;
                opts.finish(g)
            })
            .collect::<Result<_>>()?
    } else {
        m.input.iter().map(|p| load_graph(p, &opts)).collect::<Result<_>>()?
    };
    let model = models::resolve(m.model.as_deref().unwrap_or(models::DEFAULT_MODEL))?;
    let names = model.label_names();
    let base = base_config(m)?;
    let ts = if m.t.is_empty() { vec![50, 100] } else { m.t.clone() };
    let mut grid = Vec::new();
    for (dname, from, to) in directions(m, &names)? {
        for (bname, loss) in balances(m)? {
            for &t in &ts {
                let mut config = base.clone();
                config.loss = loss;
                config.t = t;
                config.target_label = to;
                grid.push(ExperimentCell {
                    name: format!("{dname}/{bname}/t{t}"),
                    from_label: from,
                    target_label: to,
                    config,
                });
            }
        }
    }
    let table = run_experiment(model.as_ref(), &pieces, &grid, m.repeats.unwrap_or(5), seed)?;
    let out = m.out_dir();
    let csv = table.to_csv()?;
    write(&out.join("table.csv"), &csv)?;
    write(&out.join("table.json"), &table.to_json())?;
    print!("{csv}");
    eprintln!("wrote {}", out.display());
    Ok(())
}

pub fn cmd_export(report: &Path, musicxml: bool, graph: bool, out: &Path) -> Result<()> {
    let parsed = ParsedReport::parse(&read(report)?)?;
    let written = export_steps(&parsed, out, musicxml, graph)?;
    for p in &written {
        println!("{}", p.display());
    }
    Ok(())
}

pub struct TrainOptions {
    pub pieces: usize,
    pub notes: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

pub fn cmd_train(opts: &TrainOptions, out: &Path) -> Result<()> {
    if opts.pieces == 0 || opts.notes == 0 {
        return Err(CliError::Usage("--pieces and --notes must be positive".into()));
    }
    let gnn = models::train_reference(opts.pieces, opts.notes, opts.epochs, opts.learning_rate, opts.seed)?;
    let text = serde_json::to_string_pretty(&gnn.to_checkpoint()).expect("checkpoint serializes");
    write(out, &text)?;
    println!(
        "trained on {} pieces of {} notes for {} epochs",
        opts.pieces, opts.notes, opts.epochs
    );
    eprintln!("wrote {}", out.display());
    Ok(())
}
