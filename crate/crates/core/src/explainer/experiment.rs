//! Batch runs over pieces, settings and repeats, summarised per setting.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{explain, ExplainConfig, Mode};
use crate::edits::OpKind;
use crate::error::{Error, Result};
use crate::graph::ScoreGraph;
use crate::model::{argmax, NodeClassifier};
use crate::note::NoteId;

/// Row names of the summary table.
pub const METRIC_ROWS: [&str; 5] = ["accuracy", "min. changes", "operation", "distance", "time"];

/// One setting of the grid. `config.target_node`, `config.target_label`
/// and `config.seed` are replaced per run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCell {
    pub name: String,
    /// Only notes the model currently assigns this label are explained;
    /// `None` allows every note.
    pub from_label: Option<usize>,
    pub target_label: usize,
    pub config: ExplainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub piece: usize,
    pub repeat: usize,
    pub target_node: NoteId,
    pub seed: u64,
    pub valid: bool,
    pub min_changes: Option<usize>,
    pub flipping_op: Option<OpKind>,
    /// Weighted distance part of the loss at the first valid result.
    pub distance: Option<f64>,
    pub nd_term: Option<f64>,
    pub gp_term: Option<f64>,
    pub time: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation (0 for fewer than two values).
    pub std: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Stat {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Stat::default();
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let std = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stat {
            mean,
            std,
            count: v.len(),
        }
    }

    fn render(&self, precision: usize) -> String {
        if self.count == 0 {
            "-".into()
        } else {
            format!("{:.p$} ± {:.p$}", self.mean, self.std, p = precision)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSummary {
    pub name: String,
    pub from_label: Option<usize>,
    pub target_label: usize,
    pub mode: Mode,
    pub lambda: f64,
    pub lambda_nd: f64,
    pub lambda_gp: f64,
    pub t: usize,
    pub n: usize,
    pub runs: usize,
    /// (piece, repeat) pairs without a note carrying `from_label`.
    pub skipped: usize,
    /// Fraction of runs with at least one valid result.
    pub accuracy: Option<f64>,
    /// First valid step over successful runs.
    pub min_changes: Stat,
    /// Op type that most often produced the first valid result.
    pub operation: Option<OpKind>,
    /// Weighted distance term of the first valid result.
    pub distance: Stat,
    pub nd_term: Stat,
    pub gp_term: Stat,
    /// Seconds per sequence of `n` explanations.
    pub time: Stat,
    pub records: Vec<RunRecord>,
}

impl CellSummary {
    fn from_records(cell: &ExperimentCell, records: Vec<RunRecord>, skipped: usize) -> Self {
        let ok: Vec<&RunRecord> = records.iter().filter(|r| r.valid).collect();
        let mut op_counts: BTreeMap<OpKind, usize> = BTreeMap::new();
        for r in &ok {
            if let Some(k) = r.flipping_op {
                *op_counts.entry(k).or_default() += 1;
            }
        }
        let top = op_counts.values().copied().max();
        let operation = op_counts.iter().find(|(_, c)| Some(**c) == top).map(|(k, _)| *k);
        CellSummary {
            name: cell.name.clone(),
            from_label: cell.from_label,
            target_label: cell.target_label,
            mode: cell.config.mode,
            lambda: cell.config.loss.lambda,
            lambda_nd: cell.config.loss.lambda_nd,
            lambda_gp: cell.config.loss.lambda_gp,
            t: cell.config.t,
            n: cell.config.n,
            runs: records.len(),
            skipped,
            accuracy: (!records.is_empty()).then(|| ok.len() as f64 / records.len() as f64),
            min_changes: Stat::of(ok.iter().filter_map(|r| r.min_changes.map(|m| m as f64))),
            operation,
            distance: Stat::of(ok.iter().filter_map(|r| r.distance)),
            nd_term: Stat::of(ok.iter().filter_map(|r| r.nd_term)),
            gp_term: Stat::of(ok.iter().filter_map(|r| r.gp_term)),
            time: Stat::of(records.iter().map(|r| r.time)),
            records,
        }
    }

    /// The five table entries, in [`METRIC_ROWS`] order.
    pub fn metric_values(&self) -> [String; 5] {
        [
            self.accuracy.map_or("-".into(), |a| format!("{:.1}%", 100.0 * a)),
            self.min_changes.render(1),
            self.operation.map_or("-".into(), |k| k.short_name().to_string()),
            self.distance.render(2),
            self.time.render(2),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentTable {
    pub repeats: usize,
    pub pieces: usize,
    pub cells: Vec<CellSummary>,
}

impl ExperimentTable {
    /// One row per metric, one column per cell.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        let mut header = vec!["metric".to_string()];
        header.extend(self.cells.iter().map(|c| c.name.clone()));
        w.write_record(&header).map_err(csv_err)?;
        let values: Vec<[String; 5]> = self.cells.iter().map(CellSummary::metric_values).collect();
        for (i, metric) in METRIC_ROWS.iter().enumerate() {
            let mut row = vec![metric.to_string()];
            row.extend(values.iter().map(|v| v[i].clone()));
            w.write_record(&row).map_err(csv_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn cell(&self, name: &str) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.name == name)
    }
}

fn run_seed(seed: u64, piece: usize, repeat: usize) -> u64 {
    seed ^ ((piece as u64) << 32 | repeat as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Runs every cell on every piece `repeats` times. Targets are drawn per
/// (piece, repeat) from the notes the model assigns `from_label`, with the
/// same draw in every cell so settings are compared on identical targets.
pub fn run_experiment(
    model: &dyn NodeClassifier,
    pieces: &[ScoreGraph],
    grid: &[ExperimentCell],
    repeats: usize,
    seed: u64,
) -> Result<ExperimentTable> {
    if pieces.is_empty() || grid.is_empty() || repeats == 0 {
        return Err(Error::validation(
            "an experiment needs pieces, cells and at least one repeat",
        ));
    }
    let predictions: Vec<_> = pieces.iter().map(|p| model.classify(p)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize, usize)> = (0..grid.len())
        .flat_map(|c| (0..pieces.len()).flat_map(move |p| (0..repeats).map(move |r| (c, p, r))))
        .collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(c, p, r)| -> Result<Option<RunRecord>> {
            let cell = &grid[c];
            let s = run_seed(seed, p, r);
            let eligible: Vec<&NoteId> = predictions[p]
                .iter()
                .filter(|(_, d)| cell.from_label.is_none_or(|l| argmax(d) == l))
                .map(|(id, _)| id)
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let Some(target) = eligible.choose(&mut rng) else {
                return Ok(None);
            };
            let mut config = cell.config.clone();
            config.target_node = (*target).clone();
            config.target_label = cell.target_label;
            config.seed = s;
            let seq = explain(model, &pieces[p], &config)?;
            let first = seq.first_valid();
            Ok(Some(RunRecord {
                piece: p,
                repeat: r,
                target_node: config.target_node.clone(),
                seed: s,
                valid: first.is_some(),
                min_changes: seq.summary.first_valid_step,
                flipping_op: seq.summary.flipping_op,
                distance: first.map(|f| f.loss.weighted_distance(&config.loss)),
                nd_term: first.map(|f| f.loss.nd_term),
                gp_term: first.map(|f| f.loss.gp_term),
                time: seq.summary.total_time,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut per_cell: Vec<(Vec<RunRecord>, usize)> = vec![(Vec::new(), 0); grid.len()];
    for (&(c, _, _), out) in jobs.iter().zip(outcomes) {
        match out {
            Some(rec) => per_cell[c].0.push(rec),
            None => per_cell[c].1 += 1,
        }
    }
    Ok(ExperimentTable {
        repeats,
        pieces: pieces.len(),
        cells: grid
            .iter()
            .zip(per_cell)
            .map(|(cell, (records, skipped))| CellSummary::from_records(cell, records, skipped))
            .collect(),
    })
}
