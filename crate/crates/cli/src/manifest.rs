//! Run settings shared by `explain` and `experiment`. Every flag has a key
//! of the same name in the TOML config file; flags win over the file.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunManifest {
    /// Note-list JSON or MusicXML files.
    #[arg(long, num_args = 1..)]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub input: Vec<PathBuf>,
    /// `cadence-rule`, `constant:<label>`, `reference-gnn`, or a model file.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_node: Option<String>,
    /// Label name or index.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_label: Option<String>,
    /// Number of explanations.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Inner training steps per explanation (a list for `experiment`).
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub t: Vec<usize>,
    /// `greedy` or `learned`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_nd: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_gp: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy_lr: Option<f64>,
    /// Allowed op types: pitch, onset, dur, rem, add.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub ops: Vec<String>,
    /// One op type per explanation.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub op_path: Vec<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Output directory (default: $SCORECF_OUT, then `scorecf-out`).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Seconds.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_budget: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pitch_window: Option<u8>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_candidates: Option<usize>,
    /// Beat length in quarters, e.g. `1` or `3/2`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beat_length: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measure_length: Option<String>,
    /// Do not attach beat and measure nodes.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub no_hierarchy: bool,
    /// Repeats per piece (`experiment`).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,
    /// Number of generated pieces when no input is given (`experiment`).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<usize>,
    /// Label directions such as `NC->PAC`; `*` as source means any note.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub directions: Vec<String>,
    /// Loss balances: `distance` and/or `counterfactual`.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub balance: Vec<String>,
}

fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

fn pick_vec<T>(flag: Vec<T>, file: Vec<T>) -> Vec<T> {
    if flag.is_empty() {
        file
    } else {
        flag
    }
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|message| CliError::Config {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn from_toml(text: &str) -> Result<RunManifest, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    /// Fills every setting missing from `self` with the one from `file`.
    pub fn merged(self, file: RunManifest) -> RunManifest {
        RunManifest {
            input: pick_vec(self.input, file.input),
            model: pick(self.model, file.model),
            target_node: pick(self.target_node, file.target_node),
            target_label: pick(self.target_label, file.target_label),
            n: pick(self.n, file.n),
            t: pick_vec(self.t, file.t),
            mode: pick(self.mode, file.mode),
            lambda: pick(self.lambda, file.lambda),
            lambda_nd: pick(self.lambda_nd, file.lambda_nd),
            lambda_gp: pick(self.lambda_gp, file.lambda_gp),
            policy_lr: pick(self.policy_lr, file.policy_lr),
            ops: pick_vec(self.ops, file.ops),
            op_path: pick_vec(self.op_path, file.op_path),
            seed: pick(self.seed, file.seed),
            out: pick(self.out, file.out),
            time_budget: pick(self.time_budget, file.time_budget),
            pitch_window: pick(self.pitch_window, file.pitch_window),
            max_candidates: pick(self.max_candidates, file.max_candidates),
            beat_length: pick(self.beat_length, file.beat_length),
            measure_length: pick(self.measure_length, file.measure_length),
            no_hierarchy: self.no_hierarchy || file.no_hierarchy,
            repeats: pick(self.repeats, file.repeats),
            synthetic: pick(self.synthetic, file.synthetic),
            directions: pick_vec(self.directions, file.directions),
            balance: pick_vec(self.balance, file.balance),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os("SCORECF_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("scorecf-out"))
    }
}
