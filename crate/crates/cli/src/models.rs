//! Resolves `--model` values to classifiers.

use std::path::Path;

use scorecf::model::{
    synth_dataset, ConstantClassifier, GnnCheckpoint, GnnConfig, NodeClassifier, ReferenceGnn, Rule, RuleClassifier,
    TrainConfig, CHECKPOINT_FORMAT,
};

use crate::error::{CliError, Result};

pub const DEFAULT_MODEL: &str = "cadence-rule";

/// Training recipe of the built-in `reference-gnn`.
pub fn train_reference(
    pieces: usize,
    notes: usize,
    epochs: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<ReferenceGnn> {
    let data = synth_dataset(pieces, notes, &RuleClassifier::cadence_like(), seed)?;
    let mut gnn = ReferenceGnn::new(GnnConfig {
        seed,
        ..GnnConfig::default()
    })?;
    gnn.train(&data, &TrainConfig { epochs, learning_rate })?;
    Ok(gnn)
}

/// Label index from a name (case-insensitive) or a number.
pub fn parse_label(text: &str, names: &[String]) -> Result<usize> {
    if let Some(i) = names.iter().position(|n| n.eq_ignore_ascii_case(text.trim())) {
        return Ok(i);
    }
    match text.trim().parse::<usize>() {
        Ok(i) if i < names.len() => Ok(i),
        _ => Err(CliError::Usage(format!(
            "unknown label `{text}`; expected one of {} or an index below {}",
            names.join(", "),
            names.len()
        ))),
    }
}

fn load_file(path: &Path) -> Result<Box<dyn NodeClassifier>> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(scorecf::Error::from)?;
    if value.get("format").and_then(|f| f.as_str()) == Some(CHECKPOINT_FORMAT) {
        let ck: GnnCheckpoint = serde_json::from_value(value).map_err(scorecf::Error::from)?;
        return Ok(Box::new(ReferenceGnn::from_checkpoint(&ck)?));
    }
    if let Ok(rc) = serde_json::from_value::<RuleClassifier>(value.clone()) {
        rc.validate()?;
        return Ok(Box::new(rc));
    }
    let rule: Rule = serde_json::from_value(value).map_err(|e| {
        CliError::Usage(format!(
            "{}: not a model checkpoint, rule classifier or rule ({e})",
            path.display()
        ))
    })?;
    Ok(Box::new(RuleClassifier::new(rule)))
}

pub fn resolve(spec: &str) -> Result<Box<dyn NodeClassifier>> {
    match spec {
        "cadence-rule" => return Ok(Box::new(RuleClassifier::cadence_like())),
        "reference-gnn" => return Ok(Box::new(train_reference(100, 16, 30, 0.01, 7)?)),
        _ => {}
    }
    if let Some(label) = spec.strip_prefix("constant:") {
        let names = scorecf::model::default_label_names(2);
        return Ok(Box::new(ConstantClassifier::one_hot(2, parse_label(label, &names)?)?));
    }
    let path = Path::new(spec);
    if path.exists() {
        return load_file(path);
    }
    Err(CliError::Usage(format!(
        "unknown model `{spec}`; use cadence-rule, constant:<label>, reference-gnn or a model file"
    )))
}
