//! Transferability statistics: mean log odds gain and Pearson correlations
//! between collapse metrics and downstream performance, evaluated over the
//! bundled experiment tables.
//!
//! The bundled fixture holds eleven ResNet-50 pretraining runs (six softmax
//! temperatures and five cosine-similarity regularization strengths) with
//! their collapse-metric values, pretraining accuracy, per-dataset linear
//! probing accuracies on ten downstream datasets, and the tabulated mean log
//! odds gain. Accuracies are stored exactly as the tables print them
//! (percent, two decimals) and converted to fractions on load.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

const FIXTURE_CSV: &str = include_str!("fixtures/pretraining_transfer.csv");

/// Names of the metric columns carried by [`TransferRecord::metric_values`].
pub const METRIC_NAMES: [&str; 4] = ["fuzziness", "squared_distance", "cos_sim", "vci"];

#[derive(Debug, Error, PartialEq)]
pub enum TransferError {
    #[error("accuracy {value} has no finite log odds (must be strictly inside (0,1))")]
    InfiniteLogOdds { value: f64 },
    #[error("correlation is undefined for a constant sequence")]
    UndefinedCorrelation,
    #[error("sequences have different lengths: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("group {name:?} has {got} records, need at least 3")]
    GroupTooSmall { name: String, got: usize },
}

/// One pretraining run with its downstream evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferRecord {
    /// Hyperparameter label, e.g. `tau=0.1` or `lambda=5`.
    pub setting: String,
    /// Downstream linear-probing accuracies as fractions in (0, 1).
    pub downstream_accs: Vec<f64>,
    /// Pretraining accuracy as a fraction in (0, 1).
    pub pretrain_acc: f64,
    /// Collapse metrics of the pretrained features (see [`METRIC_NAMES`]).
    pub metric_values: BTreeMap<String, f64>,
    /// Mean log odds gain as tabulated.
    pub mlog: f64,
    /// Mean log odds of the downstream accuracies as tabulated.
    pub mean_log_odds: f64,
}

fn log_odds(p: f64) -> Result<f64, TransferError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(TransferError::InfiniteLogOdds { value: p });
    }
    Ok((p / (1.0 - p)).ln())
}

/// Mean log odds gain: the mean natural-log odds of the downstream
/// accuracies minus the log odds of the pretraining accuracy.
pub fn mean_log_odds_gain(downstream_accs: &[f64], pretrain_acc: f64) -> Result<f64, TransferError> {
    if downstream_accs.is_empty() {
        return Err(TransferError::TooFewValues { needed: 1, got: 0 });
    }
    let mut total = 0.0;
    for &acc in downstream_accs {
        total += log_odds(acc)?;
    }
    Ok(total / downstream_accs.len() as f64 - log_odds(pretrain_acc)?)
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, TransferError> {
    if x.len() != y.len() {
        return Err(TransferError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(TransferError::TooFewValues {
            needed: 2,
            got: x.len(),
        });
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(TransferError::UndefinedCorrelation);
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// The eleven bundled pretraining runs, in table order: the six temperature
/// settings followed by the five regularization settings.
pub fn fixture_records() -> Vec<TransferRecord> {
    let mut lines = FIXTURE_CSV.lines();
    let header = lines.next().expect("fixture has a header");
    let columns: Vec<&str> = header.split(',').collect();
    let downstream_start = columns
        .iter()
        .position(|&c| c == "pets")
        .expect("fixture has downstream columns");

    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), columns.len(), "fixture row width");
            let value = |name: &str| -> f64 {
                let idx = columns.iter().position(|&c| c == name).unwrap();
                fields[idx].parse().expect("fixture value parses")
            };
            let mut metric_values = BTreeMap::new();
            for name in METRIC_NAMES {
                metric_values.insert(name.to_string(), value(name));
            }
            TransferRecord {
                setting: fields[0].to_string(),
                downstream_accs: fields[downstream_start..]
                    .iter()
                    .map(|s| s.parse::<f64>().expect("fixture accuracy parses") / 100.0)
                    .collect(),
                pretrain_acc: value("pretrain_acc") / 100.0,
                metric_values,
                mlog: value("mlog"),
                mean_log_odds: value("mlo"),
            }
        })
        .collect()
}

/// The fixture's natural grouping: records 0–5 vary the softmax temperature,
/// records 6–10 the regularization strength.
pub fn fixture_groups() -> Vec<(String, Vec<usize>)> {
    vec![
        ("tau".to_string(), (0..6).collect()),
        ("lambda".to_string(), (6..11).collect()),
    ]
}

/// Pearson correlation of every metric against MLOG, per group and overall.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CorrelationReport {
    /// group name → metric name → r. Always includes an `overall` group.
    pub groups: BTreeMap<String, BTreeMap<String, f64>>,
}

pub fn correlation_report(
    records: &[TransferRecord],
    groups: &[(String, Vec<usize>)],
) -> Result<CorrelationReport, TransferError> {
    let mut out = BTreeMap::new();
    let all: Vec<usize> = (0..records.len()).collect();
    let mut with_overall: Vec<(String, Vec<usize>)> = groups.to_vec();
    with_overall.push(("overall".to_string(), all));

    for (name, indices) in &with_overall {
        if indices.len() < 3 {
            return Err(TransferError::GroupTooSmall {
                name: name.clone(),
                got: indices.len(),
            });
        }
        let mlogs: Vec<f64> = indices.iter().map(|&i| records[i].mlog).collect();
        let mut per_metric = BTreeMap::new();
        for metric in METRIC_NAMES {
            let values: Vec<f64> = indices
                .iter()
                .map(|&i| records[i].metric_values[metric])
                .collect();
            per_metric.insert(metric.to_string(), pearson(&values, &mlogs)?);
        }
        out.insert(name.clone(), per_metric);
    }
    Ok(CorrelationReport { groups: out })
}
