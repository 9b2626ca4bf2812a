//! Line-delimited JSON metric records.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::Task;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    F1,
    #[serde(rename = "NSD")]
    Nsd,
    /// NSD of the generator when given the true completion size.
    #[serde(rename = "NSD-true-k")]
    NsdTrueK,
    #[serde(rename = "NSD-independent-topk")]
    NsdIndependent,
    #[serde(rename = "NSD-recursive-top1")]
    NsdRecursive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Summary {
    Mean,
    Std,
}

/// A fold index, or a summary across folds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FoldKey {
    Fold(usize),
    Summary(Summary),
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::F1 => "F1",
            Metric::Nsd => "NSD",
            Metric::NsdTrueK => "NSD-true-k",
            Metric::NsdIndependent => "NSD-independent-topk",
            Metric::NsdRecursive => "NSD-recursive-top1",
        })
    }
}

impl fmt::Display for FoldKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FoldKey::Fold(i) => write!(f, "fold {i}"),
            FoldKey::Summary(Summary::Mean) => f.write_str("mean"),
            FoldKey::Summary(Summary::Std) => f.write_str("std"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub dataset: String,
    pub task: Task,
    pub fold: FoldKey,
    pub metric: Metric,
    pub value: f64,
    pub config_hash: String,
    pub seed: u64,
    /// Seconds; absent unless timing was requested, so that reruns produce
    /// identical files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

impl MetricRecord {
    pub fn to_line(&self) -> Result<String> {
        if !self.value.is_finite() {
            return Err(Error::NonFinite(format!(
                "{:?} on fold {:?}",
                self.metric, self.fold
            )));
        }
        Ok(serde_json::to_string(self)?)
    }
}

/// Per-metric mean and sample standard deviation over the fold rows.
/// Metrics without fold rows are skipped.
pub fn summarize(records: &[MetricRecord]) -> Vec<MetricRecord> {
    let mut metrics: Vec<Metric> = records.iter().map(|r| r.metric).collect();
    metrics.sort_unstable();
    metrics.dedup();
    let mut out = Vec::new();
    for m in metrics {
        let rows: Vec<&MetricRecord> = records
            .iter()
            .filter(|r| r.metric == m && matches!(r.fold, FoldKey::Fold(_)))
            .collect();
        let Some(first) = rows.first() else { continue };
        let n = rows.len() as f64;
        let mean = rows.iter().map(|r| r.value).sum::<f64>() / n;
        let std = if rows.len() > 1 {
            (rows.iter().map(|r| (r.value - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        for (key, value) in [(Summary::Mean, mean), (Summary::Std, std)] {
            out.push(MetricRecord {
                fold: FoldKey::Summary(key),
                value,
                wall_time: None,
                ..(*first).clone()
            });
        }
    }
    out
}

pub fn to_jsonl(records: &[MetricRecord]) -> Result<String> {
    let mut s = String::new();
    for r in records {
        s.push_str(&r.to_line()?);
        s.push('\n');
    }
    Ok(s)
}

pub fn write_jsonl(path: impl AsRef<Path>, records: &[MetricRecord]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_jsonl(records)?).map_err(|e| Error::io(path, e))
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<MetricRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// Merge shards written by independent runs: rows are ordered by
/// (dataset, task, metric, fold), and exact duplicates are dropped.
pub fn merge(shards: Vec<Vec<MetricRecord>>) -> Vec<MetricRecord> {
    let mut all: Vec<MetricRecord> = shards.into_iter().flatten().collect();
    all.sort_by(|a, b| {
        (&a.dataset, a.task as u8, a.metric, a.fold, &a.config_hash).cmp(&(
            &b.dataset,
            b.task as u8,
            b.metric,
            b.fold,
            &b.config_hash,
        ))
    });
    all.dedup();
    all
}
