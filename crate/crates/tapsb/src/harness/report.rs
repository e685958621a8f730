//! Benchmark reports and their CSV form.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// One measured value: a configuration label, a metric, and which
/// repetition produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub label: String,
    pub metric: String,
    pub unit: String,
    pub rep: u32,
    pub value: f64,
    /// Run directory the value came from, when one exists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchRow>,
}

impl BenchmarkReport {
    pub fn push(
        &mut self,
        label: impl Into<String>,
        metric: impl Into<String>,
        unit: impl Into<String>,
        rep: u32,
        value: f64,
        run_dir: Option<PathBuf>,
    ) {
        self.rows.push(BenchRow {
            label: label.into(),
            metric: metric.into(),
            unit: unit.into(),
            rep,
            value,
            run_dir,
        });
    }

    /// Mean over repetitions of one (label, metric) series, if present.
    pub fn mean(&self, label: &str, metric: &str) -> Option<f64> {
        let values: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.label == label && r.metric == metric)
            .map(|r| r.value)
            .collect();
        if values.is_empty() {
            return None;
        }
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }

    /// `(mean, sample standard deviation, count)` per (label, metric).
    pub fn summaries(&self) -> Vec<(String, String, String, f64, f64, usize)> {
        let mut grouped: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
        for row in &self.rows {
            grouped
                .entry((row.label.clone(), row.metric.clone(), row.unit.clone()))
                .or_default()
                .push(row.value);
        }
        grouped
            .into_iter()
            .map(|((label, metric, unit), values)| {
                let n = values.len();
                let mean = values.iter().sum::<f64>() / n as f64;
                let stddev = if n > 1 {
                    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
                } else {
                    0.0
                };
                (label, metric, unit, mean, stddev, n)
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,metric,unit,rep,value\n");
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                csv_field(&row.label),
                csv_field(&row.metric),
                csv_field(&row.unit),
                row.rep,
                row.value
            );
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("label,metric,unit,mean,stddev,count\n");
        for (label, metric, unit, mean, stddev, count) in self.summaries() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(&label),
                csv_field(&metric),
                csv_field(&unit),
                mean,
                stddev,
                count
            );
        }
        out
    }
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_owned()
    }
}

/// Writes `<base>.csv` with the raw rows and `<base>_summary.csv` with
/// mean/stddev per series.
pub fn write_report(report: &BenchmarkReport, base: &Path) -> std::io::Result<(PathBuf, PathBuf)> {
    if let Some(parent) = base.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let data_path = base.with_extension("csv");
    let summary_path = PathBuf::from(format!("{}_summary.csv", base.display()));
    std::fs::write(&data_path, report.to_csv())?;
    std::fs::write(&summary_path, report.summary_csv())?;
    Ok((data_path, summary_path))
}
