//! Report tables: per-run JSON/CSV and mean ± std aggregates across seeds.

use std::fs;
use std::path::Path;

use fairfed_core::metrics::{FairnessReport, ReportRow};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Named metric cells of a report row, in table column order.
pub fn metric_cells(groups: &[String], row: &ReportRow) -> Vec<(String, Option<f64>)> {
    let mut cells = vec![
        ("overall_auc".to_string(), row.overall_auc),
        ("es_auc".to_string(), row.es_auc),
    ];
    for (g, auc) in groups.iter().zip(&row.group_auc) {
        cells.push((format!("auc_{g}"), *auc));
    }
    cells.push(("eod".to_string(), row.eod));
    cells.push(("spd".to_string(), row.spd));
    cells
}

pub fn metric_columns(groups: &[String]) -> Vec<String> {
    let mut cols = vec!["overall_auc".to_string(), "es_auc".to_string()];
    cols.extend(groups.iter().map(|g| format!("auc_{g}")));
    cols.push("eod".into());
    cols.push("spd".into());
    cols
}

/// A metric as a percentage with one decimal, or `NA`.
pub fn percent(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{:.1}", v * 100.0),
        None => "NA".to_string(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::runtime(format!("cannot write {}: {e}", path.display()))
}

fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::write(path, e))
}

pub fn report_csv_rows(report: &FairnessReport) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["client".to_string()];
    header.extend(metric_columns(&report.groups));
    let rows = report
        .rows
        .iter()
        .map(|row| {
            let mut r = vec![row.label.clone()];
            r.extend(
                metric_cells(&report.groups, row)
                    .into_iter()
                    .map(|(_, v)| percent(v)),
            );
            r
        })
        .collect();
    (header, rows)
}

pub fn write_report_csv(report: &FairnessReport, path: &Path) -> Result<()> {
    let (header, rows) = report_csv_rows(report);
    write_table(path, &header, &rows)
}

pub fn read_report_json(path: &Path) -> Result<FairnessReport> {
    let text = fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("{}: not a report: {e}", path.display())))
}

/// Mean and population standard deviation over the defined values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// How many values were defined.
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[Option<f64>]) -> Self {
        let defined: Vec<f64> = values.iter().flatten().copied().collect();
        if defined.is_empty() {
            return Self {
                mean: None,
                std: None,
                n: 0,
            };
        }
        let n = defined.len() as f64;
        let mean = defined.iter().sum::<f64>() / n;
        let var = defined.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean: Some(mean),
            std: Some(var.sqrt()),
            n: defined.len(),
        }
    }

    /// `78.3±1.2` in percent, or `NA`.
    pub fn display_percent(&self) -> String {
        match (self.mean, self.std) {
            (Some(m), Some(s)) => format!("{:.1}±{:.1}", m * 100.0, s * 100.0),
            _ => "NA".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCell {
    pub metric: String,
    #[serde(flatten)]
    pub stats: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub label: String,
    pub cells: Vec<AggregateCell>,
}

impl AggregateRow {
    pub fn cell(&self, metric: &str) -> Option<&MeanStd> {
        self.cells
            .iter()
            .find(|c| c.metric == metric)
            .map(|c| &c.stats)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub attribute: String,
    pub groups: Vec<String>,
    pub threshold: f64,
    pub seeds: Vec<u64>,
    pub rows: Vec<AggregateRow>,
}

/// Combines per-seed reports row by row. All reports must share the same
/// row labels in the same order.
pub fn aggregate_reports(seeds: &[u64], reports: &[FairnessReport]) -> Result<AggregateReport> {
    let first = reports
        .first()
        .ok_or_else(|| CliError::runtime("no reports to aggregate"))?;
    let labels: Vec<&str> = first.rows.iter().map(|r| r.label.as_str()).collect();
    for r in reports {
        let other: Vec<&str> = r.rows.iter().map(|r| r.label.as_str()).collect();
        if other != labels || r.groups != first.groups {
            return Err(CliError::runtime("reports have different layouts"));
        }
    }
    let columns = metric_columns(&first.groups);
    let rows = labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let per_seed: Vec<Vec<(String, Option<f64>)>> = reports
                .iter()
                .map(|r| metric_cells(&first.groups, &r.rows[i]))
                .collect();
            let cells = columns
                .iter()
                .enumerate()
                .map(|(c, metric)| AggregateCell {
                    metric: metric.clone(),
                    stats: MeanStd::of(
                        &per_seed.iter().map(|cells| cells[c].1).collect::<Vec<_>>(),
                    ),
                })
                .collect();
            AggregateRow {
                label: label.to_string(),
                cells,
            }
        })
        .collect();
    Ok(AggregateReport {
        attribute: first.attribute.clone(),
        groups: first.groups.clone(),
        threshold: first.threshold,
        seeds: seeds.to_vec(),
        rows,
    })
}

pub fn write_aggregate_csv(agg: &AggregateReport, path: &Path) -> Result<()> {
    let mut header = vec!["client".to_string()];
    header.extend(metric_columns(&agg.groups));
    let rows: Vec<Vec<String>> = agg
        .rows
        .iter()
        .map(|row| {
            let mut r = vec![row.label.clone()];
            r.extend(row.cells.iter().map(|c| c.stats.display_percent()));
            r
        })
        .collect();
    write_table(path, &header, &rows)
}

/// Writes an arbitrary table; used by `compare`.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    write_table(path, header, rows)
}
