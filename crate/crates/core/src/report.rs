//! Score tables: one row per labelled [`ScoreReport`], BLEU/METEOR/ROUGE-L as percentages
//! and CIDEr-D on the ×10 scale (so a perfect score prints as 100.0).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::ScoreReport;

pub const COLUMNS: [&str; 9] = ["Framework", "Dataset", "B1", "B2", "B3", "B4", "C", "M", "R"];

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("malformed report: {0}")]
    MalformedReport(String),
    #[error("no reports given")]
    Empty,
    #[error("{reports} reports but {labels} labels")]
    LabelCount { reports: usize, labels: usize },
}

/// A labelled table row. The label `"Framework/Dataset"` splits at the first `/`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub framework: String,
    pub dataset: String,
    #[serde(flatten)]
    pub scores: ScoreReport,
}

impl ReportRow {
    pub fn new(label: &str, scores: ScoreReport) -> Self {
        let (framework, dataset) = label.split_once('/').unwrap_or((label, "-"));
        Self { framework: framework.to_owned(), dataset: dataset.to_owned(), scores }
    }

    /// B1 B2 B3 B4 C M R, one decimal each.
    pub fn values(&self) -> [String; 7] {
        let s = &self.scores;
        [s.b1 * 100.0, s.b2 * 100.0, s.b3 * 100.0, s.b4 * 100.0, s.cider_d * 10.0, s.meteor * 100.0, s.rouge_l * 100.0]
            .map(|v| format!("{v:.1}"))
    }
}

/// Parses one flat ScoreReport JSON object; every metric field is required.
pub fn parse_report(json: &str) -> Result<ScoreReport, ReportError> {
    let report: ScoreReport = serde_json::from_str(json).map_err(|e| ReportError::MalformedReport(e.to_string()))?;
    let fractions = [("b1", report.b1), ("b2", report.b2), ("b3", report.b3), ("b4", report.b4), ("rouge_l", report.rouge_l), ("meteor", report.meteor)];
    for (name, v) in fractions {
        if !(0.0..=1.0).contains(&v) {
            return Err(ReportError::MalformedReport(format!("{name} = {v} outside [0, 1]")));
        }
    }
    if !(0.0..=10.0).contains(&report.cider_d) {
        return Err(ReportError::MalformedReport(format!("cider_d = {} outside [0, 10]", report.cider_d)));
    }
    Ok(report)
}

pub fn build_rows(reports: Vec<ScoreReport>, labels: &[String]) -> Result<Vec<ReportRow>, ReportError> {
    if reports.is_empty() {
        return Err(ReportError::Empty);
    }
    if reports.len() != labels.len() {
        return Err(ReportError::LabelCount { reports: reports.len(), labels: labels.len() });
    }
    Ok(reports.into_iter().zip(labels).map(|(r, l)| ReportRow::new(l, r)).collect())
}

/// Space-aligned text table with a header line; text columns left-aligned, numbers right-aligned.
pub fn render_table(rows: &[ReportRow]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut line = vec![r.framework.clone(), r.dataset.clone()];
            line.extend(r.values());
            line
        })
        .collect();
    let widths: Vec<usize> = (0..COLUMNS.len())
        .map(|c| cells.iter().map(|line| line[c].chars().count()).chain([COLUMNS[c].len()]).max().unwrap_or(0))
        .collect();
    let format_line = |line: &[&str]| -> String {
        let parts: Vec<String> = line
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, &w))| if c < 2 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        parts.join("  ").trim_end().to_owned()
    };
    let mut out = format_line(&COLUMNS);
    out.push('\n');
    for line in &cells {
        let refs: Vec<&str> = line.iter().map(String::as_str).collect();
        out.push_str(&format_line(&refs));
        out.push('\n');
    }
    out
}

pub fn rows_json(rows: &[ReportRow]) -> String {
    serde_json::to_string_pretty(rows).expect("rows serialize")
}
