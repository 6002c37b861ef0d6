//! Per-theorem rows, the four aggregate measures, and report files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::BenchError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub baseline_score: f64,
    pub final_score: f64,
    /// Zero unless `correct`.
    pub improvement: f64,
    pub correct: bool,
    /// Correct with a nonzero improvement.
    pub improved: bool,
    pub fell_back: bool,
    pub generator_calls: usize,
    /// Set when the run for this theorem failed outright.
    pub error: Option<String>,
}

impl ReportRow {
    pub fn new(name: &str, baseline_score: f64, final_score: f64, improvement: f64, correct: bool) -> Self {
        let improvement = if correct { improvement } else { 0.0 };
        ReportRow {
            name: name.to_string(),
            baseline_score,
            final_score,
            improvement,
            correct,
            improved: correct && improvement != 0.0,
            fell_back: false,
            generator_calls: 0,
            error: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    /// Mean improvement over all theorems, incorrect ones counting 0.
    pub improvement_mean: f64,
    /// Mean improvement over theorems with a nonzero improvement.
    pub nonempty_improvement_mean: f64,
    pub accuracy_pct: f64,
    pub improved_accuracy_pct: f64,
}

pub fn compute_performance_metrics(rows: &[ReportRow]) -> Result<Aggregates, BenchError> {
    if rows.is_empty() {
        return Err(BenchError::EmptyDataset);
    }
    let n = rows.len() as f64;
    let effective = |r: &ReportRow| if r.correct { r.improvement } else { 0.0 };
    let improved: Vec<f64> = rows
        .iter()
        .filter(|r| r.correct && r.improvement != 0.0)
        .map(effective)
        .collect();
    let correct = rows.iter().filter(|r| r.correct).count() as f64;
    Ok(Aggregates {
        improvement_mean: rows.iter().map(effective).sum::<f64>() / n,
        nonempty_improvement_mean: if improved.is_empty() {
            0.0
        } else {
            improved.iter().sum::<f64>() / improved.len() as f64
        },
        accuracy_pct: 100.0 * correct / n,
        improved_accuracy_pct: 100.0 * improved.len() as f64 / n,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_ms: u128,
    pub per_entry_ms: Vec<u128>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub dataset_id: String,
    pub metric: String,
    pub config: RunConfig,
    pub rows: Vec<ReportRow>,
    pub aggregates: Aggregates,
    pub timing: Timing,
}

pub const AGGREGATE_HEADERS: [&str; 4] = ["Improvement", "Nonempty Improvement", "Accuracy", "Improved Acc."];

fn aggregate_cells(a: &Aggregates) -> [String; 4] {
    [
        format!("{:.2}", a.improvement_mean),
        format!("{:.2}", a.nonempty_improvement_mean),
        format!("{:.2}%", a.accuracy_pct),
        format!("{:.2}%", a.improved_accuracy_pct),
    ]
}

/// Plain-text table with left-aligned first column and right-aligned rest.
pub fn format_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let cols = headers.len();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let pad = widths[i] - c.chars().count();
                if i == 0 {
                    format!("{c}{}", " ".repeat(pad))
                } else {
                    format!("{}{c}", " ".repeat(pad))
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = vec![line(headers.to_vec())];
    out.push(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    for r in rows {
        out.push(line(r.iter().take(cols).map(String::as_str).collect()));
    }
    out.join("\n") + "\n"
}

impl BenchmarkReport {
    /// Aggregates table for this report alone.
    pub fn table(&self) -> String {
        let mut headers = vec!["Metric"];
        headers.extend(AGGREGATE_HEADERS);
        let mut row = vec![self.metric.clone()];
        row.extend(aggregate_cells(&self.aggregates));
        format_table(&headers, &[row])
    }

    /// Writes the report files into `dir`. Everything except `timing.json`
    /// is reproducible byte for byte.
    pub fn save(&self, dir: &Path) -> Result<(), BenchError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| BenchError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(io(&p))
        };
        let json = |v: &dyn erased::Json| v.to_pretty();
        write("config.snapshot.json", json(&self.config))?;
        write("rows.json", json(&self.rows))?;
        write("aggregates.json", json(&self.aggregates))?;
        write("timing.json", json(&self.timing))?;
        write("table.txt", self.table())?;

        let csv_path = dir.join("rows.csv");
        let mut w = csv::Writer::from_path(&csv_path).map_err(|e| BenchError::Io {
            path: csv_path.clone(),
            source: e.into(),
        })?;
        w.write_record([
            "name",
            "baseline_score",
            "final_score",
            "improvement",
            "correct",
            "improved",
            "fell_back",
            "generator_calls",
            "error",
        ])
        .and_then(|_| {
            for r in &self.rows {
                w.write_record([
                    r.name.clone(),
                    r.baseline_score.to_string(),
                    r.final_score.to_string(),
                    r.improvement.to_string(),
                    r.correct.to_string(),
                    r.improved.to_string(),
                    r.fell_back.to_string(),
                    r.generator_calls.to_string(),
                    r.error.clone().unwrap_or_default(),
                ])?;
            }
            w.flush().map_err(csv::Error::from)
        })
        .map_err(|e| BenchError::Io {
            path: csv_path.clone(),
            source: e.into(),
        })
    }
}

mod erased {
    pub trait Json {
        fn to_pretty(&self) -> String;
    }

    impl<T: serde::Serialize> Json for T {
        fn to_pretty(&self) -> String {
            serde_json::to_string_pretty(self).expect("report values serialize") + "\n"
        }
    }
}

/// Comparison table for several labelled reports, best improvement first.
/// The winner (first row) is marked with `*`.
pub fn comparison_table(reports: &[(String, &BenchmarkReport)]) -> String {
    let mut order: Vec<usize> = (0..reports.len()).collect();
    order.sort_by(|&a, &b| {
        reports[b]
            .1
            .aggregates
            .improvement_mean
            .total_cmp(&reports[a].1.aggregates.improvement_mean)
    });
    let mut headers = vec!["Configuration"];
    headers.extend(AGGREGATE_HEADERS);
    let rows: Vec<Vec<String>> = order
        .iter()
        .enumerate()
        .map(|(rank, &i)| {
            let mark = if rank == 0 { "* " } else { "  " };
            let mut row = vec![format!("{mark}{}", reports[i].0)];
            row.extend(aggregate_cells(&reports[i].1.aggregates));
            row
        })
        .collect();
    format_table(&headers, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(improvement: f64, correct: bool) -> ReportRow {
        ReportRow::new("t", 1.0, 1.0, improvement, correct)
    }

    #[test]
    fn worked_example() {
        let rows = [row(50.0, true), row(0.0, true), row(0.0, false), row(30.0, true)];
        let a = compute_performance_metrics(&rows).unwrap();
        assert_eq!(a.improvement_mean, 20.0);
        assert_eq!(a.nonempty_improvement_mean, 40.0);
        assert_eq!(a.accuracy_pct, 75.0);
        assert_eq!(a.improved_accuracy_pct, 50.0);
    }

    #[test]
    fn edge_cases() {
        let a = compute_performance_metrics(&[row(10.0, false), row(0.0, false)]).unwrap();
        assert_eq!((a.improvement_mean, a.nonempty_improvement_mean, a.accuracy_pct, a.improved_accuracy_pct), (0.0, 0.0, 0.0, 0.0));
        let a = compute_performance_metrics(&[row(50.0, true)]).unwrap();
        assert_eq!((a.improvement_mean, a.nonempty_improvement_mean, a.accuracy_pct, a.improved_accuracy_pct), (50.0, 50.0, 100.0, 100.0));
        assert!(matches!(compute_performance_metrics(&[]), Err(BenchError::EmptyDataset)));
    }

    #[test]
    fn table_layout() {
        let t = format_table(&["A", "Bee"], &[vec!["long name".into(), "1".into()]]);
        assert_eq!(t, "A          Bee\n---------  ---\nlong name    1\n");
    }
}
