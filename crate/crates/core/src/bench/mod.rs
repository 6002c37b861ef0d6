//! Benchmark runs over a dataset and ablation grids.

mod dataset;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use dataset::{
    extract_theorems, find_declaration, load_dataset, replace_proof, DatasetEntry, Manifest, ManifestFile, MANIFEST_FILE,
    PROOF_START_MARKER,
};
pub use report::{
    comparison_table, compute_performance_metrics, format_table, Aggregates, BenchmarkReport, ReportRow, Timing,
    AGGREGATE_HEADERS,
};

use crate::config::{RunConfig, Runtime};
use crate::error::BenchError;
use crate::sampling::run_sampler;

/// Optimizes one entry and turns the outcome into a row. Failures become
/// rows with `error` set.
pub fn run_entry(entry: &DatasetEntry, runtime: &Runtime) -> ReportRow {
    let e = &entry.entry;
    let mut ctx = runtime.sampler_context(&e.name);
    let request = runtime.config.request(&runtime.metric, e);
    match run_sampler(&runtime.config.sampler, &mut ctx, &request) {
        Ok(out) => {
            let r = &out.result;
            let mut row = ReportRow::new(
                &e.name,
                out.baseline_score,
                r.metric_score.unwrap_or(out.baseline_score),
                r.improvement,
                r.correct,
            );
            row.fell_back = out.fell_back;
            row.generator_calls = out.generator_calls;
            row
        }
        Err(err) => {
            log::error!("{}: {err}", e.name);
            let mut row = ReportRow::new(&e.name, 0.0, 0.0, 0.0, false);
            row.generator_calls = ctx.calls();
            row.error = Some(err.to_string());
            row
        }
    }
}

/// Runs the configured sampler over every entry, `config.concurrency`
/// theorems at a time. Rows keep dataset order. With `out_dir`, the report
/// files are written there.
pub fn run_benchmark(
    dataset: &[DatasetEntry],
    runtime: &Runtime,
    out_dir: Option<&Path>,
) -> Result<BenchmarkReport, BenchError> {
    if dataset.is_empty() {
        return Err(BenchError::EmptyDataset);
    }
    let started = Instant::now();
    let slots: Vec<Mutex<Option<(ReportRow, u128)>>> = dataset.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = runtime.config.concurrency.min(dataset.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= dataset.len() {
                    break;
                }
                let t = Instant::now();
                let row = run_entry(&dataset[i], runtime);
                log::info!("{}: improvement {:.2}, correct {}", row.name, row.improvement, row.correct);
                *slots[i].lock().unwrap() = Some((row, t.elapsed().as_millis()));
            });
        }
    });
    let (rows, per_entry_ms): (Vec<_>, Vec<_>) = slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every entry ran"))
        .unzip();
    let aggregates = compute_performance_metrics(&rows)?;
    let report = BenchmarkReport {
        dataset_id: dataset[0].dataset_id.clone(),
        metric: runtime.metric.name.clone(),
        config: runtime.config.clone(),
        rows,
        aggregates,
        timing: Timing {
            total_ms: started.elapsed().as_millis(),
            per_entry_ms,
        },
    };
    if let Some(dir) = out_dir {
        report.save(dir)?;
    }
    Ok(report)
}

/// Ablation grid file.
///
/// ```toml
/// chain = true
///
/// [[group]]
/// name = "sampling"
/// [group.axes]
/// "sampler.n" = [2, 4]
///
/// [[group]]
/// name = "format"
/// [[group.variant]]
/// name = "flat"
/// set = { output_format = "flat" }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    /// Each group starts from the previous group's winner.
    #[serde(default = "yes")]
    pub chain: bool,
    #[serde(default)]
    pub group: Vec<AblationGroup>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGroup {
    pub name: String,
    /// Dotted config keys to value lists; every combination is run.
    #[serde(default)]
    pub axes: BTreeMap<String, Vec<toml::Value>>,
    #[serde(default)]
    pub variant: Vec<AblationVariant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationVariant {
    pub name: String,
    /// Overrides; keys may be dotted.
    #[serde(default)]
    pub set: toml::Table,
}

impl AblationGrid {
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let g: AblationGrid = toml::from_str(text).map_err(|e| BenchError::Grid(e.to_string()))?;
        if g.group.is_empty() {
            return Err(BenchError::Grid("no groups".into()));
        }
        for group in &g.group {
            if group.variants().is_empty() {
                return Err(BenchError::Grid(format!("group `{}` has no variants", group.name)));
            }
        }
        Ok(g)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = fs::read_to_string(path).map_err(|source| BenchError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }
}

/// Turns `{"a.b": 1}` into `{a = {b = 1}}`.
pub fn expand_dotted(table: &toml::Table) -> toml::Value {
    let mut out = toml::Value::Table(toml::Table::new());
    for (key, value) in table {
        let mut nested = value.clone();
        for part in key.split('.').rev() {
            let mut t = toml::Table::new();
            t.insert(part.to_string(), nested);
            nested = toml::Value::Table(t);
        }
        crate::config::merge_toml(&mut out, &nested);
    }
    out
}

fn render_value(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl AblationGroup {
    /// Explicit variants followed by the cartesian product of the axes.
    pub fn variants(&self) -> Vec<AblationVariant> {
        let mut out = self.variant.clone();
        if self.axes.is_empty() {
            return out;
        }
        let mut combos: Vec<Vec<(&String, &toml::Value)>> = vec![vec![]];
        for (key, values) in &self.axes {
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    values.iter().map(move |v| {
                        let mut c = c.clone();
                        c.push((key, v));
                        c
                    })
                })
                .collect();
        }
        for combo in combos {
            let name = combo
                .iter()
                .map(|(k, v)| format!("{k}={}", render_value(v)))
                .collect::<Vec<_>>()
                .join(",");
            let set = combo.into_iter().map(|(k, v)| (k.clone(), v.clone())).collect();
            out.push(AblationVariant { name, set });
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub name: String,
    pub overrides: toml::Value,
    pub report: BenchmarkReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub name: String,
    pub variants: Vec<VariantReport>,
    /// Index into `variants` of the best mean improvement (earliest on ties).
    pub winner: usize,
}

impl GroupReport {
    pub fn table(&self) -> String {
        let labelled: Vec<(String, &BenchmarkReport)> =
            self.variants.iter().map(|v| (v.name.clone(), &v.report)).collect();
        comparison_table(&labelled)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub groups: Vec<GroupReport>,
}

impl AblationReport {
    pub fn table(&self) -> String {
        self.groups
            .iter()
            .map(|g| format!("[{}]\n{}", g.name, g.table()))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn dir_name(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '=' | '.') { c } else { '_' })
        .collect()
}

/// Runs every variant of every group over `dataset`. Variant configs are the
/// runtime's config (or the previous winner's, when chaining) with the
/// variant overrides merged on top.
pub fn run_ablation(
    grid: &AblationGrid,
    dataset: &[DatasetEntry],
    runtime: &Runtime,
    out_dir: Option<&Path>,
) -> Result<AblationReport, BenchError> {
    let mut base: RunConfig = runtime.config.clone();
    let mut groups = Vec::new();
    for group in &grid.group {
        let mut variants = Vec::new();
        for v in group.variants() {
            let overrides = expand_dotted(&v.set);
            let cfg = base.with_overrides(&overrides)?;
            let rt = runtime.reconfigured(cfg)?;
            let dir = out_dir.map(|d| d.join(dir_name(&group.name)).join(dir_name(&v.name)));
            log::info!("ablation {}/{}", group.name, v.name);
            let report = run_benchmark(dataset, &rt, dir.as_deref())?;
            variants.push(VariantReport {
                name: v.name,
                overrides,
                report,
            });
        }
        let mut winner = 0;
        for (i, v) in variants.iter().enumerate() {
            if v.report.aggregates.improvement_mean > variants[winner].report.aggregates.improvement_mean {
                winner = i;
            }
        }
        if grid.chain {
            base = variants[winner].report.config.clone();
        }
        groups.push(GroupReport {
            name: group.name.clone(),
            variants,
            winner,
        });
    }
    let report = AblationReport { groups };
    if let Some(dir) = out_dir {
        let io = |path: std::path::PathBuf| move |source| BenchError::Io { path, source };
        fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
        let p = dir.join("ablation.txt");
        fs::write(&p, report.table()).map_err(io(p.clone()))?;
        let p = dir.join("ablation.json");
        let json = serde_json::to_string_pretty(&report).expect("ablation report serializes") + "\n";
        fs::write(&p, json).map_err(io(p.clone()))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axes_expand_to_product() {
        let g = AblationGrid::from_toml(
            "[[group]]\nname = \"g\"\n[group.axes]\n\"sampler.n\" = [1, 2]\ncos = [true, false]\n",
        )
        .unwrap();
        let v = g.group[0].variants();
        let names: Vec<_> = v.iter().map(|v| v.name.as_str()).collect();
        assert_eq!(names, ["cos=true,sampler.n=1", "cos=true,sampler.n=2", "cos=false,sampler.n=1", "cos=false,sampler.n=2"]);
        let o = expand_dotted(&v[1].set);
        assert_eq!(o["sampler"]["n"].as_integer(), Some(2));
        assert_eq!(o["cos"].as_bool(), Some(true));
    }

    #[test]
    fn empty_grids_rejected() {
        assert!(AblationGrid::from_toml("").is_err());
        assert!(AblationGrid::from_toml("[[group]]\nname = \"x\"\n").is_err());
    }

    #[test]
    fn dotted_keys_merge() {
        let mut t = toml::Table::new();
        t.insert("sampler.kind".into(), toml::Value::String("best_of_n".into()));
        t.insert("sampler.n".into(), toml::Value::Integer(3));
        let o = expand_dotted(&t);
        assert_eq!(o["sampler"]["kind"].as_str(), Some("best_of_n"));
        assert_eq!(o["sampler"]["n"].as_integer(), Some(3));
    }
}
