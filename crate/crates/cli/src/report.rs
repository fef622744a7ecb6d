//! Report emission: aggregates one or more completed runs into metric
//! tables (JSON/CSV) and plot-ready series (confidence-level sweep,
//! alignment versus dimension).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use relana_core::evaluation::Summary;

use crate::config::{PipelineConfig, TrainingConfig};
use crate::error::{CliError, Result};
use crate::manifest::RunManifest;
use crate::pipeline::{read_json, AlignReport, DropReport, TaskOutcome, ALIGN_FILE, CONFIG_FILE, DROPS_FILE, EVAL_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Plot,
}

/// Everything a report needs from one run directory.
#[derive(Debug)]
pub struct RunData {
    pub name: String,
    pub config: PipelineConfig,
    pub manifest: RunManifest,
    pub eval: Option<Vec<TaskOutcome>>,
    pub align: Option<AlignReport>,
    pub drops: Option<DropReport>,
}

pub fn load_run(dir: &Path) -> Result<RunData> {
    let manifest = RunManifest::load(dir)?;
    let config_text = fs::read_to_string(dir.join(CONFIG_FILE))
        .map_err(|e| CliError::validation(format!("{}: {e}", dir.join(CONFIG_FILE).display())))?;
    let config = PipelineConfig::from_json(&config_text)?;
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    let optional = |file: &str| dir.join(file).is_file();
    Ok(RunData {
        name,
        eval: if optional(EVAL_FILE) {
            Some(read_json(dir, EVAL_FILE, "report")?)
        } else {
            None
        },
        align: if optional(ALIGN_FILE) {
            Some(read_json(dir, ALIGN_FILE, "report")?)
        } else {
            None
        },
        drops: if optional(DROPS_FILE) {
            Some(read_json(dir, DROPS_FILE, "report")?)
        } else {
            None
        },
        config,
        manifest,
    })
}

/// `0.954(.005)` when repetitions carry a spread, plain `0.954` otherwise.
pub fn format_measure(mean: f64, std: Option<f64>) -> String {
    match std {
        None => format!("{mean:.3}"),
        Some(s) => {
            let sigma = format!("{s:.3}");
            let sigma = sigma.strip_prefix('0').unwrap_or(&sigma);
            format!("{mean:.3}({sigma})")
        }
    }
}

/// One metric cell of the report table.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricRow {
    pub run: String,
    pub task: String,
    pub metric: String,
    pub mean: f64,
    pub std: Option<f64>,
    pub reps: usize,
    pub formatted: String,
}

fn push_summary(rows: &mut Vec<MetricRow>, run: &str, task: &str, metric: String, s: &Summary, reps: usize) {
    let std = (reps >= 2).then_some(s.std);
    rows.push(MetricRow {
        run: run.to_string(),
        task: task.to_string(),
        metric,
        mean: s.mean,
        std,
        reps,
        formatted: format_measure(s.mean, std),
    });
}

pub fn metric_rows(runs: &[RunData]) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for run in runs {
        let Some(tasks) = &run.eval else { continue };
        for task in tasks {
            match task {
                TaskOutcome::Recommendation { k, report, .. } => {
                    let reps = report.repetitions;
                    push_summary(&mut rows, &run.name, "recommendation", "auc".into(), &report.auc, reps);
                    push_summary(&mut rows, &run.name, "recommendation", "ndcg".into(), &report.ndcg_full, reps);
                    push_summary(&mut rows, &run.name, "recommendation", format!("recall@{k}"), &report.recall_at_k, reps);
                    push_summary(&mut rows, &run.name, "recommendation", format!("ndcg@{k}"), &report.ndcg_at_k, reps);
                }
                TaskOutcome::Classification {
                    reps,
                    accuracy,
                    micro_f1,
                    macro_f1,
                } => {
                    push_summary(&mut rows, &run.name, "classification", "accuracy".into(), accuracy, *reps);
                    push_summary(&mut rows, &run.name, "classification", "micro_f1".into(), micro_f1, *reps);
                    push_summary(&mut rows, &run.name, "classification", "macro_f1".into(), macro_f1, *reps);
                }
                TaskOutcome::Cart { k, reps, strategies } => {
                    for s in strategies {
                        push_summary(
                            &mut rows,
                            &run.name,
                            "cart",
                            format!("{}/recall@{k}", s.strategy),
                            &s.report.recall_at_k,
                            *reps,
                        );
                        push_summary(
                            &mut rows,
                            &run.name,
                            "cart",
                            format!("{}/ndcg@{k}", s.strategy),
                            &s.report.ndcg_at_k,
                            *reps,
                        );
                    }
                }
            }
        }
    }
    rows
}

/// Confidence-sweep point: one filtered run's level against its drop
/// fraction and downstream ranking quality.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SweepPoint {
    pub run: String,
    pub alpha: f64,
    pub drop_fraction: f64,
    pub auc_mean: Option<f64>,
    pub auc_std: Option<f64>,
}

/// Alignment-versus-dimension point with the downstream classification
/// micro-F1 at that dimension.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AlignPoint {
    pub run: String,
    pub dim: usize,
    pub alignment: f64,
    pub micro_f1_mean: f64,
}

fn recommendation_auc(run: &RunData) -> Option<Summary> {
    run.eval.as_ref()?.iter().find_map(|t| match t {
        TaskOutcome::Recommendation { report, .. } => Some(report.auc),
        _ => None,
    })
}

fn classification_micro(run: &RunData) -> Option<Summary> {
    run.eval.as_ref()?.iter().find_map(|t| match t {
        TaskOutcome::Classification { micro_f1, .. } => Some(*micro_f1),
        _ => None,
    })
}

pub fn sweep_points(runs: &[RunData]) -> Vec<SweepPoint> {
    let mut points: Vec<SweepPoint> = runs
        .iter()
        .filter_map(|run| {
            let drops = run.drops.as_ref()?;
            let auc = recommendation_auc(run);
            Some(SweepPoint {
                run: run.name.clone(),
                alpha: drops.alpha,
                drop_fraction: drops.drop_fraction,
                auc_mean: auc.map(|s| s.mean),
                auc_std: auc.map(|s| s.std),
            })
        })
        .collect();
    points.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    points
}

pub fn align_points(runs: &[RunData]) -> Vec<AlignPoint> {
    let mut points: Vec<AlignPoint> = runs
        .iter()
        .filter_map(|run| {
            let align = run.align.as_ref()?;
            let micro = classification_micro(run)?;
            let dim = match &run.config.training {
                TrainingConfig::Sgns { dim, .. } | TrainingConfig::Ldr { dim, .. } => *dim,
            };
            Some(AlignPoint {
                run: run.name.clone(),
                dim,
                alignment: align.score,
                micro_f1_mean: micro.mean,
            })
        })
        .collect();
    points.sort_by_key(|p| p.dim);
    points
}

/// The full report payload; identical values back every rendering.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportDocument {
    pub runs: Vec<String>,
    pub metrics: Vec<MetricRow>,
    pub alpha_sweep: Vec<SweepPoint>,
    pub alignment_vs_dimension: Vec<AlignPoint>,
}

pub fn build_document(runs: &[RunData]) -> ReportDocument {
    ReportDocument {
        runs: runs.iter().map(|r| r.name.clone()).collect(),
        metrics: metric_rows(runs),
        alpha_sweep: sweep_points(runs),
        alignment_vs_dimension: align_points(runs),
    }
}

/// Renders the report. JSON and CSV write a single file at `out`; the plot
/// format writes series files into the directory `out`.
pub fn emit_report(run_dirs: &[PathBuf], format: ReportFormat, out: &Path) -> Result<Vec<PathBuf>> {
    if run_dirs.is_empty() {
        return Err(CliError::Validation("report needs at least one run directory".into()));
    }
    let runs: Vec<RunData> = run_dirs.iter().map(|d| load_run(d)).collect::<Result<_>>()?;
    let document = build_document(&runs);
    match format {
        ReportFormat::Json => {
            if document.metrics.is_empty() {
                return Err(CliError::Validation(
                    "missing section: no evaluation results in the given runs".into(),
                ));
            }
            let text = serde_json::to_string_pretty(&document)
                .map_err(|e| CliError::stage("report", e))?;
            fs::write(out, text).map_err(|e| CliError::stage("report", e))?;
            Ok(vec![out.to_path_buf()])
        }
        ReportFormat::Csv => {
            if document.metrics.is_empty() {
                return Err(CliError::Validation(
                    "missing section: no evaluation results in the given runs".into(),
                ));
            }
            write_metrics_csv(out, &document.metrics)?;
            Ok(vec![out.to_path_buf()])
        }
        ReportFormat::Plot => {
            if document.alpha_sweep.is_empty() && document.alignment_vs_dimension.is_empty() {
                return Err(CliError::Validation(
                    "missing section: plot data needs runs with a filter stage or an alignment stage".into(),
                ));
            }
            fs::create_dir_all(out).map_err(|e| CliError::stage("report", e))?;
            let mut written = Vec::new();
            if !document.alpha_sweep.is_empty() {
                let path = out.join("alpha_sweep.csv");
                write_sweep_csv(&path, &document.alpha_sweep)?;
                written.push(path);
            }
            if !document.alignment_vs_dimension.is_empty() {
                let path = out.join("alignment_vs_dimension.csv");
                write_align_csv(&path, &document.alignment_vs_dimension)?;
                written.push(path);
            }
            Ok(written)
        }
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::stage("report", e))
}

fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["run", "task", "metric", "mean", "std", "reps", "formatted"])
        .map_err(|e| CliError::stage("report", e))?;
    for row in rows {
        w.write_record([
            row.run.as_str(),
            row.task.as_str(),
            row.metric.as_str(),
            &row.mean.to_string(),
            &row.std.map(|s| s.to_string()).unwrap_or_default(),
            &row.reps.to_string(),
            row.formatted.as_str(),
        ])
        .map_err(|e| CliError::stage("report", e))?;
    }
    w.flush().map_err(|e| CliError::stage("report", e))
}

fn write_sweep_csv(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["run", "alpha", "drop_fraction", "auc_mean", "auc_std"])
        .map_err(|e| CliError::stage("report", e))?;
    for p in points {
        w.write_record([
            p.run.as_str(),
            &p.alpha.to_string(),
            &p.drop_fraction.to_string(),
            &p.auc_mean.map(|v| v.to_string()).unwrap_or_default(),
            &p.auc_std.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .map_err(|e| CliError::stage("report", e))?;
    }
    w.flush().map_err(|e| CliError::stage("report", e))
}

fn write_align_csv(path: &Path, points: &[AlignPoint]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["run", "dim", "alignment", "micro_f1_mean"])
        .map_err(|e| CliError::stage("report", e))?;
    for p in points {
        w.write_record([
            p.run.as_str(),
            &p.dim.to_string(),
            &p.alignment.to_string(),
            &p.micro_f1_mean.to_string(),
        ])
        .map_err(|e| CliError::stage("report", e))?;
    }
    w.flush().map_err(|e| CliError::stage("report", e))
}
