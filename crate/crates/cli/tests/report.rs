//! Report emission contracts: sigma column only with repetitions, identical
//! values across JSON and CSV renderings, sweep plot data, and the
//! missing-section error.

use std::fs;
use std::path::{Path, PathBuf};

use relana_cli::config::{
    AlignConfig, CountConfig, DataConfig, EvalTask, FilterConfig, MechanismConfig, PipelineConfig,
    Seeds, SyntheticDataConfig, TrainingConfig,
};
use relana_cli::error::EXIT_VALIDATION;
use relana_cli::report::{emit_report, ReportDocument, ReportFormat};
use relana_cli::run_pipeline;

fn sweep_config(dir: &Path, alpha: Option<f64>, reps: usize) -> PipelineConfig {
    PipelineConfig {
        data: DataConfig::Synthetic(SyntheticDataConfig {
            num_items: 40,
            num_classes: 4,
            within_prob: 0.8,
            cross_prob: 0.2,
            num_records: 20_000,
            planted_independent: vec![],
            pairs_per_user: 2,
        }),
        // Window 1 keeps most pairs inside a record, so within-class cells
        // stay well observed and survive even the strictest filter level.
        mechanism: MechanismConfig::Sequence {
            window: 1,
            symmetric: false,
        },
        count: CountConfig {
            convention: relana_core::cooccur::RoleConvention::CenterOnly,
            symmetric: false,
        },
        filter: alpha.map(|alpha| FilterConfig {
            alpha,
            direction: relana_core::confidence::InversionDirection::Lower,
        }),
        training: TrainingConfig::Sgns {
            dim: 4,
            k: 3,
            epochs: 2,
            learning_rate: 0.025,
            negative_power: 1.0,
            workers: relana_core::embed::WorkerMode::Deterministic,
            shuffle: true,
        },
        align: Some(AlignConfig { rank: 4 }),
        eval: vec![
            EvalTask::Recommendation {
                k: 5,
                reps,
                negatives: Some(20),
            },
            EvalTask::Classification {
                labels: None,
                l2: 1e-3,
                epochs: 40,
                learning_rate: 0.5,
                reps: reps.min(2),
            },
        ],
        seeds: Seeds { master: 11 },
        output_dir: dir.to_path_buf(),
        threads: None,
    }
}

fn run_sweep(base: &Path, alphas: &[f64], reps: usize) -> Vec<PathBuf> {
    alphas
        .iter()
        .map(|&alpha| {
            let dir = base.join(format!("alpha{}", (alpha * 100.0) as u32));
            run_pipeline(&sweep_config(&dir, Some(alpha), reps)).unwrap();
            dir
        })
        .collect()
}

#[test]
fn json_and_csv_renderings_contain_identical_values() {
    let tmp = tempfile::tempdir().unwrap();
    let dirs = run_sweep(tmp.path(), &[0.3, 0.6], 3);

    let json_path = tmp.path().join("report.json");
    emit_report(&dirs, ReportFormat::Json, &json_path).unwrap();
    let document: ReportDocument =
        serde_json::from_str(&fs::read_to_string(&json_path).unwrap()).unwrap();
    assert!(!document.metrics.is_empty());

    let csv_path = tmp.path().join("report.csv");
    emit_report(&dirs, ReportFormat::Csv, &csv_path).unwrap();
    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), document.metrics.len());

    for (row, metric) in rows.iter().zip(document.metrics.iter()) {
        assert_eq!(&row[0], metric.run.as_str());
        assert_eq!(&row[1], metric.task.as_str());
        assert_eq!(&row[2], metric.metric.as_str());
        let csv_mean: f64 = row[3].parse().unwrap();
        assert_eq!(csv_mean.to_bits(), metric.mean.to_bits(), "mean differs in CSV");
        match metric.std {
            None => assert!(row[4].is_empty()),
            Some(std) => {
                let csv_std: f64 = row[4].parse().unwrap();
                assert_eq!(csv_std.to_bits(), std.to_bits(), "std differs in CSV");
            }
        }
        assert_eq!(&row[6], metric.formatted.as_str());
    }
}

#[test]
fn repeated_runs_format_mean_with_sigma_and_single_runs_without() {
    let tmp = tempfile::tempdir().unwrap();

    let multi = tmp.path().join("multi");
    run_pipeline(&sweep_config(&multi, None, 5)).unwrap();
    let single = tmp.path().join("single");
    run_pipeline(&sweep_config(&single, None, 1)).unwrap();

    let json_path = tmp.path().join("report.json");
    emit_report(
        &[multi, single],
        ReportFormat::Json,
        &json_path,
    )
    .unwrap();
    let document: ReportDocument =
        serde_json::from_str(&fs::read_to_string(&json_path).unwrap()).unwrap();

    let multi_rows: Vec<_> = document
        .metrics
        .iter()
        .filter(|m| m.run == "multi" && m.task == "recommendation")
        .collect();
    assert!(!multi_rows.is_empty());
    for row in multi_rows {
        assert!(row.std.is_some());
        let (mean_part, sigma_part) = row
            .formatted
            .split_once('(')
            .expect("repetitions format mean(sigma)");
        assert_eq!(mean_part, format!("{:.3}", row.mean));
        assert!(sigma_part.ends_with(')'));
        assert!(
            sigma_part.starts_with('.') || sigma_part.chars().next().unwrap().is_ascii_digit(),
            "sigma renders without a leading zero: {}",
            row.formatted
        );
    }

    let single_rows: Vec<_> = document
        .metrics
        .iter()
        .filter(|m| m.run == "single" && m.task == "recommendation")
        .collect();
    assert!(!single_rows.is_empty());
    for row in single_rows {
        assert_eq!(row.std, None, "single run must omit sigma");
        assert_eq!(row.formatted, format!("{:.3}", row.mean));
    }
}

#[test]
fn plot_format_emits_sweep_and_alignment_series() {
    let tmp = tempfile::tempdir().unwrap();
    let dirs = run_sweep(tmp.path(), &[0.3, 0.6, 0.9], 2);

    let plot_dir = tmp.path().join("plots");
    let written = emit_report(&dirs, ReportFormat::Plot, &plot_dir).unwrap();
    assert_eq!(written.len(), 2);

    let mut reader = csv::Reader::from_path(plot_dir.join("alpha_sweep.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    let alphas: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(alphas, vec![0.3, 0.6, 0.9], "sweep sorted by level");
    for row in &rows {
        let drop_fraction: f64 = row[2].parse().unwrap();
        assert!((0.0..=1.0).contains(&drop_fraction));
        assert!(!row[3].is_empty(), "sweep rows carry the downstream auc");
    }

    let mut reader = csv::Reader::from_path(plot_dir.join("alignment_vs_dimension.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        let dim: usize = row[1].parse().unwrap();
        assert_eq!(dim, 4);
        let alignment: f64 = row[2].parse().unwrap();
        assert!(alignment > 0.0 && alignment <= 4.0 + 1e-9);
    }
}

#[test]
fn plot_report_without_sweep_or_alignment_sections_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("bare");
    let mut config = sweep_config(&dir, None, 1);
    config.align = None;
    run_pipeline(&config).unwrap();

    let err = emit_report(
        &[dir],
        ReportFormat::Plot,
        &tmp.path().join("plots"),
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), EXIT_VALIDATION);
    assert!(err.to_string().contains("missing section"), "{err}");
}
