//! End-to-end pipeline contracts: completes quickly on a small synthetic
//! config, reproduces artifact checksums exactly, validates before running,
//! and resumes intact stages from the manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use relana_cli::config::{
    AlignConfig, CountConfig, DataConfig, EvalTask, FilterConfig, MechanismConfig, PipelineConfig,
    Seeds, StrategyName, SyntheticDataConfig, TrainingConfig,
};
use relana_cli::error::EXIT_VALIDATION;
use relana_cli::manifest::RunManifest;
use relana_cli::run_pipeline;

fn minimal_config(dir: &Path) -> PipelineConfig {
    PipelineConfig {
        data: DataConfig::Synthetic(SyntheticDataConfig {
            num_items: 100,
            num_classes: 5,
            within_prob: 0.6,
            cross_prob: 0.2,
            num_records: 20_000,
            planted_independent: vec![],
            pairs_per_user: 4,
        }),
        mechanism: MechanismConfig::Sequence {
            window: 5,
            symmetric: false,
        },
        // Directed windowed pairs: center-only marginals put independent
        // pairs at relatedness 0, which is the null the filter tests.
        count: CountConfig {
            convention: relana_core::cooccur::RoleConvention::CenterOnly,
            symmetric: false,
        },
        filter: Some(FilterConfig {
            alpha: 0.6,
            direction: relana_core::confidence::InversionDirection::Lower,
        }),
        training: TrainingConfig::Sgns {
            dim: 8,
            k: 5,
            epochs: 3,
            learning_rate: 0.025,
            negative_power: 1.0,
            workers: relana_core::embed::WorkerMode::Deterministic,
            shuffle: true,
        },
        align: Some(AlignConfig { rank: 8 }),
        eval: vec![
            EvalTask::Recommendation {
                k: 10,
                reps: 3,
                negatives: Some(50),
            },
            EvalTask::Classification {
                labels: None,
                l2: 1e-3,
                epochs: 80,
                learning_rate: 0.5,
                reps: 2,
            },
            EvalTask::Cart {
                carts: 100,
                in_class_items: 3,
                noise_items: 2,
                k: 10,
                reps: 2,
                strategies: vec![StrategyName::Recent, StrategyName::Add],
            },
        ],
        seeds: Seeds { master: 7 },
        output_dir: dir.to_path_buf(),
        threads: None,
    }
}

fn artifact_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|entry| {
            let entry = entry.unwrap();
            (
                entry.file_name().to_string_lossy().into_owned(),
                fs::read(entry.path()).unwrap(),
            )
        })
        .filter(|(name, _)| name != "timings.json")
        .collect();
    files.sort_by(|a, b| a.0.cmp(&b.0));
    files
}

#[test]
fn minimal_synthetic_pipeline_completes_quickly() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let config = minimal_config(&dir);

    let started = Instant::now();
    let manifest = run_pipeline(&config).unwrap();
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 60,
        "pipeline took {elapsed:?}, expected under a minute"
    );

    let names: Vec<&str> = manifest.stages.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["ingest", "count", "clean", "train", "align", "eval"]);
    for file in [
        "config.json",
        "pairs.rlna",
        "table.rlnc",
        "table.clean.rlnc",
        "drops.json",
        "z.rlne",
        "zt.rlne",
        "train_trace.json",
        "align.json",
        "eval.json",
        "manifest.json",
        "timings.json",
    ] {
        assert!(dir.join(file).is_file(), "missing artifact {file}");
    }
}

#[test]
fn identical_configs_reproduce_identical_artifacts_and_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let dir_a = tmp.path().join("a");
    let dir_b = tmp.path().join("b");
    run_pipeline(&minimal_config(&dir_a)).unwrap();
    run_pipeline(&minimal_config(&dir_b)).unwrap();

    let files_a = artifact_files(&dir_a);
    let files_b = artifact_files(&dir_b);
    assert_eq!(files_a.len(), files_b.len());
    for ((name_a, bytes_a), (name_b, bytes_b)) in files_a.iter().zip(files_b.iter()) {
        assert_eq!(name_a, name_b);
        assert_eq!(bytes_a, bytes_b, "artifact {name_a} differs between runs");
    }

    let manifest_a = RunManifest::load(&dir_a).unwrap();
    let manifest_b = RunManifest::load(&dir_b).unwrap();
    assert_eq!(manifest_a, manifest_b);
}

#[test]
fn thread_cap_does_not_change_counting_results() {
    let tmp = tempfile::tempdir().unwrap();
    let dir_1 = tmp.path().join("threads1");
    let dir_8 = tmp.path().join("threads8");
    let mut config_1 = minimal_config(&dir_1);
    config_1.threads = Some(1);
    let mut config_8 = minimal_config(&dir_8);
    config_8.threads = Some(8);

    run_pipeline(&config_1).unwrap();
    run_pipeline(&config_8).unwrap();

    for file in ["pairs.rlna", "table.rlnc", "z.rlne", "zt.rlne", "manifest.json"] {
        assert_eq!(
            fs::read(dir_1.join(file)).unwrap(),
            fs::read(dir_8.join(file)).unwrap(),
            "{file} differs between thread caps"
        );
    }
}

#[test]
fn missing_data_path_fails_validation_before_any_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("never-created");
    let mut config = minimal_config(&dir);
    config.data = DataConfig::Transactions {
        path: PathBuf::from("/nonexistent/orders.csv"),
        schema: relana_cli::config::SchemaConfig::Instacart,
    };
    config.eval.clear(); // cart task requires synthetic; not what we test

    let err = run_pipeline(&config).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_VALIDATION);
    assert!(!dir.exists(), "validation failure must not create outputs");
}

#[test]
fn rerun_resumes_from_intact_artifacts_and_reaches_the_same_state() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("resume");
    let mut config = minimal_config(&dir);
    // Keep the resume scenario cheap; evaluation is rerun when its artifact
    // is deleted, everything else is loaded from disk.
    config.eval.truncate(1);

    run_pipeline(&config).unwrap();
    let before = artifact_files(&dir);

    fs::remove_file(dir.join("eval.json")).unwrap();
    run_pipeline(&config).unwrap();
    let after = artifact_files(&dir);
    assert_eq!(before, after, "resumed run must reproduce the same artifacts");
}
