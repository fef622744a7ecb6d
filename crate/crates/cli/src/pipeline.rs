//! Stage orchestration: ingest → count → clean → train → align → eval,
//! with per-stage artifacts, checksums, and resume-from-manifest support.
//!
//! Every stage writes its outputs under the run directory and records them
//! in the manifest. On a rerun with the same config hash, stages whose
//! artifacts are intact are loaded from disk instead of recomputed. To keep
//! results identical whether a stage was fresh or resumed, downstream
//! consumers always read the serialized artifacts (the embedding file
//! narrows to f32, so training results pass through the file once).

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use relana_core::catalog::{
    build_session_graph, generate_synthetic, ingest_transactions, random_walk_pairs,
    sequence_pairs, InteractionLog, PairStream, SyntheticModel, Vocabulary, WalkConfig,
};
use relana_core::confidence::{filter_false_associations, InversionDirection, Verdict};
use relana_core::cooccur::{relatedness, CooccurrenceTable};
use relana_core::embed::{
    train_ldr_with, train_sgns, EmbeddingPair, FactorizationWeights, LdrConfig, LdrMethod,
    SgnsConfig, WorkerMode,
};
use relana_core::evaluation::{
    evaluate_cart_strategy, evaluate_recommendation, generate_cart_snapshots, leave_last_split,
    train_softmax_classifier, CandidateMode, CartGenSpec, CartStrategy, RankingMetrics,
    RankingReport, Summary,
};
use relana_core::io::{
    read_embedding, read_table, write_embedding, write_pair_stream, write_table,
};
use relana_core::spectral::{
    alignment_score, embedding_matrix, estimate_matrix, left_singular_basis, BasisSource,
};

use crate::config::{
    effective_threads, splitmix64, DataConfig, EvalTask, MechanismConfig, PipelineConfig,
    StrategyName, TrainingConfig,
};
use crate::error::{CliError, Result};
use crate::manifest::{artifact, ArtifactRecord, RunManifest, StageRecord};

pub const CONFIG_FILE: &str = "config.json";
pub const PAIRS_FILE: &str = "pairs.rlna";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const TABLE_FILE: &str = "table.rlnc";
pub const CLEAN_TABLE_FILE: &str = "table.clean.rlnc";
pub const DROPS_FILE: &str = "drops.json";
pub const Z_FILE: &str = "z.rlne";
pub const ZT_FILE: &str = "zt.rlne";
pub const TRACE_FILE: &str = "train_trace.json";
pub const ALIGN_FILE: &str = "align.json";
pub const EVAL_FILE: &str = "eval.json";

/// Per-pair record of a dropped cell in the cleaning report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DroppedCell {
    pub i: u32,
    pub j: u32,
    pub count: u64,
    pub mu_hat: f64,
    pub relatedness: f64,
    pub bound: f64,
}

/// Cleaning stage output: what was dropped and at what level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DropReport {
    pub alpha: f64,
    pub direction: InversionDirection,
    pub cells_tested: usize,
    pub cells_dropped: usize,
    pub drop_fraction: f64,
    pub dropped: Vec<DroppedCell>,
}

/// Alignment stage output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignReport {
    pub embedding_rank: usize,
    pub estimate_rank: usize,
    pub score: f64,
    /// Score divided by the smaller rank; 1 means nested column spaces.
    pub normalized: f64,
}

/// Per-strategy cart result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub strategy: String,
    pub report: RankingReport,
}

/// One evaluation task's aggregated result, as serialized into `eval.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskOutcome {
    Recommendation {
        k: usize,
        reps: usize,
        candidates: String,
        users: usize,
        report: RankingReport,
    },
    Classification {
        reps: usize,
        accuracy: Summary,
        micro_f1: Summary,
        macro_f1: Summary,
    },
    Cart {
        k: usize,
        reps: usize,
        strategies: Vec<StrategyOutcome>,
    },
}

/// In-memory source data kept alive across stages for evaluation.
enum SourceData {
    Synthetic(relana_core::catalog::SyntheticData),
    Transactions {
        #[allow(dead_code)]
        vocabulary: Vocabulary,
        log: InteractionLog,
        num_items: usize,
    },
}

impl SourceData {
    fn log(&self) -> &InteractionLog {
        match self {
            SourceData::Synthetic(d) => &d.log,
            SourceData::Transactions { log, .. } => log,
        }
    }

    fn num_items(&self) -> usize {
        match self {
            SourceData::Synthetic(d) => d.vocabulary.len(),
            SourceData::Transactions { num_items, .. } => *num_items,
        }
    }

    fn model(&self) -> Option<&SyntheticModel> {
        match self {
            SourceData::Synthetic(d) => Some(&d.model),
            SourceData::Transactions { .. } => None,
        }
    }

    fn vocabulary(&self) -> &Vocabulary {
        match self {
            SourceData::Synthetic(d) => &d.vocabulary,
            SourceData::Transactions { vocabulary, .. } => vocabulary,
        }
    }
}

/// Executes the configured stages in dependency order and returns the final
/// manifest (also written to `manifest.json` in the output directory after
/// every stage, so an interrupted run resumes where it stopped).
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest> {
    config.validate()?;
    let dir = config.output_dir.as_path();
    fs::create_dir_all(dir)
        .map_err(|e| CliError::validation(format!("cannot create {}: {e}", dir.display())))?;
    write_canonical_config(dir, config)?;

    let threads = effective_threads(config.threads);
    let config_hash = config.hash();
    let previous = RunManifest::load(dir)
        .ok()
        .filter(|m| m.config_hash == config_hash && m.tool_version == env!("CARGO_PKG_VERSION"));
    let mut manifest = RunManifest::new(config_hash);

    // ---- ingest: always recomputed (cheap, and evaluation needs the log).
    let started = Instant::now();
    let (source, stream) = ingest_stage(config)?;
    let mut outputs = vec![write_tracked(dir, PAIRS_FILE, |p| {
        write_pair_stream(p, &stream).map_err(|e| CliError::stage("ingest", e))
    })?];
    if matches!(config.data, DataConfig::Transactions { .. }) {
        write_vocab(&dir.join(VOCAB_FILE), source.vocabulary())
            .map_err(|e| CliError::stage("ingest", e))?;
        outputs.push(artifact(dir, VOCAB_FILE)?);
    }
    manifest.record_stage(StageRecord {
        name: "ingest".into(),
        outputs,
        wall_ms: started.elapsed().as_millis() as u64,
    });
    manifest.save(dir)?;

    // ---- count
    let num_items = source.num_items();
    let table = run_stage(&mut manifest, previous.as_ref(), dir, "count", {
        let stream = &stream;
        move || {
            let table = CooccurrenceTable::accumulate_sharded(
                stream,
                num_items,
                config.count.convention,
                config.count.symmetric,
                threads,
            )
            .map_err(|e| CliError::stage("count", e))?;
            let out = write_tracked(dir, TABLE_FILE, |p| {
                write_table(p, &table).map_err(|e| CliError::stage("count", e))
            })?;
            Ok((table, vec![out]))
        }
    }, || read_table(&dir.join(TABLE_FILE)).map_err(|e| CliError::stage("count", e)))?;

    // ---- clean (optional)
    let (table_used, stream_used) = if let Some(filter) = &config.filter {
        let (clean_table, drops) = run_stage(
            &mut manifest,
            previous.as_ref(),
            dir,
            "clean",
            || {
                let outcome = filter_false_associations(&table, filter.alpha, filter.direction)
                    .map_err(|e| CliError::stage("clean", e))?;
                let dropped_cells: Vec<DroppedCell> = outcome
                    .reports
                    .iter()
                    .filter(|r| r.verdict == Verdict::Drop)
                    .map(|r| DroppedCell {
                        i: r.i,
                        j: r.j,
                        count: r.count,
                        mu_hat: r.mu_hat,
                        relatedness: r.relatedness,
                        bound: r.bound,
                    })
                    .collect();
                let report = DropReport {
                    alpha: filter.alpha,
                    direction: filter.direction,
                    cells_tested: outcome.reports.len(),
                    cells_dropped: dropped_cells.len(),
                    drop_fraction: outcome.drop_fraction(),
                    dropped: dropped_cells,
                };
                let table_out = write_tracked(dir, CLEAN_TABLE_FILE, |p| {
                    write_table(p, &outcome.table).map_err(|e| CliError::stage("clean", e))
                })?;
                let report_out = write_json(dir, DROPS_FILE, &report, "clean")?;
                Ok(((outcome.table, report), vec![table_out, report_out]))
            },
            || {
                let table =
                    read_table(&dir.join(CLEAN_TABLE_FILE)).map_err(|e| CliError::stage("clean", e))?;
                let report: DropReport = read_json(dir, DROPS_FILE, "clean")?;
                Ok((table, report))
            },
        )?;
        let dropped: HashSet<(u32, u32)> = drops.dropped.iter().map(|c| (c.i, c.j)).collect();
        let filtered_stream = stream.without_pairs(&dropped);
        (clean_table, filtered_stream)
    } else {
        (table, stream)
    };

    // ---- train
    let train_seed = config.seeds.stage("train");
    let pair = run_stage(
        &mut manifest,
        previous.as_ref(),
        dir,
        "train",
        || {
            let (pair, trace) = match &config.training {
                TrainingConfig::Sgns {
                    dim,
                    k,
                    epochs,
                    learning_rate,
                    negative_power,
                    workers,
                    shuffle,
                } => {
                    let workers = match workers {
                        WorkerMode::Deterministic => WorkerMode::Deterministic,
                        WorkerMode::Racy(n) => WorkerMode::Racy((*n).min(threads).max(1)),
                    };
                    train_sgns(
                        &stream_used,
                        &table_used,
                        &SgnsConfig {
                            dim: *dim,
                            k: *k,
                            epochs: *epochs,
                            learning_rate: *learning_rate,
                            negative_power: *negative_power,
                            seed: train_seed,
                            workers,
                            shuffle: *shuffle,
                        },
                    )
                    .map_err(|e| CliError::stage("train", e))?
                }
                TrainingConfig::Ldr {
                    dim,
                    k,
                    iterations,
                    als,
                    learning_rate,
                    ridge,
                } => {
                    let est = relatedness(&table_used, 0.0, false)
                        .map_err(|e| CliError::stage("train", e))?;
                    let weights = FactorizationWeights::from_table(&table_used, *k)
                        .map_err(|e| CliError::stage("train", e))?;
                    train_ldr_with(
                        &est,
                        &weights,
                        &LdrConfig {
                            dim: *dim,
                            iterations: *iterations,
                            seed: train_seed,
                            method: if *als {
                                LdrMethod::AlternatingLeastSquares
                            } else {
                                LdrMethod::GradientDescent
                            },
                            learning_rate: *learning_rate,
                            ridge: *ridge,
                        },
                    )
                    .map_err(|e| CliError::stage("train", e))?
                }
            };
            let z_out = write_tracked(dir, Z_FILE, |p| {
                write_embedding(p, &pair.z).map_err(|e| CliError::stage("train", e))
            })?;
            let zt_out = write_tracked(dir, ZT_FILE, |p| {
                write_embedding(p, &pair.zt).map_err(|e| CliError::stage("train", e))
            })?;
            let trace_out = write_json(
                dir,
                TRACE_FILE,
                &serde_json::json!({ "loss_trace": trace }),
                "train",
            )?;
            // Reload through the f32 file so later stages never depend on
            // whether training was fresh or resumed.
            let pair = load_pair(dir)?;
            Ok((pair, vec![z_out, zt_out, trace_out]))
        },
        || load_pair(dir),
    )?;

    // ---- align (optional)
    if let Some(align) = &config.align {
        run_stage(
            &mut manifest,
            previous.as_ref(),
            dir,
            "align",
            || {
                let report = align_report(&pair.z, &table_used, align.rank)?;
                let out = write_json(dir, ALIGN_FILE, &report, "align")?;
                Ok(((), vec![out]))
            },
            || Ok(()),
        )?;
    }

    // ---- eval (optional)
    if !config.eval.is_empty() {
        run_stage(
            &mut manifest,
            previous.as_ref(),
            dir,
            "eval",
            || {
                let outcomes = eval_stage(config, &source, &pair)?;
                let out = write_json(dir, EVAL_FILE, &outcomes, "eval")?;
                Ok(((), vec![out]))
            },
            || Ok(()),
        )?;
    }

    manifest.save(dir)?;
    Ok(manifest)
}

/// Runs one resumable stage: if the previous manifest (same config hash)
/// recorded it and all artifacts are intact, `reuse` loads the result from
/// disk; otherwise `compute` runs and reports what it wrote.
fn run_stage<T>(
    manifest: &mut RunManifest,
    previous: Option<&RunManifest>,
    dir: &Path,
    name: &str,
    compute: impl FnOnce() -> Result<(T, Vec<ArtifactRecord>)>,
    reuse: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let started = Instant::now();
    if let Some(prev) = previous {
        if prev.stage_is_intact(name, dir) {
            let value = reuse()?;
            let mut record = prev.stage(name).expect("intact stage exists").clone();
            record.wall_ms = started.elapsed().as_millis() as u64;
            manifest.record_stage(record);
            manifest.save(dir)?;
            log::info!("stage {name}: resumed from artifacts");
            return Ok(value);
        }
    }
    let (value, outputs) = compute()?;
    manifest.record_stage(StageRecord {
        name: name.to_string(),
        outputs,
        wall_ms: started.elapsed().as_millis() as u64,
    });
    manifest.save(dir)?;
    Ok(value)
}

fn ingest_stage(config: &PipelineConfig) -> Result<(SourceData, PairStream)> {
    let source = match &config.data {
        DataConfig::Synthetic(spec) => {
            let spec = spec.to_spec(config.seeds.stage("ingest"));
            let data = generate_synthetic(&spec).map_err(|e| CliError::stage("ingest", e))?;
            SourceData::Synthetic(data)
        }
        DataConfig::Transactions { path, schema } => {
            let (vocabulary, log) = ingest_transactions(path, &schema.to_schema())
                .map_err(|e| CliError::stage("ingest", e))?;
            let num_items = vocabulary.len();
            SourceData::Transactions {
                vocabulary,
                log,
                num_items,
            }
        }
    };
    let stream = match (&config.mechanism, &source) {
        // The synthetic generator already emits its pair stream; the
        // sequence mechanism over its two-item sessions reproduces it.
        (MechanismConfig::Sequence { window, symmetric }, _) => {
            sequence_pairs(source.log(), *window, *symmetric)
        }
        (
            MechanismConfig::Graph {
                walk_length,
                walks_per_node,
                p,
                q,
                context_size,
            },
            _,
        ) => {
            let graph = build_session_graph(source.log(), source.num_items());
            random_walk_pairs(
                &graph,
                &WalkConfig {
                    walk_length: *walk_length,
                    walks_per_node: *walks_per_node,
                    p: *p,
                    q: *q,
                    context_size: *context_size,
                    seed: config.seeds.stage("walks"),
                },
            )
            .map_err(|e| CliError::stage("ingest", e))?
        }
    };
    if stream.is_empty() {
        return Err(CliError::stage(
            "ingest",
            "mechanism produced no pairs (too few interactions per user/session)",
        ));
    }
    Ok((source, stream))
}

fn eval_stage(
    config: &PipelineConfig,
    source: &SourceData,
    pair: &EmbeddingPair,
) -> Result<Vec<TaskOutcome>> {
    let base_seed = config.seeds.stage("eval");
    let mut outcomes = Vec::new();
    for (index, task) in config.eval.iter().enumerate() {
        let task_seed = splitmix64(base_seed ^ ((index as u64) << 32));
        let outcome = match task {
            EvalTask::Recommendation { k, reps, negatives } => {
                let split = leave_last_split(source.log());
                let mode = match negatives {
                    Some(n) => CandidateMode::SampledNegatives(*n),
                    None => CandidateMode::FullCatalog,
                };
                let mut runs = Vec::with_capacity(*reps);
                let mut users = 0;
                for rep in 0..*reps {
                    let run = evaluate_recommendation(
                        &split,
                        pair,
                        mode,
                        *k,
                        splitmix64(task_seed ^ rep as u64),
                    )
                    .map_err(|e| CliError::stage("eval", e))?;
                    users = run.users_evaluated;
                    runs.push(run.metrics);
                }
                TaskOutcome::Recommendation {
                    k: *k,
                    reps: *reps,
                    candidates: match mode {
                        CandidateMode::FullCatalog => "full_catalog".to_string(),
                        CandidateMode::SampledNegatives(n) => format!("sampled_{n}"),
                    },
                    users,
                    report: RankingReport::from_runs(&runs, *k)
                        .map_err(|e| CliError::stage("eval", e))?,
                }
            }
            EvalTask::Classification {
                labels,
                l2,
                epochs,
                learning_rate,
                reps,
            } => {
                let labels = item_labels(source, labels.as_deref())?;
                let mut accuracy = Vec::new();
                let mut micro = Vec::new();
                let mut macro_ = Vec::new();
                for rep in 0..*reps {
                    let report = train_softmax_classifier(
                        &pair.z,
                        &labels,
                        *l2,
                        *epochs,
                        *learning_rate,
                        splitmix64(task_seed ^ rep as u64),
                    )
                    .map_err(|e| CliError::stage("eval", e))?;
                    accuracy.push(report.test_accuracy);
                    micro.push(report.test_micro_f1);
                    macro_.push(report.test_macro_f1);
                }
                TaskOutcome::Classification {
                    reps: *reps,
                    accuracy: Summary::from_values(&accuracy),
                    micro_f1: Summary::from_values(&micro),
                    macro_f1: Summary::from_values(&macro_),
                }
            }
            EvalTask::Cart {
                carts,
                in_class_items,
                noise_items,
                k,
                reps,
                strategies,
            } => {
                let model = source.model().ok_or_else(|| {
                    CliError::stage("eval", "cart evaluation needs the synthetic data source")
                })?;
                let mut per_strategy: Vec<(StrategyName, Vec<RankingMetrics>)> =
                    strategies.iter().map(|s| (*s, Vec::new())).collect();
                for rep in 0..*reps {
                    let rep_seed = splitmix64(task_seed ^ rep as u64);
                    let snapshots = generate_cart_snapshots(
                        model,
                        &CartGenSpec {
                            carts: *carts,
                            in_class_items: *in_class_items,
                            noise_items: *noise_items,
                            seed: rep_seed,
                        },
                    )
                    .map_err(|e| CliError::stage("eval", e))?;
                    for (name, metrics) in per_strategy.iter_mut() {
                        let strategy = match name {
                            StrategyName::Random => CartStrategy::Random {
                                seed: splitmix64(rep_seed ^ 0x5a5a),
                            },
                            StrategyName::Recent => CartStrategy::Recent,
                            StrategyName::Oracle => CartStrategy::Oracle,
                            StrategyName::Add => CartStrategy::Add,
                            StrategyName::Attention => CartStrategy::Attention,
                        };
                        metrics.push(
                            evaluate_cart_strategy(&snapshots, pair, strategy, *k)
                                .map_err(|e| CliError::stage("eval", e))?,
                        );
                    }
                }
                TaskOutcome::Cart {
                    k: *k,
                    reps: *reps,
                    strategies: per_strategy
                        .into_iter()
                        .map(|(name, metrics)| {
                            Ok(StrategyOutcome {
                                strategy: name.as_str().to_string(),
                                report: RankingReport::from_runs(&metrics, *k)
                                    .map_err(|e| CliError::stage("eval", e))?,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?,
                }
            }
        };
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

/// Item labels for classification: the labels CSV when given, otherwise the
/// synthetic model's planted classes.
fn item_labels(source: &SourceData, labels: Option<&Path>) -> Result<Vec<u32>> {
    match labels {
        Some(path) => relana_core::io::read_labels_csv(path, source.num_items())
            .map_err(|e| CliError::stage("eval", e)),
        None => {
            let model = source.model().ok_or_else(|| {
                CliError::stage("eval", "classification over transactions needs a labels file")
            })?;
            Ok((0..model.num_items() as u32).map(|i| model.class_of(i)).collect())
        }
    }
}

/// Alignment between the trained embedding's column space and the top
/// subspace of the dense relatedness estimate.
pub fn align_report(
    embedding: &relana_core::embed::Embedding,
    table: &CooccurrenceTable,
    rank: usize,
) -> Result<AlignReport> {
    let est = relatedness(table, 0.0, false).map_err(|e| CliError::stage("align", e))?;
    let z = embedding_matrix(embedding);
    let embedding_rank = embedding.dim().min(z.nrows());
    let basis_z = left_singular_basis(&z, embedding_rank, BasisSource::Embedding)
        .map_err(|e| CliError::stage("align", e))?;
    let x = estimate_matrix(&est);
    let estimate_rank = rank.min(x.nrows());
    let basis_x = left_singular_basis(&x, estimate_rank, BasisSource::Relatedness)
        .map_err(|e| CliError::stage("align", e))?;
    let score = alignment_score(&basis_z, &basis_x).map_err(|e| CliError::stage("align", e))?;
    Ok(AlignReport {
        embedding_rank,
        estimate_rank,
        score,
        normalized: score / embedding_rank.min(estimate_rank) as f64,
    })
}

fn load_pair(dir: &Path) -> Result<EmbeddingPair> {
    let z = read_embedding(&dir.join(Z_FILE)).map_err(|e| CliError::stage("train", e))?;
    let zt = read_embedding(&dir.join(ZT_FILE)).map_err(|e| CliError::stage("train", e))?;
    Ok(EmbeddingPair { z, zt })
}

fn write_tracked(
    dir: &Path,
    relative: &str,
    write: impl FnOnce(&Path) -> Result<()>,
) -> Result<ArtifactRecord> {
    write(&dir.join(relative))?;
    artifact(dir, relative)
}

fn write_json<T: Serialize>(dir: &Path, relative: &str, value: &T, stage: &str) -> Result<ArtifactRecord> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::stage(stage, e))?;
    fs::write(dir.join(relative), text).map_err(|e| CliError::stage(stage, e))?;
    artifact(dir, relative)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(dir: &Path, relative: &str, stage: &str) -> Result<T> {
    let path = dir.join(relative);
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::stage(stage, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::stage(stage, e))
}

/// Writes the experiment-identity form of the config (execution parameters
/// neutralized) so reports and reruns can recover every modeling choice.
fn write_canonical_config(dir: &Path, config: &PipelineConfig) -> Result<()> {
    let mut canonical = config.clone();
    canonical.output_dir = std::path::PathBuf::new();
    canonical.threads = None;
    let text =
        serde_json::to_string_pretty(&canonical).map_err(|e| CliError::stage("setup", e))?;
    fs::write(dir.join(CONFIG_FILE), text).map_err(|e| CliError::stage("setup", e))?;
    Ok(())
}

fn write_vocab(path: &Path, vocabulary: &Vocabulary) -> std::io::Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for (id, name) in vocabulary.names().enumerate() {
        writeln!(out, "{id}\t{name}\t{}", vocabulary.frequency(id as u32))?;
    }
    out.flush()
}
