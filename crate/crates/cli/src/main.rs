//! `relana`: co-occurrence relatedness, confidence filtering, embedding
//! training, and downstream evaluation from the command line.
//!
//! Exit codes: 0 success, 2 validation error (bad arguments, unreadable
//! inputs, malformed config), 3 stage failure (a validated run broke while
//! executing). The `RELANA_THREADS` environment variable caps parallelism.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use relana_core::catalog::{
    generate_synthetic, ingest_transactions, sequence_pairs, build_session_graph,
    random_walk_pairs, CsvSchema, InteractionLog, SyntheticSpec, Vocabulary, WalkConfig,
};
use relana_core::confidence::{filter_false_associations, InversionDirection, Verdict};
use relana_core::cooccur::{relatedness, CooccurrenceTable, RoleConvention};
use relana_core::embed::{
    train_ldr_with, train_sgns, EmbeddingPair, FactorizationWeights, LdrConfig, LdrMethod,
    SgnsConfig, WorkerMode,
};
use relana_core::evaluation::{
    evaluate_cart_strategy, evaluate_recommendation, generate_cart_snapshots, leave_last_split,
    train_softmax_classifier, CandidateMode, CartGenSpec, CartStrategy, RankingReport, Summary,
};
use relana_core::io::{
    read_embedding, read_pair_stream, read_table, write_embedding, write_pair_stream, write_table,
};
use relana_core::relations::{
    analogy_predict, conditional_from_sessions, conditional_from_table, higher_order_by_kl,
    higher_order_by_relatedness, kmeans_diffs, relation_vector, all_items, ProductSet,
    RelationSet, RowSource, DEFAULT_KL_SMOOTHING,
};

use relana_cli::config::{effective_threads, splitmix64, StrategyName};
use relana_cli::error::{CliError, Result};
use relana_cli::pipeline::align_report;
use relana_cli::report::ReportFormat;
use relana_cli::PipelineConfig;

#[derive(Parser)]
#[command(
    name = "relana",
    version,
    about = "Co-occurrence relatedness, confidence filtering, product embeddings, and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read interactions and emit a (center, context) pair stream.
    Ingest(IngestArgs),
    /// Count a pair stream into a co-occurrence table.
    Count(CountArgs),
    /// Drop pairs whose relatedness bound cannot rule out independence.
    Clean(CleanArgs),
    /// Train embeddings on a pair stream and table.
    Train(TrainArgs),
    /// Spectral alignment between an embedding and the relatedness estimate.
    Align(AlignArgs),
    /// Evaluate an embedding on a downstream task.
    Eval(EvalArgs),
    /// Higher-order and functional relation queries.
    Relations(RelationsArgs),
    /// Run the full configured pipeline.
    Run(RunArgs),
    /// Aggregate finished runs into tables and plot data.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MechanismArg {
    Sequence,
    Graph,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    CenterOnly,
    BothRoles,
}

impl From<ConventionArg> for RoleConvention {
    fn from(value: ConventionArg) -> Self {
        match value {
            ConventionArg::CenterOnly => RoleConvention::CenterOnly,
            ConventionArg::BothRoles => RoleConvention::BothRoles,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Lower,
    Upper,
}

impl From<DirectionArg> for InversionDirection {
    fn from(value: DirectionArg) -> Self {
        match value {
            DirectionArg::Lower => InversionDirection::Lower,
            DirectionArg::Upper => InversionDirection::Upper,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Plot,
}

#[derive(Args)]
struct SourceArgs {
    /// Transactions CSV with a header row.
    #[arg(long, conflicts_with = "synthetic")]
    input: Option<PathBuf>,
    /// Column names as session,user,item,position (default: the Instacart
    /// preset order_id,user_id,product_id,add_to_cart_order).
    #[arg(long, value_delimiter = ',', num_args = 4)]
    columns: Option<Vec<String>>,
    /// Synthetic generator spec (JSON) with an explicit seed.
    #[arg(long)]
    synthetic: Option<PathBuf>,
}

struct Source {
    vocabulary: Vocabulary,
    log: InteractionLog,
    model: Option<relana_core::catalog::SyntheticModel>,
}

impl SourceArgs {
    fn load(&self) -> Result<Source> {
        match (&self.input, &self.synthetic) {
            (Some(path), None) => {
                if !path.is_file() {
                    return Err(CliError::Validation(format!(
                        "input path {} does not exist",
                        path.display()
                    )));
                }
                let schema = match &self.columns {
                    None => CsvSchema::instacart(),
                    Some(cols) => CsvSchema {
                        session: cols[0].clone(),
                        user: cols[1].clone(),
                        item: cols[2].clone(),
                        position: cols[3].clone(),
                    },
                };
                let (vocabulary, log) = ingest_transactions(path, &schema)
                    .map_err(|e| CliError::stage("ingest", e))?;
                Ok(Source {
                    vocabulary,
                    log,
                    model: None,
                })
            }
            (None, Some(path)) => {
                let spec: SyntheticSpec = read_json_file(path)?;
                let data = generate_synthetic(&spec).map_err(|e| CliError::stage("ingest", e))?;
                Ok(Source {
                    vocabulary: data.vocabulary,
                    log: data.log,
                    model: Some(data.model),
                })
            }
            _ => Err(CliError::Validation(
                "exactly one of --input or --synthetic is required".into(),
            )),
        }
    }
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, value_enum, default_value = "sequence")]
    mechanism: MechanismArg,
    /// Sequence window: pairs (item_t, item_{t-m}) for m = 1..window.
    #[arg(long, default_value_t = 5)]
    window: usize,
    /// Also emit the mirrored (previous, current) pairs.
    #[arg(long)]
    symmetric: bool,
    #[arg(long, default_value_t = 10)]
    walk_length: usize,
    #[arg(long, default_value_t = 5)]
    walks_per_node: usize,
    /// Return bias of the second-order walk.
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    /// In-out bias of the second-order walk.
    #[arg(long, default_value_t = 1.0)]
    q: f64,
    #[arg(long, default_value_t = 5)]
    context_size: usize,
    /// Walk seed (graph mechanism only).
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output pair stream (binary).
    #[arg(long)]
    out: PathBuf,
    /// Optional vocabulary TSV: id, external name, frequency.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Optional labels CSV from planted synthetic classes.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args)]
struct CountArgs {
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Catalog size; inferred from the stream when omitted.
    #[arg(long)]
    items: Option<usize>,
    /// Marginal counting: both-roles counts every appearance of an item,
    /// center-only counts only center appearances (directed studies).
    #[arg(long, value_enum, default_value = "both-roles")]
    convention: ConventionArg,
    /// Store unordered pairs (min, max) serving both orientations.
    #[arg(long)]
    symmetric: bool,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct CleanArgs {
    /// Input table.
    #[arg(long = "in")]
    input: PathBuf,
    /// Confidence level of the bound used to drop candidate false
    /// associations.
    #[arg(long)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "lower")]
    direction: DirectionArg,
    #[arg(long)]
    out: PathBuf,
    /// JSON report of every dropped cell (i, j, count, mu_hat, bound).
    #[arg(long)]
    report: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Sgns,
    Ldr,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    table: PathBuf,
    #[arg(long, value_enum, default_value = "sgns")]
    method: MethodArg,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Negative draws per positive pair (also sets the shift log k).
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Initial learning rate (default 0.025 for sgns, 0.05 for ldr).
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Exponent on marginal counts for negative sampling.
    #[arg(long, default_value_t = 1.0)]
    negative_power: f64,
    /// Lock-free racing workers (sgns); deterministic single worker when
    /// omitted.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    no_shuffle: bool,
    /// LDR sweeps (als) or gradient steps.
    #[arg(long, default_value_t = 100)]
    iterations: usize,
    /// Use alternating least squares for the ldr method.
    #[arg(long)]
    als: bool,
    #[arg(long, default_value_t = 1e-6)]
    ridge: f64,
    #[arg(long)]
    out_z: PathBuf,
    #[arg(long)]
    out_zt: PathBuf,
    /// Optional JSON loss trace.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    emb: PathBuf,
    #[arg(long)]
    table: PathBuf,
    /// Subspace rank on the relatedness side.
    #[arg(long, default_value_t = 32)]
    rank: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(subcommand)]
    task: EvalTaskArg,
}

#[derive(Subcommand)]
enum EvalTaskArg {
    /// Leave-last-out next-item ranking.
    Rec(RecArgs),
    /// Linear softmax classification of items from embedding rows.
    Cls(ClsArgs),
    /// Cart-completion ranking with composed queries.
    Cart(CartArgs),
}

#[derive(Args)]
struct RecArgs {
    #[arg(long)]
    emb: PathBuf,
    #[command(flatten)]
    source: SourceArgs,
    /// Split protocol; leave-last holds out each user's final item.
    #[arg(long, default_value = "leave-last")]
    split: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// Sampled negatives per user; omit to rank the full catalog.
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct ClsArgs {
    #[arg(long)]
    emb: PathBuf,
    /// item_id,label CSV; omit to use planted synthetic classes.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Synthetic spec supplying planted classes when --labels is omitted.
    #[arg(long)]
    synthetic: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    l2: f64,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct CartArgs {
    #[arg(long)]
    emb: PathBuf,
    /// Synthetic spec (JSON) providing the planted class structure.
    #[arg(long)]
    synthetic: PathBuf,
    #[arg(long, default_value_t = 200)]
    carts: usize,
    #[arg(long, default_value_t = 3)]
    in_class: usize,
    #[arg(long, default_value_t = 2)]
    noise: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// Comma-separated strategies: random, recent, oracle, add, attention.
    #[arg(long, value_delimiter = ',', default_values_t = vec![
        "random".to_string(), "recent".to_string(), "oracle".to_string(),
        "add".to_string(), "attention".to_string()
    ])]
    strategies: Vec<String>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct RelationsArgs {
    #[command(subcommand)]
    query: RelationQuery,
}

#[derive(Subcommand)]
enum RelationQuery {
    /// Pick the item whose relatedness profile best explains a product set.
    HigherOrder(HigherOrderArgs),
    /// Analogy completion: rank candidates against row(query) + relation
    /// vector.
    Analogy(AnalogyArgs),
    /// Cluster embedding difference vectors of anchored item pairs.
    Cluster(ClusterArgs),
}

#[derive(Args)]
struct HigherOrderArgs {
    #[arg(long)]
    table: PathBuf,
    /// Product set (dense item ids).
    #[arg(long, value_delimiter = ',', required = true)]
    set: Vec<u32>,
    /// Candidate items; all items outside the set when omitted.
    #[arg(long, value_delimiter = ',')]
    candidates: Option<Vec<u32>>,
    /// Transactions CSV for session-based conditionals of multi-item sets.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', num_args = 4)]
    columns: Option<Vec<String>>,
    #[arg(long, default_value_t = DEFAULT_KL_SMOOTHING)]
    epsilon: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalogyArgs {
    /// Embedding route (cosine ranking).
    #[arg(long, conflicts_with = "table")]
    emb: Option<PathBuf>,
    /// Relatedness-row route (Euclidean ranking).
    #[arg(long)]
    table: Option<PathBuf>,
    /// Relation training pairs as source:target, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pairs: Vec<String>,
    /// Item whose completion is predicted.
    #[arg(long)]
    query: u32,
    #[arg(long, value_delimiter = ',')]
    candidates: Option<Vec<u32>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    emb: PathBuf,
    /// Anchored pairs as anchor:related, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pairs: Vec<String>,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory; repeat for sweeps.
    #[arg(long = "run", required = true)]
    runs: Vec<PathBuf>,
    #[arg(long, value_enum)]
    format: FormatArg,
    /// Output file (json, csv) or directory (plot).
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(err) = execute(cli.command) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Ingest(args) => ingest(args),
        Command::Count(args) => count(args),
        Command::Clean(args) => clean(args),
        Command::Train(args) => train(args),
        Command::Align(args) => align(args),
        Command::Eval(args) => eval(args),
        Command::Relations(args) => relations(args),
        Command::Run(args) => run(args),
        Command::Report(args) => report(args),
    }
}

fn read_json_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn write_json_file<T: serde::Serialize>(path: &Path, value: &T, stage: &str) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::stage(stage, e))?;
    fs::write(path, text).map_err(|e| CliError::stage(stage, format!("{}: {e}", path.display())))
}

fn write_json_or_stdout<T: serde::Serialize>(path: Option<&Path>, value: &T, stage: &str) -> Result<()> {
    match path {
        Some(path) => write_json_file(path, value, stage),
        None => {
            let text = serde_json::to_string_pretty(value).map_err(|e| CliError::stage(stage, e))?;
            println!("{text}");
            Ok(())
        }
    }
}

fn ingest(args: IngestArgs) -> Result<()> {
    let source = args.source.load()?;
    let stream = match args.mechanism {
        MechanismArg::Sequence => sequence_pairs(&source.log, args.window.max(1), args.symmetric),
        MechanismArg::Graph => {
            let graph = build_session_graph(&source.log, source.vocabulary.len());
            random_walk_pairs(
                &graph,
                &WalkConfig {
                    walk_length: args.walk_length,
                    walks_per_node: args.walks_per_node,
                    p: args.p,
                    q: args.q,
                    context_size: args.context_size,
                    seed: args.seed,
                },
            )
            .map_err(|e| CliError::stage("ingest", e))?
        }
    };
    if stream.is_empty() {
        return Err(CliError::stage("ingest", "mechanism produced no pairs"));
    }
    write_pair_stream(&args.out, &stream).map_err(|e| CliError::stage("ingest", e))?;
    if let Some(path) = &args.vocab {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(
            fs::File::create(path).map_err(|e| CliError::stage("ingest", e))?,
        );
        for (id, name) in source.vocabulary.names().enumerate() {
            writeln!(out, "{id}\t{name}\t{}", source.vocabulary.frequency(id as u32))
                .map_err(|e| CliError::stage("ingest", e))?;
        }
    }
    if let Some(path) = &args.labels {
        let model = source.model.as_ref().ok_or_else(|| {
            CliError::Validation("--labels needs the synthetic source (planted classes)".into())
        })?;
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::stage("ingest", e))?;
        w.write_record(["item_id", "label"])
            .map_err(|e| CliError::stage("ingest", e))?;
        for i in 0..model.num_items() as u32 {
            w.write_record([i.to_string(), model.class_of(i).to_string()])
                .map_err(|e| CliError::stage("ingest", e))?;
        }
        w.flush().map_err(|e| CliError::stage("ingest", e))?;
    }
    println!(
        "pairs: {} written to {} ({} suppressed self-pairs)",
        stream.len(),
        args.out.display(),
        stream.suppressed()
    );
    Ok(())
}

fn count(args: CountArgs) -> Result<()> {
    let stream = read_pair_stream(&args.pairs).map_err(CliError::validation)?;
    let num_items = match args.items {
        Some(n) => n,
        None => stream
            .pairs()
            .iter()
            .map(|&(a, b)| a.max(b) as usize + 1)
            .max()
            .unwrap_or(0),
    };
    let threads = effective_threads(args.threads);
    let table = CooccurrenceTable::accumulate_sharded(
        &stream,
        num_items,
        args.convention.into(),
        args.symmetric,
        threads,
    )
    .map_err(|e| CliError::stage("count", e))?;
    write_table(&args.out, &table).map_err(|e| CliError::stage("count", e))?;
    println!(
        "table: {} items, {} cells, n = {} written to {}",
        table.num_items(),
        table.pairs().count(),
        table.n(),
        args.out.display()
    );
    Ok(())
}

fn clean(args: CleanArgs) -> Result<()> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::Validation("alpha must lie in (0, 1)".into()));
    }
    let table = read_table(&args.input).map_err(CliError::validation)?;
    let outcome = filter_false_associations(&table, args.alpha, args.direction.into())
        .map_err(|e| CliError::stage("clean", e))?;
    let dropped: Vec<_> = outcome
        .reports
        .iter()
        .filter(|r| r.verdict == Verdict::Drop)
        .collect();
    let report = serde_json::json!({
        "alpha": args.alpha,
        "direction": InversionDirection::from(args.direction),
        "cells_tested": outcome.reports.len(),
        "cells_dropped": dropped.len(),
        "drop_fraction": outcome.drop_fraction(),
        "dropped": dropped,
    });
    write_table(&args.out, &outcome.table).map_err(|e| CliError::stage("clean", e))?;
    write_json_file(&args.report, &report, "clean")?;
    println!(
        "clean: dropped {} of {} cells ({:.1}%)",
        dropped.len(),
        outcome.reports.len(),
        100.0 * outcome.drop_fraction()
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let table = read_table(&args.table).map_err(CliError::validation)?;
    let (pair, trace) = match args.method {
        MethodArg::Sgns => {
            let stream = read_pair_stream(&args.pairs).map_err(CliError::validation)?;
            let workers = match args.workers {
                None | Some(1) => WorkerMode::Deterministic,
                Some(n) => WorkerMode::Racy(n.min(effective_threads(None))),
            };
            train_sgns(
                &stream,
                &table,
                &SgnsConfig {
                    dim: args.dim,
                    k: args.k,
                    epochs: args.epochs,
                    learning_rate: args.learning_rate.unwrap_or(0.025),
                    negative_power: args.negative_power,
                    seed: args.seed,
                    workers,
                    shuffle: !args.no_shuffle,
                },
            )
            .map_err(|e| CliError::stage("train", e))?
        }
        MethodArg::Ldr => {
            let est = relatedness(&table, 0.0, false).map_err(|e| CliError::stage("train", e))?;
            let weights = FactorizationWeights::from_table(&table, args.k)
                .map_err(|e| CliError::stage("train", e))?;
            train_ldr_with(
                &est,
                &weights,
                &LdrConfig {
                    dim: args.dim,
                    iterations: args.iterations,
                    seed: args.seed,
                    method: if args.als {
                        LdrMethod::AlternatingLeastSquares
                    } else {
                        LdrMethod::GradientDescent
                    },
                    learning_rate: args.learning_rate.unwrap_or(0.05),
                    ridge: args.ridge,
                },
            )
            .map_err(|e| CliError::stage("train", e))?
        }
    };
    write_embedding(&args.out_z, &pair.z).map_err(|e| CliError::stage("train", e))?;
    write_embedding(&args.out_zt, &pair.zt).map_err(|e| CliError::stage("train", e))?;
    if let Some(path) = &args.trace {
        write_json_file(path, &serde_json::json!({ "loss_trace": trace }), "train")?;
    }
    println!(
        "train: {} rows x {} dims written to {} / {}",
        pair.z.rows(),
        pair.z.dim(),
        args.out_z.display(),
        args.out_zt.display()
    );
    Ok(())
}

fn align(args: AlignArgs) -> Result<()> {
    let embedding = read_embedding(&args.emb).map_err(CliError::validation)?;
    let table = read_table(&args.table).map_err(CliError::validation)?;
    let report = align_report(&embedding, &table, args.rank)?;
    write_json_file(&args.out, &report, "align")?;
    println!(
        "align: S = {:.4} over rank {} (normalized {:.4})",
        report.score, report.estimate_rank, report.normalized
    );
    Ok(())
}

fn load_pair_from(path: &Path) -> Result<EmbeddingPair> {
    let z = read_embedding(path).map_err(CliError::validation)?;
    Ok(EmbeddingPair { z: z.clone(), zt: z })
}

fn eval(args: EvalArgs) -> Result<()> {
    match args.task {
        EvalTaskArg::Rec(args) => {
            if args.split != "leave-last" {
                return Err(CliError::Validation(format!(
                    "unknown split {:?}; only leave-last is supported",
                    args.split
                )));
            }
            if args.reps == 0 || args.k == 0 {
                return Err(CliError::Validation("k and reps must be positive".into()));
            }
            let pair = load_pair_from(&args.emb)?;
            let source = args.source.load()?;
            let split = leave_last_split(&source.log);
            let mode = match args.negatives {
                Some(n) => CandidateMode::SampledNegatives(n),
                None => CandidateMode::FullCatalog,
            };
            let mut runs = Vec::with_capacity(args.reps);
            let mut users = 0;
            for rep in 0..args.reps {
                let run = evaluate_recommendation(
                    &split,
                    &pair,
                    mode,
                    args.k,
                    splitmix64(args.seed ^ rep as u64),
                )
                .map_err(|e| CliError::stage("eval", e))?;
                users = run.users_evaluated;
                runs.push(run.metrics);
            }
            let report =
                RankingReport::from_runs(&runs, args.k).map_err(|e| CliError::stage("eval", e))?;
            write_json_file(
                &args.report,
                &serde_json::json!({
                    "task": "recommendation",
                    "split": "leave-last",
                    "users": users,
                    "candidates": match mode {
                        CandidateMode::FullCatalog => "full_catalog".to_string(),
                        CandidateMode::SampledNegatives(n) => format!("sampled_{n}"),
                    },
                    "report": report,
                }),
                "eval",
            )?;
            println!(
                "rec: auc {:.4}, recall@{} {:.4} over {} users",
                report.auc.mean, args.k, report.recall_at_k.mean, users
            );
            Ok(())
        }
        EvalTaskArg::Cls(args) => {
            if args.reps == 0 || args.epochs == 0 {
                return Err(CliError::Validation("epochs and reps must be positive".into()));
            }
            let pair = load_pair_from(&args.emb)?;
            let labels: Vec<u32> = match (&args.labels, &args.synthetic) {
                (Some(path), _) => relana_core::io::read_labels_csv(path, pair.z.rows())
                    .map_err(CliError::validation)?,
                (None, Some(spec_path)) => {
                    let spec: SyntheticSpec = read_json_file(spec_path)?;
                    let data =
                        generate_synthetic(&spec).map_err(|e| CliError::stage("eval", e))?;
                    (0..data.model.num_items() as u32)
                        .map(|i| data.model.class_of(i))
                        .collect()
                }
                (None, None) => {
                    return Err(CliError::Validation(
                        "one of --labels or --synthetic is required".into(),
                    ))
                }
            };
            let mut accuracy = Vec::new();
            let mut micro = Vec::new();
            let mut macro_ = Vec::new();
            for rep in 0..args.reps {
                let report = train_softmax_classifier(
                    &pair.z,
                    &labels,
                    args.l2,
                    args.epochs,
                    args.learning_rate,
                    splitmix64(args.seed ^ rep as u64),
                )
                .map_err(|e| CliError::stage("eval", e))?;
                accuracy.push(report.test_accuracy);
                micro.push(report.test_micro_f1);
                macro_.push(report.test_macro_f1);
            }
            let summary = |values: &[f64]| Summary::from_values(values);
            let micro_summary = summary(&micro);
            write_json_file(
                &args.report,
                &serde_json::json!({
                    "task": "classification",
                    "reps": args.reps,
                    "accuracy": summary(&accuracy),
                    "micro_f1": micro_summary,
                    "macro_f1": summary(&macro_),
                }),
                "eval",
            )?;
            println!("cls: micro-F1 {:.4} over {} reps", micro_summary.mean, args.reps);
            Ok(())
        }
        EvalTaskArg::Cart(args) => {
            if args.reps == 0 || args.k == 0 || args.carts == 0 || args.in_class == 0 {
                return Err(CliError::Validation(
                    "carts, in_class, k, and reps must be positive".into(),
                ));
            }
            let pair = load_pair_from(&args.emb)?;
            let spec: SyntheticSpec = read_json_file(&args.synthetic)?;
            let data = generate_synthetic(&spec).map_err(|e| CliError::stage("eval", e))?;
            let strategies: Vec<StrategyName> = args
                .strategies
                .iter()
                .map(|name| match name.as_str() {
                    "random" => Ok(StrategyName::Random),
                    "recent" => Ok(StrategyName::Recent),
                    "oracle" => Ok(StrategyName::Oracle),
                    "add" => Ok(StrategyName::Add),
                    "attention" => Ok(StrategyName::Attention),
                    other => Err(CliError::Validation(format!("unknown strategy {other:?}"))),
                })
                .collect::<Result<_>>()?;
            let mut outcomes = Vec::new();
            for strategy_name in &strategies {
                let mut metrics = Vec::new();
                for rep in 0..args.reps {
                    let rep_seed = splitmix64(args.seed ^ rep as u64);
                    let snapshots = generate_cart_snapshots(
                        &data.model,
                        &CartGenSpec {
                            carts: args.carts,
                            in_class_items: args.in_class,
                            noise_items: args.noise,
                            seed: rep_seed,
                        },
                    )
                    .map_err(|e| CliError::stage("eval", e))?;
                    let strategy = match strategy_name {
                        StrategyName::Random => CartStrategy::Random {
                            seed: splitmix64(rep_seed ^ 0x5a5a),
                        },
                        StrategyName::Recent => CartStrategy::Recent,
                        StrategyName::Oracle => CartStrategy::Oracle,
                        StrategyName::Add => CartStrategy::Add,
                        StrategyName::Attention => CartStrategy::Attention,
                    };
                    metrics.push(
                        evaluate_cart_strategy(&snapshots, &pair, strategy, args.k)
                            .map_err(|e| CliError::stage("eval", e))?,
                    );
                }
                outcomes.push(serde_json::json!({
                    "strategy": strategy_name.as_str(),
                    "report": RankingReport::from_runs(&metrics, args.k)
                        .map_err(|e| CliError::stage("eval", e))?,
                }));
            }
            write_json_file(
                &args.report,
                &serde_json::json!({
                    "task": "cart",
                    "k": args.k,
                    "reps": args.reps,
                    "strategies": outcomes,
                }),
                "eval",
            )?;
            println!("cart: {} strategies over {} reps", strategies.len(), args.reps);
            Ok(())
        }
    }
}

fn parse_pairs(specs: &[String]) -> Result<Vec<(u32, u32)>> {
    specs
        .iter()
        .map(|spec| {
            let (a, b) = spec.split_once(':').ok_or_else(|| {
                CliError::Validation(format!("pair {spec:?} must be formatted as a:b"))
            })?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<u32>()
                    .map_err(|e| CliError::Validation(format!("pair {spec:?}: {e}")))
            };
            Ok((parse(a)?, parse(b)?))
        })
        .collect()
}

fn relations(args: RelationsArgs) -> Result<()> {
    match args.query {
        RelationQuery::HigherOrder(args) => {
            let table = read_table(&args.table).map_err(CliError::validation)?;
            let set = ProductSet::new(args.set.clone()).map_err(CliError::validation)?;
            let candidates = match &args.candidates {
                Some(c) => c.clone(),
                None => all_items(table.num_items())
                    .into_iter()
                    .filter(|i| !args.set.contains(i))
                    .collect(),
            };
            let cond = match &args.input {
                None => conditional_from_table(&set, &table).map_err(|e| {
                    CliError::Validation(format!(
                        "table conditionals support only singleton sets ({e}); \
                         pass --input for session-based conditionals"
                    ))
                })?,
                Some(path) => {
                    let schema = match &args.columns {
                        None => CsvSchema::instacart(),
                        Some(cols) => CsvSchema {
                            session: cols[0].clone(),
                            user: cols[1].clone(),
                            item: cols[2].clone(),
                            position: cols[3].clone(),
                        },
                    };
                    let (_, log) = ingest_transactions(path, &schema)
                        .map_err(|e| CliError::stage("relations", e))?;
                    conditional_from_sessions(&set, &log, table.num_items(), true)
                        .map_err(|e| CliError::stage("relations", e))?
                }
            };
            let est = relatedness(&table, 0.0, false).map_err(|e| CliError::stage("relations", e))?;
            let (by_rel, rel_scores) = higher_order_by_relatedness(&set, &est, &cond, &candidates)
                .map_err(|e| CliError::stage("relations", e))?;
            let (by_kl, kl_scores) =
                higher_order_by_kl(&set, &cond, &table, &candidates, args.epsilon)
                    .map_err(|e| CliError::stage("relations", e))?;
            write_json_or_stdout(
                args.out.as_deref(),
                &serde_json::json!({
                    "set": args.set,
                    "candidates": candidates,
                    "relatedness_pick": by_rel,
                    "kl_pick": by_kl,
                    "agree": by_rel == by_kl,
                    "relatedness_scores": rel_scores,
                    "kl_scores": kl_scores,
                }),
                "relations",
            )
        }
        RelationQuery::Analogy(args) => {
            let pairs = parse_pairs(&args.pairs)?;
            let rel = RelationSet::new(pairs).map_err(CliError::validation)?;
            let (est, pair);
            let source = match (&args.emb, &args.table) {
                (Some(path), None) => {
                    pair = load_pair_from(path)?;
                    RowSource::Embedding(&pair)
                }
                (None, Some(path)) => {
                    let table = read_table(path).map_err(CliError::validation)?;
                    est = relatedness(&table, 0.0, false)
                        .map_err(|e| CliError::stage("relations", e))?;
                    RowSource::Estimate(&est)
                }
                _ => {
                    return Err(CliError::Validation(
                        "exactly one of --emb or --table is required".into(),
                    ))
                }
            };
            let num_items = match source {
                RowSource::Embedding(p) => p.z.rows(),
                RowSource::Estimate(e) => e.num_items(),
            };
            let exclude: BTreeSet<u32> = std::iter::once(args.query)
                .chain(rel.pairs().iter().flat_map(|&(a, b)| [a, b]))
                .collect();
            let candidates = match &args.candidates {
                Some(c) => c.clone(),
                None => all_items(num_items)
                    .into_iter()
                    .filter(|i| !exclude.contains(i))
                    .collect(),
            };
            let z_r = relation_vector(&rel, source).map_err(|e| CliError::stage("relations", e))?;
            let outcome = analogy_predict(args.query, &z_r, source, &candidates)
                .map_err(|e| CliError::stage("relations", e))?;
            write_json_or_stdout(
                args.out.as_deref(),
                &serde_json::json!({
                    "query": args.query,
                    "ranked": outcome.ranked,
                    "residual_norm": outcome.residual.iter().map(|v| v * v).sum::<f64>().sqrt(),
                }),
                "relations",
            )
        }
        RelationQuery::Cluster(args) => {
            let pairs = parse_pairs(&args.pairs)?;
            let pair = load_pair_from(&args.emb)?;
            let outcome = kmeans_diffs(&pairs, &pair, args.k, args.seed, args.max_iter)
                .map_err(|e| CliError::stage("relations", e))?;
            write_json_or_stdout(
                args.out.as_deref(),
                &serde_json::json!({
                    "assignments": outcome.assignments,
                    "objective": outcome.objective,
                    "iterations": outcome.iterations,
                }),
                "relations",
            )
        }
    }
}

fn run(args: RunArgs) -> Result<()> {
    let config = PipelineConfig::load(&args.config)?;
    let manifest = relana_cli::run_pipeline(&config)?;
    println!(
        "run: {} stages complete, manifest at {}",
        manifest.stages.len(),
        config.output_dir.join("manifest.json").display()
    );
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let format = match args.format {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Plot => ReportFormat::Plot,
    };
    let written = relana_cli::emit_report(&args.runs, format, &args.out)?;
    for path in written {
        println!("report: {}", path.display());
    }
    Ok(())
}
