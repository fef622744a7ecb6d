//! Pipeline configuration: a single JSON document that pins the data
//! source, pair-generation mechanism, counting convention, optional
//! confidence filter, training method, diagnostics, and evaluation tasks.
//!
//! Every random choice in a run flows from `seeds.master` through a named
//! per-stage sub-stream, so a config file fully determines the outputs in
//! deterministic mode. `output_dir` and `threads` are execution parameters,
//! not part of the experiment identity, and are excluded from the config
//! hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use relana_core::catalog::{CsvSchema, SyntheticSpec};
use relana_core::confidence::InversionDirection;
use relana_core::cooccur::RoleConvention;
use relana_core::embed::WorkerMode;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataConfig,
    pub mechanism: MechanismConfig,
    #[serde(default)]
    pub count: CountConfig,
    #[serde(default)]
    pub filter: Option<FilterConfig>,
    pub training: TrainingConfig,
    #[serde(default)]
    pub align: Option<AlignConfig>,
    #[serde(default)]
    pub eval: Vec<EvalTask>,
    pub seeds: Seeds,
    pub output_dir: PathBuf,
    /// Upper bound on worker threads; the `RELANA_THREADS` environment
    /// variable caps it further at run time.
    #[serde(default)]
    pub threads: Option<usize>,
}

/// Where the interactions come from.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Planted-class generator with known ground truth. Its seed is derived
    /// from `seeds.master`, which is why the block carries none itself.
    Synthetic(SyntheticDataConfig),
    /// Transactions CSV with named columns.
    Transactions {
        path: PathBuf,
        #[serde(default)]
        schema: SchemaConfig,
    },
}

/// Mirror of the synthetic generator parameters minus the seed.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDataConfig {
    pub num_items: u32,
    pub num_classes: u32,
    pub within_prob: f64,
    pub cross_prob: f64,
    pub num_records: u64,
    #[serde(default)]
    pub planted_independent: Vec<(u32, u32)>,
    #[serde(default = "default_pairs_per_user")]
    pub pairs_per_user: u32,
}

fn default_pairs_per_user() -> u32 {
    1
}

impl SyntheticDataConfig {
    pub fn to_spec(&self, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            num_items: self.num_items,
            num_classes: self.num_classes,
            within_prob: self.within_prob,
            cross_prob: self.cross_prob,
            num_records: self.num_records,
            planted_independent: self.planted_independent.clone(),
            pairs_per_user: self.pairs_per_user,
            seed,
        }
    }
}

/// Column naming for transactions files; `instacart` is the common preset.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SchemaConfig {
    Instacart,
    Columns {
        session: String,
        user: String,
        item: String,
        position: String,
    },
}

impl Default for SchemaConfig {
    fn default() -> Self {
        SchemaConfig::Instacart
    }
}

impl SchemaConfig {
    pub fn to_schema(&self) -> CsvSchema {
        match self {
            SchemaConfig::Instacart => CsvSchema::instacart(),
            SchemaConfig::Columns {
                session,
                user,
                item,
                position,
            } => CsvSchema {
                session: session.clone(),
                user: user.clone(),
                item: item.clone(),
                position: position.clone(),
            },
        }
    }
}

/// How (center, context) pairs are generated from the log.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MechanismConfig {
    /// Windowed pairs over each user's purchase sequence.
    Sequence {
        #[serde(default = "default_window")]
        window: usize,
        #[serde(default)]
        symmetric: bool,
    },
    /// Second-order biased random walks over the session co-purchase graph.
    Graph {
        #[serde(default = "default_walk_length")]
        walk_length: usize,
        #[serde(default = "default_walks_per_node")]
        walks_per_node: usize,
        #[serde(default = "default_bias")]
        p: f64,
        #[serde(default = "default_bias")]
        q: f64,
        #[serde(default = "default_window")]
        context_size: usize,
    },
}

fn default_window() -> usize {
    5
}
fn default_walk_length() -> usize {
    10
}
fn default_walks_per_node() -> usize {
    5
}
fn default_bias() -> f64 {
    1.0
}

/// Counting convention for the co-occurrence table.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CountConfig {
    pub convention: RoleConvention,
    pub symmetric: bool,
}

impl Default for CountConfig {
    fn default() -> Self {
        // Both-roles marginals guarantee every item referenced by a stored
        // pair keeps a positive count, even after confidence filtering;
        // center-only is for directed studies.
        Self {
            convention: RoleConvention::BothRoles,
            symmetric: false,
        }
    }
}

/// Confidence filter: pairs whose relatedness bound at level `alpha` cannot
/// rule out independence are dropped from the stream before training.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub alpha: f64,
    #[serde(default = "default_direction")]
    pub direction: InversionDirection,
}

fn default_direction() -> InversionDirection {
    InversionDirection::Lower
}

/// Embedding trainer selection with per-method hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrainingConfig {
    Sgns {
        dim: usize,
        #[serde(default = "default_k")]
        k: usize,
        #[serde(default = "default_epochs")]
        epochs: usize,
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
        #[serde(default = "default_negative_power")]
        negative_power: f64,
        #[serde(default)]
        workers: WorkerMode,
        #[serde(default = "default_true")]
        shuffle: bool,
    },
    Ldr {
        dim: usize,
        #[serde(default = "default_k")]
        k: usize,
        #[serde(default = "default_iterations")]
        iterations: usize,
        /// Alternating least squares (monotone) instead of gradient descent.
        #[serde(default)]
        als: bool,
        #[serde(default = "default_learning_rate_ldr")]
        learning_rate: f64,
        #[serde(default = "default_ridge")]
        ridge: f64,
    },
}

fn default_k() -> usize {
    5
}
fn default_epochs() -> usize {
    5
}
fn default_learning_rate() -> f64 {
    0.025
}
fn default_learning_rate_ldr() -> f64 {
    0.05
}
fn default_negative_power() -> f64 {
    1.0
}
fn default_iterations() -> usize {
    100
}
fn default_ridge() -> f64 {
    1e-6
}
fn default_true() -> bool {
    true
}

impl TrainingConfig {
    pub fn dim(&self) -> usize {
        match self {
            TrainingConfig::Sgns { dim, .. } | TrainingConfig::Ldr { dim, .. } => *dim,
        }
    }

    pub fn negatives_per_positive(&self) -> usize {
        match self {
            TrainingConfig::Sgns { k, .. } | TrainingConfig::Ldr { k, .. } => *k,
        }
    }
}

/// Spectral alignment diagnostic between the trained embedding and the
/// relatedness estimate.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AlignConfig {
    pub rank: usize,
}

/// Downstream evaluation tasks run on the trained embedding.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "task", rename_all = "snake_case", deny_unknown_fields)]
pub enum EvalTask {
    /// Leave-last-out next-item ranking.
    Recommendation {
        #[serde(default = "default_eval_k")]
        k: usize,
        #[serde(default = "default_reps")]
        reps: usize,
        /// Sampled negatives per user; omit for the full catalog.
        #[serde(default)]
        negatives: Option<usize>,
    },
    /// Linear softmax item classification on embedding rows.
    Classification {
        /// `item_id,label` CSV; synthetic runs may omit it and use the
        /// planted classes.
        #[serde(default)]
        labels: Option<PathBuf>,
        #[serde(default = "default_l2")]
        l2: f64,
        #[serde(default = "default_cls_epochs")]
        epochs: usize,
        #[serde(default = "default_cls_lr")]
        learning_rate: f64,
        #[serde(default = "default_reps")]
        reps: usize,
    },
    /// Cart-completion ranking with composed queries (synthetic only).
    Cart {
        #[serde(default = "default_carts")]
        carts: usize,
        #[serde(default = "default_in_class")]
        in_class_items: usize,
        #[serde(default = "default_noise")]
        noise_items: usize,
        #[serde(default = "default_eval_k")]
        k: usize,
        #[serde(default = "default_reps")]
        reps: usize,
        #[serde(default = "all_strategies")]
        strategies: Vec<StrategyName>,
    },
}

fn default_eval_k() -> usize {
    10
}
fn default_reps() -> usize {
    1
}
fn default_l2() -> f64 {
    1e-3
}
fn default_cls_epochs() -> usize {
    200
}
fn default_cls_lr() -> f64 {
    0.5
}
fn default_carts() -> usize {
    200
}
fn default_in_class() -> usize {
    3
}
fn default_noise() -> usize {
    2
}
fn all_strategies() -> Vec<StrategyName> {
    vec![
        StrategyName::Random,
        StrategyName::Recent,
        StrategyName::Oracle,
        StrategyName::Add,
        StrategyName::Attention,
    ]
}

/// Cart query composition strategies by name; the random strategy draws its
/// seed from the eval stage stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    Random,
    Recent,
    Oracle,
    Add,
    Attention,
}

impl StrategyName {
    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyName::Random => "random",
            StrategyName::Recent => "recent",
            StrategyName::Oracle => "oracle",
            StrategyName::Add => "add",
            StrategyName::Attention => "attention",
        }
    }
}

/// Master seed from which every stage derives a named sub-stream.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub master: u64,
}

impl Seeds {
    /// Stable per-stage stream: FNV-1a over the stage name mixed into the
    /// master seed.
    pub fn stage(&self, name: &str) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in name.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        splitmix64(self.master ^ h)
    }
}

/// Stateless seed mixer used to derive independent sub-streams.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(CliError::validation)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// SHA-256 of the canonical JSON with execution parameters (`output_dir`,
    /// `threads`) neutralized, so the hash identifies the experiment rather
    /// than where or how wide it ran.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        canonical.threads = None;
        let text = serde_json::to_string(&canonical).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        hex::encode(hasher.finalize())
    }

    /// Checks everything checkable without touching the data: value ranges,
    /// task/source compatibility, and that every referenced path resolves.
    /// Runs before any stage.
    pub fn validate(&self) -> Result<()> {
        match &self.data {
            DataConfig::Synthetic(s) => {
                if s.num_items < 2 {
                    return Err(CliError::Validation("synthetic num_items must be at least 2".into()));
                }
                if s.num_classes == 0 || s.num_classes > s.num_items {
                    return Err(CliError::Validation(
                        "synthetic num_classes must be in [1, num_items]".into(),
                    ));
                }
                for (name, p) in [("within_prob", s.within_prob), ("cross_prob", s.cross_prob)] {
                    if !(p > 0.0 && p < 1.0) {
                        return Err(CliError::Validation(format!("synthetic {name} must lie in (0, 1)")));
                    }
                }
                if s.within_prob <= s.cross_prob {
                    return Err(CliError::Validation(
                        "synthetic within_prob must exceed cross_prob".into(),
                    ));
                }
                if s.num_records == 0 {
                    return Err(CliError::Validation("synthetic num_records must be positive".into()));
                }
                if s.pairs_per_user == 0 {
                    return Err(CliError::Validation("synthetic pairs_per_user must be positive".into()));
                }
            }
            DataConfig::Transactions { path, .. } => {
                if !path.is_file() {
                    return Err(CliError::Validation(format!(
                        "transactions path {} does not exist",
                        path.display()
                    )));
                }
            }
        }
        match &self.mechanism {
            MechanismConfig::Sequence { window, .. } => {
                if *window == 0 {
                    return Err(CliError::Validation("sequence window must be at least 1".into()));
                }
            }
            MechanismConfig::Graph {
                walk_length,
                walks_per_node,
                p,
                q,
                context_size,
            } => {
                if *walk_length < 2 {
                    return Err(CliError::Validation("walk_length must be at least 2".into()));
                }
                if *walks_per_node == 0 || *context_size == 0 {
                    return Err(CliError::Validation(
                        "walks_per_node and context_size must be positive".into(),
                    ));
                }
                if !(*p > 0.0) || !(*q > 0.0) {
                    return Err(CliError::Validation("walk biases p and q must be positive".into()));
                }
            }
        }
        if let Some(f) = &self.filter {
            if !(f.alpha > 0.0 && f.alpha < 1.0) {
                return Err(CliError::Validation("filter alpha must lie in (0, 1)".into()));
            }
        }
        match &self.training {
            TrainingConfig::Sgns {
                dim,
                k,
                epochs,
                learning_rate,
                negative_power,
                ..
            } => {
                if *dim == 0 || *k == 0 || *epochs == 0 {
                    return Err(CliError::Validation(
                        "sgns dim, k, and epochs must be positive".into(),
                    ));
                }
                if !(*learning_rate > 0.0) || !negative_power.is_finite() {
                    return Err(CliError::Validation("sgns learning_rate must be positive".into()));
                }
            }
            TrainingConfig::Ldr {
                dim,
                k,
                iterations,
                learning_rate,
                ridge,
                ..
            } => {
                if *dim == 0 || *k == 0 || *iterations == 0 {
                    return Err(CliError::Validation(
                        "ldr dim, k, and iterations must be positive".into(),
                    ));
                }
                if !(*learning_rate > 0.0) || !(*ridge >= 0.0) {
                    return Err(CliError::Validation(
                        "ldr learning_rate must be positive and ridge non-negative".into(),
                    ));
                }
            }
        }
        if let Some(a) = &self.align {
            if a.rank == 0 {
                return Err(CliError::Validation("align rank must be at least 1".into()));
            }
        }
        for task in &self.eval {
            match task {
                EvalTask::Recommendation { k, reps, negatives } => {
                    if *k == 0 || *reps == 0 {
                        return Err(CliError::Validation(
                            "recommendation k and reps must be positive".into(),
                        ));
                    }
                    if negatives == &Some(0) {
                        return Err(CliError::Validation(
                            "recommendation negatives must be positive when given".into(),
                        ));
                    }
                }
                EvalTask::Classification {
                    labels,
                    l2,
                    epochs,
                    learning_rate,
                    reps,
                } => {
                    if *epochs == 0 || *reps == 0 {
                        return Err(CliError::Validation(
                            "classification epochs and reps must be positive".into(),
                        ));
                    }
                    if !(*l2 >= 0.0) || !(*learning_rate > 0.0) {
                        return Err(CliError::Validation(
                            "classification l2 must be non-negative and learning_rate positive".into(),
                        ));
                    }
                    match (labels, &self.data) {
                        (Some(path), _) if !path.is_file() => {
                            return Err(CliError::Validation(format!(
                                "labels path {} does not exist",
                                path.display()
                            )));
                        }
                        (None, DataConfig::Transactions { .. }) => {
                            return Err(CliError::Validation(
                                "classification over transactions needs a labels file".into(),
                            ));
                        }
                        _ => {}
                    }
                }
                EvalTask::Cart {
                    carts,
                    in_class_items,
                    noise_items: _,
                    k,
                    reps,
                    strategies,
                } => {
                    if *carts == 0 || *in_class_items == 0 || *k == 0 || *reps == 0 {
                        return Err(CliError::Validation(
                            "cart carts, in_class_items, k, and reps must be positive".into(),
                        ));
                    }
                    if strategies.is_empty() {
                        return Err(CliError::Validation("cart strategies must not be empty".into()));
                    }
                    if !matches!(self.data, DataConfig::Synthetic(_)) {
                        return Err(CliError::Validation(
                            "cart evaluation needs the synthetic data source".into(),
                        ));
                    }
                }
            }
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(CliError::Validation("output_dir must not be empty".into()));
        }
        Ok(())
    }
}

/// Worker budget: the config bound (default: all cores) capped by the
/// `RELANA_THREADS` environment variable.
pub fn effective_threads(config_threads: Option<usize>) -> usize {
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let mut threads = config_threads.unwrap_or(available).max(1);
    if let Ok(value) = std::env::var("RELANA_THREADS") {
        if let Ok(cap) = value.parse::<usize>() {
            threads = threads.min(cap.max(1));
        }
    }
    threads
}
