//! Product relatedness from co-occurrence counts, finite-sample confidence
//! filtering of spurious pairs, skip-gram embeddings that compress the
//! relatedness measure, and the diagnostics and evaluation tasks built on top.
//!
//! The pipeline reads interaction data (transactions, session graphs, or a
//! synthetic planted-class model), counts co-occurring item pairs, estimates
//! the log relatedness `R = log(n * N_ij / (N_i * N_j))`, optionally drops
//! pairs whose confidence lower bound cannot rule out independence, trains
//! embeddings whose inner products approximate the shifted relatedness, and
//! evaluates them on recommendation, classification, and cart-completion
//! tasks.

pub mod catalog;
pub mod confidence;
pub mod cooccur;
pub mod embed;
pub mod evaluation;
pub mod io;
pub mod relations;
pub mod spectral;
