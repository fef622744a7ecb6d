//! Interaction data: vocabularies, per-user logs, pair-stream generation
//! mechanisms (sequence windows, session graphs with biased random walks),
//! and a synthetic planted-class generator with analytic ground truth.

mod ingest;
mod synthetic;
mod walks;

pub use ingest::{ingest_transactions, CsvSchema};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticModel, SyntheticSpec, TruthMatrix};
pub(crate) use walks::splitmix64;
pub use walks::{random_walk_pairs, WalkConfig};

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("column {0:?} not found in CSV header")]
    UnknownColumn(String),
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("input contains no records")]
    EmptyInput,
    #[error("duplicate position {position} in session {session} of user {user}")]
    DuplicatePosition {
        user: u32,
        session: u32,
        position: u32,
    },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("graph has no nodes")]
    EmptyGraph,
}

/// Bijection between external item identifiers and dense u32 ids, with
/// per-item occurrence counts.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    items: Vec<String>,
    index: HashMap<String, u32>,
    frequency: Vec<u64>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id for `name`, interning it at frequency zero if new.
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.items.len() as u32;
        self.items.push(name.to_string());
        self.index.insert(name.to_string(), id);
        self.frequency.push(0);
        id
    }

    pub fn record_occurrence(&mut self, id: u32) {
        self.frequency[id as usize] += 1;
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.items[id as usize]
    }

    pub fn frequency(&self, id: u32) -> u64 {
        self.frequency[id as usize]
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|s| s.as_str())
    }
}

/// One (user, session, item, position) record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interaction {
    pub user: u32,
    pub session: u32,
    pub item: u32,
    pub position: u32,
}

/// Interaction records ordered chronologically per user.
///
/// Session ids must be assigned in chronological order (first appearance);
/// records are sorted by (user, session, position) and positions must be
/// unique within a session.
#[derive(Debug, Clone, Default)]
pub struct InteractionLog {
    records: Vec<Interaction>,
    user_spans: Vec<(u32, usize, usize)>,
}

impl InteractionLog {
    pub fn new(mut records: Vec<Interaction>) -> Result<Self, CatalogError> {
        records.sort_by_key(|r| (r.user, r.session, r.position));
        for pair in records.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if a.user == b.user && a.session == b.session && a.position == b.position {
                return Err(CatalogError::DuplicatePosition {
                    user: a.user,
                    session: a.session,
                    position: a.position,
                });
            }
        }
        let mut user_spans = Vec::new();
        let mut start = 0;
        for i in 1..=records.len() {
            if i == records.len() || records[i].user != records[start].user {
                user_spans.push((records[start].user, start, i));
                start = i;
            }
        }
        Ok(Self {
            records,
            user_spans,
        })
    }

    pub fn records(&self) -> &[Interaction] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_users(&self) -> usize {
        self.user_spans.len()
    }

    /// Per-user record slices, each chronologically ordered.
    pub fn users(&self) -> impl Iterator<Item = (u32, &[Interaction])> {
        self.user_spans
            .iter()
            .map(move |&(user, a, b)| (user, &self.records[a..b]))
    }

    /// Per-session record slices in (user, session) order.
    pub fn sessions(&self) -> impl Iterator<Item = &[Interaction]> {
        SessionIter {
            records: &self.records,
            pos: 0,
        }
    }
}

struct SessionIter<'a> {
    records: &'a [Interaction],
    pos: usize,
}

impl<'a> Iterator for SessionIter<'a> {
    type Item = &'a [Interaction];

    fn next(&mut self) -> Option<&'a [Interaction]> {
        if self.pos >= self.records.len() {
            return None;
        }
        let start = self.pos;
        let head = self.records[start];
        let mut end = start + 1;
        while end < self.records.len()
            && self.records[end].user == head.user
            && self.records[end].session == head.session
        {
            end += 1;
        }
        self.pos = end;
        Some(&self.records[start..end])
    }
}

/// How a pair stream was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Provenance {
    SequenceWindow,
    RandomWalk,
    Synthetic,
    External,
}

/// Finite stream of (center, context) item pairs with center != context.
#[derive(Debug, Clone)]
pub struct PairStream {
    pairs: Vec<(u32, u32)>,
    provenance: Provenance,
    suppressed: u64,
}

impl PairStream {
    pub fn new(pairs: Vec<(u32, u32)>, provenance: Provenance, suppressed: u64) -> Self {
        debug_assert!(pairs.iter().all(|&(c, x)| c != x));
        Self {
            pairs,
            provenance,
            suppressed,
        }
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Number of self-pairs suppressed while generating the stream.
    pub fn suppressed(&self) -> u64 {
        self.suppressed
    }

    /// Copy of the stream without the pairs in `drop`, which is keyed the
    /// way the co-occurrence table that produced it was keyed: unordered
    /// membership is checked via both orientations.
    pub fn without_pairs(&self, drop: &std::collections::HashSet<(u32, u32)>) -> Self {
        let pairs = self
            .pairs
            .iter()
            .copied()
            .filter(|&(c, x)| !drop.contains(&(c, x)) && !drop.contains(&(x, c)))
            .collect();
        Self {
            pairs,
            provenance: self.provenance,
            suppressed: self.suppressed,
        }
    }
}

/// Emits (item_t, item_{t-m}) for m = 1..=window over each user's
/// chronological item sequence; with `symmetric` the reversed pair is
/// emitted as well. Self-pairs are suppressed and counted.
pub fn sequence_pairs(log: &InteractionLog, window: usize, symmetric: bool) -> PairStream {
    let mut pairs = Vec::new();
    let mut suppressed = 0u64;
    for (_, records) in log.users() {
        for t in 0..records.len() {
            let center = records[t].item;
            for m in 1..=window.min(t) {
                let context = records[t - m].item;
                if center == context {
                    suppressed += if symmetric { 2 } else { 1 };
                    continue;
                }
                pairs.push((center, context));
                if symmetric {
                    pairs.push((context, center));
                }
            }
        }
    }
    PairStream::new(pairs, Provenance::SequenceWindow, suppressed)
}

/// Undirected item graph without self-loops; adjacency lists are sorted by
/// neighbor id and weights count the sessions in which both endpoints occur.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    adjacency: Vec<Vec<(u32, u64)>>,
}

impl WeightedGraph {
    pub fn from_edges(num_nodes: usize, edges: &HashMap<(u32, u32), u64>) -> Self {
        let mut adjacency = vec![Vec::new(); num_nodes];
        for (&(a, b), &w) in edges {
            debug_assert!(a < b);
            adjacency[a as usize].push((b, w));
            adjacency[b as usize].push((a, w));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Self { adjacency }
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, node: u32) -> &[(u32, u64)] {
        &self.adjacency[node as usize]
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        self.adjacency[a as usize]
            .binary_search_by_key(&b, |&(n, _)| n)
            .is_ok()
    }

    pub fn edge_weight(&self, a: u32, b: u32) -> Option<u64> {
        self.adjacency[a as usize]
            .binary_search_by_key(&b, |&(n, _)| n)
            .ok()
            .map(|idx| self.adjacency[a as usize][idx].1)
    }
}

/// Builds the co-purchase graph: edge weight is the number of sessions
/// containing both items, counted once per session per unordered pair.
pub fn build_session_graph(log: &InteractionLog, num_items: usize) -> WeightedGraph {
    let mut edges: HashMap<(u32, u32), u64> = HashMap::new();
    let mut items = Vec::new();
    for session in log.sessions() {
        items.clear();
        items.extend(session.iter().map(|r| r.item));
        items.sort_unstable();
        items.dedup();
        for (idx, &a) in items.iter().enumerate() {
            for &b in &items[idx + 1..] {
                *edges.entry((a, b)).or_insert(0) += 1;
            }
        }
    }
    WeightedGraph::from_edges(num_items, &edges)
}
