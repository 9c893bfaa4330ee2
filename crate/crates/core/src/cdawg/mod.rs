//! Compacted directed acyclic word graphs over a token corpus.
//!
//! A [`Cdawg`] recognizes exactly the substrings of the corpus it was built
//! from. Edges are labeled by spans into the corpus token array, nodes carry
//! the length of the longest string ending at them, a failure (suffix) link,
//! and the number of occurrences of the strings ending at them.
//!
//! Construction appends one reserved end-of-corpus sentinel (id
//! `vocab_size`) so that every suffix ends at the single sink node. Queries
//! never contain the sentinel, so it is invisible in results.

mod build;
mod cursor;
mod disk;
mod format;
mod pages;
mod ram;

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, Token, TokenWidth};

pub use build::CdawgBuilder;
pub use cursor::{ProfileStep, QueryCursor, SuffixProfile, TransitionSteps};
pub use format::{stored_checksum, HandleWidth, SaveOptions, FORMAT_VERSION, MAGIC};

use disk::DiskGraph;
use ram::RamGraph;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("version mismatch: {0}")]
    VersionMismatch(String),
    #[error("truncated index file: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("checksum failure: header records {stored:#018x}, contents hash to {computed:#018x}")]
    ChecksumMismatch { stored: u64, computed: u64 },
    #[error("invalid index header: {0}")]
    InvalidHeader(String),
    #[error("{what} capacity of the {bits}-bit handle width exceeded")]
    CapacityExceeded { what: &'static str, bits: u32 },
    #[error("occurrence counts have not been populated")]
    CountsNotPopulated,
    #[error("disk-backed indexes are read-only")]
    ReadOnly,
    #[error("suffix count profile requires a non-empty match")]
    EmptyMatch,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Where a loaded index lives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Backend {
    /// Fully deserialized into memory.
    Ram,
    /// Memory-mapped; records are decoded on access.
    Disk,
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ram" => Ok(Backend::Ram),
            "disk" => Ok(Backend::Disk),
            other => Err(format!("unknown backend {other:?} (expected ram or disk)")),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Ram => "ram",
            Backend::Disk => "disk",
        })
    }
}

/// Handle of a node inside one index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) u32);

impl NodeId {
    pub const SOURCE: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Half-open range `[alpha, omega)` of corpus positions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Span {
    pub alpha: u64,
    pub omega: u64,
}

impl Span {
    pub fn new(alpha: u64, omega: u64) -> Self {
        debug_assert!(alpha <= omega);
        Span { alpha, omega }
    }

    pub fn len(&self) -> u64 {
        self.omega - self.alpha
    }

    pub fn is_empty(&self) -> bool {
        self.alpha == self.omega
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeRecord {
    pub first: Token,
    pub span: Span,
    pub target: NodeId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeRecord {
    pub max_length: u64,
    pub failure: Option<NodeId>,
    pub count: u64,
}

/// Read access shared by the RAM and disk representations.
pub(crate) trait GraphView {
    fn n_states(&self) -> usize;
    fn n_edges(&self) -> usize;
    /// Corpus length excluding the sentinel.
    fn corpus_len(&self) -> u64;
    fn separator(&self) -> Token;
    fn vocab_size(&self) -> u32;
    fn token(&self, pos: u64) -> Token;
    fn max_length(&self, node: NodeId) -> u64;
    fn failure(&self, node: NodeId) -> Option<NodeId>;
    fn count(&self, node: NodeId) -> u64;
    fn out_degree(&self, node: NodeId) -> usize;
    /// The `i`-th outgoing edge in first-token order.
    fn edge_at(&self, node: NodeId, i: usize) -> EdgeRecord;
    fn edge(&self, node: NodeId, first: Token) -> Option<EdgeRecord>;
}

enum Repr {
    Ram(RamGraph),
    Disk(DiskGraph),
}

macro_rules! with_graph {
    ($self:expr, $g:ident => $body:expr) => {
        match &$self.repr {
            $crate::cdawg::Repr::Ram($g) => $body,
            $crate::cdawg::Repr::Disk($g) => $body,
        }
    };
}
pub(crate) use with_graph;

/// A finalized, immutable CDAWG index.
pub struct Cdawg {
    repr: Repr,
    counts_populated: bool,
}

/// Size figures of an index; byte figures describe the serialized form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub corpus_tokens: u64,
    pub n_states: u64,
    pub n_edges: u64,
    pub bytes_total: u64,
    pub bytes_per_corpus_token: f64,
}

impl IndexStats {
    pub fn states_per_token(&self) -> f64 {
        self.n_states as f64 / self.corpus_tokens as f64
    }

    pub fn edges_per_token(&self) -> f64 {
        self.n_edges as f64 / self.corpus_tokens as f64
    }
}

/// Builds the index over `corpus` and populates occurrence counts.
pub fn build_cdawg(corpus: &Corpus) -> Result<Cdawg, IndexError> {
    let mut cdawg = CdawgBuilder::from_corpus(corpus)?.finish()?;
    cdawg.populate_counts()?;
    Ok(cdawg)
}

pub fn save_index(cdawg: &Cdawg, path: &Path) -> Result<u64, IndexError> {
    cdawg.save(path, SaveOptions::default())
}

pub fn load_index(path: &Path, backend: Backend) -> Result<Cdawg, IndexError> {
    Cdawg::load(path, backend)
}

pub fn index_stats(cdawg: &Cdawg) -> IndexStats {
    cdawg.stats()
}

impl Cdawg {
    pub(crate) fn from_ram(graph: RamGraph, counts_populated: bool) -> Self {
        Cdawg {
            repr: Repr::Ram(graph),
            counts_populated,
        }
    }

    pub fn load(path: &Path, backend: Backend) -> Result<Cdawg, IndexError> {
        let repr = match backend {
            Backend::Ram => Repr::Ram(format::read_ram(path)?),
            Backend::Disk => Repr::Disk(DiskGraph::open(path)?),
        };
        Ok(Cdawg {
            repr,
            counts_populated: true,
        })
    }

    /// Writes the index; returns the number of bytes written.
    pub fn save(&self, path: &Path, options: SaveOptions) -> Result<u64, IndexError> {
        if !self.counts_populated {
            return Err(IndexError::CountsNotPopulated);
        }
        with_graph!(self, g => format::write(g, path, options))
    }

    pub fn backend(&self) -> Backend {
        match self.repr {
            Repr::Ram(_) => Backend::Ram,
            Repr::Disk(_) => Backend::Disk,
        }
    }

    /// Fills every node's count with the number of source-to-sink path
    /// continuations below it: the sink counts 1 and every other node sums
    /// its outgoing edges' targets, visited in reverse topological order.
    pub fn populate_counts(&mut self) -> Result<(), IndexError> {
        match &mut self.repr {
            Repr::Ram(g) => g.populate_counts(),
            Repr::Disk(_) => return Err(IndexError::ReadOnly),
        }
        self.counts_populated = true;
        Ok(())
    }

    pub fn counts_populated(&self) -> bool {
        self.counts_populated
    }

    pub fn source(&self) -> NodeId {
        NodeId::SOURCE
    }

    pub fn n_states(&self) -> usize {
        with_graph!(self, g => g.n_states())
    }

    pub fn n_edges(&self) -> usize {
        with_graph!(self, g => g.n_edges())
    }

    pub fn corpus_len(&self) -> u64 {
        with_graph!(self, g => g.corpus_len())
    }

    pub fn separator(&self) -> Token {
        with_graph!(self, g => g.separator())
    }

    pub fn vocab_size(&self) -> u32 {
        with_graph!(self, g => g.vocab_size())
    }

    pub fn token_width(&self) -> TokenWidth {
        TokenWidth::for_vocab(self.vocab_size())
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.n_states() as u32).map(NodeId)
    }

    pub fn node(&self, node: NodeId) -> NodeRecord {
        with_graph!(self, g => NodeRecord {
            max_length: g.max_length(node),
            failure: g.failure(node),
            count: g.count(node),
        })
    }

    pub fn edges(&self, node: NodeId) -> Vec<EdgeRecord> {
        with_graph!(self, g => (0..g.out_degree(node)).map(|i| g.edge_at(node, i)).collect())
    }

    pub fn edge(&self, node: NodeId, first: Token) -> Option<EdgeRecord> {
        with_graph!(self, g => g.edge(node, first))
    }

    /// Tokens of an edge label (or any span of the indexed stream).
    pub fn span_tokens(&self, span: Span) -> Vec<Token> {
        with_graph!(self, g => (span.alpha..span.omega).map(|p| g.token(p)).collect())
    }

    /// The indexed corpus, without the construction sentinel.
    pub fn corpus_tokens(&self) -> Vec<Token> {
        with_graph!(self, g => (0..g.corpus_len()).map(|p| g.token(p)).collect())
    }

    pub fn corpus(&self) -> Result<Corpus, IndexError> {
        Ok(Corpus::new(
            self.corpus_tokens(),
            self.separator(),
            self.vocab_size(),
        )?)
    }

    pub fn stats(&self) -> IndexStats {
        let corpus_tokens = self.corpus_len();
        let bytes_total = with_graph!(self, g => format::serialized_len(g, SaveOptions::default()));
        IndexStats {
            corpus_tokens,
            n_states: self.n_states() as u64,
            n_edges: self.n_edges() as u64,
            bytes_total,
            bytes_per_corpus_token: bytes_total as f64 / corpus_tokens as f64,
        }
    }

    /// Node ids in topological order (every edge points forward), or `None`
    /// if the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<NodeId>> {
        with_graph!(self, g => {
            let n = g.n_states();
            let mut indegree = vec![0u32; n];
            for v in 0..n {
                let v = NodeId(v as u32);
                for i in 0..g.out_degree(v) {
                    indegree[g.edge_at(v, i).target.index()] += 1;
                }
            }
            let mut order = Vec::with_capacity(n);
            let mut ready: Vec<NodeId> = (0..n)
                .filter(|&v| indegree[v] == 0)
                .map(|v| NodeId(v as u32))
                .collect();
            while let Some(v) = ready.pop() {
                order.push(v);
                for i in 0..g.out_degree(v) {
                    let t = g.edge_at(v, i).target;
                    indegree[t.index()] -= 1;
                    if indegree[t.index()] == 0 {
                        ready.push(t);
                    }
                }
            }
            (order.len() == n).then_some(order)
        })
    }
}

impl fmt::Debug for Cdawg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Cdawg")
            .field("backend", &self.backend())
            .field("corpus_len", &self.corpus_len())
            .field("n_states", &self.n_states())
            .field("n_edges", &self.n_edges())
            .finish()
    }
}
