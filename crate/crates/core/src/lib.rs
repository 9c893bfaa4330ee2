//! Unbounded-length n-gram overlap queries over tokenized corpora.
//!
//! The crate builds compacted directed acyclic word graphs (CDAWGs) over a
//! document-separated token stream and streams query documents through them.
//! For every query position it reports the non-novel suffix length (the
//! longest suffix ending there that occurs in the corpus) and that suffix's
//! corpus frequency, in time independent of corpus size. The [`novelty`]
//! module turns those annotations into n-novelty curves, NNSL statistics,
//! lower-bound baselines and completion-loss tables; [`shard`] splits builds
//! and queries across independent document-aligned shards with exact
//! aggregation; [`oracle`] holds brute-force references for verification.

pub mod cdawg;
pub mod corpus;
pub mod novelty;
pub mod oracle;
pub mod query;
pub mod shard;

pub use cdawg::{
    build_cdawg, index_stats, load_index, save_index, Backend, Cdawg, CdawgBuilder, IndexError,
    IndexStats, NodeId, QueryCursor, Span, SuffixProfile,
};
pub use corpus::{load_corpus, shard_corpus, Corpus, CorpusError, CorpusFormat, Token, TokenWidth};
pub use query::{batch_query, nnsl_query, MatchAnnotations};
pub use shard::{ShardError, ShardedIndex};

/// Library version, recorded in shard manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
