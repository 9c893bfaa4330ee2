//! Document-aligned sharding: independent per-shard indexes whose query
//! results are merged into exactly what one index over the whole corpus
//! would report.
//!
//! At every position the merged length is the maximum of the shard lengths
//! and the merged count sums the counts of the shards attaining it. This is
//! exact for queries without separator tokens, since no occurrence of such
//! a string can straddle a shard boundary.

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cdawg::{
    build_cdawg, stored_checksum, Backend, Cdawg, IndexError, SuffixProfile, FORMAT_VERSION,
};
use crate::corpus::{shard_corpus, Corpus, CorpusError, ShardEntry, ShardSpec, Token};
use crate::query::{nnsl_query, nnsl_query_profiles, run_parallel, MatchAnnotations};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum ShardError {
    #[error("shard {shard}: {source}")]
    Shard {
        shard: usize,
        #[source]
        source: IndexError,
    },
    #[error("shard {shard}: checksum {found:016x} does not match manifest entry {expected:016x}")]
    ChecksumMismatch {
        shard: usize,
        expected: u64,
        found: u64,
    },
    #[error("shard {shard}: {reason}")]
    Inconsistent { shard: usize, reason: String },
    #[error("manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// One shard as recorded in the manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestShard {
    pub shard: usize,
    /// Index file name, relative to the manifest's directory.
    pub file: String,
    pub tokens: u64,
    pub documents: Range<usize>,
    pub token_range: Range<usize>,
    /// Header checksum of the index file, as 16 hex digits.
    pub checksum: String,
    pub n_states: u64,
    pub n_edges: u64,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub library_version: String,
    pub format_version: u32,
    pub separator: Token,
    pub vocab_size: u32,
    pub total_tokens: u64,
    pub total_documents: usize,
    pub shards: Vec<ManifestShard>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Manifest, ShardError> {
        let text = fs::read_to_string(path).map_err(|source| ShardError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| ShardError::Manifest {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        if manifest.shards.is_empty() {
            return Err(ShardError::Manifest {
                path: path.to_path_buf(),
                reason: "no shards listed".into(),
            });
        }
        Ok(manifest)
    }

    pub fn spec(&self) -> ShardSpec {
        ShardSpec {
            shard_doc_ranges: self.shards.iter().map(|s| s.documents.clone()).collect(),
        }
    }
}

fn parse_checksum(s: &str) -> Option<u64> {
    u64::from_str_radix(s, 16).ok()
}

/// Per-shard indexes over consecutive document ranges of one corpus.
pub struct ShardedIndex {
    shards: Vec<Cdawg>,
    entries: Vec<ShardEntry>,
    separator: Token,
    vocab_size: u32,
    manifest: Option<Manifest>,
}

/// Builds one index per shard on `parallelism` threads. Shard `j` holds the
/// `j`-th document range chosen by [`shard_corpus`].
pub fn build_sharded(
    corpus: &Corpus,
    k: usize,
    parallelism: usize,
) -> Result<ShardedIndex, ShardError> {
    let parts = shard_corpus(corpus, k)?;
    let built: Vec<Result<Cdawg, ShardError>> = run_parallel(parallelism, || {
        parts
            .par_iter()
            .map(|(c, e)| {
                build_cdawg(c).map_err(|source| ShardError::Shard {
                    shard: e.shard,
                    source,
                })
            })
            .collect()
    });
    let shards = built.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(ShardedIndex {
        shards,
        entries: parts.into_iter().map(|(_, e)| e).collect(),
        separator: corpus.separator(),
        vocab_size: corpus.vocab_size(),
        manifest: None,
    })
}

/// Merges per-shard annotations of one query: the longest length wins and
/// counts of all shards attaining it add up.
pub fn aggregate(parts: &[MatchAnnotations]) -> MatchAnnotations {
    let len = parts.first().map_or(0, |p| p.len());
    let mut out = MatchAnnotations {
        doc_id: parts.first().map(|p| p.doc_id.clone()).unwrap_or_default(),
        nnsl: vec![0; len],
        counts: vec![0; len],
    };
    for p in parts {
        debug_assert_eq!(p.len(), len);
        for i in 0..len {
            let l = p.nnsl[i];
            if l > out.nnsl[i] {
                out.nnsl[i] = l;
                out.counts[i] = p.counts[i];
            } else if l == out.nnsl[i] && l > 0 {
                out.counts[i] += p.counts[i];
            }
        }
    }
    out
}

impl ShardedIndex {
    /// Wraps a single index as a one-shard collection.
    pub fn single(cdawg: Cdawg, num_documents: usize) -> Self {
        let entry = ShardEntry {
            shard: 0,
            docs: 0..num_documents,
            tokens: 0..cdawg.corpus_len() as usize,
        };
        ShardedIndex {
            separator: cdawg.separator(),
            vocab_size: cdawg.vocab_size(),
            shards: vec![cdawg],
            entries: vec![entry],
            manifest: None,
        }
    }

    pub fn shard_count(&self) -> usize {
        self.shards.len()
    }

    pub fn shards(&self) -> &[Cdawg] {
        &self.shards
    }

    pub fn entries(&self) -> &[ShardEntry] {
        &self.entries
    }

    pub fn spec(&self) -> ShardSpec {
        ShardSpec::from_entries(&self.entries)
    }

    pub fn separator(&self) -> Token {
        self.separator
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn total_tokens(&self) -> u64 {
        self.shards.iter().map(|s| s.corpus_len()).sum()
    }

    /// The manifest this index was written to or opened from.
    pub fn manifest(&self) -> Option<&Manifest> {
        self.manifest.as_ref()
    }

    /// The whole corpus, reassembled from the shards' token arrays.
    pub fn corpus(&self) -> Result<Corpus, ShardError> {
        let mut tokens = Vec::with_capacity(self.total_tokens() as usize);
        for s in &self.shards {
            tokens.extend(s.corpus_tokens());
        }
        Ok(Corpus::new(tokens, self.separator, self.vocab_size)?)
    }

    /// Writes `shard-NNNN.cdawg` files and the manifest into `dir`.
    pub fn write(&mut self, dir: &Path) -> Result<&Manifest, ShardError> {
        fs::create_dir_all(dir).map_err(|source| ShardError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut shards = Vec::with_capacity(self.shards.len());
        for (cdawg, entry) in self.shards.iter().zip(&self.entries) {
            let file = format!("shard-{:04}.cdawg", entry.shard);
            let path = dir.join(&file);
            let shard_err = |source| ShardError::Shard {
                shard: entry.shard,
                source,
            };
            let bytes = cdawg.save(&path, Default::default()).map_err(shard_err)?;
            let checksum = stored_checksum(&path).map_err(shard_err)?;
            shards.push(ManifestShard {
                shard: entry.shard,
                file,
                tokens: cdawg.corpus_len(),
                documents: entry.docs.clone(),
                token_range: entry.tokens.clone(),
                checksum: format!("{checksum:016x}"),
                n_states: cdawg.n_states() as u64,
                n_edges: cdawg.n_edges() as u64,
                bytes,
            });
        }
        let manifest = Manifest {
            library_version: crate::VERSION.to_string(),
            format_version: FORMAT_VERSION,
            separator: self.separator,
            vocab_size: self.vocab_size,
            total_tokens: self.total_tokens(),
            total_documents: self.entries.last().map_or(0, |e| e.docs.end),
            shards,
        };
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, json + "\n").map_err(|source| ShardError::Io { path, source })?;
        Ok(self.manifest.insert(manifest))
    }

    /// Opens every shard listed in the manifest, checking each file against
    /// its recorded checksum and size. Any failure aborts the whole open.
    pub fn open(manifest_path: &Path, backend: Backend) -> Result<ShardedIndex, ShardError> {
        let manifest = Manifest::read(manifest_path)?;
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        let mut shards = Vec::with_capacity(manifest.shards.len());
        let mut entries = Vec::with_capacity(manifest.shards.len());
        let mut next_doc = 0;
        for (j, m) in manifest.shards.iter().enumerate() {
            let inconsistent = |reason: String| ShardError::Inconsistent {
                shard: m.shard,
                reason,
            };
            if m.shard != j || m.documents.start != next_doc || m.documents.is_empty() {
                return Err(inconsistent(
                    "shards are not consecutive non-empty document ranges".into(),
                ));
            }
            next_doc = m.documents.end;
            let path = dir.join(&m.file);
            let shard_err = |source| ShardError::Shard {
                shard: m.shard,
                source,
            };
            let expected = parse_checksum(&m.checksum)
                .ok_or_else(|| inconsistent(format!("unparseable checksum {:?}", m.checksum)))?;
            let found = stored_checksum(&path).map_err(shard_err)?;
            if found != expected {
                return Err(ShardError::ChecksumMismatch {
                    shard: m.shard,
                    expected,
                    found,
                });
            }
            let cdawg = Cdawg::load(&path, backend).map_err(shard_err)?;
            if cdawg.corpus_len() != m.tokens {
                return Err(inconsistent(format!(
                    "index holds {} tokens, manifest says {}",
                    cdawg.corpus_len(),
                    m.tokens
                )));
            }
            if cdawg.separator() != manifest.separator || cdawg.vocab_size() != manifest.vocab_size
            {
                return Err(inconsistent(
                    "separator or vocabulary differs from the manifest".into(),
                ));
            }
            shards.push(cdawg);
            entries.push(ShardEntry {
                shard: m.shard,
                docs: m.documents.clone(),
                tokens: m.token_range.clone(),
            });
        }
        if next_doc != manifest.total_documents {
            return Err(ShardError::Manifest {
                path: manifest_path.to_path_buf(),
                reason: format!(
                    "shards cover {next_doc} documents, manifest lists {}",
                    manifest.total_documents
                ),
            });
        }
        Ok(ShardedIndex {
            shards,
            entries,
            separator: manifest.separator,
            vocab_size: manifest.vocab_size,
            manifest: Some(manifest),
        })
    }

    /// Queries every shard concurrently and merges the results.
    pub fn nnsl_query(&self, query: &[Token]) -> MatchAnnotations {
        if self.shards.len() == 1 {
            return nnsl_query(&self.shards[0], query);
        }
        let parts: Vec<MatchAnnotations> = self
            .shards
            .par_iter()
            .map(|s| nnsl_query(s, query))
            .collect();
        aggregate(&parts)
    }

    /// Merged annotations plus merged suffix count profiles. A shard's
    /// profile counts every suffix it contains, so profiles add pointwise.
    pub fn nnsl_query_profiles(
        &self,
        query: &[Token],
    ) -> (MatchAnnotations, Vec<Option<SuffixProfile>>) {
        let parts: Vec<_> = self
            .shards
            .par_iter()
            .map(|s| nnsl_query_profiles(s, query))
            .collect();
        let anns: Vec<MatchAnnotations> = parts.iter().map(|(a, _)| a.clone()).collect();
        let merged = aggregate(&anns);
        let profiles = (0..query.len())
            .map(|i| {
                let ps: Vec<&SuffixProfile> =
                    parts.iter().filter_map(|(_, p)| p[i].as_ref()).collect();
                (!ps.is_empty()).then(|| SuffixProfile::sum(ps))
            })
            .collect();
        (merged, profiles)
    }

    /// Runs [`ShardedIndex::nnsl_query`] over `docs` on `parallelism`
    /// threads, preserving input order.
    pub fn batch_query<D>(&self, docs: &[D], parallelism: usize) -> Vec<MatchAnnotations>
    where
        D: AsRef<[Token]> + Sync,
    {
        run_parallel(parallelism, || {
            docs.par_iter()
                .map(|d| self.nnsl_query(d.as_ref()))
                .collect()
        })
    }

    /// [`ShardedIndex::nnsl_query_profiles`] over `docs`, in input order.
    pub fn batch_query_profiles<D>(
        &self,
        docs: &[D],
        parallelism: usize,
    ) -> Vec<(MatchAnnotations, Vec<Option<SuffixProfile>>)>
    where
        D: AsRef<[Token]> + Sync,
    {
        run_parallel(parallelism, || {
            docs.par_iter()
                .map(|d| self.nnsl_query_profiles(d.as_ref()))
                .collect()
        })
    }
}

pub fn sharded_nnsl_query(index: &ShardedIndex, query: &[Token]) -> MatchAnnotations {
    index.nnsl_query(query)
}
