//! Tokenized corpora: loading, validation and document-aligned sharding.
//!
//! A [`Corpus`] is a flat token stream where every document is terminated by
//! one shared separator token. Everything else in the crate indexes into this
//! stream by position.

use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A token id. Ids are always handled as `u32` in memory; the on-disk width is
/// a property of the corpus (see [`TokenWidth`]).
pub type Token = u32;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed input at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("binary input of {len} bytes is not a multiple of the {width}-byte token width")]
    TruncatedBinary { len: usize, width: usize },
    #[error("token id {token} at position {position} is out of range for vocab size {vocab_size}")]
    TokenOutOfRange {
        token: u64,
        position: usize,
        vocab_size: u32,
    },
    #[error("separator {separator} is out of range for vocab size {vocab_size}")]
    SeparatorOutOfRange { separator: Token, vocab_size: u32 },
    #[error("empty input")]
    Empty,
    #[error("corpus does not end with the separator token {separator}")]
    MissingFinalSeparator { separator: Token },
    #[error("document {doc} contains the separator token {separator}")]
    SeparatorInDocument { doc: usize, separator: Token },
    #[error("shard count must be positive")]
    ZeroShards,
    #[error("cannot split {documents} documents into {shards} shards")]
    TooManyShards { shards: usize, documents: usize },
}

/// Storage width of token ids in binary corpora and index files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenWidth {
    U16,
    U32,
}

impl TokenWidth {
    /// 16-bit when every id plus the reserved end-of-corpus sentinel
    /// (`vocab_size`) fits, 32-bit otherwise.
    pub fn for_vocab(vocab_size: u32) -> Self {
        if vocab_size <= u16::MAX as u32 {
            TokenWidth::U16
        } else {
            TokenWidth::U32
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            TokenWidth::U16 => 2,
            TokenWidth::U32 => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorpusFormat {
    BinaryU16,
    BinaryU32,
    JsonlTokenArrays,
    CharText,
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary-u16" => Ok(CorpusFormat::BinaryU16),
            "binary-u32" => Ok(CorpusFormat::BinaryU32),
            "jsonl" | "jsonl-token-arrays" => Ok(CorpusFormat::JsonlTokenArrays),
            "char-text" => Ok(CorpusFormat::CharText),
            other => Err(format!(
                "unknown corpus format {other:?} (expected binary-u16, binary-u32, jsonl or char-text)"
            )),
        }
    }
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusFormat::BinaryU16 => "binary-u16",
            CorpusFormat::BinaryU32 => "binary-u32",
            CorpusFormat::JsonlTokenArrays => "jsonl",
            CorpusFormat::CharText => "char-text",
        })
    }
}

/// A validated token stream with document boundaries.
///
/// Invariants: the stream is non-empty, its last token is the separator,
/// every id is below `vocab_size`, and `doc_ends` lists every separator
/// position in increasing order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    tokens: Vec<Token>,
    separator: Token,
    doc_ends: Vec<usize>,
    vocab_size: u32,
}

impl Corpus {
    pub fn new(tokens: Vec<Token>, separator: Token, vocab_size: u32) -> Result<Self, CorpusError> {
        if separator >= vocab_size {
            return Err(CorpusError::SeparatorOutOfRange {
                separator,
                vocab_size,
            });
        }
        if tokens.is_empty() {
            return Err(CorpusError::Empty);
        }
        let mut doc_ends = Vec::new();
        for (position, &token) in tokens.iter().enumerate() {
            if token >= vocab_size {
                return Err(CorpusError::TokenOutOfRange {
                    token: token as u64,
                    position,
                    vocab_size,
                });
            }
            if token == separator {
                doc_ends.push(position);
            }
        }
        if tokens.last() != Some(&separator) {
            return Err(CorpusError::MissingFinalSeparator { separator });
        }
        Ok(Corpus {
            tokens,
            separator,
            doc_ends,
            vocab_size,
        })
    }

    /// Joins documents, appending one separator after each (including the
    /// last). Documents must not contain the separator themselves.
    pub fn from_documents<I, D>(
        docs: I,
        separator: Token,
        vocab_size: u32,
    ) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = D>,
        D: AsRef<[Token]>,
    {
        let mut tokens = Vec::new();
        for (doc, body) in docs.into_iter().enumerate() {
            let body = body.as_ref();
            if body.contains(&separator) {
                return Err(CorpusError::SeparatorInDocument { doc, separator });
            }
            tokens.extend_from_slice(body);
            tokens.push(separator);
        }
        Corpus::new(tokens, separator, vocab_size)
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn into_tokens(self) -> Vec<Token> {
        self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn separator(&self) -> Token {
        self.separator
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    /// Positions of the separator tokens.
    pub fn doc_ends(&self) -> &[usize] {
        &self.doc_ends
    }

    pub fn num_documents(&self) -> usize {
        self.doc_ends.len()
    }

    pub fn token_width(&self) -> TokenWidth {
        TokenWidth::for_vocab(self.vocab_size)
    }

    /// Token range of document `doc`, including its trailing separator.
    pub fn document_range(&self, doc: usize) -> Range<usize> {
        let start = if doc == 0 {
            0
        } else {
            self.doc_ends[doc - 1] + 1
        };
        start..self.doc_ends[doc] + 1
    }

    /// Document `doc` without its trailing separator.
    pub fn document(&self, doc: usize) -> &[Token] {
        let range = self.document_range(doc);
        &self.tokens[range.start..range.end - 1]
    }

    pub fn documents(&self) -> impl Iterator<Item = &[Token]> + '_ {
        (0..self.num_documents()).map(move |d| self.document(d))
    }

    /// Writes the raw little-endian token stream, no header.
    pub fn write_binary(&self, path: &Path, width: TokenWidth) -> Result<(), CorpusError> {
        let io_err = |source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        };
        if width == TokenWidth::U16 {
            if let Some((position, &token)) = self
                .tokens
                .iter()
                .enumerate()
                .find(|(_, &t)| t > u16::MAX as u32)
            {
                return Err(CorpusError::TokenOutOfRange {
                    token: token as u64,
                    position,
                    vocab_size: u16::MAX as u32 + 1,
                });
            }
        }
        let mut out = io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
        for &token in &self.tokens {
            match width {
                TokenWidth::U16 => out.write_all(&(token as u16).to_le_bytes()),
                TokenWidth::U32 => out.write_all(&token.to_le_bytes()),
            }
            .map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }
}

/// Loads a corpus file.
///
/// `vocab_size` defaults to 65,535 for `binary-u16`, `u32::MAX` for
/// `binary-u32`, 256 for `char-text`, and one past the largest id (or the
/// separator) for `jsonl`.
pub fn load_corpus(
    path: &Path,
    format: CorpusFormat,
    separator: Token,
    vocab_size: Option<u32>,
) -> Result<Corpus, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    match format {
        CorpusFormat::BinaryU16 | CorpusFormat::BinaryU32 => {
            let bytes = fs::read(path).map_err(io_err)?;
            let (width, default_vocab) = match format {
                CorpusFormat::BinaryU16 => (TokenWidth::U16, u16::MAX as u32),
                _ => (TokenWidth::U32, u32::MAX),
            };
            let tokens = decode_binary(&bytes, width)?;
            if tokens.is_empty() {
                return Err(CorpusError::Empty);
            }
            Corpus::new(tokens, separator, vocab_size.unwrap_or(default_vocab))
        }
        CorpusFormat::JsonlTokenArrays => {
            let reader = BufReader::new(fs::File::open(path).map_err(io_err)?);
            let mut docs: Vec<Vec<Token>> = Vec::new();
            let mut max_id = separator as u64;
            for (idx, line) in reader.lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let ids: Vec<u64> =
                    serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                        line: idx + 1,
                        reason: e.to_string(),
                    })?;
                let mut doc = Vec::with_capacity(ids.len());
                for id in ids {
                    let limit = vocab_size.map(u64::from).unwrap_or(u32::MAX as u64);
                    if id >= limit {
                        return Err(CorpusError::TokenOutOfRange {
                            token: id,
                            position: docs.iter().map(|d| d.len() + 1).sum::<usize>() + doc.len(),
                            vocab_size: limit as u32,
                        });
                    }
                    max_id = max_id.max(id);
                    doc.push(id as Token);
                }
                docs.push(doc);
            }
            if docs.is_empty() {
                return Err(CorpusError::Empty);
            }
            let vocab = vocab_size.unwrap_or((max_id + 1).min(u32::MAX as u64) as u32);
            Corpus::from_documents(docs, separator, vocab)
        }
        CorpusFormat::CharText => {
            let bytes = fs::read(path).map_err(io_err)?;
            let docs: Vec<Vec<Token>> = bytes
                .split(|&b| b == b'\n')
                .map(|line| line.strip_suffix(b"\r").unwrap_or(line))
                .filter(|line| !line.is_empty())
                .map(|line| line.iter().map(|&b| b as Token).collect())
                .collect();
            if docs.is_empty() {
                return Err(CorpusError::Empty);
            }
            Corpus::from_documents(docs, separator, vocab_size.unwrap_or(256))
        }
    }
}

fn decode_binary(bytes: &[u8], width: TokenWidth) -> Result<Vec<Token>, CorpusError> {
    let w = width.bytes();
    if !bytes.len().is_multiple_of(w) {
        return Err(CorpusError::TruncatedBinary {
            len: bytes.len(),
            width: w,
        });
    }
    Ok(match width {
        TokenWidth::U16 => bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as Token)
            .collect(),
        TokenWidth::U32 => bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
    })
}

/// One shard's place in the original corpus.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardEntry {
    pub shard: usize,
    pub docs: Range<usize>,
    pub tokens: Range<usize>,
}

/// Document ranges of every shard, in corpus order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardSpec {
    pub shard_doc_ranges: Vec<Range<usize>>,
}

impl ShardSpec {
    pub fn shard_count(&self) -> usize {
        self.shard_doc_ranges.len()
    }

    pub fn from_entries(entries: &[ShardEntry]) -> Self {
        ShardSpec {
            shard_doc_ranges: entries.iter().map(|e| e.docs.clone()).collect(),
        }
    }
}

/// Splits a corpus into `k` shards at document boundaries, in document order.
///
/// Shard `j` keeps taking documents until the running token total reaches
/// `(j + 1) * |C| / k`, while always leaving at least one document for every
/// later shard.
pub fn shard_corpus(corpus: &Corpus, k: usize) -> Result<Vec<(Corpus, ShardEntry)>, CorpusError> {
    if k == 0 {
        return Err(CorpusError::ZeroShards);
    }
    let n_docs = corpus.num_documents();
    if k > n_docs {
        return Err(CorpusError::TooManyShards {
            shards: k,
            documents: n_docs,
        });
    }
    let total = corpus.len() as u128;
    let mut shards = Vec::with_capacity(k);
    let mut doc = 0;
    for shard in 0..k {
        let first_doc = doc;
        let remaining_shards = k - shard - 1;
        // Integer form of `cumulative >= (shard + 1) * total / k`.
        let target = (shard as u128 + 1) * total;
        loop {
            let end = corpus.document_range(doc).end as u128;
            doc += 1;
            if n_docs - doc == remaining_shards || end * k as u128 >= target {
                break;
            }
        }
        if shard == k - 1 {
            doc = n_docs;
        }
        let start = corpus.document_range(first_doc).start;
        let end = corpus.document_range(doc - 1).end;
        let slice = Corpus::new(
            corpus.tokens[start..end].to_vec(),
            corpus.separator,
            corpus.vocab_size,
        )?;
        shards.push((
            slice,
            ShardEntry {
                shard,
                docs: first_doc..doc,
                tokens: start..end,
            },
        ));
    }
    Ok(shards)
}
