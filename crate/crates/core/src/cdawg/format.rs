//! Index file layout (all integers little-endian):
//!
//! ```text
//! header (56 bytes)
//!   0  magic "CDWG"
//!   4  format version            u32
//!   8  token width in bytes      u8   (2 or 4)
//!   9  handle width in bytes     u8   (4 or 5)
//!  10  reserved                  u16
//!  12  separator id              u32
//!  16  vocab size                u32
//!  20  reserved                  u32
//!  24  corpus length |C|         u64  (without the sentinel)
//!  32  n_states                  u64
//!  40  n_edges                   u64
//!  48  checksum                  u64  (xxh3-64 of bytes 0..48 and everything after the header)
//! node table, n_states records:
//!   max_length u64 | count u64 | failure H | first edge H | out-degree u32
//! edge table, n_edges records, grouped by node and sorted by first token:
//!   first token T | alpha H | omega H | target H
//! token array, |C| + 1 entries of width T (the last one is the sentinel)
//! ```
//!
//! `H` is the handle width and `T` the token width. A failure handle with
//! every bit set means "no failure" (the source).

use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::Xxh3;

use crate::corpus::TokenWidth;

use super::ram::{RamGraph, NO_NODE};
use super::{GraphView, IndexError, NodeId};

pub const MAGIC: [u8; 4] = *b"CDWG";
pub const FORMAT_VERSION: u32 = 1;
pub(crate) const HEADER_LEN: usize = 56;
const CHECKSUM_AT: usize = 48;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HandleWidth {
    /// 32-bit node, edge and position handles.
    Four,
    /// 40-bit handles.
    Five,
}

impl HandleWidth {
    pub fn bytes(self) -> usize {
        match self {
            HandleWidth::Four => 4,
            HandleWidth::Five => 5,
        }
    }

    /// Reserved all-ones value meaning "no node".
    pub fn none(self) -> u64 {
        (1u64 << (8 * self.bytes())) - 1
    }

    fn fits(self, value: u64) -> bool {
        value < self.none()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SaveOptions {
    /// `None` picks the narrowest width that fits.
    pub handle_width: Option<HandleWidth>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Header {
    pub token_width: TokenWidth,
    pub handle_width: HandleWidth,
    pub separator: u32,
    pub vocab_size: u32,
    pub corpus_len: u64,
    pub n_states: u64,
    pub n_edges: u64,
    pub checksum: u64,
}

/// Byte offsets derived from a header.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Layout {
    pub tw: usize,
    pub hw: usize,
    pub node_rec: usize,
    pub edge_rec: usize,
    pub nodes_at: usize,
    pub edges_at: usize,
    pub tokens_at: usize,
    pub total: u64,
}

impl Header {
    pub fn layout(&self) -> Layout {
        let tw = self.token_width.bytes();
        let hw = self.handle_width.bytes();
        let node_rec = 8 + 8 + hw + hw + 4;
        let edge_rec = tw + 3 * hw;
        let nodes_at = HEADER_LEN;
        let edges_at = nodes_at as u64 + self.n_states * node_rec as u64;
        let tokens_at = edges_at + self.n_edges * edge_rec as u64;
        let total = tokens_at + (self.corpus_len + 1) * tw as u64;
        Layout {
            tw,
            hw,
            node_rec,
            edge_rec,
            nodes_at,
            edges_at: edges_at as usize,
            tokens_at: tokens_at as usize,
            total,
        }
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4..8].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
        out[8] = self.token_width.bytes() as u8;
        out[9] = self.handle_width.bytes() as u8;
        out[12..16].copy_from_slice(&self.separator.to_le_bytes());
        out[16..20].copy_from_slice(&self.vocab_size.to_le_bytes());
        out[24..32].copy_from_slice(&self.corpus_len.to_le_bytes());
        out[32..40].copy_from_slice(&self.n_states.to_le_bytes());
        out[40..48].copy_from_slice(&self.n_edges.to_le_bytes());
        out[48..56].copy_from_slice(&self.checksum.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Header, IndexError> {
        if bytes.len() < HEADER_LEN {
            return Err(IndexError::Truncated {
                expected: HEADER_LEN as u64,
                actual: bytes.len() as u64,
            });
        }
        if bytes[0..4] != MAGIC {
            return Err(IndexError::VersionMismatch(format!(
                "bad magic bytes {:?}, not a CDAWG index",
                &bytes[0..4]
            )));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(IndexError::VersionMismatch(format!(
                "file has format version {version}, this reader supports {FORMAT_VERSION}"
            )));
        }
        let token_width = match bytes[8] {
            2 => TokenWidth::U16,
            4 => TokenWidth::U32,
            other => return Err(IndexError::InvalidHeader(format!("token width {other}"))),
        };
        let handle_width = match bytes[9] {
            4 => HandleWidth::Four,
            5 => HandleWidth::Five,
            other => return Err(IndexError::InvalidHeader(format!("handle width {other}"))),
        };
        let u64_at = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        let header = Header {
            token_width,
            handle_width,
            separator: u32::from_le_bytes(bytes[12..16].try_into().unwrap()),
            vocab_size: u32::from_le_bytes(bytes[16..20].try_into().unwrap()),
            corpus_len: u64_at(24),
            n_states: u64_at(32),
            n_edges: u64_at(40),
            checksum: u64_at(48),
        };
        if header.n_states < 2 || header.corpus_len == 0 {
            return Err(IndexError::InvalidHeader("empty graph".into()));
        }
        if header.n_states > u32::MAX as u64 - 1 || header.n_edges > u32::MAX as u64 {
            return Err(IndexError::CapacityExceeded {
                what: "node",
                bits: 32,
            });
        }
        Ok(header)
    }

    fn from_graph<G: GraphView + ?Sized>(
        g: &G,
        options: SaveOptions,
    ) -> Result<Header, IndexError> {
        let largest = (g.n_states() as u64)
            .max(g.n_edges() as u64)
            .max(g.corpus_len() + 1);
        let handle_width = match options.handle_width {
            Some(w) if w.fits(largest) => w,
            Some(w) => {
                return Err(IndexError::CapacityExceeded {
                    what: "handle",
                    bits: 8 * w.bytes() as u32,
                })
            }
            None if HandleWidth::Four.fits(largest) => HandleWidth::Four,
            None if HandleWidth::Five.fits(largest) => HandleWidth::Five,
            None => {
                return Err(IndexError::CapacityExceeded {
                    what: "handle",
                    bits: 40,
                })
            }
        };
        Ok(Header {
            token_width: TokenWidth::for_vocab(g.vocab_size()),
            handle_width,
            separator: g.separator(),
            vocab_size: g.vocab_size(),
            corpus_len: g.corpus_len(),
            n_states: g.n_states() as u64,
            n_edges: g.n_edges() as u64,
            checksum: 0,
        })
    }
}

#[inline]
pub(crate) fn read_uint(bytes: &[u8], at: usize, width: usize) -> u64 {
    let mut buf = [0u8; 8];
    buf[..width].copy_from_slice(&bytes[at..at + width]);
    u64::from_le_bytes(buf)
}

pub(crate) fn serialized_len<G: GraphView + ?Sized>(g: &G, options: SaveOptions) -> u64 {
    Header::from_graph(g, options)
        .map(|h| h.layout().total)
        .unwrap_or(0)
}

/// Writer adapter feeding everything written through the checksum.
struct Hashing<W> {
    inner: W,
    hasher: Xxh3,
    written: u64,
}

impl<W: Write> Hashing<W> {
    fn put(&mut self, bytes: &[u8]) -> std::io::Result<()> {
        self.hasher.update(bytes);
        self.written += bytes.len() as u64;
        self.inner.write_all(bytes)
    }

    fn put_uint(&mut self, value: u64, width: usize) -> std::io::Result<()> {
        self.put(&value.to_le_bytes()[..width])
    }
}

pub(crate) fn write<G: GraphView + ?Sized>(
    g: &G,
    path: &Path,
    options: SaveOptions,
) -> Result<u64, IndexError> {
    let io_err = |source| IndexError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut header = Header::from_graph(g, options)?;
    let layout = header.layout();
    let (tw, hw) = (layout.tw, layout.hw);
    let none = header.handle_width.none();

    let file = File::create(path).map_err(io_err)?;
    let mut out = Hashing {
        inner: BufWriter::with_capacity(1 << 20, file),
        hasher: Xxh3::new(),
        written: 0,
    };
    let encoded = header.encode();
    out.put(&encoded[..CHECKSUM_AT]).map_err(io_err)?;
    // The checksum field itself is excluded from the hash.
    out.inner
        .write_all(&encoded[CHECKSUM_AT..])
        .map_err(io_err)?;

    let write_body = |out: &mut Hashing<BufWriter<File>>| -> std::io::Result<()> {
        let mut first_edge = 0u64;
        for v in 0..g.n_states() {
            let v = NodeId(v as u32);
            out.put_uint(g.max_length(v), 8)?;
            out.put_uint(g.count(v), 8)?;
            out.put_uint(g.failure(v).map_or(none, |f| f.0 as u64), hw)?;
            out.put_uint(first_edge, hw)?;
            let degree = g.out_degree(v);
            out.put_uint(degree as u64, 4)?;
            first_edge += degree as u64;
        }
        for v in 0..g.n_states() {
            let v = NodeId(v as u32);
            for i in 0..g.out_degree(v) {
                let e = g.edge_at(v, i);
                out.put_uint(e.first as u64, tw)?;
                out.put_uint(e.span.alpha, hw)?;
                out.put_uint(e.span.omega, hw)?;
                out.put_uint(e.target.0 as u64, hw)?;
            }
        }
        for pos in 0..=g.corpus_len() {
            out.put_uint(g.token(pos) as u64, tw)?;
        }
        Ok(())
    };
    write_body(&mut out).map_err(io_err)?;

    header.checksum = out.hasher.digest();
    let written = out.written + (HEADER_LEN - CHECKSUM_AT) as u64;
    debug_assert_eq!(written, layout.total);
    let mut file = out.inner.into_inner().map_err(|e| io_err(e.into_error()))?;
    file.seek(SeekFrom::Start(CHECKSUM_AT as u64))
        .map_err(io_err)?;
    file.write_all(&header.checksum.to_le_bytes())
        .map_err(io_err)?;
    file.sync_all().map_err(io_err)?;
    Ok(written)
}

/// Validates length and checksum of a complete file image.
pub(crate) fn verify(bytes: &[u8]) -> Result<Header, IndexError> {
    let header = Header::decode(bytes)?;
    let layout = header.layout();
    if bytes.len() as u64 != layout.total {
        return Err(IndexError::Truncated {
            expected: layout.total,
            actual: bytes.len() as u64,
        });
    }
    let mut hasher = Xxh3::new();
    hasher.update(&bytes[..CHECKSUM_AT]);
    hasher.update(&bytes[HEADER_LEN..]);
    let computed = hasher.digest();
    if computed != header.checksum {
        return Err(IndexError::ChecksumMismatch {
            stored: header.checksum,
            computed,
        });
    }
    Ok(header)
}

/// Checksum recorded in an index file's header, without reading the body.
pub fn stored_checksum(path: &Path) -> Result<u64, IndexError> {
    let io_err = |source| IndexError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut header = Vec::with_capacity(HEADER_LEN);
    File::open(path)
        .and_then(|f| f.take(HEADER_LEN as u64).read_to_end(&mut header))
        .map_err(io_err)?;
    Ok(Header::decode(&header)?.checksum)
}

pub(crate) fn read_ram(path: &Path) -> Result<RamGraph, IndexError> {
    let bytes = std::fs::read(path).map_err(|source| IndexError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_ram(&bytes)
}

pub(crate) fn decode_ram(bytes: &[u8]) -> Result<RamGraph, IndexError> {
    let header = verify(bytes)?;
    let l = header.layout();
    let none = header.handle_width.none();
    let n_states = header.n_states as usize;
    let n_edges = header.n_edges as usize;
    let corrupt = |what: &str| IndexError::InvalidHeader(format!("inconsistent {what} table"));

    let mut g = RamGraph::with_capacity(n_states, n_edges);
    g.separator = header.separator;
    g.vocab_size = header.vocab_size;
    let mut expected_first = 0u64;
    for v in 0..n_states {
        let at = l.nodes_at + v * l.node_rec;
        g.max_length.push(read_uint(bytes, at, 8));
        g.count.push(read_uint(bytes, at + 8, 8));
        let failure = read_uint(bytes, at + 16, l.hw);
        g.failure.push(if failure == none {
            NO_NODE
        } else if failure < header.n_states {
            failure as u32
        } else {
            return Err(corrupt("node"));
        });
        let first = read_uint(bytes, at + 16 + l.hw, l.hw);
        let degree = read_uint(bytes, at + 16 + 2 * l.hw, 4);
        if first != expected_first || first + degree > header.n_edges {
            return Err(corrupt("node"));
        }
        expected_first += degree;
        g.edge_offsets.push(expected_first as u32);
    }
    let token_limit = header.corpus_len + 1;
    for ei in 0..n_edges {
        let at = l.edges_at + ei * l.edge_rec;
        let alpha = read_uint(bytes, at + l.tw, l.hw);
        let omega = read_uint(bytes, at + l.tw + l.hw, l.hw);
        let target = read_uint(bytes, at + l.tw + 2 * l.hw, l.hw);
        if alpha >= omega || omega > token_limit || target >= header.n_states {
            return Err(corrupt("edge"));
        }
        g.edge_first.push(read_uint(bytes, at, l.tw) as u32);
        g.edge_alpha.push(alpha);
        g.edge_omega.push(omega);
        g.edge_target.push(target as u32);
    }
    g.tokens = super::pages::with_capacity(token_limit as usize);
    g.tokens.extend(
        (0..token_limit as usize).map(|i| read_uint(bytes, l.tokens_at + i * l.tw, l.tw) as u32),
    );
    Ok(g)
}
