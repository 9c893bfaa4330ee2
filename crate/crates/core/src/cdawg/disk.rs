use std::fs::File;
use std::path::Path;

use memmap2::Mmap;

use crate::corpus::Token;

use super::format::{self, read_uint, Header, Layout};
use super::{EdgeRecord, GraphView, IndexError, NodeId, Span};

/// Memory-mapped index. Nothing is decoded up front; every accessor reads
/// the fixed-width record it needs straight from the mapping.
pub(crate) struct DiskGraph {
    map: Mmap,
    header: Header,
    layout: Layout,
    none: u64,
}

impl DiskGraph {
    pub fn open(path: &Path) -> Result<Self, IndexError> {
        let io_err = |source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = File::open(path).map_err(io_err)?;
        // SAFETY: index files are written once and never modified in place.
        let map = unsafe { Mmap::map(&file) }.map_err(io_err)?;
        let header = format::verify(&map)?;
        Ok(DiskGraph {
            layout: header.layout(),
            none: header.handle_width.none(),
            header,
            map,
        })
    }

    #[inline]
    fn node_at(&self, node: NodeId) -> usize {
        self.layout.nodes_at + node.index() * self.layout.node_rec
    }

    #[inline]
    fn edge_range(&self, node: NodeId) -> (usize, usize) {
        let at = self.node_at(node) + 16 + self.layout.hw;
        let first = read_uint(&self.map, at, self.layout.hw) as usize;
        let degree = read_uint(&self.map, at + self.layout.hw, 4) as usize;
        (first, degree)
    }

    #[inline]
    fn first_token(&self, ei: usize) -> Token {
        let at = self.layout.edges_at + ei * self.layout.edge_rec;
        read_uint(&self.map, at, self.layout.tw) as Token
    }

    fn record(&self, ei: usize) -> EdgeRecord {
        let l = &self.layout;
        let at = l.edges_at + ei * l.edge_rec;
        EdgeRecord {
            first: read_uint(&self.map, at, l.tw) as Token,
            span: Span::new(
                read_uint(&self.map, at + l.tw, l.hw),
                read_uint(&self.map, at + l.tw + l.hw, l.hw),
            ),
            target: NodeId(read_uint(&self.map, at + l.tw + 2 * l.hw, l.hw) as u32),
        }
    }
}

impl GraphView for DiskGraph {
    fn n_states(&self) -> usize {
        self.header.n_states as usize
    }

    fn n_edges(&self) -> usize {
        self.header.n_edges as usize
    }

    fn corpus_len(&self) -> u64 {
        self.header.corpus_len
    }

    fn separator(&self) -> Token {
        self.header.separator
    }

    fn vocab_size(&self) -> u32 {
        self.header.vocab_size
    }

    #[inline]
    fn token(&self, pos: u64) -> Token {
        let tw = self.layout.tw;
        read_uint(&self.map, self.layout.tokens_at + pos as usize * tw, tw) as Token
    }

    fn max_length(&self, node: NodeId) -> u64 {
        read_uint(&self.map, self.node_at(node), 8)
    }

    fn failure(&self, node: NodeId) -> Option<NodeId> {
        let f = read_uint(&self.map, self.node_at(node) + 16, self.layout.hw);
        (f != self.none).then_some(NodeId(f as u32))
    }

    fn count(&self, node: NodeId) -> u64 {
        read_uint(&self.map, self.node_at(node) + 8, 8)
    }

    fn out_degree(&self, node: NodeId) -> usize {
        self.edge_range(node).1
    }

    fn edge_at(&self, node: NodeId, i: usize) -> EdgeRecord {
        self.record(self.edge_range(node).0 + i)
    }

    fn edge(&self, node: NodeId, first: Token) -> Option<EdgeRecord> {
        let (start, degree) = self.edge_range(node);
        let (mut lo, mut hi) = (start, start + degree);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            match self.first_token(mid).cmp(&first) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(self.record(mid)),
            }
        }
        None
    }
}
