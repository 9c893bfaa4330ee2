use crate::corpus::Token;

use super::pages;
use super::{EdgeRecord, GraphView, NodeId, Span};

pub(crate) const NO_NODE: u32 = u32::MAX;

/// Frozen in-memory graph. Edges of node `v` occupy
/// `edge_offsets[v]..edge_offsets[v + 1]`, sorted by first token.
#[derive(Default)]
pub(crate) struct RamGraph {
    /// Corpus tokens followed by the sentinel.
    pub tokens: Vec<Token>,
    pub separator: Token,
    pub vocab_size: u32,
    pub max_length: Vec<u64>,
    pub failure: Vec<u32>,
    pub count: Vec<u64>,
    pub edge_offsets: Vec<u32>,
    pub edge_first: Vec<Token>,
    pub edge_alpha: Vec<u64>,
    pub edge_omega: Vec<u64>,
    pub edge_target: Vec<u32>,
}

impl RamGraph {
    pub fn with_capacity(nodes: usize, edges: usize) -> Self {
        let mut edge_offsets = pages::with_capacity(nodes + 1);
        edge_offsets.push(0);
        RamGraph {
            max_length: pages::with_capacity(nodes),
            failure: pages::with_capacity(nodes),
            count: pages::with_capacity(nodes),
            edge_offsets,
            edge_first: pages::with_capacity(edges),
            edge_alpha: pages::with_capacity(edges),
            edge_omega: pages::with_capacity(edges),
            edge_target: pages::with_capacity(edges),
            ..Default::default()
        }
    }

    #[inline]
    fn edge_range(&self, node: NodeId) -> std::ops::Range<usize> {
        self.edge_offsets[node.index()] as usize..self.edge_offsets[node.index() + 1] as usize
    }

    #[inline]
    fn record(&self, ei: usize) -> EdgeRecord {
        EdgeRecord {
            first: self.edge_first[ei],
            span: Span::new(self.edge_alpha[ei], self.edge_omega[ei]),
            target: NodeId(self.edge_target[ei]),
        }
    }

    /// Iterative post-order DFS from the source. Nodes without outgoing
    /// edges (the sink) count 1; parallel edges to one target each add the
    /// target's count.
    pub fn populate_counts(&mut self) {
        let n = self.max_length.len();
        let mut count = vec![0u64; n];
        pages::advise_huge(&count);
        let mut done = vec![false; n];
        // (node, next edge to visit)
        let mut stack: Vec<(u32, usize)> = vec![(0, self.edge_offsets[0] as usize)];
        while let Some(top) = stack.len().checked_sub(1) {
            let (v, next) = stack[top];
            let end = self.edge_offsets[v as usize + 1] as usize;
            if next < end {
                let t = self.edge_target[next];
                stack[top].1 += 1;
                if !done[t as usize] {
                    stack.push((t, self.edge_offsets[t as usize] as usize));
                }
                continue;
            }
            stack.pop();
            let range = self.edge_range(NodeId(v));
            count[v as usize] = if range.is_empty() {
                1
            } else {
                range.map(|ei| count[self.edge_target[ei] as usize]).sum()
            };
            done[v as usize] = true;
        }
        self.count = count;
    }
}

impl GraphView for RamGraph {
    fn n_states(&self) -> usize {
        self.max_length.len()
    }

    fn n_edges(&self) -> usize {
        self.edge_first.len()
    }

    fn corpus_len(&self) -> u64 {
        self.tokens.len() as u64 - 1
    }

    fn separator(&self) -> Token {
        self.separator
    }

    fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    #[inline]
    fn token(&self, pos: u64) -> Token {
        self.tokens[pos as usize]
    }

    #[inline]
    fn max_length(&self, node: NodeId) -> u64 {
        self.max_length[node.index()]
    }

    #[inline]
    fn failure(&self, node: NodeId) -> Option<NodeId> {
        match self.failure[node.index()] {
            NO_NODE => None,
            f => Some(NodeId(f)),
        }
    }

    #[inline]
    fn count(&self, node: NodeId) -> u64 {
        self.count[node.index()]
    }

    fn out_degree(&self, node: NodeId) -> usize {
        self.edge_range(node).len()
    }

    fn edge_at(&self, node: NodeId, i: usize) -> EdgeRecord {
        self.record(self.edge_range(node).start + i)
    }

    #[inline]
    fn edge(&self, node: NodeId, first: Token) -> Option<EdgeRecord> {
        let range = self.edge_range(node);
        let start = range.start;
        self.edge_first[range]
            .binary_search(&first)
            .ok()
            .map(|i| self.record(start + i))
    }
}
