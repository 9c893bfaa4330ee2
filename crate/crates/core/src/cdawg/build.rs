// Online CDAWG construction, following Inenaga et al., "On-line construction
// of compact directed acyclic word graphs" (Discrete Applied Mathematics,
// 2005), Figure 17.
//
// Indexing follows the original pseudo-code: positions are 1-based and a
// span (k, p) is inclusive on both ends, so w(k)..=w(p) is its label. A span
// with k > p is empty. Leaf edges into the sink are open-ended (end = OPEN)
// and read their end from the global end pointer `e` until finalization.
// The auxiliary node ⊥ (failure of the source) is the handle BOTTOM: it has
// an edge of length 1 to the source for every token.
//
// Edges are found through one open-addressed table keyed by (node, first
// token), and through a dense per-token array for the source. Each node also
// threads its edges into a list so they can be cloned and frozen.

use crate::corpus::{Corpus, Token};

use super::pages;
use super::ram::RamGraph;
use super::{Cdawg, IndexError};

const OPEN: u64 = u64::MAX;
const BOTTOM: u32 = u32::MAX;
const NONE: u32 = u32::MAX;
const SOURCE: u32 = 0;
const SINK: u32 = 1;

struct Node {
    length: u64,
    failure: u32,
    first_edge: u32,
}

#[derive(Clone, Copy)]
struct Edge {
    start: u64,
    end: u64,
    target: u32,
    /// Next edge out of the same node.
    next: u32,
}

#[derive(Clone, Copy)]
struct Slot {
    node: u32,
    token: Token,
    edge: u32,
}

const EMPTY: Slot = Slot {
    node: 0,
    token: 0,
    edge: NONE,
};

/// Linear-probing map from (node, first token) to edge id, kept at most
/// half full. Entries are never removed.
struct EdgeTable {
    slots: Vec<Slot>,
    shift: u32,
    len: usize,
}

impl EdgeTable {
    fn with_capacity(edges: usize) -> Self {
        let size = (edges * 2).next_power_of_two().max(1024);
        let mut slots = pages::with_capacity(size);
        slots.resize(size, EMPTY);
        EdgeTable {
            slots,
            shift: 64 - size.trailing_zeros(),
            len: 0,
        }
    }

    #[inline]
    fn home(&self, node: u32, token: Token) -> usize {
        let key = (node as u64) << 32 | token as u64;
        (key.wrapping_mul(0x9e37_79b9_7f4a_7c15) >> self.shift) as usize
    }

    #[inline]
    fn get(&self, node: u32, token: Token) -> Option<u32> {
        let mask = self.slots.len() - 1;
        let mut i = self.home(node, token);
        loop {
            let slot = self.slots[i];
            if slot.edge == NONE {
                return None;
            }
            if slot.node == node && slot.token == token {
                return Some(slot.edge);
            }
            i = (i + 1) & mask;
        }
    }

    fn insert(&mut self, node: u32, token: Token, edge: u32) {
        if (self.len + 1) * 2 > self.slots.len() {
            self.grow();
        }
        self.place(Slot { node, token, edge });
        self.len += 1;
    }

    fn place(&mut self, slot: Slot) {
        let mask = self.slots.len() - 1;
        let mut i = self.home(slot.node, slot.token);
        while self.slots[i].edge != NONE {
            debug_assert!(!(self.slots[i].node == slot.node && self.slots[i].token == slot.token));
            i = (i + 1) & mask;
        }
        self.slots[i] = slot;
    }

    fn grow(&mut self) {
        let mut bigger = EdgeTable::with_capacity(self.slots.len());
        for &slot in self.slots.iter().filter(|s| s.edge != NONE) {
            bigger.place(slot);
        }
        bigger.len = self.len;
        *self = bigger;
    }
}

/// Incremental builder. Tokens are appended left to right with
/// [`CdawgBuilder::push`]; [`CdawgBuilder::finish`] appends the sentinel and
/// freezes the graph.
pub struct CdawgBuilder {
    tokens: Vec<Token>,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    table: EdgeTable,
    /// Edge ids out of the source indexed by token.
    source_edges: Vec<u32>,
    e: u64,
    active: (u32, u64),
    separator: Token,
    vocab_size: u32,
}

impl CdawgBuilder {
    pub fn new(separator: Token, vocab_size: u32) -> Self {
        Self::with_capacity(separator, vocab_size, 0)
    }

    pub fn with_capacity(separator: Token, vocab_size: u32, tokens: usize) -> Self {
        let mut nodes = pages::with_capacity(tokens / 2 + 2);
        for (length, failure) in [(0, BOTTOM), (0, SOURCE)] {
            nodes.push(Node {
                length,
                failure,
                first_edge: NONE,
            });
        }
        CdawgBuilder {
            tokens: pages::with_capacity(tokens + 1),
            nodes,
            edges: pages::with_capacity(tokens + tokens / 2),
            table: EdgeTable::with_capacity(tokens + tokens / 2),
            source_edges: Vec::new(),
            e: 0,
            active: (SOURCE, 1),
            separator,
            vocab_size,
        }
    }

    pub fn from_corpus(corpus: &Corpus) -> Result<Self, IndexError> {
        let mut builder =
            Self::with_capacity(corpus.separator(), corpus.vocab_size(), corpus.len());
        for &token in corpus.tokens() {
            builder.push(token)?;
        }
        Ok(builder)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn push(&mut self, token: Token) -> Result<(), IndexError> {
        if token >= self.vocab_size {
            return Err(crate::corpus::CorpusError::TokenOutOfRange {
                token: token as u64,
                position: self.tokens.len(),
                vocab_size: self.vocab_size,
            }
            .into());
        }
        self.append(token)
    }

    fn append(&mut self, token: Token) -> Result<(), IndexError> {
        // One update creates at most one split node, one clone and a bounded
        // number of edges, so checking the headroom up front is enough.
        let headroom = self.vocab_size as u64 + 4;
        if self.nodes.len() as u64 + 4 >= BOTTOM as u64 {
            return Err(IndexError::CapacityExceeded {
                what: "node",
                bits: 32,
            });
        }
        if self.edges.len() as u64 + headroom >= NONE as u64 {
            return Err(IndexError::CapacityExceeded {
                what: "edge",
                bits: 32,
            });
        }
        pages::push(&mut self.tokens, token);
        self.e += 1;
        self.nodes[SINK as usize].length = self.e;
        let (s, k) = self.active;
        self.active = self.update(s, k, self.e);
        Ok(())
    }

    /// Appends the sentinel, closes every open edge and freezes the graph.
    /// Counts are left unpopulated.
    pub fn finish(mut self) -> Result<Cdawg, IndexError> {
        if self.tokens.is_empty() {
            return Err(crate::corpus::CorpusError::Empty.into());
        }
        let sentinel = self.vocab_size;
        self.append(sentinel)?;
        let end = self.e;
        for edge in &mut self.edges {
            if edge.end == OPEN {
                edge.end = end;
            }
        }
        Ok(Cdawg::from_ram(self.freeze(), false))
    }

    fn out_edges(&self, v: u32) -> impl Iterator<Item = u32> + '_ {
        let mut ei = self.nodes[v as usize].first_edge;
        std::iter::from_fn(move || {
            (ei != NONE).then(|| {
                let current = ei;
                ei = self.edges[ei as usize].next;
                current
            })
        })
    }

    fn freeze(self) -> RamGraph {
        let n = self.nodes.len();
        // Sorted (first token, edge id) lists for every node, laid out by node.
        let mut offsets: Vec<usize> = Vec::with_capacity(n + 1);
        let mut adjacency: Vec<(Token, u32)> = pages::with_capacity(self.edges.len());
        offsets.push(0);
        for v in 0..n as u32 {
            let start = adjacency.len();
            adjacency.extend(
                self.out_edges(v)
                    .map(|ei| (self.w(self.edges[ei as usize].start), ei)),
            );
            adjacency[start..].sort_unstable();
            offsets.push(adjacency.len());
        }

        // Renumber reachable nodes in creation order; source and sink stay 0 and 1.
        let mut reachable = vec![false; n];
        let mut stack = vec![SOURCE];
        reachable[SOURCE as usize] = true;
        while let Some(v) = stack.pop() {
            for &(_, ei) in &adjacency[offsets[v as usize]..offsets[v as usize + 1]] {
                let t = self.edges[ei as usize].target;
                if !reachable[t as usize] {
                    reachable[t as usize] = true;
                    stack.push(t);
                }
            }
        }
        let mut new_id = vec![u32::MAX; n];
        let mut live = 0usize;
        let mut n_edges = 0usize;
        for v in 0..n {
            if reachable[v] {
                new_id[v] = live as u32;
                live += 1;
                n_edges += offsets[v + 1] - offsets[v];
            }
        }

        let mut g = RamGraph::with_capacity(live, n_edges);
        g.separator = self.separator;
        g.vocab_size = self.vocab_size;
        for (v, node) in self.nodes.iter().enumerate() {
            if !reachable[v] {
                continue;
            }
            g.max_length.push(node.length);
            g.failure.push(match node.failure {
                BOTTOM => super::ram::NO_NODE,
                f => new_id[f as usize],
            });
            for &(first, ei) in &adjacency[offsets[v]..offsets[v + 1]] {
                let edge = self.edges[ei as usize];
                g.edge_first.push(first);
                // (k, p) inclusive 1-based is [k - 1, p) 0-based.
                g.edge_alpha.push(edge.start - 1);
                g.edge_omega.push(edge.end);
                g.edge_target.push(new_id[edge.target as usize]);
            }
            g.edge_offsets.push(g.edge_first.len() as u32);
        }
        g.count.resize(live, 0);
        g.tokens = self.tokens;
        g
    }

    #[inline]
    fn w(&self, i: u64) -> Token {
        self.tokens[(i - 1) as usize]
    }

    #[inline]
    fn find(&self, s: u32, a: Token) -> Option<u32> {
        if s == SOURCE {
            self.source_edges
                .get(a as usize)
                .copied()
                .filter(|&ei| ei != NONE)
        } else {
            self.table.get(s, a)
        }
    }

    /// The edge out of `s` starting with `a`, which must exist.
    #[inline]
    fn edge_mut(&mut self, s: u32, a: Token) -> &mut Edge {
        let ei = self
            .find(s, a)
            .expect("active point must follow an existing edge");
        &mut self.edges[ei as usize]
    }

    fn add_edge(&mut self, from: u32, start: u64, end: u64, target: u32) {
        let first = self.w(start);
        debug_assert!(self.find(from, first).is_none(), "duplicate edge label");
        let ei = self.edges.len() as u32;
        let node = &mut self.nodes[from as usize];
        pages::push(
            &mut self.edges,
            Edge {
                start,
                end,
                target,
                next: node.first_edge,
            },
        );
        node.first_edge = ei;
        if from == SOURCE {
            if self.source_edges.len() <= first as usize {
                self.source_edges.resize(first as usize + 1, NONE);
            }
            self.source_edges[first as usize] = ei;
        } else {
            self.table.insert(from, first, ei);
        }
    }

    fn add_node(&mut self, length: u64, failure: u32) -> u32 {
        let id = self.nodes.len() as u32;
        pages::push(
            &mut self.nodes,
            Node {
                length,
                failure,
                first_edge: NONE,
            },
        );
        id
    }

    /// Length of `s` as a signed value; ⊥ has length -1.
    fn length(&self, s: u32) -> i64 {
        if s == BOTTOM {
            -1
        } else {
            self.nodes[s as usize].length as i64
        }
    }

    fn failure(&self, s: u32) -> u32 {
        self.nodes[s as usize].failure
    }

    /// (start, current end, target) of the edge out of `s` starting with `a`.
    fn edge_span(&self, s: u32, a: Token) -> (u64, u64, u32) {
        if s == BOTTOM {
            return (0, 0, SOURCE);
        }
        let ei = self
            .find(s, a)
            .expect("active point must follow an existing edge");
        let edge = &self.edges[ei as usize];
        (edge.start, edge.end.min(self.e), edge.target)
    }

    fn canonize(&self, mut s: u32, mut k: u64, p: u64) -> (u32, u64) {
        if k > p {
            return (s, k);
        }
        let (mut kk, mut pp, mut ss) = self.edge_span(s, self.w(k));
        // pp - kk <= p - k, rearranged to stay unsigned.
        while pp + k <= p + kk {
            k += pp + 1 - kk;
            s = ss;
            if k <= p {
                (kk, pp, ss) = self.edge_span(s, self.w(k));
            }
        }
        (s, k)
    }

    fn check_end_point(&self, s: u32, k: u64, p: u64, c: Token) -> bool {
        if k <= p {
            let (kk, _, _) = self.edge_span(s, self.w(k));
            c == self.w(kk + p - k + 1)
        } else {
            s == BOTTOM || self.find(s, c).is_some()
        }
    }

    fn extension(&self, s: u32, k: u64, p: u64) -> u32 {
        if k > p {
            s
        } else {
            self.edge_span(s, self.w(k)).2
        }
    }

    fn redirect_edge(&mut self, s: u32, k: u64, p: u64, r: u32) {
        let a = self.w(k);
        let edge = self.edge_mut(s, a);
        edge.end = edge.start + p - k;
        edge.target = r;
    }

    fn split_edge(&mut self, s: u32, k: u64, p: u64) -> u32 {
        let length = self.nodes[s as usize].length + (p - k + 1);
        let r = self.add_node(length, BOTTOM);
        let a = self.w(k);
        let edge = self.edge_mut(s, a);
        let Edge {
            start, end, target, ..
        } = *edge;
        let mid = start + p - k;
        edge.end = mid;
        edge.target = r;
        self.add_edge(r, mid + 1, end, target);
        r
    }

    fn update(&mut self, s: u32, k: u64, p: u64) -> (u32, u64) {
        let c = self.w(p);
        let (mut s, mut k) = (s, k);
        let mut old_r = BOTTOM;
        let mut dest = BOTTOM;
        let mut r = BOTTOM;
        while !self.check_end_point(s, k, p - 1, c) {
            if k < p {
                let ext = self.extension(s, k, p - 1);
                if dest != BOTTOM && ext == dest {
                    self.redirect_edge(s, k, p - 1, r);
                    (s, k) = self.canonize(self.failure(s), k, p - 1);
                    continue;
                }
                dest = ext;
                r = self.split_edge(s, k, p - 1);
            } else {
                r = s;
            }
            self.add_edge(r, p, OPEN, SINK);
            if old_r != BOTTOM {
                self.nodes[old_r as usize].failure = r;
            }
            old_r = r;
            (s, k) = self.canonize(self.failure(s), k, p - 1);
        }
        if old_r != BOTTOM {
            self.nodes[old_r as usize].failure = s;
        }
        self.separate_node(s, k, p)
    }

    fn separate_node(&mut self, s: u32, k: u64, p: u64) -> (u32, u64) {
        let (s1, k1) = self.canonize(s, k, p);
        if k1 <= p {
            return (s1, k1);
        }
        let length = self.length(s) + (p - k + 1) as i64;
        if self.length(s1) == length {
            return (s1, k1);
        }

        // Non-solid: clone s1 into s2 and move the edges reaching s1 via
        // suffixes of the active string over to s2.
        let s2 = self.add_node(length as u64, self.failure(s1));
        let originals: Vec<u32> = self.out_edges(s1).collect();
        for ei in originals {
            let Edge {
                start, end, target, ..
            } = self.edges[ei as usize];
            self.add_edge(s2, start, end, target);
        }
        self.nodes[s1 as usize].failure = s2;

        let (mut s, mut k) = (s, k);
        loop {
            let a = self.w(k);
            let edge = self.edge_mut(s, a);
            edge.start = k;
            edge.end = p;
            edge.target = s2;
            (s, k) = self.canonize(self.failure(s), k, p - 1);
            if self.canonize(s, k, p) != (s1, k1) {
                break;
            }
        }
        (s2, p + 1)
    }
}
