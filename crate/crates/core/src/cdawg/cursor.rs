//! Streaming traversal: the query cursor and its single-token transition.
//!
//! A cursor stands at a node, or part-way along one of its outgoing edges.
//! `ell` is the length of the matched string, which may be shorter than the
//! node's `max_length`: every string in a node's class leads to that node.
//!
//! On a mismatch the cursor follows the failure link of the node it hangs
//! off and re-descends the pending partial edge from there (canonization).
//! The failure of the source is an implicit node with one length-1 edge to
//! the source per token, so failing from the source drops the first pending
//! token.

use serde::{Deserialize, Serialize};

use crate::corpus::Token;

use super::{with_graph, Cdawg, GraphView, IndexError, NodeId, Span};

/// Position of a streaming match inside a [`Cdawg`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QueryCursor {
    node: NodeId,
    /// Consumed prefix of the active edge, in the edge's own corpus
    /// positions. Empty when the cursor stands at `node`.
    progress: Span,
    edge_end: u64,
    target: NodeId,
    ell: u64,
}

impl QueryCursor {
    /// The empty match at the source.
    pub fn start() -> Self {
        QueryCursor {
            node: NodeId::SOURCE,
            progress: Span::default(),
            edge_end: 0,
            target: NodeId::SOURCE,
            ell: 0,
        }
    }

    pub fn ell(&self) -> u64 {
        self.ell
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn progress(&self) -> Span {
        self.progress
    }

    pub fn at_node(&self) -> bool {
        self.progress.is_empty()
    }

    /// The node whose count applies to the matched string: the cursor's node,
    /// or the active edge's target when mid-edge.
    pub fn count_node(&self) -> NodeId {
        if self.at_node() {
            self.node
        } else {
            self.target
        }
    }
}

impl Default for QueryCursor {
    fn default() -> Self {
        Self::start()
    }
}

/// Work counters for a sequence of transitions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionSteps {
    /// Tokens fed in.
    pub tokens: u64,
    /// Failure transitions taken.
    pub failures: u64,
    /// Whole edges skipped while re-descending pending progress.
    pub canonize_hops: u64,
}

impl TransitionSteps {
    pub fn total(&self) -> u64 {
        self.tokens + self.failures + self.canonize_hops
    }
}

/// One constant piece of a suffix count profile: every suffix of the
/// matched string with length in `shortest..=longest` occurs `count` times.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileStep {
    pub shortest: u64,
    pub longest: u64,
    pub count: u64,
}

/// Occurrence counts of every suffix of a match, longest first. The steps
/// tile `1..=ell` without gaps.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuffixProfile {
    pub steps: Vec<ProfileStep>,
}

impl SuffixProfile {
    pub fn ell(&self) -> u64 {
        self.steps.first().map_or(0, |s| s.longest)
    }

    /// Count of the length-`m` suffix; 0 beyond the match or for `m == 0`.
    pub fn count_at(&self, m: u64) -> u64 {
        if m == 0 {
            return 0;
        }
        // Steps are sorted by decreasing length.
        let i = self.steps.partition_point(|s| s.shortest > m);
        match self.steps.get(i) {
            Some(s) if s.longest >= m => s.count,
            _ => 0,
        }
    }

    /// `(m, count)` for every length `m` in `1..=ell`, longest first.
    pub fn expand(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.steps
            .iter()
            .flat_map(|s| (s.shortest..=s.longest).rev().map(move |m| (m, s.count)))
    }

    /// Pointwise sum of several profiles (used to merge shard results).
    pub fn sum<'a>(profiles: impl IntoIterator<Item = &'a SuffixProfile>) -> SuffixProfile {
        let profiles: Vec<&SuffixProfile> = profiles.into_iter().collect();
        let mut cuts: Vec<u64> = profiles
            .iter()
            .flat_map(|p| p.steps.iter().flat_map(|s| [s.shortest, s.longest + 1]))
            .collect();
        cuts.sort_unstable();
        cuts.dedup();
        let mut steps: Vec<ProfileStep> = Vec::new();
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1] - 1);
            let count: u64 = profiles.iter().map(|p| p.count_at(lo)).sum();
            if count == 0 {
                continue;
            }
            match steps.last_mut() {
                Some(last) if last.count == count && last.longest + 1 == lo => last.longest = hi,
                _ => steps.push(ProfileStep {
                    shortest: lo,
                    longest: hi,
                    count,
                }),
            }
        }
        steps.reverse();
        SuffixProfile { steps }
    }
}

#[inline]
fn at_node(node: NodeId, ell: u64) -> QueryCursor {
    QueryCursor {
        node,
        progress: Span::default(),
        edge_end: 0,
        target: node,
        ell,
    }
}

/// Re-descends `pending` from `node`, hopping whole edges and stopping
/// part-way along the first edge longer than what remains.
fn canonize<G: GraphView + ?Sized>(
    g: &G,
    mut node: NodeId,
    mut pending: Span,
    ell: u64,
    steps: &mut TransitionSteps,
) -> QueryCursor {
    while !pending.is_empty() {
        let e = g
            .edge(node, g.token(pending.alpha))
            .expect("pending progress is a substring and must re-descend");
        let len = e.span.len();
        if len <= pending.len() {
            steps.canonize_hops += 1;
            node = e.target;
            pending.alpha += len;
        } else {
            return QueryCursor {
                node,
                progress: Span::new(e.span.alpha, e.span.alpha + pending.len()),
                edge_end: e.span.omega,
                target: e.target,
                ell,
            };
        }
    }
    at_node(node, ell)
}

/// The implicit failure transition: the longest proper suffix of the
/// cursor's match that leads to a different position.
fn fail<G: GraphView + ?Sized>(g: &G, c: &QueryCursor, steps: &mut TransitionSteps) -> QueryCursor {
    steps.failures += 1;
    match g.failure(c.node) {
        Some(f) => canonize(g, f, c.progress, g.max_length(f) + c.progress.len(), steps),
        None => {
            debug_assert!(!c.progress.is_empty());
            let pending = Span::new(c.progress.alpha + 1, c.progress.omega);
            canonize(g, NodeId::SOURCE, pending, pending.len(), steps)
        }
    }
}

/// Extends the match by `token` if the extended string is a substring.
#[inline]
fn step<G: GraphView + ?Sized>(g: &G, c: &QueryCursor, token: Token) -> Option<QueryCursor> {
    if token >= g.vocab_size() {
        return None;
    }
    let mut next = *c;
    if !c.at_node() {
        if g.token(c.progress.omega) != token {
            return None;
        }
        next.progress.omega += 1;
    } else {
        let e = g.edge(c.node, token)?;
        next.progress = Span::new(e.span.alpha, e.span.alpha + 1);
        next.edge_end = e.span.omega;
        next.target = e.target;
    }
    next.ell += 1;
    if next.progress.omega == next.edge_end {
        next = at_node(next.target, next.ell);
    }
    Some(next)
}

pub(crate) fn transition<G: GraphView + ?Sized>(
    g: &G,
    c: &QueryCursor,
    token: Token,
    steps: &mut TransitionSteps,
) -> QueryCursor {
    steps.tokens += 1;
    // Unknown ids and the construction sentinel never match.
    if token >= g.vocab_size() {
        return QueryCursor::start();
    }
    let mut c = *c;
    loop {
        if let Some(next) = step(g, &c, token) {
            return next;
        }
        if c.node == NodeId::SOURCE && c.at_node() {
            return QueryCursor::start();
        }
        c = fail(g, &c, steps);
    }
}

pub(crate) fn cursor_count<G: GraphView + ?Sized>(g: &G, c: &QueryCursor) -> u64 {
    if c.ell == 0 {
        0
    } else {
        g.count(c.count_node())
    }
}

pub(crate) fn suffix_count_profile<G: GraphView + ?Sized>(
    g: &G,
    c: &QueryCursor,
) -> Result<SuffixProfile, IndexError> {
    if c.ell == 0 {
        return Err(IndexError::EmptyMatch);
    }
    let mut steps = Vec::new();
    let mut scratch = TransitionSteps::default();
    let mut cur = *c;
    loop {
        let below = match g.failure(cur.node) {
            Some(f) => g.max_length(f) + cur.progress.len(),
            None => cur.progress.len() - 1,
        };
        steps.push(ProfileStep {
            shortest: below + 1,
            longest: cur.ell,
            count: cursor_count(g, &cur),
        });
        if below == 0 {
            break;
        }
        cur = fail(g, &cur, &mut scratch);
        debug_assert_eq!(cur.ell, below);
    }
    Ok(SuffixProfile { steps })
}

impl Cdawg {
    /// Feeds one token: the result matches the longest suffix of
    /// (matched string + `token`) that occurs in the corpus.
    pub fn transition(&self, cursor: &QueryCursor, token: Token) -> QueryCursor {
        let mut steps = TransitionSteps::default();
        with_graph!(self, g => transition(g, cursor, token, &mut steps))
    }

    pub fn transition_counted(
        &self,
        cursor: &QueryCursor,
        token: Token,
        steps: &mut TransitionSteps,
    ) -> QueryCursor {
        with_graph!(self, g => transition(g, cursor, token, steps))
    }

    /// Occurrence count of the matched string; 0 for the empty match.
    pub fn cursor_count(&self, cursor: &QueryCursor) -> u64 {
        with_graph!(self, g => cursor_count(g, cursor))
    }

    /// Strict extension without failure transitions.
    pub fn step(&self, cursor: &QueryCursor, token: Token) -> Option<QueryCursor> {
        with_graph!(self, g => step(g, cursor, token))
    }

    /// Traverses `tokens` from the source; `None` if they are not a substring.
    pub fn walk(&self, tokens: &[Token]) -> Option<QueryCursor> {
        with_graph!(self, g => {
            let mut c = QueryCursor::start();
            for &t in tokens {
                c = step(g, &c, t)?;
            }
            Some(c)
        })
    }

    pub fn contains(&self, tokens: &[Token]) -> bool {
        self.walk(tokens).is_some()
    }

    /// Occurrence count of `tokens` in the corpus (0 if absent or empty).
    pub fn occurrences(&self, tokens: &[Token]) -> u64 {
        self.walk(tokens).map_or(0, |c| self.cursor_count(&c))
    }

    /// Counts of every suffix of the cursor's match, as a step function
    /// over lengths `1..=ell`.
    pub fn suffix_count_profile(&self, cursor: &QueryCursor) -> Result<SuffixProfile, IndexError> {
        with_graph!(self, g => suffix_count_profile(g, cursor))
    }
}
