//! Brute-force references computed straight from the definitions by naive
//! scanning of the corpus. They share no code with the index and are meant
//! for differential testing and the CLI's `--verify` mode, not for speed.

use std::collections::HashMap;

use crate::corpus::{Corpus, Token};
use crate::query::MatchAnnotations;

/// Number of (possibly overlapping) occurrences of `pattern` in `text`.
/// The empty pattern has no occurrences by convention.
pub fn occurrences(text: &[Token], pattern: &[Token]) -> u64 {
    if pattern.is_empty() || pattern.len() > text.len() {
        return 0;
    }
    text.windows(pattern.len())
        .filter(|w| *w == pattern)
        .count() as u64
}

pub fn contains(text: &[Token], pattern: &[Token]) -> bool {
    pattern.is_empty() || text.windows(pattern.len()).any(|w| w == pattern)
}

/// Per-position longest occurring suffix length and its frequency.
///
/// At position `i` the candidate lengths are scanned downward starting from
/// `L(i - 1) + 1`: a suffix of length `m` ending at `i` that occurs implies
/// that its length-`m - 1` prefix ending at `i - 1` occurs too.
pub fn oracle_nnsl(corpus: &Corpus, query: &[Token]) -> MatchAnnotations {
    let text = corpus.tokens();
    let mut nnsl = Vec::with_capacity(query.len());
    let mut counts = Vec::with_capacity(query.len());
    let mut prev = 0usize;
    for i in 0..query.len() {
        let mut len = prev + 1;
        while len > 0 && !contains(text, &query[i + 1 - len..=i]) {
            len -= 1;
        }
        nnsl.push(len as u64);
        counts.push(occurrences(text, &query[i + 1 - len..=i]));
        prev = len;
    }
    MatchAnnotations {
        doc_id: String::new(),
        nnsl,
        counts,
    }
}

/// `(novel, total)` n-grams of `query`, counted with multiplicity by direct
/// corpus search. `(0, 0)` when the query is shorter than `n`.
pub fn oracle_novelty(corpus: &Corpus, query: &[Token], n: usize) -> (u64, u64) {
    assert!(n >= 1, "n must be positive");
    if n > query.len() {
        return (0, 0);
    }
    let text = corpus.tokens();
    let mut novel = 0;
    let mut total = 0;
    for gram in query.windows(n) {
        total += 1;
        if !contains(text, gram) {
            novel += 1;
        }
    }
    (novel, total)
}

/// Occurrence counts of the suffixes of `matched`, longest first, as
/// `(length, count)` pairs for every length `1..=matched.len()`.
pub fn oracle_suffix_counts(corpus: &Corpus, matched: &[Token]) -> Vec<(u64, u64)> {
    (1..=matched.len())
        .rev()
        .map(|m| {
            (
                m as u64,
                occurrences(corpus.tokens(), &matched[matched.len() - m..]),
            )
        })
        .collect()
}

/// Exact count of every distinct substring of `text` up to `max_len` tokens.
pub fn substring_counts(text: &[Token], max_len: usize) -> HashMap<&[Token], u64> {
    let mut counts = HashMap::new();
    for start in 0..text.len() {
        for len in 1..=max_len.min(text.len() - start) {
            *counts.entry(&text[start..start + len]).or_insert(0) += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chars(s: &str) -> Vec<Token> {
        s.bytes().map(Token::from).collect()
    }

    fn hello_world() -> Corpus {
        Corpus::new(chars("hello$world$"), b'$' as Token, 256).unwrap()
    }

    #[test]
    fn lloyd_example() {
        let ann = oracle_nnsl(&hello_world(), &chars("lloyd"));
        assert_eq!(ann.nnsl, vec![1, 2, 3, 0, 1]);
        assert_eq!(ann.counts, vec![3, 1, 1, 0, 1]);
    }

    #[test]
    fn unknown_tokens_are_all_zero() {
        let ann = oracle_nnsl(&hello_world(), &[1000, 1001, 7]);
        assert_eq!(ann.nnsl, vec![0, 0, 0]);
        assert_eq!(ann.counts, vec![0, 0, 0]);
    }

    #[test]
    fn novelty_by_direct_count() {
        let c = hello_world();
        let q = chars("lloyd");
        assert_eq!(oracle_novelty(&c, &q, 1), (1, 5));
        assert_eq!(oracle_novelty(&c, &q, 2), (2, 4));
        assert_eq!(oracle_novelty(&c, &q, 3), (2, 3));
        assert_eq!(oracle_novelty(&c, &q, 4), (2, 2));
        assert_eq!(oracle_novelty(&c, &q, 6), (0, 0));
        let hello = chars("hello");
        assert_eq!(oracle_novelty(&c, &hello, 5), (0, 1));
    }

    #[test]
    fn suffix_counts_of_llo() {
        let counts = oracle_suffix_counts(&hello_world(), &chars("llo"));
        assert_eq!(counts, vec![(3, 1), (2, 1), (1, 2)]);
    }

    #[test]
    fn invariant_under_document_permutation() {
        let a = Corpus::new(chars("hello$world$lol$"), b'$' as Token, 256).unwrap();
        let b = Corpus::new(chars("lol$world$hello$"), b'$' as Token, 256).unwrap();
        for q in ["lloyd", "world", "oll", "dlrow", "hellworld"] {
            let q = chars(q);
            assert_eq!(oracle_nnsl(&a, &q), oracle_nnsl(&b, &q));
        }
    }

    #[test]
    fn substring_table() {
        let text = chars("abab");
        let counts = substring_counts(&text, 3);
        assert_eq!(counts[&chars("ab")[..]], 2);
        assert_eq!(counts[&chars("bab")[..]], 1);
        assert!(!counts.contains_key(&chars("abab")[..]));
    }
}
