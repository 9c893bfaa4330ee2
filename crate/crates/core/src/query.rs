//! Whole-document NNSL queries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cdawg::{Cdawg, QueryCursor, SuffixProfile};
use crate::corpus::Token;

/// Per-position non-novel suffix lengths `L` and their corpus frequencies `N`
/// for one query document.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchAnnotations {
    #[serde(rename = "id", default)]
    pub doc_id: String,
    pub nnsl: Vec<u64>,
    pub counts: Vec<u64>,
}

impl MatchAnnotations {
    pub fn len(&self) -> usize {
        self.nnsl.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nnsl.is_empty()
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.doc_id = id.into();
        self
    }

    /// Checks the structural invariants every annotation must satisfy,
    /// returning a description of the first violation.
    pub fn check(&self) -> Result<(), String> {
        if self.nnsl.len() != self.counts.len() {
            return Err(format!(
                "{} lengths but {} counts",
                self.nnsl.len(),
                self.counts.len()
            ));
        }
        let mut prev = 0;
        for (i, (&l, &n)) in self.nnsl.iter().zip(&self.counts).enumerate() {
            if l > prev + 1 {
                return Err(format!(
                    "L({i}) = {l} exceeds L({}) + 1 = {}",
                    i as i64 - 1,
                    prev + 1
                ));
            }
            if (l == 0) != (n == 0) {
                return Err(format!("L({i}) = {l} but N({i}) = {n}"));
            }
            prev = l;
        }
        Ok(())
    }
}

/// A query document as read from JSONL.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryDoc {
    #[serde(default)]
    pub id: String,
    pub tokens: Vec<Token>,
}

/// Streams `query` through the index from the empty match.
///
/// Unknown token ids reset the match. Separator tokens are matched like any
/// other token, so the reported suffixes may then cross document boundaries.
pub fn nnsl_query(cdawg: &Cdawg, query: &[Token]) -> MatchAnnotations {
    warn_on_separator(cdawg, query);
    let mut nnsl = Vec::with_capacity(query.len());
    let mut counts = Vec::with_capacity(query.len());
    let mut cursor = QueryCursor::start();
    for &t in query {
        cursor = cdawg.transition(&cursor, t);
        nnsl.push(cursor.ell());
        counts.push(cdawg.cursor_count(&cursor));
    }
    let ann = MatchAnnotations {
        doc_id: String::new(),
        nnsl,
        counts,
    };
    debug_assert_eq!(ann.check(), Ok(()));
    ann
}

/// Like [`nnsl_query`], additionally returning the suffix count profile at
/// every position (`None` where nothing matched).
pub fn nnsl_query_profiles(
    cdawg: &Cdawg,
    query: &[Token],
) -> (MatchAnnotations, Vec<Option<SuffixProfile>>) {
    warn_on_separator(cdawg, query);
    let mut ann = MatchAnnotations::default();
    let mut profiles = Vec::with_capacity(query.len());
    let mut cursor = QueryCursor::start();
    for &t in query {
        cursor = cdawg.transition(&cursor, t);
        ann.nnsl.push(cursor.ell());
        ann.counts.push(cdawg.cursor_count(&cursor));
        profiles.push(cdawg.suffix_count_profile(&cursor).ok());
    }
    (ann, profiles)
}

fn warn_on_separator(cdawg: &Cdawg, query: &[Token]) {
    let sep = cdawg.separator();
    if let Some(pos) = query.iter().position(|&t| t == sep) {
        log::warn!("query contains the separator token {sep} at position {pos}; matches may span documents");
    }
}

/// Runs [`nnsl_query`] over every document on `parallelism` worker threads.
/// The output order matches the input order.
pub fn batch_query<D>(cdawg: &Cdawg, docs: &[D], parallelism: usize) -> Vec<MatchAnnotations>
where
    D: AsRef<[Token]> + Sync,
{
    run_parallel(parallelism, || {
        docs.par_iter()
            .map(|d| nnsl_query(cdawg, d.as_ref()))
            .collect()
    })
}

/// Runs `f` inside a dedicated pool of `parallelism` threads (at least one).
pub(crate) fn run_parallel<R: Send>(parallelism: usize, f: impl FnOnce() -> R + Send) -> R {
    if parallelism <= 1 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
    {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!(
                "could not start a {parallelism}-thread pool ({e}); running on the global pool"
            );
            f()
        }
    }
}

/// Removes every occurrence of `separator` from `tokens`.
pub fn strip_separator(tokens: &[Token], separator: Token) -> Vec<Token> {
    tokens.iter().copied().filter(|&t| t != separator).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdawg::build_cdawg;
    use crate::corpus::Corpus;
    use crate::oracle::oracle_nnsl;
    use proptest::prelude::*;

    fn chars(s: &str) -> Vec<Token> {
        s.bytes().map(Token::from).collect()
    }

    fn hello_world() -> Corpus {
        Corpus::new(chars("hello$world$"), b'$' as Token, 256).unwrap()
    }

    #[test]
    fn lloyd() {
        let idx = build_cdawg(&hello_world()).unwrap();
        let ann = nnsl_query(&idx, &chars("lloyd"));
        assert_eq!(ann.nnsl, vec![1, 2, 3, 0, 1]);
        assert_eq!(ann.counts, vec![3, 1, 1, 0, 1]);
    }

    #[test]
    fn empty_query() {
        let idx = build_cdawg(&hello_world()).unwrap();
        assert!(nnsl_query(&idx, &[]).is_empty());
    }

    #[test]
    fn whole_document_matches_everywhere() {
        let idx = build_cdawg(&hello_world()).unwrap();
        let ann = nnsl_query(&idx, &chars("world"));
        assert_eq!(ann.nnsl, vec![1, 2, 3, 4, 5]);
        assert!(*ann.counts.last().unwrap() >= 1);
    }

    #[test]
    fn profiles_follow_the_annotations() {
        let idx = build_cdawg(&hello_world()).unwrap();
        let (ann, profiles) = nnsl_query_profiles(&idx, &chars("lloyd"));
        assert_eq!(ann, nnsl_query(&idx, &chars("lloyd")));
        assert!(profiles[3].is_none());
        let llo = profiles[2].as_ref().unwrap();
        assert_eq!(
            llo.expand().collect::<Vec<_>>(),
            vec![(3, 1), (2, 1), (1, 2)]
        );
    }

    #[test]
    fn batch_preserves_order() {
        let idx = build_cdawg(&hello_world()).unwrap();
        let docs: Vec<Vec<Token>> = ["lloyd", "world", "", "xyz", "hello$world"]
            .iter()
            .map(|s| chars(s))
            .collect();
        let serial: Vec<_> = docs.iter().map(|d| nnsl_query(&idx, d)).collect();
        assert_eq!(batch_query(&idx, &docs, 1), serial);
        assert_eq!(batch_query(&idx, &docs, 8), serial);
    }

    #[test]
    fn check_rejects_bad_annotations() {
        let ok = MatchAnnotations {
            doc_id: "a".into(),
            nnsl: vec![1, 2, 0],
            counts: vec![3, 1, 0],
        };
        assert_eq!(ok.check(), Ok(()));
        let jump = MatchAnnotations {
            nnsl: vec![1, 3],
            counts: vec![1, 1],
            ..Default::default()
        };
        assert!(jump.check().is_err());
        let zero = MatchAnnotations {
            nnsl: vec![1],
            counts: vec![0],
            ..Default::default()
        };
        assert!(zero.check().is_err());
    }

    #[test]
    fn jsonl_field_names() {
        let ann = MatchAnnotations {
            doc_id: "d1".into(),
            nnsl: vec![1, 0],
            counts: vec![2, 0],
        };
        assert_eq!(
            serde_json::to_string(&ann).unwrap(),
            r#"{"id":"d1","nnsl":[1,0],"counts":[2,0]}"#
        );
        let doc: QueryDoc = serde_json::from_str(r#"{"id":"q","tokens":[1,2]}"#).unwrap();
        assert_eq!(doc.tokens, vec![1, 2]);
    }

    fn corpus_and_query() -> impl Strategy<Value = (Corpus, Vec<Token>)> {
        (2u32..6, 1usize..6).prop_flat_map(|(vocab, docs)| {
            let doc = prop::collection::vec(1..vocab, 1..40);
            (
                prop::collection::vec(doc, docs),
                prop::collection::vec(0..vocab + 2, 0..60),
            )
                .prop_map(move |(docs, q)| (Corpus::from_documents(&docs, 0, vocab).unwrap(), q))
        })
    }

    proptest! {
        #[test]
        fn matches_oracle((corpus, q) in corpus_and_query()) {
            let idx = build_cdawg(&corpus).unwrap();
            let ann = nnsl_query(&idx, &q);
            prop_assert_eq!(ann.check(), Ok(()));
            prop_assert_eq!(&ann, &oracle_nnsl(&corpus, &q));
            for (i, &l) in ann.nnsl.iter().enumerate() {
                if l == 0 {
                    prop_assert!(!corpus.tokens().contains(&q[i]));
                }
            }
        }
    }
}
