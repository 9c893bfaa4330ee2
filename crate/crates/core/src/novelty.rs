//! Aggregate metrics over query annotations: length histograms, n-novelty
//! curves, NNSL summary statistics, the entropy lower bound on novelty, and
//! completion-loss binning by token condition and n-gram frequency.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::cdawg::SuffixProfile;
use crate::query::MatchAnnotations;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NoveltyError {
    #[error("max_n must be at least 1")]
    InvalidMaxN,
    #[error("no NNSL values to summarize")]
    EmptyInput,
    #[error("document {doc}: expected {expected} values, got {actual}")]
    Misaligned {
        doc: String,
        expected: usize,
        actual: usize,
    },
    #[error("no losses supplied for document {0:?}")]
    MissingLosses(String),
    #[error("invalid lower-bound parameters: {0}")]
    InvalidParams(String),
    #[error("frequency bin edges must be positive and strictly increasing")]
    InvalidBinEdges,
}

/// `c[n]` = number of positions whose NNSL is exactly `n`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthHistogram {
    pub c: BTreeMap<u64, u64>,
    pub total_positions: u64,
}

impl LengthHistogram {
    pub fn from_lengths(lengths: &[u64]) -> Self {
        let mut h = LengthHistogram::default();
        h.add(lengths);
        h
    }

    pub fn add(&mut self, lengths: &[u64]) {
        for &l in lengths {
            *self.c.entry(l).or_insert(0) += 1;
        }
        self.total_positions += lengths.len() as u64;
    }

    /// Number of positions with NNSL strictly below `n`.
    pub fn below(&self, n: u64) -> u64 {
        self.c.range(..n).map(|(_, &v)| v).sum()
    }
}

pub fn length_histogram(annotations: &[MatchAnnotations]) -> LengthHistogram {
    let mut h = LengthHistogram::default();
    for a in annotations {
        h.add(&a.nnsl);
    }
    h
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoveltyRow {
    pub n: u64,
    pub novel: u64,
    pub total: u64,
    pub ratio: f64,
}

impl NoveltyRow {
    fn new(n: u64, novel: u64, total: u64) -> Self {
        NoveltyRow {
            n,
            novel,
            total,
            ratio: novel as f64 / total as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocumentCurve {
    pub id: String,
    pub rows: Vec<NoveltyRow>,
}

/// Pooled n-novelty curve plus one curve per document. Rows whose total is
/// zero (n longer than every document) are left out.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoveltyCurve {
    pub pooled: Vec<NoveltyRow>,
    pub documents: Vec<DocumentCurve>,
}

pub const NOVELTY_CSV_HEADER: &str = "n,novel,total,ratio";

impl NoveltyCurve {
    pub fn row(&self, n: u64) -> Option<&NoveltyRow> {
        self.pooled.iter().find(|r| r.n == n)
    }

    /// Pooled rows as CSV, ratios rounded to three decimals.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{NOVELTY_CSV_HEADER}\n");
        for r in &self.pooled {
            let _ = writeln!(out, "{},{},{},{:?}", r.n, r.novel, r.total, round3(r.ratio));
        }
        out
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Novel n-grams of one document from its NNSL histogram: the first `n - 1`
/// positions always have `L < n` but end no n-gram.
fn novel_and_total(h: &LengthHistogram, n: u64) -> (u64, u64) {
    let novel = h.below(n).saturating_sub(n - 1);
    let total = h.total_positions.saturating_sub(n - 1);
    (novel, total)
}

/// n-novelty for `n = 1..=max_n`, pooling documents by summing numerators
/// and denominators separately.
pub fn novelty_curve(
    annotations: &[MatchAnnotations],
    max_n: u64,
) -> Result<NoveltyCurve, NoveltyError> {
    if max_n == 0 {
        return Err(NoveltyError::InvalidMaxN);
    }
    let hists: Vec<LengthHistogram> = annotations
        .iter()
        .map(|a| LengthHistogram::from_lengths(&a.nnsl))
        .collect();
    let longest = hists.iter().map(|h| h.total_positions).max().unwrap_or(0);
    let mut curve = NoveltyCurve::default();
    for n in 1..=max_n.min(longest) {
        let (mut novel, mut total) = (0, 0);
        for h in &hists {
            let (a, b) = novel_and_total(h, n);
            novel += a;
            total += b;
        }
        curve.pooled.push(NoveltyRow::new(n, novel, total));
    }
    for (a, h) in annotations.iter().zip(&hists) {
        let rows = (1..=max_n.min(h.total_positions))
            .map(|n| {
                let (novel, total) = novel_and_total(h, n);
                NoveltyRow::new(n, novel, total)
            })
            .collect();
        curve.documents.push(DocumentCurve {
            id: a.doc_id.clone(),
            rows,
        });
    }
    Ok(curve)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub positions: u64,
    pub mean: f64,
    pub max: u64,
    pub median: f64,
}

impl Summary {
    /// `None` for an empty slice. The median of an even count is the mean
    /// of the two middle values.
    pub fn of(values: &[u64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_unstable();
        let k = sorted.len();
        let median = if k % 2 == 1 {
            sorted[k / 2] as f64
        } else {
            (sorted[k / 2 - 1] + sorted[k / 2]) as f64 / 2.0
        };
        let sum: u128 = values.iter().map(|&v| v as u128).sum();
        Some(Summary {
            positions: k as u64,
            mean: sum as f64 / k as f64,
            max: sorted[k - 1],
            median,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocumentStats {
    pub id: String,
    /// `None` for an empty document.
    pub stats: Option<Summary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NnslStats {
    pub pooled: Summary,
    pub documents: Vec<DocumentStats>,
}

pub fn nnsl_stats(annotations: &[MatchAnnotations]) -> Result<NnslStats, NoveltyError> {
    let all: Vec<u64> = annotations
        .iter()
        .flat_map(|a| a.nnsl.iter().copied())
        .collect();
    let pooled = Summary::of(&all).ok_or(NoveltyError::EmptyInput)?;
    let documents = annotations
        .iter()
        .map(|a| DocumentStats {
            id: a.doc_id.clone(),
            stats: Summary::of(&a.nnsl),
        })
        .collect();
    Ok(NnslStats { pooled, documents })
}

/// Parameters of the entropy lower bound on the fraction of novel n-grams:
/// with probability `p` over corpus tokens the next token carries at least
/// `entropy_bits` of entropy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundParams {
    pub corpus_size: f64,
    pub p: f64,
    pub entropy_bits: f64,
    pub n_range: RangeInclusive<u64>,
}

impl LowerBoundParams {
    pub fn new(
        corpus_size: f64,
        p: f64,
        entropy_bits: f64,
        n_range: RangeInclusive<u64>,
    ) -> Result<Self, NoveltyError> {
        let params = LowerBoundParams {
            corpus_size,
            p,
            entropy_bits,
            n_range,
        };
        params.validate()?;
        Ok(params)
    }

    /// The always-nondeterministic case, `p = 1`.
    pub fn warmup(
        corpus_size: f64,
        entropy_bits: f64,
        n_range: RangeInclusive<u64>,
    ) -> Result<Self, NoveltyError> {
        Self::new(corpus_size, 1.0, entropy_bits, n_range)
    }

    pub fn validate(&self) -> Result<(), NoveltyError> {
        if !(self.corpus_size.is_finite() && self.corpus_size > 0.0) {
            return Err(NoveltyError::InvalidParams(format!(
                "corpus size must be positive, got {}",
                self.corpus_size
            )));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(NoveltyError::InvalidParams(format!(
                "p must lie in (0, 1], got {}",
                self.p
            )));
        }
        if !(self.entropy_bits.is_finite() && self.entropy_bits > 0.0) {
            return Err(NoveltyError::InvalidParams(format!(
                "entropy must be positive, got {} bits",
                self.entropy_bits
            )));
        }
        Ok(())
    }

    /// `max(0, 1 - |C| exp(n (ln p - l)))` with the entropy converted to nats.
    pub fn bound(&self, n: u64) -> f64 {
        let per_token = self.p.ln() - self.entropy_bits * std::f64::consts::LN_2;
        let log_term = self.corpus_size.ln() + n as f64 * per_token;
        (1.0 - log_term.exp()).max(0.0)
    }
}

pub fn lower_bound_curve(params: &LowerBoundParams) -> Result<Vec<(u64, f64)>, NoveltyError> {
    params.validate()?;
    Ok(params
        .n_range
        .clone()
        .map(|n| (n, params.bound(n)))
        .collect())
}

/// Smallest `n` in the parameter range whose bound reaches `threshold`.
pub fn first_n_reaching(
    params: &LowerBoundParams,
    threshold: f64,
) -> Result<Option<u64>, NoveltyError> {
    params.validate()?;
    Ok(params
        .n_range
        .clone()
        .find(|&n| params.bound(n) >= threshold))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// The n-gram ending at the token occurs in the corpus.
    InTrain,
    /// It does not, but the (n-1)-gram ending at the previous token does.
    NotInTrain,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::InTrain => "in_train",
            Condition::NotInTrain => "not_in_train",
        }
    }
}

/// How a token is assigned to values of `n`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinMode {
    /// Every `n` for which a condition holds.
    #[default]
    PerN,
    /// In-Train only at `n = L(i)`; Not-in-Train only at `n = L(i-1) + 1`.
    ExactlyOne,
}

impl std::str::FromStr for BinMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per-n" => Ok(BinMode::PerN),
            "exactly-one" => Ok(BinMode::ExactlyOne),
            _ => Err(format!(
                "unknown bin mode {s:?} (expected per-n or exactly-one)"
            )),
        }
    }
}

/// Half-open frequency buckets `[edges[k], edges[k+1])`; the last is open.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyBins {
    edges: Vec<u64>,
}

impl FrequencyBins {
    pub fn new(edges: Vec<u64>) -> Result<Self, NoveltyError> {
        if edges.is_empty() || edges[0] == 0 || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(NoveltyError::InvalidBinEdges);
        }
        Ok(FrequencyBins { edges })
    }

    /// 1, 10, 100, ... up to the largest power of ten in a u64.
    pub fn powers_of_ten() -> Self {
        FrequencyBins {
            edges: (0..20).map(|k| 10u64.pow(k)).collect(),
        }
    }

    pub fn edges(&self) -> &[u64] {
        &self.edges
    }

    /// `(lo, hi)` of the bucket holding `count`; `hi` is `None` for the last.
    pub fn bucket(&self, count: u64) -> Option<(u64, Option<u64>)> {
        let k = self.edges.partition_point(|&e| e <= count);
        (k > 0).then(|| (self.edges[k - 1], self.edges.get(k).copied()))
    }
}

impl Default for FrequencyBins {
    fn default() -> Self {
        Self::powers_of_ten()
    }
}

/// One document's inputs to [`completion_loss_bins`]: annotations, the
/// suffix count profile at every position and the externally computed
/// per-token values.
pub struct LossBinDoc<'a> {
    pub annotations: &'a MatchAnnotations,
    pub profiles: &'a [Option<SuffixProfile>],
    pub losses: &'a [f64],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBinRow {
    pub n: u64,
    pub condition: Condition,
    /// Frequency bucket of the n-gram ending at the token; absent for
    /// Not-in-Train tokens, whose n-gram does not occur.
    pub freq_lo: Option<u64>,
    pub freq_hi: Option<u64>,
    pub mean_loss: f64,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBinTable {
    /// Column label for the averaged values.
    pub metric: String,
    pub rows: Vec<LossBinRow>,
}

pub const DEFAULT_METRIC: &str = "mean_loss";

impl LossBinTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("n,condition,freq_lo,freq_hi,{},count\n", self.metric);
        let opt = |v: Option<u64>| v.map_or(String::new(), |v| v.to_string());
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.n,
                r.condition.as_str(),
                opt(r.freq_lo),
                opt(r.freq_hi),
                r.mean_loss,
                r.count
            );
        }
        out
    }

    /// Rows for one `(n, condition)` pair.
    pub fn rows_for(&self, n: u64, condition: Condition) -> impl Iterator<Item = &LossBinRow> {
        self.rows
            .iter()
            .filter(move |r| r.n == n && r.condition == condition)
    }
}

type BinKey = (u64, Condition, Option<u64>, Option<u64>);

/// Values of `n` at which position `i` is In-Train and Not-in-Train. The
/// previous length `prev` is 0 before the first position.
pub fn token_conditions(
    l: u64,
    prev: u64,
    max_n: u64,
    mode: BinMode,
) -> (RangeInclusive<u64>, RangeInclusive<u64>) {
    let empty = RangeInclusive::new(1, 0);
    match mode {
        BinMode::PerN => {
            let in_train = 1..=l.min(max_n);
            let not_in_train = if l < prev + 1 {
                (l + 1)..=(prev + 1).min(max_n)
            } else {
                empty
            };
            (in_train, not_in_train)
        }
        BinMode::ExactlyOne => {
            let in_train = if l >= 1 && l <= max_n {
                l..=l
            } else {
                empty.clone()
            };
            let not_in_train = if l <= prev && prev < max_n {
                (prev + 1)..=(prev + 1)
            } else {
                empty
            };
            (in_train, not_in_train)
        }
    }
}

/// Mean per-token value grouped by `n`, token condition and the frequency
/// bucket of the n-gram ending at the token.
pub fn completion_loss_bins(
    docs: &[LossBinDoc<'_>],
    max_n: u64,
    bins: &FrequencyBins,
    mode: BinMode,
    metric: &str,
) -> Result<LossBinTable, NoveltyError> {
    if max_n == 0 {
        return Err(NoveltyError::InvalidMaxN);
    }
    let mut acc: BTreeMap<BinKey, (f64, u64)> = BTreeMap::new();
    for d in docs {
        let a = d.annotations;
        for (what, len) in [
            (d.losses.len(), a.nnsl.len()),
            (d.profiles.len(), a.nnsl.len()),
        ] {
            if what != len {
                return Err(NoveltyError::Misaligned {
                    doc: a.doc_id.clone(),
                    expected: len,
                    actual: what,
                });
            }
        }
        let mut prev = 0;
        for (i, &l) in a.nnsl.iter().enumerate() {
            let loss = d.losses[i];
            let (in_train, not_in_train) = token_conditions(l, prev, max_n, mode);
            for n in in_train {
                let freq = if n == l {
                    a.counts[i]
                } else {
                    d.profiles[i].as_ref().map_or(0, |p| p.count_at(n))
                };
                let (lo, hi) = match bins.bucket(freq) {
                    Some((lo, hi)) => (Some(lo), hi),
                    None => (None, None),
                };
                let e = acc
                    .entry((n, Condition::InTrain, lo, hi))
                    .or_insert((0.0, 0));
                e.0 += loss;
                e.1 += 1;
            }
            for n in not_in_train {
                let e = acc
                    .entry((n, Condition::NotInTrain, None, None))
                    .or_insert((0.0, 0));
                e.0 += loss;
                e.1 += 1;
            }
            prev = l;
        }
    }
    let rows = acc
        .into_iter()
        .map(
            |((n, condition, freq_lo, freq_hi), (sum, count))| LossBinRow {
                n,
                condition,
                freq_lo,
                freq_hi,
                mean_loss: sum / count as f64,
                count,
            },
        )
        .collect();
    Ok(LossBinTable {
        metric: metric.to_string(),
        rows,
    })
}

/// One line of a loss file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    #[serde(default)]
    pub id: String,
    pub losses: Vec<f64>,
    /// Label of the per-token quantity, e.g. `nll` or `prob`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
}

/// Orders loss records to match `annotations` by id, checking lengths.
pub fn align_losses<'a>(
    annotations: &[MatchAnnotations],
    records: &'a [LossRecord],
) -> Result<Vec<&'a [f64]>, NoveltyError> {
    let by_id: HashMap<&str, &LossRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    annotations
        .iter()
        .map(|a| {
            let r = by_id
                .get(a.doc_id.as_str())
                .ok_or_else(|| NoveltyError::MissingLosses(a.doc_id.clone()))?;
            if r.losses.len() != a.nnsl.len() {
                return Err(NoveltyError::Misaligned {
                    doc: a.doc_id.clone(),
                    expected: a.nnsl.len(),
                    actual: r.losses.len(),
                });
            }
            Ok(r.losses.as_slice())
        })
        .collect()
}

/// Column label taken from the first record that names one.
pub fn metric_label(records: &[LossRecord]) -> String {
    records
        .iter()
        .find_map(|r| r.metric.as_ref())
        .map_or_else(|| DEFAULT_METRIC.to_string(), |m| format!("mean_{m}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdawg::ProfileStep;
    use proptest::prelude::*;

    fn ann(nnsl: Vec<u64>) -> MatchAnnotations {
        let counts = nnsl.iter().map(|&l| u64::from(l > 0)).collect();
        MatchAnnotations {
            doc_id: String::new(),
            nnsl,
            counts,
        }
    }

    fn lloyd() -> MatchAnnotations {
        MatchAnnotations {
            doc_id: "lloyd".into(),
            nnsl: vec![1, 2, 3, 0, 1],
            counts: vec![3, 1, 1, 0, 1],
        }
    }

    #[test]
    fn histogram_of_lloyd() {
        let h = length_histogram(&[lloyd()]);
        assert_eq!(h.c, BTreeMap::from([(0, 1), (1, 2), (2, 1), (3, 1)]));
        assert_eq!(h.total_positions, 5);
        assert_eq!(length_histogram(&[]), LengthHistogram::default());
    }

    #[test]
    fn novelty_of_lloyd() {
        let curve = novelty_curve(&[lloyd()], 10).unwrap();
        let got: Vec<(u64, u64, u64)> = curve
            .pooled
            .iter()
            .map(|r| (r.n, r.novel, r.total))
            .collect();
        assert_eq!(
            got,
            vec![(1, 1, 5), (2, 2, 4), (3, 2, 3), (4, 2, 2), (5, 1, 1)]
        );
        assert_eq!(
            curve.to_csv(),
            "n,novel,total,ratio\n1,1,5,0.2\n2,2,4,0.5\n3,2,3,0.667\n4,2,2,1.0\n5,1,1,1.0\n"
        );
        assert_eq!(curve.documents[0].rows.len(), 5);
        assert_eq!(novelty_curve(&[lloyd()], 0), Err(NoveltyError::InvalidMaxN));
    }

    #[test]
    fn novelty_pools_numerators_and_denominators() {
        let curve = novelty_curve(&[lloyd(), ann(vec![1, 2])], 3).unwrap();
        let got: Vec<(u64, u64)> = curve.pooled.iter().map(|r| (r.novel, r.total)).collect();
        assert_eq!(got, vec![(1, 7), (2, 5), (2, 3)]);
        assert_eq!(curve.documents[1].rows.len(), 2);
    }

    #[test]
    fn empty_annotations_give_empty_curve() {
        let curve = novelty_curve(&[], 5).unwrap();
        assert!(curve.pooled.is_empty());
        assert_eq!(curve.to_csv(), "n,novel,total,ratio\n");
    }

    #[test]
    fn stats_of_lloyd() {
        let s = nnsl_stats(&[lloyd()]).unwrap();
        assert_eq!(s.pooled.mean, 1.4);
        assert_eq!(s.pooled.max, 3);
        assert_eq!(s.pooled.median, 1.0);
        let z = nnsl_stats(&[ann(vec![0, 0, 0])]).unwrap();
        assert_eq!((z.pooled.mean, z.pooled.max), (0.0, 0));
        assert_eq!(nnsl_stats(&[]), Err(NoveltyError::EmptyInput));
        assert_eq!(nnsl_stats(&[ann(vec![])]), Err(NoveltyError::EmptyInput));
        let even = nnsl_stats(&[ann(vec![1, 4, 2, 3])]).unwrap();
        assert_eq!(even.pooled.median, 2.5);
    }

    #[test]
    fn lower_bound_threshold() {
        let params = LowerBoundParams::new(3.34e11, 0.9, 1.8, 0..=64).unwrap();
        assert_eq!(first_n_reaching(&params, 0.99).unwrap(), Some(24));
        assert!(params.bound(23) < 0.99);
        assert_eq!(params.bound(0), 0.0);
        let vacuous = LowerBoundParams::warmup(1e6, 1e-9, 0..=100).unwrap();
        assert!(lower_bound_curve(&vacuous)
            .unwrap()
            .iter()
            .all(|&(_, b)| b == 0.0));
        assert!(LowerBoundParams::new(1e6, 0.0, 1.0, 0..=1).is_err());
        assert!(LowerBoundParams::new(1e6, 0.5, 0.0, 0..=1).is_err());
        assert!(LowerBoundParams::new(0.0, 0.5, 1.0, 0..=1).is_err());
    }

    #[test]
    fn bucket_edges() {
        let bins = FrequencyBins::default();
        assert_eq!(bins.bucket(0), None);
        assert_eq!(bins.bucket(1), Some((1, Some(10))));
        assert_eq!(bins.bucket(7), Some((1, Some(10))));
        assert_eq!(bins.bucket(10), Some((10, Some(100))));
        assert_eq!(bins.bucket(u64::MAX), Some((10u64.pow(19), None)));
        assert!(FrequencyBins::new(vec![]).is_err());
        assert!(FrequencyBins::new(vec![0, 5]).is_err());
        assert!(FrequencyBins::new(vec![5, 5]).is_err());
    }

    fn flat_profiles(a: &MatchAnnotations) -> Vec<Option<SuffixProfile>> {
        a.nnsl
            .iter()
            .zip(&a.counts)
            .map(|(&l, &n)| {
                (l > 0).then(|| SuffixProfile {
                    steps: vec![ProfileStep {
                        shortest: 1,
                        longest: l,
                        count: n,
                    }],
                })
            })
            .collect()
    }

    #[test]
    fn loss_bins_of_lloyd() {
        let a = lloyd();
        let profiles = flat_profiles(&a);
        let losses = [0.1, 0.2, 0.3, 0.4, 0.5];
        let doc = LossBinDoc {
            annotations: &a,
            profiles: &profiles,
            losses: &losses,
        };
        let t = completion_loss_bins(
            &[doc],
            3,
            &FrequencyBins::default(),
            BinMode::PerN,
            DEFAULT_METRIC,
        )
        .unwrap();
        let in3: Vec<_> = t.rows_for(3, Condition::InTrain).collect();
        assert_eq!(in3.len(), 1);
        assert_eq!((in3[0].mean_loss, in3[0].count), (0.3, 1));
        let out3: Vec<_> = t.rows_for(3, Condition::NotInTrain).collect();
        assert_eq!(out3.len(), 1);
        assert_eq!((out3[0].mean_loss, out3[0].count), (0.4, 1));
        assert!(t
            .to_csv()
            .starts_with("n,condition,freq_lo,freq_hi,mean_loss,count\n"));
    }

    #[test]
    fn loss_bins_all_novel() {
        let a = ann(vec![0, 0, 0]);
        let profiles = flat_profiles(&a);
        let losses = [1.0, 2.0, 3.0];
        let doc = LossBinDoc {
            annotations: &a,
            profiles: &profiles,
            losses: &losses,
        };
        let t = completion_loss_bins(
            &[doc],
            4,
            &FrequencyBins::default(),
            BinMode::PerN,
            DEFAULT_METRIC,
        )
        .unwrap();
        assert_eq!(t.rows.len(), 1);
        let r = &t.rows[0];
        assert_eq!(
            (r.n, r.condition, r.count, r.mean_loss),
            (1, Condition::NotInTrain, 3, 2.0)
        );
    }

    #[test]
    fn loss_bins_reject_misaligned() {
        let a = lloyd();
        let profiles = flat_profiles(&a);
        let doc = LossBinDoc {
            annotations: &a,
            profiles: &profiles,
            losses: &[0.0; 4],
        };
        assert!(matches!(
            completion_loss_bins(
                &[doc],
                3,
                &FrequencyBins::default(),
                BinMode::PerN,
                DEFAULT_METRIC
            ),
            Err(NoveltyError::Misaligned { .. })
        ));
    }

    #[test]
    fn exactly_one_mode() {
        assert_eq!(
            token_conditions(3, 2, 10, BinMode::ExactlyOne),
            (3..=3, RangeInclusive::new(1, 0))
        );
        assert_eq!(
            token_conditions(0, 3, 10, BinMode::ExactlyOne),
            (RangeInclusive::new(1, 0), 4..=4)
        );
        assert_eq!(
            token_conditions(2, 2, 10, BinMode::ExactlyOne),
            (2..=2, 3..=3)
        );
        assert_eq!(token_conditions(2, 2, 10, BinMode::PerN), (1..=2, 3..=3));
    }

    #[test]
    fn loss_records_align_by_id() {
        let a = lloyd();
        let recs = vec![
            LossRecord {
                id: "other".into(),
                losses: vec![],
                metric: None,
            },
            LossRecord {
                id: "lloyd".into(),
                losses: vec![0.0; 5],
                metric: Some("nll".into()),
            },
        ];
        let aligned = align_losses(std::slice::from_ref(&a), &recs).unwrap();
        assert_eq!(aligned[0].len(), 5);
        assert_eq!(metric_label(&recs), "mean_nll");
        assert_eq!(metric_label(&recs[..1]), "mean_loss");
        let missing = align_losses(&[a.with_id("nope")], &recs);
        assert_eq!(missing, Err(NoveltyError::MissingLosses("nope".into())));
    }

    /// NNSL vectors that respect `L(i) <= L(i-1) + 1`.
    fn nnsl_vec() -> impl Strategy<Value = Vec<u64>> {
        prop::collection::vec((any::<bool>(), 0u64..100), 0..40).prop_map(|steps| {
            let mut prev = 0;
            steps
                .into_iter()
                .map(|(grow, r)| {
                    prev = if grow { prev + 1 } else { r % (prev + 2) };
                    prev
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn histogram_conserves_positions(docs in prop::collection::vec(nnsl_vec(), 0..6)) {
            let anns: Vec<_> = docs.into_iter().map(ann).collect();
            let h = length_histogram(&anns);
            prop_assert_eq!(h.c.values().sum::<u64>(), h.total_positions);
            prop_assert_eq!(h.total_positions, anns.iter().map(|a| a.len() as u64).sum::<u64>());
        }

        #[test]
        fn single_document_curve_is_monotone(l in nnsl_vec()) {
            let curve = novelty_curve(&[ann(l)], 50).unwrap();
            for w in curve.pooled.windows(2) {
                prop_assert!(w[0].ratio <= w[1].ratio);
            }
            for r in &curve.pooled {
                prop_assert!((0.0..=1.0).contains(&r.ratio));
            }
        }

        #[test]
        fn pooled_mean_is_weighted_mean(docs in prop::collection::vec(nnsl_vec(), 1..6)) {
            let anns: Vec<_> = docs.into_iter().map(ann).collect();
            if let Ok(s) = nnsl_stats(&anns) {
                let weighted: f64 = s.documents.iter()
                    .filter_map(|d| d.stats)
                    .map(|d| d.mean * d.positions as f64)
                    .sum::<f64>() / s.pooled.positions as f64;
                prop_assert!((weighted - s.pooled.mean).abs() < 1e-9);
                prop_assert!(s.pooled.median <= s.pooled.max as f64);
            }
        }

        #[test]
        fn bound_is_monotone(size in 1.0f64..1e15, p in 0.01f64..=1.0, bits in 0.01f64..20.0) {
            let params = LowerBoundParams::new(size, p, bits, 0..=200).unwrap();
            let curve = lower_bound_curve(&params).unwrap();
            for w in curve.windows(2) {
                prop_assert!(w[0].1 <= w[1].1);
            }
            let bigger = LowerBoundParams::new(size * 10.0, p, bits, 0..=200).unwrap();
            let likelier = LowerBoundParams::new(size, (p * 1.5).min(1.0), bits, 0..=200).unwrap();
            for n in 0..=200 {
                prop_assert!(bigger.bound(n) <= params.bound(n));
                prop_assert!(likelier.bound(n) <= params.bound(n));
            }
        }

        #[test]
        fn conditions_are_disjoint_intervals(l in nnsl_vec(), max_n in 1u64..8) {
            let mut prev = 0;
            for &li in &l {
                let (in_train, not_in_train) = token_conditions(li, prev, max_n, BinMode::PerN);
                for n in 1..=max_n {
                    let a = in_train.contains(&n);
                    let b = not_in_train.contains(&n);
                    prop_assert!(!(a && b));
                    prop_assert_eq!(a, li >= n);
                    prop_assert_eq!(b, li < n && prev + 1 >= n);
                    if li < prev + 1 {
                        prop_assert_eq!(b, n > li && n <= prev + 1);
                    }
                }
                prev = li;
            }
        }
    }
}
