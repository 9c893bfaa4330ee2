use std::time::Instant;

use anyhow::anyhow;
use cdawg::novelty::{self, FrequencyBins, LossBinDoc, LossRecord, LowerBoundParams};
use cdawg::oracle::oracle_nnsl;
use cdawg::query::{strip_separator, QueryDoc};
use cdawg::shard::build_sharded;
use cdawg::{load_corpus, Corpus, MatchAnnotations, ShardedIndex};
use serde::Serialize;

use crate::args::{
    BoundArgs, BuildArgs, IndexArgs, LossBinsArgs, NnslStatsArgs, NoveltyArgs, OutputFormat,
    QueryArgs, StatsArgs, VerifyArgs,
};
use crate::io::{manifest_path, output, print, print_json, read_jsonl, write_jsonl};
use crate::{CmdResult, DataContext, Failure};

#[derive(Serialize)]
struct BuildReport {
    shards: usize,
    tokens: u64,
    documents: usize,
    n_states: u64,
    n_edges: u64,
    bytes: u64,
    seconds: f64,
    tokens_per_second: f64,
}

pub fn build(a: BuildArgs) -> CmdResult {
    let corpus = load_corpus(&a.input, a.format, a.separator, a.vocab_size).data()?;
    log::info!(
        "loaded {} tokens in {} documents from {}",
        corpus.len(),
        corpus.num_documents(),
        a.input.display()
    );
    let started = Instant::now();
    let mut index = build_sharded(&corpus, a.shards as usize, a.parallelism as usize).data()?;
    let seconds = started.elapsed().as_secs_f64();
    let manifest = index.write(&a.out).data()?;
    log::info!(
        "wrote {} shard(s) to {}",
        manifest.shards.len(),
        a.out.display()
    );
    let report = BuildReport {
        shards: manifest.shards.len(),
        tokens: manifest.total_tokens,
        documents: manifest.total_documents,
        n_states: manifest.shards.iter().map(|s| s.n_states).sum(),
        n_edges: manifest.shards.iter().map(|s| s.n_edges).sum(),
        bytes: manifest.shards.iter().map(|s| s.bytes).sum(),
        seconds,
        tokens_per_second: manifest.total_tokens as f64 / seconds.max(1e-9),
    };
    print_json(&report).data()
}

fn open_index(a: &IndexArgs) -> Result<ShardedIndex, Failure> {
    let path = manifest_path(&a.index);
    log::info!("opening {} ({} backend)", path.display(), a.backend);
    ShardedIndex::open(&path, a.backend).data()
}

#[derive(Serialize)]
struct ShardStats {
    shard: usize,
    #[serde(flatten)]
    stats: cdawg::IndexStats,
    states_per_token: f64,
    edges_per_token: f64,
}

pub fn stats(a: StatsArgs) -> CmdResult {
    let index = open_index(&a.index)?;
    let shards: Vec<ShardStats> = index
        .shards()
        .iter()
        .enumerate()
        .map(|(shard, s)| {
            let stats = s.stats();
            ShardStats {
                shard,
                states_per_token: stats.states_per_token(),
                edges_per_token: stats.edges_per_token(),
                stats,
            }
        })
        .collect();
    print_json(&shards).data()
}

/// Compares annotations against the oracle over the reassembled corpus.
fn verify_against_oracle(
    index: &ShardedIndex,
    docs: &[(String, Vec<u32>)],
    annotations: &[MatchAnnotations],
    limit: u64,
) -> CmdResult {
    if index.total_tokens() > limit {
        log::warn!(
            "corpus has {} tokens, above the oracle limit of {limit}; skipping oracle check",
            index.total_tokens()
        );
        return Ok(());
    }
    let corpus: Corpus = index.corpus().data()?;
    for ((id, tokens), got) in docs.iter().zip(annotations) {
        let want = oracle_nnsl(&corpus, tokens);
        if want.nnsl != got.nnsl || want.counts != got.counts {
            let at = (0..tokens.len())
                .find(|&i| want.nnsl[i] != got.nnsl[i] || want.counts[i] != got.counts[i])
                .unwrap_or(0);
            return Err(Failure::Mismatch(format!(
                "document {id:?} position {at}: index gives (L, N) = ({}, {}), oracle gives ({}, {})",
                got.nnsl[at], got.counts[at], want.nnsl[at], want.counts[at]
            )));
        }
    }
    log::info!("{} document(s) agree with the oracle", docs.len());
    Ok(())
}

fn read_docs(
    path: &std::path::Path,
    strip: Option<u32>,
) -> Result<Vec<(String, Vec<u32>)>, Failure> {
    let docs: Vec<QueryDoc> = read_jsonl(path).data()?;
    Ok(docs
        .into_iter()
        .map(|d| {
            let tokens = match strip {
                Some(sep) => strip_separator(&d.tokens, sep),
                None => d.tokens,
            };
            (d.id, tokens)
        })
        .collect())
}

pub fn query(a: QueryArgs) -> CmdResult {
    let index = open_index(&a.index)?;
    let strip = (!a.keep_separators).then_some(index.separator());
    let docs = read_docs(&a.input, strip)?;
    log::info!("querying {} document(s)", docs.len());
    let tokens: Vec<&[u32]> = docs.iter().map(|(_, t)| t.as_slice()).collect();
    let started = Instant::now();
    let annotations: Vec<MatchAnnotations> = index
        .batch_query(&tokens, a.parallelism as usize)
        .into_iter()
        .zip(&docs)
        .map(|(ann, (id, _))| ann.with_id(id.clone()))
        .collect();
    log::info!("annotated in {:.3}s", started.elapsed().as_secs_f64());
    if a.verify {
        verify_against_oracle(&index, &docs, &annotations, a.verify_limit)?;
    }
    let mut out = output(&a.output).data()?;
    write_jsonl(&mut *out, &annotations).data()
}

pub fn novelty(a: NoveltyArgs) -> CmdResult {
    let annotations: Vec<MatchAnnotations> = read_jsonl(&a.annotations).data()?;
    let curve =
        novelty::novelty_curve(&annotations, a.max_n).map_err(|e| Failure::Usage(e.into()))?;
    match a.format {
        OutputFormat::Csv => print(&curve.to_csv()).data(),
        OutputFormat::Json => print_json(&curve).data(),
    }
}

pub fn nnsl_stats(a: NnslStatsArgs) -> CmdResult {
    let annotations: Vec<MatchAnnotations> = read_jsonl(&a.annotations).data()?;
    let stats = novelty::nnsl_stats(&annotations).data()?;
    print_json(&stats).data()
}

#[derive(Serialize)]
struct BoundReport {
    threshold: f64,
    first_n: Option<u64>,
    curve: Vec<BoundPoint>,
}

#[derive(Serialize)]
struct BoundPoint {
    n: u64,
    bound: f64,
}

pub fn bound(a: BoundArgs) -> CmdResult {
    let usage = |e: novelty::NoveltyError| Failure::Usage(e.into());
    if a.n_min > a.n_max {
        return Err(Failure::Usage(anyhow!("--n-min exceeds --n-max")));
    }
    let params = LowerBoundParams::new(a.corpus_size, a.p, a.entropy_bits, a.n_min..=a.n_max)
        .map_err(usage)?;
    let curve = novelty::lower_bound_curve(&params).map_err(usage)?;
    let first_n = novelty::first_n_reaching(&params, a.threshold).map_err(usage)?;
    match first_n {
        Some(n) => log::info!("first n with bound >= {}: {n}", a.threshold),
        None => log::info!("bound stays below {} up to n = {}", a.threshold, a.n_max),
    }
    match a.format {
        OutputFormat::Csv => {
            let mut text = String::from("n,bound\n");
            for (n, b) in &curve {
                text.push_str(&format!("{n},{b}\n"));
            }
            print(&text).data()
        }
        OutputFormat::Json => print_json(&BoundReport {
            threshold: a.threshold,
            first_n,
            curve: curve
                .into_iter()
                .map(|(n, bound)| BoundPoint { n, bound })
                .collect(),
        })
        .data(),
    }
}

pub fn loss_bins(a: LossBinsArgs) -> CmdResult {
    let bins = match a.bin_edges {
        Some(edges) => FrequencyBins::new(edges).map_err(|e| Failure::Usage(e.into()))?,
        None => FrequencyBins::default(),
    };
    let index = open_index(&a.index)?;
    let docs = read_docs(&a.input, None)?;
    let records: Vec<LossRecord> = read_jsonl(&a.losses).data()?;
    let tokens: Vec<&[u32]> = docs.iter().map(|(_, t)| t.as_slice()).collect();
    let results: Vec<(MatchAnnotations, _)> = index
        .batch_query_profiles(&tokens, a.parallelism as usize)
        .into_iter()
        .zip(&docs)
        .map(|((ann, profiles), (id, _))| (ann.with_id(id.clone()), profiles))
        .collect();
    let annotations: Vec<MatchAnnotations> = results.iter().map(|(a, _)| a.clone()).collect();
    let losses = novelty::align_losses(&annotations, &records).data()?;
    let inputs: Vec<LossBinDoc<'_>> = results
        .iter()
        .zip(&losses)
        .map(|((ann, profiles), losses)| LossBinDoc {
            annotations: ann,
            profiles,
            losses,
        })
        .collect();
    let table = novelty::completion_loss_bins(
        &inputs,
        a.max_n,
        &bins,
        a.mode,
        &novelty::metric_label(&records),
    )
    .data()?;
    match a.format {
        OutputFormat::Csv => print(&table.to_csv()).data(),
        OutputFormat::Json => print_json(&table).data(),
    }
}

pub fn verify(a: VerifyArgs) -> CmdResult {
    let index = open_index(&a.index)?;
    for (j, s) in index.shards().iter().enumerate() {
        let n = s.corpus_len();
        if s.n_states() as u64 > 2 * n || s.n_edges() as u64 > 3 * n {
            return Err(Failure::Mismatch(format!(
                "shard {j}: {} states and {} edges exceed the size bounds for {n} tokens",
                s.n_states(),
                s.n_edges()
            )));
        }
        if s.topological_order().is_none() {
            return Err(Failure::Mismatch(format!("shard {j}: graph has a cycle")));
        }
    }
    log::info!(
        "{} shard(s) pass checksum, size and acyclicity checks",
        index.shard_count()
    );
    if let Some(input) = &a.input {
        let docs = read_docs(input, Some(index.separator()))?;
        let tokens: Vec<&[u32]> = docs.iter().map(|(_, t)| t.as_slice()).collect();
        let annotations = index.batch_query(&tokens, 1);
        verify_against_oracle(&index, &docs, &annotations, a.verify_limit)?;
    }
    print("ok\n").data()
}
