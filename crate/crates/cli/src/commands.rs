//! Subcommand bodies: load inputs, call the core operation, write outputs.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use anyhow::{anyhow, Context};
use ikit_core::curation::StatsAccumulator;
use ikit_core::eval::{build_pool_index, EvalDataset, Rices};
use ikit_core::metrics::bar_chart_svg;
use ikit_core::retrieval::{read_embeddings, EmbeddingStore};
use ikit_core::shard::pack_with;
use ikit_core::synth::SynthError;
use ikit_core::{
    build_index, filter_pair, gaussian_smooth, infill, layer_schedule, mark_sequence, pack_window, parse_pattern,
    parse_response, relative_to_baseline, relative_to_sota, run_eval, sample_shards, topk, unpack, ClientError,
    EvalConfig, EvalError, EvalItem, HttpModelClient, Infiller, InterleavedDoc, PairRecord, RetrievalError, Sample,
    ScoreTable, ShardError, ShardSet, SotaTable, StatsOptions, StubModel, StubServer, TaskSpec, TokenStream,
    WhitespaceTokenizer,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{
    create, emit_json, ids_path, open, provenance, read_records, read_string, write_csv, write_records, Classify,
    Failure,
};

pub struct Ctx {
    pub cfg: RunConfig,
}

type Outcome = Result<(), Failure>;

fn retrieval_failure(e: RetrievalError) -> Failure {
    match e {
        RetrievalError::Io(_) => Failure::Runtime(e.into()),
        other => Failure::Validation(other.into()),
    }
}

fn shard_failure(e: ShardError) -> Failure {
    match e {
        ShardError::Io(_) => Failure::Runtime(e.into()),
        other => Failure::Validation(other.into()),
    }
}

fn load_embeddings(data: &Path) -> Result<Vec<(String, Vec<f32>)>, Failure> {
    read_embeddings(data, &ids_path(data))
        .map_err(retrieval_failure)
        .map_err(|f| match f {
            Failure::Runtime(e) => Failure::Runtime(e.context(data.display().to_string())),
            Failure::Validation(e) => Failure::Validation(e.context(data.display().to_string())),
        })
}

fn load_store(data: &Path) -> Result<EmbeddingStore, Failure> {
    EmbeddingStore::from_records(load_embeddings(data)?).map_err(retrieval_failure)
}

pub fn filter_mmc4(ctx: &Ctx, input: &Path, output: &Path, stats_out: Option<&Path>) -> Outcome {
    let c = &ctx.cfg.curation;
    let opts = StatsOptions {
        threshold: c.threshold,
        reject_single_prob: (c.reject_single_prob > 0.0).then_some(c.reject_single_prob),
        sample_size: c.sample_size,
        seed: ctx.cfg.seed,
        token_bucket: c.token_bucket,
    };
    let docs: Vec<InterleavedDoc> = read_records(input)?;
    let tok = WhitespaceTokenizer::new();
    let mut acc = StatsAccumulator::new(opts).invalid()?;
    let mut kept = Vec::new();
    for d in &docs {
        if let Some(k) = acc.push(d, &tok).invalid()? {
            kept.push(k);
        }
    }
    let stats = acc.finish().invalid()?;
    write_records(output, &kept)?;
    provenance(output, "filter-mmc4", &[input], &ctx.cfg)?;
    emit_json(&stats, stats_out)?;
    if let Some(p) = stats_out {
        provenance(p, "filter-mmc4", &[input], &ctx.cfg)?;
    }
    Ok(())
}

pub fn filter_pairs(ctx: &Ctx, input: &Path, output: &Path) -> Outcome {
    let c = &ctx.cfg.curation;
    let pairs: Vec<PairRecord> = read_records(input)?;
    let tok = WhitespaceTokenizer::new();
    let mut kept = Vec::new();
    for p in &pairs {
        if let Some(k) = filter_pair(p, c.sim_min, c.max_caption_tokens, &tok).invalid()? {
            kept.push(k);
        }
    }
    write_records(output, &kept)?;
    provenance(output, "filter-pairs", &[input], &ctx.cfg)?;
    emit_json(&json!({"pairs_in": pairs.len(), "pairs_kept": kept.len()}), None)
}

pub struct SynthInputs<'a> {
    pub index: &'a Path,
    pub queries: &'a Path,
    pub rerank_texts: &'a Path,
    pub rerank_images: &'a Path,
}

#[derive(Deserialize)]
struct Response {
    id: String,
    response: String,
}

#[derive(Serialize)]
struct Skipped {
    id: String,
    error: String,
}

pub fn synth(ctx: &Ctx, responses: &Path, output: &Path, inputs: SynthInputs<'_>) -> Outcome {
    let s = &ctx.cfg.synth;
    let pattern_text = s.pattern.as_deref().ok_or_else(|| Failure::Validation(anyhow!("a slot pattern is required")))?;
    let pattern = parse_pattern(pattern_text).invalid()?;
    let index = build_index(load_embeddings(inputs.index)?).map_err(retrieval_failure)?;
    let queries = load_store(inputs.queries)?;
    let texts = load_store(inputs.rerank_texts)?;
    let images = load_store(inputs.rerank_images)?;
    let mut infiller = Infiller::new(&index, &queries, &texts, &images);
    infiller.k = s.k;
    infiller.policy = s.missing;
    let records: Vec<Response> = read_records(responses)?;
    let mut docs = Vec::new();
    let mut skipped = Vec::new();
    for r in &records {
        let result = parse_response(&r.response, &pattern).and_then(|seq| infill(&r.id, &seq, &infiller));
        match result {
            Ok(d) => docs.push(d),
            Err(e @ (SynthError::Validation { .. } | SynthError::NoCandidates { .. } | SynthError::NoSentences)) => {
                log::warn!("{}: {e}", r.id);
                skipped.push(Skipped { id: r.id.clone(), error: e.to_string() });
            }
            Err(e) => return Err(Failure::Validation(anyhow::Error::new(e).context(r.id.clone()))),
        }
    }
    write_records(output, &docs)?;
    provenance(
        output,
        "synth",
        &[responses, inputs.index, inputs.queries, inputs.rerank_texts, inputs.rerank_images],
        &ctx.cfg,
    )?;
    emit_json(&json!({"responses": records.len(), "emitted": docs.len(), "skipped": skipped}), None)
}

pub fn seq(ctx: &Ctx, input: &Path, output: &Path, vocab: Option<&Path>, vocab_out: Option<&Path>) -> Outcome {
    let docs: Vec<InterleavedDoc> = read_records(input)?;
    let tok = match vocab {
        Some(p) => WhitespaceTokenizer::from_vocab_reader(open(p)?).runtime()?,
        None => WhitespaceTokenizer::fit(docs.iter().flat_map(|d| d.spans.iter())),
    };
    let mut streams = Vec::with_capacity(docs.len());
    for d in &docs {
        streams.push(mark_sequence(d, &tok).with_context(|| d.doc_id.clone()).invalid()?);
    }
    if let Some(w) = ctx.cfg.sequence.window {
        streams = pack_window(&streams, w).invalid()?;
    }
    write_records(output, &streams)?;
    let mut inputs = vec![input];
    inputs.extend(vocab);
    provenance(output, "seq", &inputs, &ctx.cfg)?;
    if let Some(p) = vocab_out {
        let mut w = create(p)?;
        for word in tok.words() {
            writeln!(w, "{word}").runtime()?;
        }
        w.flush().runtime()?;
    }
    emit_json(&json!({"docs": docs.len(), "streams": streams.len(), "vocab_size": tok.len()}), None)
}

pub fn layers(ctx: &Ctx) -> Outcome {
    let s = &ctx.cfg.sequence;
    emit_json(&layer_schedule(s.n_layers, s.interval).invalid()?, None)
}

pub fn shard_pack(ctx: &Ctx, input: &Path, prefix: &Path, manifest: &Path) -> Outcome {
    let streams: Vec<TokenStream> = read_records(input)?;
    if let Some(parent) = prefix.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display())).runtime()?;
    }
    let samples = streams.iter().enumerate().map(|(i, s)| Sample { key: format!("{i:09}"), parts: s.to_shard_parts() });
    let set = pack_with(samples, ctx.cfg.shard.max_per_shard, prefix, ctx.cfg.shard.gzip).map_err(shard_failure)?;
    set.write_manifest(manifest).map_err(shard_failure)?;
    provenance(manifest, "shard pack", &[input], &ctx.cfg)?;
    emit_json(&json!({"shards": set.shards.len(), "samples": set.total_samples()}), None)
}

#[derive(Serialize)]
struct ShardReport {
    path: String,
    declared: usize,
    found: usize,
    bytes: u64,
}

pub fn shard_stats(_ctx: &Ctx, manifest: &Path) -> Outcome {
    let set = ShardSet::read_manifest(manifest).map_err(shard_failure)?;
    let mut per_shard = Vec::new();
    for entry in &set.shards {
        let samples = unpack(&entry.path).map_err(shard_failure)?;
        let bytes = samples.iter().flat_map(|s| s.parts.values()).map(|p| p.len() as u64).sum();
        per_shard.push(ShardReport {
            path: entry.path.display().to_string(),
            declared: entry.size,
            found: samples.len(),
            bytes,
        });
    }
    let found: usize = per_shard.iter().map(|s| s.found).sum();
    emit_json(
        &json!({"shards": set.shards.len(), "samples_declared": set.total_samples(), "samples_found": found, "per_shard": per_shard}),
        None,
    )
}

pub fn shard_sample(ctx: &Ctx, manifest: &Path, out: Option<&Path>) -> Outcome {
    let set = ShardSet::read_manifest(manifest).map_err(shard_failure)?;
    let draws = sample_shards(&set, ctx.cfg.shard.draws, ctx.cfg.seed).map_err(shard_failure)?;
    let paths: Vec<String> = draws.iter().map(|p| p.display().to_string()).collect();
    emit_json(&paths, out)?;
    if let Some(p) = out {
        provenance(p, "shard sample", &[manifest], &ctx.cfg)?;
    }
    Ok(())
}

pub fn plan(ctx: &Ctx, output: &Path) -> Outcome {
    let b = &ctx.cfg.budgets;
    let p = ikit_core::plan(b.interleaved, b.pairs, &ctx.cfg.schedule).invalid()?;
    let directives: Vec<_> = p.directives().collect();
    write_records(output, &directives)?;
    provenance(output, "plan", &[], &ctx.cfg)?;
    emit_json(
        &json!({
            "total_steps": p.total_steps,
            "budget_interleaved": p.budget_interleaved,
            "budget_pairs": p.budget_pairs,
            "warnings": p.warnings,
        }),
        None,
    )
}

#[derive(Serialize)]
struct QueryHits {
    query: String,
    neighbors: Vec<ikit_core::Neighbor>,
}

pub fn rices(ctx: &Ctx, index: &Path, queries: &Path, out: Option<&Path>) -> Outcome {
    let idx = build_index(load_embeddings(index)?).map_err(retrieval_failure)?;
    let qs = load_embeddings(queries)?;
    let mut hits = Vec::with_capacity(qs.len());
    for (id, v) in &qs {
        let neighbors = topk(&idx, v, ctx.cfg.retrieval.k).map_err(retrieval_failure)?;
        hits.push(QueryHits { query: id.clone(), neighbors });
    }
    match out {
        Some(p) => {
            write_records(p, &hits)?;
            provenance(p, "rices", &[index, queries], &ctx.cfg)
        }
        None => {
            let mut w = std::io::stdout().lock();
            ikit_core::write_ndjson(&mut w, &hits).runtime()
        }
    }
}

fn eval_failure(e: EvalError) -> Failure {
    match e {
        EvalError::Config(_) | EvalError::Render { .. } | EvalError::Item { .. } | EvalError::Retrieval(_) => {
            Failure::Validation(e.into())
        }
        EvalError::Client(ClientError::Validation(_)) => Failure::Validation(e.into()),
        other => Failure::Runtime(other.into()),
    }
}

pub fn eval(ctx: &Ctx, train: &Path, eval: &Path, images: Option<&Path>, out: Option<&Path>) -> Outcome {
    let e = &ctx.cfg.eval;
    let task = TaskSpec::by_name(&e.task).ok_or_else(|| Failure::Validation(anyhow!("unknown task {:?}", e.task)))?;
    let dataset = EvalDataset { train: read_records::<EvalItem>(train)?, eval: read_records::<EvalItem>(eval)? };
    let config = EvalConfig {
        shots: e.shots,
        selection: e.selection,
        seeds: e.seeds.clone(),
        n_permutations: e.n_permutations,
        jobs: ctx.cfg.jobs,
        max_failure_rate: e.max_failure_rate,
    };
    config.validate().map_err(eval_failure)?;
    let timeout = Duration::from_millis(e.timeout_ms);
    let client = match &e.endpoint {
        Some(url) => HttpModelClient::with_timeout(url, timeout),
        None => HttpModelClient::from_env().and_then(|c| HttpModelClient::with_timeout(c.endpoint(), timeout)),
    }
    .invalid()?;
    let store = images.map(load_store).transpose()?;
    let index = match &store {
        Some(s) => Some(build_pool_index(&dataset.train, s).map_err(eval_failure)?),
        None => None,
    };
    let rices = match (&index, &store) {
        (Some(i), Some(s)) => Some(Rices::new(&dataset.train, i, s).map_err(eval_failure)?),
        _ => None,
    };
    let report = run_eval(&task, &dataset, &config, &client, rices.as_ref()).map_err(eval_failure)?;
    emit_json(&report, out)?;
    if let Some(p) = out {
        let mut inputs = vec![train, eval];
        inputs.extend(images);
        provenance(p, "eval", &inputs, &ctx.cfg)?;
    }
    Ok(())
}

fn load_table(path: &Path) -> Result<ScoreTable, Failure> {
    ScoreTable::from_json(&read_string(path)?).with_context(|| path.display().to_string()).invalid()
}

fn write_svg(path: Option<&Path>, title: &str, bars: &[(String, f64)], reference: Option<f64>) -> Outcome {
    if let Some(p) = path {
        std::fs::write(p, bar_chart_svg(title, bars, reference)).with_context(|| format!("writing {}", p.display())).runtime()?;
    }
    Ok(())
}

pub fn report_relative(
    ctx: &Ctx,
    ours: &Path,
    baseline: &Path,
    pairs: Vec<(String, String)>,
    out: Option<&Path>,
    csv: Option<&Path>,
    svg: Option<&Path>,
) -> Outcome {
    let ours_t = load_table(ours)?;
    let base_t = load_table(baseline)?;
    let pairing: BTreeMap<String, String> = if pairs.is_empty() {
        let (a, b): (Vec<&str>, Vec<&str>) = (ours_t.models().into_iter().collect(), base_t.models().into_iter().collect());
        match (a.as_slice(), b.as_slice()) {
            ([a], [b]) => BTreeMap::from([(a.to_string(), b.to_string())]),
            _ => return Err(Failure::Validation(anyhow!("tables hold several models; pass --pair OURS=BASELINE"))),
        }
    } else {
        pairs.into_iter().collect()
    };
    let rep = relative_to_baseline(&ours_t, &base_t, &pairing).invalid()?;
    emit_json(&rep, out)?;
    if let Some(p) = csv {
        write_csv(p, &rep.ratios)?;
    }
    let bars: Vec<(String, f64)> =
        rep.ratios.iter().map(|r| (format!("{} {} {}-shot", r.model, r.benchmark, r.shots), r.ratio)).collect();
    write_svg(svg, "Score relative to baseline", &bars, Some(1.0))?;
    for p in [out, csv, svg].into_iter().flatten() {
        provenance(p, "report relative", &[ours, baseline], &ctx.cfg)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct FractionRow<'a> {
    model: &'a str,
    shots: u32,
    benchmark: &'a str,
    fraction: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn report_sota(
    ctx: &Ctx,
    ours: &Path,
    sota: &Path,
    model: &str,
    shots: u32,
    out: Option<&Path>,
    csv: Option<&Path>,
    svg: Option<&Path>,
) -> Outcome {
    let ours_t = load_table(ours)?;
    let sota_t = SotaTable::from_json(&read_string(sota)?).with_context(|| sota.display().to_string()).invalid()?;
    let rep = relative_to_sota(&ours_t, &sota_t, model, shots).invalid()?;
    emit_json(&rep, out)?;
    if let Some(p) = csv {
        let rows: Vec<FractionRow<'_>> = rep
            .fractions
            .iter()
            .map(|(b, &f)| FractionRow { model: &rep.model, shots: rep.shots, benchmark: b, fraction: f })
            .collect();
        write_csv(p, &rows)?;
    }
    let bars: Vec<(String, f64)> = rep.fractions.iter().map(|(b, &f)| (b.clone(), f)).collect();
    write_svg(svg, &format!("{model} {shots}-shot fraction of state of the art"), &bars, Some(1.0))?;
    for p in [out, csv, svg].into_iter().flatten() {
        provenance(p, "report sota", &[ours, sota], &ctx.cfg)?;
    }
    Ok(())
}

pub fn report_smooth(ctx: &Ctx, input: &Path, out: Option<&Path>) -> Outcome {
    let values: Vec<f64> =
        serde_json::from_str(&read_string(input)?).with_context(|| format!("{} must hold a JSON array of numbers", input.display())).invalid()?;
    let smoothed = gaussian_smooth(&values, ctx.cfg.report.window);
    emit_json(&smoothed, out)?;
    if let Some(p) = out {
        provenance(p, "report smooth", &[input], &ctx.cfg)?;
    }
    Ok(())
}

pub fn stub_serve(spec: Option<&Path>, addr: &str) -> Outcome {
    let model = match spec {
        Some(p) => StubModel::from_json(&read_string(p)?).invalid()?,
        None => StubModel::echo(),
    };
    let server = StubServer::start(model, addr).runtime()?;
    println!("listening on {}", server.url());
    std::io::stdout().flush().runtime()?;
    server.wait();
    Ok(())
}
