//! `ikit`: every pipeline stage as a subcommand.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ikit_core::synth::MissingPolicy;
use ikit_core::Selection;
use serde_json::{json, Value};

use crate::config::set_path;
use crate::output::Failure;

#[derive(Parser, Debug)]
#[command(name = "ikit", version, about = "Interleaved image-text corpus and evaluation toolkit")]
struct Cli {
    /// TOML or JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Threshold-filter interleaved documents and report corpus statistics.
    FilterMmc4(FilterMmc4),
    /// Similarity-gate image-text pairs and truncate captions.
    FilterPairs(FilterPairs),
    /// Turn generated responses into interleaved documents by retrieval.
    Synth(Synth),
    /// Tokenize documents into marked token streams.
    Seq(Seq),
    /// Print the cross-attention layer schedule.
    Layers(Layers),
    /// Pack, inspect and sample tar shards.
    Shard {
        #[command(subcommand)]
        op: ShardOp,
    },
    /// Export the per-step training plan.
    Plan(PlanArgs),
    /// Nearest neighbours of each query embedding.
    Rices(RicesArgs),
    /// Run a few-shot evaluation against a model endpoint.
    Eval(EvalArgs),
    /// Summaries over score tables.
    Report {
        #[command(subcommand)]
        op: ReportOp,
    },
    /// Serve the deterministic stub model over HTTP.
    StubServe(StubServe),
}

#[derive(Args, Debug)]
struct FilterMmc4 {
    input: PathBuf,
    output: PathBuf,
    #[arg(long)]
    threshold: Option<f64>,
    /// Set to 0 to keep every single-image document.
    #[arg(long)]
    reject_single_prob: Option<f64>,
    /// Profile a seeded sample of this many kept documents.
    #[arg(long)]
    sample_size: Option<usize>,
    /// Stats JSON destination (stdout otherwise).
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FilterPairs {
    input: PathBuf,
    output: PathBuf,
    #[arg(long)]
    sim_min: Option<f64>,
    #[arg(long)]
    max_caption_tokens: Option<usize>,
}

/// Embedding arguments name the data file; ids are read from the sibling
/// `<file>.ids.ndjson`.
#[derive(Args, Debug)]
struct Synth {
    /// NDJSON of {"id", "response"}.
    responses: PathBuf,
    output: PathBuf,
    #[arg(long)]
    pattern: Option<String>,
    /// Image embeddings forming the retrieval index.
    #[arg(long)]
    index: PathBuf,
    /// Description-text embeddings in the index space.
    #[arg(long)]
    queries: PathBuf,
    /// Description-text embeddings in the re-ranking space.
    #[arg(long)]
    rerank_texts: PathBuf,
    /// Image embeddings in the re-ranking space.
    #[arg(long)]
    rerank_images: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_parser = parse_missing)]
    missing: Option<MissingPolicy>,
}

#[derive(Args, Debug)]
struct Seq {
    input: PathBuf,
    output: PathBuf,
    /// Vocabulary file, one word per line; fitted on the input otherwise.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Write the vocabulary used.
    #[arg(long)]
    vocab_out: Option<PathBuf>,
    /// Repack streams into fixed-size windows.
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Args, Debug)]
struct Layers {
    #[arg(long)]
    n_layers: Option<usize>,
    #[arg(long)]
    interval: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum ShardOp {
    /// Pack token streams (NDJSON) into shards and write a manifest.
    Pack {
        input: PathBuf,
        /// Shard path prefix; shards become `<prefix>-000000.tar`.
        #[arg(long)]
        out_prefix: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        max_per_shard: Option<usize>,
        #[arg(long)]
        gzip: bool,
    },
    /// Sample and shard counts of a manifest.
    Stats { manifest: PathBuf },
    /// Draw shards with replacement.
    Sample {
        manifest: PathBuf,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct PlanArgs {
    /// NDJSON of step directives.
    output: PathBuf,
    #[arg(long)]
    budget_interleaved: Option<u64>,
    #[arg(long)]
    budget_pairs: Option<u64>,
    #[arg(long)]
    batch: Option<u64>,
    #[arg(long)]
    multiplier: Option<u64>,
    #[arg(long)]
    warmup_steps: Option<u64>,
}

#[derive(Args, Debug)]
struct RicesArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// caption, vqa or hateful_memes (benchmark names also accepted).
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long, value_parser = parse_selection)]
    selection: Option<Selection>,
    /// Comma-separated.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    permutations: Option<usize>,
    /// Falls back to MODEL_ENDPOINT.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    eval: PathBuf,
    /// Image embeddings for retrieval selection, keyed by image id.
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum ReportOp {
    /// Per-setting ratios of our scores to a baseline model's.
    Relative {
        #[arg(long)]
        ours: PathBuf,
        #[arg(long)]
        baseline: PathBuf,
        /// OURS=BASELINE model pairs; inferred when both tables hold one model.
        #[arg(long = "pair", value_parser = parse_pair)]
        pairs: Vec<(String, String)>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Fractions of state-of-the-art per benchmark.
    Sota {
        #[arg(long)]
        ours: PathBuf,
        #[arg(long)]
        sota: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long)]
        shots: u32,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Gaussian-smooth a JSON array of numbers.
    Smooth {
        input: PathBuf,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct StubServe {
    /// Stub behaviour spec (JSON); echo mode otherwise.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
}

fn parse_selection(s: &str) -> Result<Selection, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown selection {s:?} (random or rices)"))
}

fn parse_missing(s: &str) -> Result<MissingPolicy, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown policy {s:?} (drop-slot or drop-sequence)"))
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    s.split_once('=').map(|(a, b)| (a.to_owned(), b.to_owned())).ok_or_else(|| format!("expected OURS=BASELINE, got {s:?}"))
}

fn put<T: serde::Serialize>(overlay: &mut Value, path: &str, v: Option<T>) {
    if let Some(v) = v {
        set_path(overlay, path, serde_json::to_value(v).expect("flag value serializes"));
    }
}

/// Flag layer of the config.
fn flag_overlay(cli: &Cli) -> Value {
    let mut o = json!({});
    put(&mut o, "seed", cli.seed);
    put(&mut o, "jobs", cli.jobs);
    match &cli.command {
        Command::FilterMmc4(a) => {
            put(&mut o, "curation.threshold", a.threshold);
            put(&mut o, "curation.reject_single_prob", a.reject_single_prob);
            put(&mut o, "curation.sample_size", a.sample_size);
        }
        Command::FilterPairs(a) => {
            put(&mut o, "curation.sim_min", a.sim_min);
            put(&mut o, "curation.max_caption_tokens", a.max_caption_tokens);
        }
        Command::Synth(a) => {
            put(&mut o, "synth.pattern", a.pattern.clone());
            put(&mut o, "synth.k", a.k);
            put(&mut o, "synth.missing", a.missing);
        }
        Command::Seq(a) => put(&mut o, "sequence.window", a.window),
        Command::Layers(a) => {
            put(&mut o, "sequence.n_layers", a.n_layers);
            put(&mut o, "sequence.interval", a.interval);
        }
        Command::Shard { op: ShardOp::Pack { max_per_shard, gzip, .. } } => {
            put(&mut o, "shard.max_per_shard", *max_per_shard);
            put(&mut o, "shard.gzip", gzip.then_some(true));
        }
        Command::Shard { op: ShardOp::Sample { draws, .. } } => put(&mut o, "shard.draws", *draws),
        Command::Plan(a) => {
            put(&mut o, "budgets.interleaved", a.budget_interleaved);
            put(&mut o, "budgets.pairs", a.budget_pairs);
            put(&mut o, "schedule.batch_interleaved", a.batch);
            put(&mut o, "schedule.laion_batch_multiplier", a.multiplier);
            put(&mut o, "schedule.warmup_steps", a.warmup_steps);
        }
        Command::Rices(a) => put(&mut o, "retrieval.k", a.k),
        Command::Eval(a) => {
            put(&mut o, "eval.task", a.task.clone());
            put(&mut o, "eval.shots", a.shots);
            put(&mut o, "eval.selection", a.selection);
            put(&mut o, "eval.seeds", a.seeds.clone());
            put(&mut o, "eval.n_permutations", a.permutations);
            put(&mut o, "eval.endpoint", a.endpoint.clone());
        }
        Command::Report { op: ReportOp::Smooth { window, .. } } => put(&mut o, "report.window", *window),
        _ => {}
    }
    o
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = config::resolve(cli.config.as_deref(), flag_overlay(&cli), config::env_overlay(std::env::vars()))
        .map_err(Failure::Validation)?;
    if cfg.jobs == 0 {
        return Err(Failure::Validation(anyhow::anyhow!("jobs must be at least 1")));
    }
    let ctx = commands::Ctx { cfg };
    match cli.command {
        Command::FilterMmc4(a) => commands::filter_mmc4(&ctx, &a.input, &a.output, a.stats.as_deref()),
        Command::FilterPairs(a) => commands::filter_pairs(&ctx, &a.input, &a.output),
        Command::Synth(a) => commands::synth(
            &ctx,
            &a.responses,
            &a.output,
            commands::SynthInputs {
                index: &a.index,
                queries: &a.queries,
                rerank_texts: &a.rerank_texts,
                rerank_images: &a.rerank_images,
            },
        ),
        Command::Seq(a) => commands::seq(&ctx, &a.input, &a.output, a.vocab.as_deref(), a.vocab_out.as_deref()),
        Command::Layers(_) => commands::layers(&ctx),
        Command::Shard { op } => match op {
            ShardOp::Pack { input, out_prefix, manifest, .. } => commands::shard_pack(&ctx, &input, &out_prefix, &manifest),
            ShardOp::Stats { manifest } => commands::shard_stats(&ctx, &manifest),
            ShardOp::Sample { manifest, out, .. } => commands::shard_sample(&ctx, &manifest, out.as_deref()),
        },
        Command::Plan(a) => commands::plan(&ctx, &a.output),
        Command::Rices(a) => commands::rices(&ctx, &a.index, &a.queries, a.out.as_deref()),
        Command::Eval(a) => commands::eval(&ctx, &a.train, &a.eval, a.images.as_deref(), a.out.as_deref()),
        Command::Report { op } => match op {
            ReportOp::Relative { ours, baseline, pairs, out, csv, svg } => {
                commands::report_relative(&ctx, &ours, &baseline, pairs, out.as_deref(), csv.as_deref(), svg.as_deref())
            }
            ReportOp::Sota { ours, sota, model, shots, out, csv, svg } => {
                commands::report_sota(&ctx, &ours, &sota, &model, shots, out.as_deref(), csv.as_deref(), svg.as_deref())
            }
            ReportOp::Smooth { input, out, .. } => commands::report_smooth(&ctx, &input, out.as_deref()),
        },
        Command::StubServe(a) => commands::stub_serve(a.spec.as_deref(), &a.addr),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
