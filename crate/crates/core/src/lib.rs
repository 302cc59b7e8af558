//! Curation, sequence building, shard storage, schedule planning and few-shot
//! evaluation for interleaved image-text corpora.
//!
//! Every stochastic operation takes an explicit 64-bit seed and draws from the
//! generator pinned in [`rng`], so outputs are reproducible across runs and
//! platforms.

pub mod client;
pub mod curation;
pub mod eval;
pub mod metrics;
pub mod retrieval;
pub mod rng;
pub mod schedule;
pub mod sequence;
pub mod shard;
pub mod synth;
pub mod tokenizer;

mod ndjson;

pub use client::{
    ClientError, FinishReason, GenerateRequest, GenerateResponse, HttpModelClient, ModelClient,
    ScoreRequest, StubModel, StubServer, StubSpec,
};
pub use curation::{
    corpus_stats, filter_doc, filter_pair, reject_single_image, CorpusStats, CurationError,
    ImageRecord, InterleavedDoc, PairRecord, StatsOptions,
};
pub use eval::{
    rank_classify, render_prompt, run_eval, select_demos, zero_shot_demos, Demo, EvalConfig,
    EvalError, EvalItem, RunReport, Selection, TaskKind, TaskSpec,
};
pub use metrics::{
    auc_roc, cider, gaussian_smooth, relative_to_baseline, relative_to_sota, vqa_accuracy,
    MetricError, ScoreTable, SotaTable,
};
pub use ndjson::{read_ndjson, write_ndjson, NdjsonError};
pub use retrieval::{build_index, order_for_prompt, topk, EmbeddingIndex, Neighbor, RetrievalError};
pub use schedule::{
    combined_loss, interleaved_mix_counts, lr_at, plan, MixConfig, MixCounts, Plan,
    ScheduleError, StepDirective,
};
pub use sequence::{
    layer_schedule, mark_sequence, media_mask, pack_window, LayerSchedule, MediaMask,
    SequenceError, TokenStream,
};
pub use shard::{
    interleave_streams, pack, sample_shards, unpack, Sample, ShardError, ShardSet, Source,
};
pub use synth::{
    infill, parse_pattern, parse_response, render_pattern, Infiller, SlotKind, SlotPattern,
    SynthError, SynthSequence,
};
pub use tokenizer::{Tokenizer, WhitespaceTokenizer};
