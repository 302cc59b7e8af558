//! Few-shot evaluation: prompt rendering, demonstration selection (random or
//! retrieval-based), rank classification with permutation ensembling, and
//! per-seed aggregation.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::client::{ClientError, GenerateRequest, ModelClient, ScoreRequest};
use crate::metrics::{self, MetricError};
use crate::retrieval::{build_index, order_for_prompt, topk, EmbeddingIndex, EmbeddingProvider, RetrievalError};
use crate::rng;
use crate::tokenizer::{END_OF_CHUNK_MARKER, IMAGE_MARKER};

pub const ALLOWED_SHOTS: [usize; 5] = [0, 4, 8, 16, 32];
pub const ZERO_SHOT_DEMOS: usize = 2;
pub const DEFAULT_PERMUTATIONS: usize = 6;
pub const DEFAULT_JOBS: usize = 8;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("config: {0}")]
    Config(String),
    #[error("{position}: missing field {field}")]
    Render { position: String, field: String },
    #[error("item {id}: missing field {field}")]
    Item { id: String, field: String },
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("retrieval: {0}")]
    Retrieval(String),
    #[error("{failed} of {total} queries failed")]
    TooManyFailures { failed: usize, total: usize, failures: Vec<Failure> },
}

impl From<RetrievalError> for EvalError {
    fn from(e: RetrievalError) -> Self {
        EvalError::Retrieval(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Caption,
    Vqa,
    RankClassify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decode {
    pub beams: u32,
    pub max_new_tokens: u32,
    pub stop_on: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub template_id: String,
    pub decode: Decode,
    #[serde(default)]
    pub options: Vec<String>,
}

fn decode(max_new_tokens: u32) -> Decode {
    Decode { beams: 3, max_new_tokens, stop_on: vec![END_OF_CHUNK_MARKER.to_owned()] }
}

impl TaskSpec {
    pub fn caption() -> Self {
        Self { kind: TaskKind::Caption, template_id: "caption".into(), decode: decode(20), options: Vec::new() }
    }

    pub fn vqa() -> Self {
        Self { kind: TaskKind::Vqa, template_id: "vqa".into(), decode: decode(5), options: Vec::new() }
    }

    pub fn hateful_memes() -> Self {
        Self {
            kind: TaskKind::RankClassify,
            template_id: "hateful_memes".into(),
            decode: decode(1),
            options: vec!["yes".into(), "no".into()],
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "caption" | "coco" | "flickr30k" => Some(Self::caption()),
            "vqa" | "vqav2" | "okvqa" | "textvqa" | "vizwiz" => Some(Self::vqa()),
            "hateful_memes" | "hateful-memes" | "rank_classify" => Some(Self::hateful_memes()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.decode.beams == 0 {
            return Err(EvalError::Config("beams must be at least 1".into()));
        }
        match self.kind {
            TaskKind::RankClassify if self.options.len() < 2 => {
                Err(EvalError::Config("rank classification needs at least two options".into()))
            }
            TaskKind::Caption | TaskKind::Vqa if !self.options.is_empty() => {
                Err(EvalError::Config("generation tasks take no options".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    #[default]
    Random,
    Rices,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub shots: usize,
    pub selection: Selection,
    pub seeds: Vec<u64>,
    pub n_permutations: usize,
    pub jobs: usize,
    pub max_failure_rate: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            shots: 0,
            selection: Selection::Random,
            seeds: vec![0, 1, 2],
            n_permutations: DEFAULT_PERMUTATIONS,
            jobs: DEFAULT_JOBS,
            max_failure_rate: 0.01,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !ALLOWED_SHOTS.contains(&self.shots) {
            return Err(EvalError::Config(format!("shots {} not in {ALLOWED_SHOTS:?}", self.shots)));
        }
        if self.seeds.is_empty() {
            return Err(EvalError::Config("at least one seed is required".into()));
        }
        if self.n_permutations == 0 {
            return Err(EvalError::Config("n_permutations must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.max_failure_rate) {
            return Err(EvalError::Config("max_failure_rate must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// One dataset line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captions: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answers: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
}

impl EvalItem {
    fn missing(&self, field: &str) -> EvalError {
        EvalError::Item { id: self.id.clone(), field: field.to_owned() }
    }

    /// Check that the fields required by `kind` are present.
    pub fn validate(&self, kind: TaskKind) -> Result<(), EvalError> {
        match kind {
            TaskKind::Caption => {
                self.captions.as_ref().filter(|c| !c.is_empty()).ok_or_else(|| self.missing("captions"))?;
            }
            TaskKind::Vqa => {
                self.question.as_ref().ok_or_else(|| self.missing("question"))?;
                self.answers.as_ref().filter(|a| !a.is_empty()).ok_or_else(|| self.missing("answers"))?;
            }
            TaskKind::RankClassify => {
                self.text.as_ref().ok_or_else(|| self.missing("text"))?;
                self.label.filter(|l| *l <= 1).ok_or_else(|| self.missing("label"))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalDataset {
    pub train: Vec<EvalItem>,
    pub eval: Vec<EvalItem>,
}

/// A rendered-prompt participant: an optional image plus template fields.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Demo {
    pub image_ref: Option<String>,
    pub fields: BTreeMap<String, String>,
}

fn answer_field(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::Caption => "caption",
        TaskKind::Vqa => "answer",
        TaskKind::RankClassify => "label",
    }
}

impl Demo {
    /// Demonstration from a pool item, answered with its first caption,
    /// first answer, or yes/no label.
    pub fn from_item(kind: TaskKind, item: &EvalItem) -> Self {
        let mut demo = Self::query(kind, item);
        let answer = match kind {
            TaskKind::Caption => item.captions.as_ref().and_then(|c| c.first()).cloned(),
            TaskKind::Vqa => item.answers.as_ref().and_then(|a| a.first()).cloned(),
            TaskKind::RankClassify => item.label.map(|l| if l == 1 { "yes" } else { "no" }.to_owned()),
        };
        if let Some(a) = answer {
            demo.fields.insert(answer_field(kind).to_owned(), a);
        }
        demo
    }

    /// Query form of an item: every field except the answer.
    pub fn query(kind: TaskKind, item: &EvalItem) -> Self {
        let mut fields = BTreeMap::new();
        match kind {
            TaskKind::Caption => {}
            TaskKind::Vqa => {
                if let Some(q) = &item.question {
                    fields.insert("question".into(), q.clone());
                }
            }
            TaskKind::RankClassify => {
                if let Some(t) = &item.text {
                    fields.insert("text".into(), t.clone());
                }
            }
        }
        Self { image_ref: Some(item.image_id.clone()), fields }
    }

    pub fn text_only(mut self) -> Self {
        self.image_ref = None;
        self
    }
}

fn field<'a>(demo: &'a Demo, name: &str, position: &dyn Fn() -> String) -> Result<&'a str, EvalError> {
    demo.fields
        .get(name)
        .map(String::as_str)
        .ok_or_else(|| EvalError::Render { position: position(), field: name.to_owned() })
}

fn render_one(kind: TaskKind, demo: &Demo, answered: bool, position: &dyn Fn() -> String, out: &mut String) -> Result<(), EvalError> {
    if demo.image_ref.is_some() {
        out.push_str(IMAGE_MARKER);
    }
    match kind {
        TaskKind::Caption => out.push_str("Output: "),
        TaskKind::Vqa => {
            out.push_str("Question: ");
            out.push_str(field(demo, "question", position)?);
            out.push_str(" Short answer: ");
        }
        TaskKind::RankClassify => {
            out.push_str("is an image with: '");
            out.push_str(field(demo, "text", position)?);
            out.push_str("' written on it. Is it hateful? Answer: ");
        }
    }
    if answered {
        out.push_str(field(demo, answer_field(kind), position)?);
        out.push_str(END_OF_CHUNK_MARKER);
    }
    Ok(())
}

/// Demonstrations (each closed by the end-of-chunk marker) followed by the
/// query rendered up to its answer cue and a trailing space.
pub fn render_prompt(task: &TaskSpec, demos: &[Demo], query: &Demo) -> Result<String, EvalError> {
    let mut out = String::new();
    for (i, d) in demos.iter().enumerate() {
        render_one(task.kind, d, true, &|| format!("demo {i}"), &mut out)?;
    }
    render_one(task.kind, query, false, &|| "query".to_owned(), &mut out)?;
    Ok(out)
}

/// Image ids in prompt order.
pub fn prompt_image_ids(demos: &[Demo], query: &Demo) -> Vec<String> {
    demos.iter().chain(std::iter::once(query)).filter_map(|d| d.image_ref.clone()).collect()
}

/// Retrieval context: `index` rows are the pool items (ids in pool order) and
/// `queries` maps a query's image id to its embedding.
pub struct Rices<'a> {
    index: &'a EmbeddingIndex,
    queries: &'a dyn EmbeddingProvider,
}

impl<'a> Rices<'a> {
    pub fn new(pool: &[EvalItem], index: &'a EmbeddingIndex, queries: &'a dyn EmbeddingProvider) -> Result<Self, EvalError> {
        if index.len() != pool.len() || index.ids().iter().zip(pool).any(|(id, item)| *id != item.id) {
            return Err(EvalError::Config("retrieval index rows must match pool ids in order".into()));
        }
        Ok(Self { index, queries })
    }

    fn nearest(&self, pool_len: usize, query: &EvalItem, k: usize) -> Result<Vec<usize>, EvalError> {
        let q = self
            .queries
            .embedding(&query.image_id)
            .ok_or_else(|| EvalError::Retrieval(format!("no embedding for image {}", query.image_id)))?;
        let hits = order_for_prompt(topk(self.index, q, k.min(pool_len))?);
        Ok(hits.iter().map(|n| self.index.position(&n.id).expect("hit comes from index")).collect())
    }
}

/// Pool index with one row per item, each row the embedding of its image.
pub fn build_pool_index(pool: &[EvalItem], images: &dyn EmbeddingProvider) -> Result<EmbeddingIndex, EvalError> {
    let rows = pool
        .iter()
        .map(|item| {
            images
                .embedding(&item.image_id)
                .map(|v| (item.id.clone(), v.to_vec()))
                .ok_or_else(|| EvalError::Retrieval(format!("no embedding for image {}", item.image_id)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(build_index(rows)?)
}

fn select_indices(
    pool_len: usize,
    query: &EvalItem,
    k: usize,
    selection: Selection,
    seed: u64,
    rices: Option<&Rices<'_>>,
) -> Result<Vec<usize>, EvalError> {
    if k > pool_len {
        return Err(EvalError::Config(format!("{k} demonstrations requested from a pool of {pool_len}")));
    }
    match selection {
        Selection::Random => {
            let mut r = rng::keyed(seed, &query.id);
            Ok(rng::sample_indices(&mut r, pool_len, k))
        }
        Selection::Rices => {
            let rices = rices.ok_or_else(|| EvalError::Config("retrieval selection requires an index".into()))?;
            if k == 0 {
                return Ok(Vec::new());
            }
            rices.nearest(pool_len, query, k)
        }
    }
}

/// The two text-only demonstrations used for zero-shot prompts.
pub fn zero_shot_demos(
    kind: TaskKind,
    pool: &[EvalItem],
    query: &EvalItem,
    selection: Selection,
    seed: u64,
    rices: Option<&Rices<'_>>,
) -> Result<Vec<Demo>, EvalError> {
    if pool.len() < ZERO_SHOT_DEMOS {
        return Err(EvalError::Config(format!("zero-shot needs a pool of at least {ZERO_SHOT_DEMOS}")));
    }
    let idx = select_indices(pool.len(), query, ZERO_SHOT_DEMOS, selection, seed, rices)?;
    Ok(idx.into_iter().map(|i| Demo::from_item(kind, &pool[i]).text_only()).collect())
}

pub fn select_demos(
    kind: TaskKind,
    pool: &[EvalItem],
    query: &EvalItem,
    shots: usize,
    selection: Selection,
    seed: u64,
    rices: Option<&Rices<'_>>,
) -> Result<Vec<Demo>, EvalError> {
    if shots == 0 {
        return zero_shot_demos(kind, pool, query, selection, seed, rices);
    }
    let idx = select_indices(pool.len(), query, shots, selection, seed, rices)?;
    Ok(idx.into_iter().map(|i| Demo::from_item(kind, &pool[i])).collect())
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("successor exists");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// All permutations of `n` items in lexicographic order when there are at
/// most `count`, otherwise `count` distinct seeded permutations.
pub fn demo_permutations(n: usize, count: usize, seed: u64) -> Vec<Vec<usize>> {
    let total = (1..=n).try_fold(1usize, |acc, k| acc.checked_mul(k));
    if total.is_some_and(|t| t <= count) {
        let mut p: Vec<usize> = (0..n).collect();
        let mut out = vec![p.clone()];
        while next_permutation(&mut p) {
            out.push(p.clone());
        }
        return out;
    }
    let mut r = rng::from_seed(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = rng::permutation(&mut r, n);
        if seen.insert(p.clone()) {
            out.push(p);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionScore {
    pub option: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankOutcome {
    pub choice: String,
    pub scores: Vec<OptionScore>,
    pub permutations: Vec<Vec<usize>>,
}

impl RankOutcome {
    /// Softmax probability of `options[i]` over the averaged scores.
    pub fn probability(&self, i: usize) -> f64 {
        let m = self.scores.iter().map(|s| s.score).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = self.scores.iter().map(|s| (s.score - m).exp()).sum();
        (self.scores[i].score - m).exp() / z
    }
}

/// Score every option under each demonstration permutation and average;
/// the highest mean wins, ties going to the earlier option.
pub fn rank_classify(
    client: &dyn ModelClient,
    task: &TaskSpec,
    demos: &[Demo],
    query: &Demo,
    n_permutations: usize,
    seed: u64,
) -> Result<RankOutcome, EvalError> {
    if task.options.len() < 2 {
        return Err(EvalError::Config("rank classification needs at least two options".into()));
    }
    let permutations = demo_permutations(demos.len(), n_permutations, seed);
    let mut totals = vec![0.0; task.options.len()];
    for perm in &permutations {
        let ordered: Vec<Demo> = perm.iter().map(|&i| demos[i].clone()).collect();
        let prompt = render_prompt(task, &ordered, query)?;
        let image_ids = prompt_image_ids(&ordered, query);
        for (total, option) in totals.iter_mut().zip(&task.options) {
            let req = ScoreRequest { prompt: prompt.clone(), image_ids: image_ids.clone(), completion: option.clone(), image_data: None };
            *total += client.score(&req)?;
        }
    }
    let n = permutations.len() as f64;
    let scores: Vec<OptionScore> =
        task.options.iter().zip(&totals).map(|(o, t)| OptionScore { option: o.clone(), score: t / n }).collect();
    let best = scores.iter().enumerate().fold(0, |best, (i, s)| if s.score > scores[best].score { i } else { best });
    Ok(RankOutcome { choice: scores[best].option.clone(), scores, permutations })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub seed: u64,
    pub query_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub score: f64,
    pub scored: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task: String,
    pub kind: TaskKind,
    pub metric: String,
    pub shots: usize,
    pub selection: Selection,
    pub queries: usize,
    pub per_seed: Vec<SeedResult>,
    pub mean: f64,
    pub std: f64,
    pub failures: Vec<Failure>,
}

enum Outcome {
    Text(String),
    Prob(f64),
}

fn metric_name(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::Caption => "cider",
        TaskKind::Vqa => "vqa_accuracy",
        TaskKind::RankClassify => "roc_auc",
    }
}

fn postprocess(kind: TaskKind, text: &str) -> String {
    match kind {
        TaskKind::Vqa => text.split('\n').next().unwrap_or("").trim().to_lowercase(),
        _ => text.trim().to_owned(),
    }
}

fn eval_query(
    task: &TaskSpec,
    pool: &[EvalItem],
    item: &EvalItem,
    config: &EvalConfig,
    seed: u64,
    client: &dyn ModelClient,
    rices: Option<&Rices<'_>>,
) -> Result<Outcome, EvalError> {
    let demos = select_demos(task.kind, pool, item, config.shots, config.selection, seed, rices)?;
    let query = Demo::query(task.kind, item);
    if task.kind == TaskKind::RankClassify {
        let perm_seed = rng::derive_seed(seed, &format!("permutations/{}", item.id));
        let outcome = rank_classify(client, task, &demos, &query, config.n_permutations, perm_seed)?;
        return Ok(Outcome::Prob(outcome.probability(0)));
    }
    let prompt = render_prompt(task, &demos, &query)?;
    let req = GenerateRequest {
        image_ids: prompt_image_ids(&demos, &query),
        prompt,
        beams: task.decode.beams,
        max_new_tokens: task.decode.max_new_tokens,
        stop_sequences: task.decode.stop_on.clone(),
        image_data: None,
    };
    Ok(Outcome::Text(postprocess(task.kind, &client.generate(&req)?.text)))
}

fn seed_metric(kind: TaskKind, items: &[&EvalItem], outcomes: &[&Outcome]) -> Result<f64, EvalError> {
    match kind {
        TaskKind::Caption => {
            let mut cands = BTreeMap::new();
            let mut refs = BTreeMap::new();
            for (item, o) in items.iter().zip(outcomes) {
                if let Outcome::Text(t) = o {
                    cands.insert(item.id.clone(), t.clone());
                    refs.insert(item.id.clone(), item.captions.clone().unwrap_or_default());
                }
            }
            Ok(metrics::cider(&cands, &refs)? * 100.0)
        }
        TaskKind::Vqa => {
            let mut total = 0.0;
            for (item, o) in items.iter().zip(outcomes) {
                if let Outcome::Text(t) = o {
                    total += metrics::vqa_accuracy(t, item.answers.as_deref().unwrap_or_default())?;
                }
            }
            if items.is_empty() {
                return Err(MetricError::InvalidInput("no scored queries".into()).into());
            }
            Ok(total / items.len() as f64 * 100.0)
        }
        TaskKind::RankClassify => {
            let scores: Vec<f64> = outcomes.iter().map(|o| if let Outcome::Prob(p) = o { *p } else { f64::NAN }).collect();
            let labels: Vec<u8> = items.iter().map(|i| i.label.unwrap_or(0)).collect();
            Ok(metrics::auc_roc(&scores, &labels)? * 100.0)
        }
    }
}

/// Evaluate every query under every seed and aggregate the per-seed metric
/// (CIDEr ×100, VQA accuracy %, or ROC-AUC ×100) as mean and population std.
pub fn run_eval(
    task: &TaskSpec,
    dataset: &EvalDataset,
    config: &EvalConfig,
    client: &dyn ModelClient,
    rices: Option<&Rices<'_>>,
) -> Result<RunReport, EvalError> {
    task.validate()?;
    config.validate()?;
    if dataset.eval.is_empty() {
        return Err(EvalError::Config("empty eval split".into()));
    }
    for item in dataset.train.iter().chain(&dataset.eval) {
        item.validate(task.kind)?;
    }
    if config.selection == Selection::Rices && rices.is_none() {
        return Err(EvalError::Config("retrieval selection requires an index".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.max(1))
        .build()
        .map_err(|e| EvalError::Config(e.to_string()))?;
    let mut per_seed = Vec::new();
    let mut failures = Vec::new();
    for &seed in &config.seeds {
        let results: Vec<Result<Outcome, EvalError>> = pool.install(|| {
            dataset
                .eval
                .par_iter()
                .map(|item| eval_query(task, &dataset.train, item, config, seed, client, rices))
                .collect()
        });
        let mut items = Vec::new();
        let mut outcomes = Vec::new();
        let mut failed = 0;
        for (item, r) in dataset.eval.iter().zip(&results) {
            match r {
                Ok(o) => {
                    items.push(item);
                    outcomes.push(o);
                }
                Err(e @ EvalError::Config(_)) => return Err(e.clone()),
                Err(e) => {
                    failed += 1;
                    failures.push(Failure { seed, query_id: item.id.clone(), error: e.to_string() });
                }
            }
        }
        let score = if items.is_empty() { f64::NAN } else { seed_metric(task.kind, &items, &outcomes)? };
        per_seed.push(SeedResult { seed, score, scored: items.len(), failed });
    }
    let total = dataset.eval.len() * config.seeds.len();
    if failures.len() as f64 > config.max_failure_rate * total as f64 {
        return Err(EvalError::TooManyFailures { failed: failures.len(), total, failures });
    }
    let values: Vec<f64> = per_seed.iter().map(|s| s.score).collect();
    let (mean, std) = metrics::mean_std(&values);
    Ok(RunReport {
        task: task.template_id.clone(),
        kind: task.kind,
        metric: metric_name(task.kind).to_owned(),
        shots: config.shots,
        selection: config.selection,
        queries: dataset.eval.len(),
        per_seed,
        mean,
        std,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cap_demo(c: &str) -> Demo {
        Demo { image_ref: Some("i".into()), fields: BTreeMap::from([("caption".into(), c.into())]) }
    }

    #[test]
    fn caption_prompt() {
        let q = Demo { image_ref: Some("q".into()), fields: BTreeMap::new() };
        let p = render_prompt(&TaskSpec::caption(), &[cap_demo("a cat")], &q).unwrap();
        assert_eq!(p, "<image>Output: a cat<|endofchunk|><image>Output: ");
    }

    #[test]
    fn vqa_prompt() {
        let q = Demo { image_ref: Some("q".into()), fields: BTreeMap::from([("question".into(), "What color?".into())]) };
        assert_eq!(render_prompt(&TaskSpec::vqa(), &[], &q).unwrap(), "<image>Question: What color? Short answer: ");
    }

    #[test]
    fn hateful_prompt() {
        let item = EvalItem { id: "m".into(), image_id: "img".into(), text: Some("hi".into()), label: Some(1), ..Default::default() };
        let demo = Demo::from_item(TaskKind::RankClassify, &item);
        let p = render_prompt(&TaskSpec::hateful_memes(), std::slice::from_ref(&demo), &Demo::query(TaskKind::RankClassify, &item)).unwrap();
        assert_eq!(
            p,
            "<image>is an image with: 'hi' written on it. Is it hateful? Answer: yes<|endofchunk|>\
             <image>is an image with: 'hi' written on it. Is it hateful? Answer: "
        );
        let zs = render_prompt(&TaskSpec::hateful_memes(), &[demo.text_only()], &Demo::query(TaskKind::RankClassify, &item)).unwrap();
        assert!(zs.starts_with("is an image with"));
    }

    #[test]
    fn render_error_names_demo() {
        let q = Demo::default();
        let err = render_prompt(&TaskSpec::caption(), &[cap_demo("x"), Demo::default()], &q).unwrap_err();
        assert_eq!(err.to_string(), "demo 1: missing field caption");
    }

    #[test]
    fn permutation_counts() {
        assert_eq!(demo_permutations(2, 6, 0), vec![vec![0, 1], vec![1, 0]]);
        assert_eq!(demo_permutations(3, 6, 0).len(), 6);
        assert_eq!(demo_permutations(0, 6, 0), vec![Vec::<usize>::new()]);
        let p = demo_permutations(4, 6, 9);
        assert_eq!(p.len(), 6);
        assert_eq!(p.iter().collect::<HashSet<_>>().len(), 6);
        assert_eq!(p, demo_permutations(4, 6, 9));
    }

    #[test]
    fn rank_tie_goes_first() {
        let spec = crate::client::StubSpec { strict: false, default_logprob: -3.0, ..Default::default() };
        let stub = crate::client::StubModel::new(spec).unwrap();
        let q = Demo { image_ref: None, fields: BTreeMap::from([("text".into(), "t".into())]) };
        let out = rank_classify(&stub, &TaskSpec::hateful_memes(), &[], &q, 6, 0).unwrap();
        assert_eq!(out.choice, "yes");
        assert!((out.probability(0) - 0.5).abs() < 1e-12);
    }
}
