//! Layered run configuration: defaults < config file < flags < `IKIT_` env.
//!
//! Environment keys map onto the config tree by lowercasing and splitting on
//! `__`, so `IKIT_CURATION__THRESHOLD=0.3` sets `curation.threshold`. Values
//! are parsed as JSON when possible and taken as strings otherwise.

use std::path::Path;

use anyhow::{bail, Context, Result};
use ikit_core::curation::{
    DEFAULT_DOC_THRESHOLD, DEFAULT_MAX_CAPTION_TOKENS, DEFAULT_PAIR_SIM_MIN, DEFAULT_REJECT_SINGLE_PROB,
};
use ikit_core::eval::{DEFAULT_JOBS, DEFAULT_PERMUTATIONS};
use ikit_core::synth::{MissingPolicy, DEFAULT_INFILL_K};
use ikit_core::{MixConfig, Selection};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const ENV_PREFIX: &str = "IKIT_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: usize,
    pub curation: CurationConfig,
    pub synth: SynthConfig,
    pub sequence: SequenceConfig,
    pub shard: ShardConfig,
    pub schedule: MixConfig,
    pub budgets: Budgets,
    pub retrieval: RetrievalConfig,
    pub eval: EvalSection,
    pub report: ReportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: DEFAULT_JOBS,
            curation: CurationConfig::default(),
            synth: SynthConfig::default(),
            sequence: SequenceConfig::default(),
            shard: ShardConfig::default(),
            schedule: MixConfig::default(),
            budgets: Budgets::default(),
            retrieval: RetrievalConfig::default(),
            eval: EvalSection::default(),
            report: ReportConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationConfig {
    pub threshold: f64,
    /// Probability of dropping a single-image document; 0 disables.
    pub reject_single_prob: f64,
    pub sim_min: f64,
    pub max_caption_tokens: usize,
    pub sample_size: Option<usize>,
    pub token_bucket: usize,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_DOC_THRESHOLD,
            reject_single_prob: DEFAULT_REJECT_SINGLE_PROB,
            sim_min: DEFAULT_PAIR_SIM_MIN,
            max_caption_tokens: DEFAULT_MAX_CAPTION_TOKENS,
            sample_size: None,
            token_bucket: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub pattern: Option<String>,
    pub k: usize,
    pub missing: MissingPolicy,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { pattern: None, k: DEFAULT_INFILL_K, missing: MissingPolicy::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceConfig {
    pub window: Option<usize>,
    pub n_layers: usize,
    pub interval: usize,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self { window: None, n_layers: 32, interval: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShardConfig {
    pub max_per_shard: usize,
    pub gzip: bool,
    pub draws: usize,
}

impl Default for ShardConfig {
    fn default() -> Self {
        Self { max_per_shard: 1000, gzip: false, draws: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    pub interleaved: u64,
    pub pairs: u64,
}

impl Default for Budgets {
    fn default() -> Self {
        Self { interleaved: 60_000_000, pairs: 120_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub k: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { k: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub task: String,
    pub shots: usize,
    pub selection: Selection,
    pub seeds: Vec<u64>,
    pub n_permutations: usize,
    pub max_failure_rate: f64,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            task: "caption".into(),
            shots: 0,
            selection: Selection::Random,
            seeds: vec![0, 1, 2],
            n_permutations: DEFAULT_PERMUTATIONS,
            max_failure_rate: 0.01,
            endpoint: None,
            timeout_ms: 60_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub window: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { window: 100 }
    }
}

/// Recursively overlay `top` onto `base`. Objects merge key by key; any
/// other value replaces.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Set `path` (dot-separated) in an overlay object.
pub fn set_path(overlay: &mut Value, path: &str, value: Value) {
    let mut cur = overlay;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        if !cur.is_object() {
            *cur = Value::Object(Map::new());
        }
        let obj = cur.as_object_mut().expect("object");
        if i + 1 == parts.len() {
            obj.insert((*p).to_owned(), value);
            return;
        }
        cur = obj.entry((*p).to_owned()).or_insert_with(|| Value::Object(Map::new()));
    }
}

pub fn read_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let value = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
        Some("toml") => {
            let t: toml::Value = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            serde_json::to_value(t)?
        }
        _ => bail!("config file {} must end in .toml or .json", path.display()),
    };
    if !value.is_object() {
        bail!("config file {} must hold a table", path.display());
    }
    Ok(value)
}

pub fn env_overlay<I: IntoIterator<Item = (String, String)>>(vars: I) -> Value {
    let mut overlay = Value::Object(Map::new());
    let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (k, v) in vars {
        let path = k[ENV_PREFIX.len()..].to_lowercase().replace("__", ".");
        if path.is_empty() {
            continue;
        }
        let value = serde_json::from_str(&v).unwrap_or(Value::String(v));
        set_path(&mut overlay, &path, value);
    }
    overlay
}

/// Resolve the final config from its layers.
pub fn resolve(file: Option<&Path>, flags: Value, env: Value) -> Result<RunConfig> {
    let mut value = serde_json::to_value(RunConfig::default())?;
    if let Some(path) = file {
        merge(&mut value, read_file(path)?);
    }
    merge(&mut value, flags);
    merge(&mut value, env);
    serde_json::from_value(value).context("invalid configuration")
}
