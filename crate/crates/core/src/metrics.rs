//! Captioning, VQA and classification metrics, loss-curve smoothing, and
//! relative-performance aggregation over published score tables.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

pub const BENCHMARKS: [&str; 7] = ["coco", "flickr30k", "vqav2", "okvqa", "textvqa", "vizwiz", "hateful_memes"];
pub const SHOTS: [u32; 5] = [0, 4, 8, 16, 32];
pub const CIDER_SIGMA: f64 = 6.0;
const CIDER_N: usize = 4;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("candidate and reference ids differ: {0}")]
    IdMismatch(String),
    #[error("{0} has no references")]
    NoReferences(String),
    #[error("undefined metric: {0}")]
    Undefined(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("missing settings: {}", .0.join(", "))]
    MissingSettings(Vec<String>),
    #[error("invalid table: {0}")]
    InvalidTable(String),
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    if values.iter().all(|v| v.to_bits() == values[0].to_bits()) {
        return (values[0], 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn contractions() -> &'static HashMap<String, String> {
    static MAP: OnceLock<HashMap<String, String>> = OnceLock::new();
    MAP.get_or_init(|| {
        serde_json::from_str(include_str!("../data/vqa_contractions.json")).expect("contraction table is valid JSON")
    })
}

const VQA_PUNCT: [char; 21] =
    [';', '/', '[', ']', '"', '{', '}', '(', ')', '=', '+', '\\', '_', '-', '>', '<', '@', '`', ',', '?', '!'];

fn has_digit_comma_digit(s: &str) -> bool {
    let b = s.as_bytes();
    b.windows(3).any(|w| w[0].is_ascii_digit() && w[1] == b',' && w[2].is_ascii_digit())
}

fn number_word(w: &str) -> Option<&'static str> {
    Some(match w {
        "none" | "zero" => "0",
        "one" => "1",
        "two" => "2",
        "three" => "3",
        "four" => "4",
        "five" => "5",
        "six" => "6",
        "seven" => "7",
        "eight" => "8",
        "nine" => "9",
        "ten" => "10",
        _ => return None,
    })
}

/// Official VQA answer normalization.
pub fn normalize_vqa_answer(answer: &str) -> String {
    let text = answer.replace(['\n', '\t'], " ");
    let text = text.trim();
    let comma_digit = has_digit_comma_digit(text);
    let mut out = text.to_owned();
    for p in VQA_PUNCT {
        let spaced = text.contains(&format!("{p} ")) || text.contains(&format!(" {p}"));
        out = out.replace(p, if spaced || comma_digit { "" } else { " " });
    }
    let chars: Vec<char> = out.chars().collect();
    let out: String = chars
        .iter()
        .enumerate()
        .filter(|&(i, &c)| c != '.' || chars.get(i + 1).is_some_and(|n| n.is_ascii_digit()))
        .map(|(_, &c)| c)
        .collect();
    let lowered = out.to_lowercase();
    let words: Vec<&str> = lowered
        .split_whitespace()
        .map(|w| number_word(w).unwrap_or(w))
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .map(|w| contractions().get(w).map_or(w, String::as_str))
        .collect();
    words.join(" ")
}

/// `min(matches / 3, 1)` where matches counts normalized gold answers equal
/// to the normalized prediction.
pub fn vqa_accuracy(prediction: &str, answers: &[String]) -> Result<f64, MetricError> {
    if answers.is_empty() {
        return Err(MetricError::InvalidInput("no gold answers".into()));
    }
    let pred = normalize_vqa_answer(prediction);
    let matches = answers.iter().filter(|a| normalize_vqa_answer(a) == pred).count();
    Ok((matches as f64 / 3.0).min(1.0))
}

/// Lowercase, punctuation to spaces, split on whitespace.
pub fn caption_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_punctuation() { ' ' } else { c })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

type Ngram = Vec<String>;

fn ngram_counts(words: &[String]) -> HashMap<Ngram, f64> {
    let mut counts = HashMap::new();
    for n in 1..=CIDER_N {
        for w in words.windows(n) {
            *counts.entry(w.to_vec()).or_insert(0.0) += 1.0;
        }
    }
    counts
}

struct TfIdf {
    vec: [HashMap<Ngram, f64>; CIDER_N],
    norm: [f64; CIDER_N],
    length: f64,
}

fn tfidf(counts: &HashMap<Ngram, f64>, df: &HashMap<Ngram, f64>, ref_len: f64) -> TfIdf {
    let mut vec: [HashMap<Ngram, f64>; CIDER_N] = Default::default();
    let mut norm = [0.0; CIDER_N];
    let mut length = 0.0;
    for (gram, &tf) in counts {
        let n = gram.len() - 1;
        let d = df.get(gram).copied().unwrap_or(0.0).max(1.0).ln();
        let v = tf * (ref_len - d);
        norm[n] += v * v;
        vec[n].insert(gram.clone(), v);
        if n == 1 {
            length += tf;
        }
    }
    TfIdf { vec, norm: norm.map(f64::sqrt), length }
}

fn cider_sim(hyp: &TfIdf, reference: &TfIdf) -> [f64; CIDER_N] {
    let delta = hyp.length - reference.length;
    let penalty = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
    let mut val = [0.0; CIDER_N];
    #[allow(clippy::needless_range_loop)]
    for n in 0..CIDER_N {
        let mut grams: Vec<(&Ngram, &f64)> = hyp.vec[n].iter().collect();
        grams.sort_by(|a, b| a.0.cmp(b.0));
        for (gram, &vh) in grams {
            let vr = reference.vec[n].get(gram).copied().unwrap_or(0.0);
            val[n] += vh.min(vr) * vr;
        }
        if hyp.norm[n] != 0.0 && reference.norm[n] != 0.0 {
            val[n] /= hyp.norm[n] * reference.norm[n];
        }
        val[n] *= penalty;
    }
    val
}

/// Per-id CIDEr-D scores (×10 scale), document frequencies computed over
/// the reference corpus.
pub fn cider_scores(
    candidates: &BTreeMap<String, String>,
    references: &BTreeMap<String, Vec<String>>,
) -> Result<BTreeMap<String, f64>, MetricError> {
    let cand_ids: BTreeSet<&String> = candidates.keys().collect();
    let ref_ids: BTreeSet<&String> = references.keys().collect();
    if cand_ids != ref_ids {
        let diff: Vec<&str> = cand_ids.symmetric_difference(&ref_ids).map(|s| s.as_str()).collect();
        return Err(MetricError::IdMismatch(diff.join(", ")));
    }
    if let Some((id, _)) = references.iter().find(|(_, r)| r.is_empty()) {
        return Err(MetricError::NoReferences(id.clone()));
    }
    let ref_counts: BTreeMap<&String, Vec<HashMap<Ngram, f64>>> = references
        .iter()
        .map(|(id, refs)| (id, refs.iter().map(|r| ngram_counts(&caption_tokens(r))).collect()))
        .collect();
    let mut df: HashMap<Ngram, f64> = HashMap::new();
    for refs in ref_counts.values() {
        let grams: BTreeSet<&Ngram> = refs.iter().flat_map(|r| r.keys()).collect();
        for g in grams {
            *df.entry(g.clone()).or_insert(0.0) += 1.0;
        }
    }
    let ref_len = (references.len() as f64).ln();
    let mut out = BTreeMap::new();
    for (id, cand) in candidates {
        let hyp = tfidf(&ngram_counts(&caption_tokens(cand)), &df, ref_len);
        let refs = &ref_counts[id];
        let mut total = [0.0; CIDER_N];
        for r in refs {
            let s = cider_sim(&hyp, &tfidf(r, &df, ref_len));
            for n in 0..CIDER_N {
                total[n] += s[n];
            }
        }
        let avg = total.iter().sum::<f64>() / CIDER_N as f64 / refs.len() as f64 * 10.0;
        out.insert(id.clone(), avg);
    }
    Ok(out)
}

/// Corpus CIDEr-D: mean of [`cider_scores`].
pub fn cider(
    candidates: &BTreeMap<String, String>,
    references: &BTreeMap<String, Vec<String>>,
) -> Result<f64, MetricError> {
    let scores = cider_scores(candidates, references)?;
    if scores.is_empty() {
        return Err(MetricError::InvalidInput("empty corpus".into()));
    }
    Ok(scores.values().sum::<f64>() / scores.len() as f64)
}

/// Area under the ROC curve via the Mann-Whitney statistic with average
/// ranks for ties.
pub fn auc_roc(scores: &[f64], labels: &[u8]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::InvalidInput(format!("{} scores, {} labels", scores.len(), labels.len())));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(MetricError::InvalidInput(format!("non-finite score {s}")));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(MetricError::InvalidInput(format!("label {l} not in {{0, 1}}")));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::Undefined("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += avg_rank * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Gaussian smoothing with σ = window / 4, kernel truncated at ±window and
/// renormalized where it overhangs the series ends.
pub fn gaussian_smooth(series: &[f64], window: usize) -> Vec<f64> {
    if window == 0 {
        return series.to_vec();
    }
    let sigma = window as f64 / 4.0;
    let kernel: Vec<f64> = (0..=window).map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let n = series.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(window);
            let hi = (i + window).min(n - 1);
            let (mut acc, mut mass) = (0.0, 0.0);
            for (j, &x) in series.iter().enumerate().take(hi + 1).skip(lo) {
                let w = kernel[i.abs_diff(j)];
                acc += w * x;
                mass += w;
            }
            acc / mass
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub benchmark: String,
    pub shots: u32,
    pub model: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
}

/// Scores keyed by (benchmark, shots, model), in table units.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub units: BTreeMap<String, String>,
    pub entries: Vec<ScoreEntry>,
}

impl ScoreTable {
    pub fn from_json(text: &str) -> Result<Self, MetricError> {
        let t: Self = serde_json::from_str(text).map_err(|e| MetricError::InvalidTable(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !SHOTS.contains(&e.shots) {
                return Err(MetricError::InvalidTable(format!("{} {}: shots {} not in {SHOTS:?}", e.model, e.benchmark, e.shots)));
            }
            if !e.score.is_finite() {
                return Err(MetricError::InvalidTable(format!("{} {} {}: non-finite score", e.model, e.benchmark, e.shots)));
            }
            if !seen.insert((&e.benchmark, e.shots, &e.model)) {
                return Err(MetricError::InvalidTable(format!("duplicate entry {} {} {}", e.model, e.benchmark, e.shots)));
            }
        }
        Ok(())
    }

    pub fn get(&self, benchmark: &str, shots: u32, model: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.benchmark == benchmark && e.shots == shots && e.model == model).map(|e| e.score)
    }

    pub fn models(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.model.as_str()).collect()
    }
}

/// Fine-tuned state-of-the-art score per benchmark.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SotaTable {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub units: BTreeMap<String, String>,
    pub scores: BTreeMap<String, f64>,
}

impl SotaTable {
    pub fn from_json(text: &str) -> Result<Self, MetricError> {
        let t: Self = serde_json::from_str(text).map_err(|e| MetricError::InvalidTable(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let missing: Vec<String> = BENCHMARKS.iter().filter(|b| !self.scores.contains_key(**b)).map(|b| b.to_string()).collect();
        if !missing.is_empty() {
            return Err(MetricError::MissingSettings(missing));
        }
        if let Some((b, s)) = self.scores.iter().find(|(_, s)| !s.is_finite() || **s <= 0.0) {
            return Err(MetricError::InvalidTable(format!("{b}: score {s}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioEntry {
    pub benchmark: String,
    pub shots: u32,
    pub model: String,
    pub baseline_model: String,
    pub ours: f64,
    pub baseline: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub model: String,
    pub baseline_model: String,
    pub settings: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeReport {
    pub ratios: Vec<RatioEntry>,
    pub summaries: Vec<RatioSummary>,
}

/// `ours / baseline` for every setting of every paired model
/// (`pairing` maps our model name to its baseline model name).
pub fn relative_to_baseline(
    ours: &ScoreTable,
    baseline: &ScoreTable,
    pairing: &BTreeMap<String, String>,
) -> Result<RelativeReport, MetricError> {
    if pairing.is_empty() {
        return Err(MetricError::InvalidInput("empty model pairing".into()));
    }
    let mut ratios = Vec::new();
    let mut summaries = Vec::new();
    let mut missing = Vec::new();
    for (model, base_model) in pairing {
        let mut values = Vec::new();
        let entries: Vec<&ScoreEntry> = ours.entries.iter().filter(|e| &e.model == model).collect();
        if entries.is_empty() {
            missing.push(format!("{model} (no entries)"));
        }
        for e in entries {
            match baseline.get(&e.benchmark, e.shots, base_model) {
                Some(b) if b != 0.0 => {
                    let ratio = e.score / b;
                    values.push(ratio);
                    ratios.push(RatioEntry {
                        benchmark: e.benchmark.clone(),
                        shots: e.shots,
                        model: model.clone(),
                        baseline_model: base_model.clone(),
                        ours: e.score,
                        baseline: b,
                        ratio,
                    });
                }
                Some(_) => return Err(MetricError::Undefined(format!("{base_model} {} {}: zero baseline", e.benchmark, e.shots))),
                None => missing.push(format!("{base_model} {} {}-shot", e.benchmark, e.shots)),
            }
        }
        let (mean, std) = mean_std(&values);
        summaries.push(RatioSummary { model: model.clone(), baseline_model: base_model.clone(), settings: values.len(), mean, std });
    }
    if !missing.is_empty() {
        return Err(MetricError::MissingSettings(missing));
    }
    Ok(RelativeReport { ratios, summaries })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SotaReport {
    pub model: String,
    pub shots: u32,
    pub fractions: BTreeMap<String, f64>,
    pub mean: f64,
}

/// `score / sota` for each of the seven benchmarks at one (model, shots).
pub fn relative_to_sota(ours: &ScoreTable, sota: &SotaTable, model: &str, shots: u32) -> Result<SotaReport, MetricError> {
    sota.validate()?;
    let mut fractions = BTreeMap::new();
    let mut missing = Vec::new();
    for b in BENCHMARKS {
        match ours.get(b, shots, model) {
            Some(s) => {
                fractions.insert(b.to_owned(), s / sota.scores[b]);
            }
            None => missing.push(format!("{model} {b} {shots}-shot")),
        }
    }
    if !missing.is_empty() {
        return Err(MetricError::MissingSettings(missing));
    }
    let values: Vec<f64> = BENCHMARKS.iter().map(|b| fractions[*b]).collect();
    Ok(SotaReport { model: model.to_owned(), shots, fractions, mean: mean_std(&values).0 })
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Horizontal bar chart of labelled fractions, with an optional dashed
/// reference line (e.g. 1.0 for parity).
pub fn bar_chart_svg(title: &str, bars: &[(String, f64)], reference: Option<f64>) -> String {
    let (bar_h, gap, left, width, top) = (18.0, 6.0, 220.0, 420.0, 40.0);
    let max = bars.iter().map(|b| b.1).chain(reference).fold(1e-9f64, f64::max) * 1.05;
    let height = top + bars.len() as f64 * (bar_h + gap) + 30.0;
    let total_w = left + width + 80.0;
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{height}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<text x="10" y="20" font-size="14">{}</text>"#, xml_escape(title));
    for (i, (label, v)) in bars.iter().enumerate() {
        let y = top + i as f64 * (bar_h + gap);
        let w = (v.max(0.0) / max * width).max(0.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, left - 6.0, y + bar_h - 5.0, xml_escape(label));
        let _ = writeln!(svg, r##"<rect x="{left}" y="{y:.1}" width="{w:.2}" height="{bar_h}" fill="#4c72b0"/>"##);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.1}">{v:.3}</text>"#, left + w + 4.0, y + bar_h - 5.0);
    }
    if let Some(r) = reference {
        let x = left + r / max * width;
        let _ = writeln!(svg, r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{:.1}" stroke="#c44e52" stroke-dasharray="4 3"/>"##, top - 6.0, height - 24.0);
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn vqa_number_words() {
        let mut answers = vec!["two".to_owned(); 4];
        answers.extend(vec!["2".to_owned(); 6]);
        assert_eq!(vqa_accuracy("2", &answers).unwrap(), 1.0);
    }

    #[test]
    fn vqa_partial_and_verbose() {
        let mut answers = strings(&["dog", "dog"]);
        answers.extend(vec!["cat".to_owned(); 8]);
        assert!((vqa_accuracy("dog", &answers).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(vqa_accuracy("a yellow dog running in the park", &answers).unwrap(), 0.0);
        assert_eq!(vqa_accuracy("", &answers).unwrap(), 0.0);
    }

    #[test]
    fn vqa_normalization_rules() {
        assert_eq!(normalize_vqa_answer("The Dog."), "dog");
        assert_eq!(normalize_vqa_answer("3.5"), "3.5");
        assert_eq!(normalize_vqa_answer("1,000"), "1000");
        assert_eq!(normalize_vqa_answer("yes!"), "yes");
        assert_eq!(normalize_vqa_answer("dont"), "don't");
        assert_eq!(normalize_vqa_answer("red-white"), "red white");
        assert_eq!(normalize_vqa_answer("  An  apple\n"), "apple");
    }

    #[test]
    fn cider_zero_overlap() {
        let c = BTreeMap::from([("1".to_owned(), "zebra xylophone".to_owned()), ("2".to_owned(), "a dog".to_owned())]);
        let r = BTreeMap::from([
            ("1".to_owned(), strings(&["a cat on a mat"])),
            ("2".to_owned(), strings(&["a dog in a park"])),
        ]);
        assert_eq!(cider_scores(&c, &r).unwrap()["1"], 0.0);
    }

    #[test]
    fn cider_id_mismatch() {
        let c = BTreeMap::from([("1".to_owned(), "x".to_owned())]);
        let r = BTreeMap::from([("2".to_owned(), strings(&["x"]))]);
        assert!(matches!(cider(&c, &r), Err(MetricError::IdMismatch(_))));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_roc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert_eq!(auc_roc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc_roc(&[0.5; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        assert!(matches!(auc_roc(&[0.1, 0.2], &[1, 1]), Err(MetricError::Undefined(_))));
    }

    #[test]
    fn smoothing() {
        assert!(gaussian_smooth(&[3.0; 50], 10).iter().all(|v| (v - 3.0).abs() < 1e-12));
        let mut spike = vec![0.0; 101];
        spike[50] = 1.0;
        let out = gaussian_smooth(&spike, 10);
        for d in 1..=10 {
            assert!((out[50 - d] - out[50 + d]).abs() < 1e-15);
        }
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let series: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let near = gaussian_smooth(&series, 1);
        assert!(series.iter().zip(&near).all(|(a, b)| (a - b).abs() < 1e-3));
    }

    #[test]
    fn svg_is_well_formed() {
        let svg = bar_chart_svg("a<b", &[("coco 0".into(), 1.0013), ("vqa".into(), 0.5)], Some(1.0));
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a&lt;b"));
        assert_eq!(svg.matches("<rect").count(), 2);
    }
}
