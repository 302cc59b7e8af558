//! Similarity-threshold filtering of interleaved documents and image-text
//! pairs, single-image rejection sampling, and corpus statistics.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::rng;
use crate::tokenizer::Tokenizer;

/// Default image-text similarity threshold for interleaved documents.
pub const DEFAULT_DOC_THRESHOLD: f64 = 0.24;
/// Default minimum similarity for image-text pairs.
pub const DEFAULT_PAIR_SIM_MIN: f64 = 0.28;
/// Default caption length cap, in tokens.
pub const DEFAULT_MAX_CAPTION_TOKENS: usize = 32;
/// Default rejection probability for single-image documents.
pub const DEFAULT_REJECT_SINGLE_PROB: f64 = 0.5;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CurationError {
    #[error("document {doc_id}: {reason}")]
    Malformed { doc_id: String, reason: String },
    #[error("document {doc_id} has no images")]
    NoImages { doc_id: String },
    #[error("pair {image_id}: empty caption")]
    EmptyCaption { image_id: String },
    #[error("pair {image_id}: similarity {sim} outside [-1, 1]")]
    PairSimilarity { image_id: String, sim: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty corpus")]
    EmptyCorpus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub anchor_span: usize,
    pub clip_sim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterleavedDoc {
    pub doc_id: String,
    pub spans: Vec<String>,
    #[serde(default)]
    pub images: Vec<ImageRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub image_id: String,
    pub caption: String,
    pub clip_sim: f64,
}

impl InterleavedDoc {
    /// Check structural invariants: at least one span, every anchor in range,
    /// every similarity in [-1, 1].
    pub fn validate(&self) -> Result<(), CurationError> {
        let malformed = |reason: String| CurationError::Malformed { doc_id: self.doc_id.clone(), reason };
        if self.spans.is_empty() {
            return Err(malformed("no text spans".into()));
        }
        for img in &self.images {
            if img.anchor_span >= self.spans.len() {
                return Err(malformed(format!(
                    "image {} anchored to span {} of {}",
                    img.image_id,
                    img.anchor_span,
                    self.spans.len()
                )));
            }
            if !(-1.0..=1.0).contains(&img.clip_sim) {
                return Err(malformed(format!(
                    "image {} similarity {} outside [-1, 1]",
                    img.image_id, img.clip_sim
                )));
            }
        }
        Ok(())
    }
}

/// Drop images whose similarity falls below `threshold` (equality keeps).
/// Returns `None` when no image survives.
pub fn filter_doc(doc: &InterleavedDoc, threshold: f64) -> Result<Option<InterleavedDoc>, CurationError> {
    doc.validate()?;
    let images: Vec<ImageRecord> = doc.images.iter().filter(|img| img.clip_sim >= threshold).cloned().collect();
    if images.is_empty() {
        return Ok(None);
    }
    Ok(Some(InterleavedDoc { doc_id: doc.doc_id.clone(), spans: doc.spans.clone(), images }))
}

/// Keep decision for a filtered document. Multi-image documents are always
/// kept; single-image documents are rejected with probability `p_reject`,
/// decided by the stream keyed on `(rng_seed, doc_id)`.
pub fn reject_single_image(doc: &InterleavedDoc, p_reject: f64, rng_seed: u64) -> Result<bool, CurationError> {
    if !(0.0..=1.0).contains(&p_reject) {
        return Err(CurationError::InvalidArgument(format!("rejection probability {p_reject} outside [0, 1]")));
    }
    match doc.images.len() {
        0 => Err(CurationError::NoImages { doc_id: doc.doc_id.clone() }),
        1 => {
            let mut stream = rng::keyed(rng_seed, &doc.doc_id);
            Ok(rng::unit(&mut stream) >= p_reject)
        }
        _ => Ok(true),
    }
}

/// Similarity gate plus caption truncation to `max_tokens` tokens.
pub fn filter_pair(
    pair: &PairRecord,
    sim_min: f64,
    max_tokens: usize,
    tokenizer: &dyn Tokenizer,
) -> Result<Option<PairRecord>, CurationError> {
    if !(-1.0..=1.0).contains(&sim_min) {
        return Err(CurationError::InvalidArgument(format!("sim_min {sim_min} outside [-1, 1]")));
    }
    if max_tokens == 0 {
        return Err(CurationError::InvalidArgument("max_tokens must be at least 1".into()));
    }
    if !(-1.0..=1.0).contains(&pair.clip_sim) {
        return Err(CurationError::PairSimilarity { image_id: pair.image_id.clone(), sim: pair.clip_sim });
    }
    let ids = tokenizer.encode(&pair.caption);
    if ids.is_empty() {
        return Err(CurationError::EmptyCaption { image_id: pair.image_id.clone() });
    }
    if pair.clip_sim < sim_min {
        return Ok(None);
    }
    let caption = if ids.len() > max_tokens { tokenizer.decode(&ids[..max_tokens]) } else { pair.caption.clone() };
    Ok(Some(PairRecord { image_id: pair.image_id.clone(), caption, clip_sim: pair.clip_sim }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsOptions {
    pub threshold: f64,
    /// Apply single-image rejection after the threshold filter.
    pub reject_single_prob: Option<f64>,
    /// Compute medians and histograms over a seeded sample of kept documents.
    pub sample_size: Option<usize>,
    pub seed: u64,
    /// Bucket width of the token-count histogram.
    pub token_bucket: usize,
}

impl Default for StatsOptions {
    fn default() -> Self {
        Self { threshold: DEFAULT_DOC_THRESHOLD, reject_single_prob: None, sample_size: None, seed: 0, token_bucket: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub docs_in: u64,
    pub docs_kept: u64,
    /// Documents left with zero images by the threshold filter.
    pub docs_discarded_no_images: u64,
    /// Single-image documents removed by rejection sampling.
    pub docs_rejected_single: u64,
    pub frac_discarded: f64,
    /// Documents the distribution statistics below were computed over.
    pub docs_profiled: u64,
    pub frac_single_image: Option<f64>,
    pub median_images: Option<f64>,
    pub median_tokens: Option<f64>,
    pub image_count_histogram: BTreeMap<usize, u64>,
    /// Keyed by bucket lower bound.
    pub token_count_histogram: BTreeMap<usize, u64>,
    pub token_bucket: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Profile {
    key: u64,
    doc_id: String,
    images: usize,
    tokens: usize,
}

impl Ord for Profile {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.key, &self.doc_id).cmp(&(other.key, &other.doc_id))
    }
}

impl PartialOrd for Profile {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Order-independent reduction behind [`corpus_stats`]. Shards of a corpus
/// can be accumulated separately and merged.
#[derive(Debug, Clone)]
pub struct StatsAccumulator {
    opts: StatsOptions,
    docs_in: u64,
    kept: u64,
    discarded_no_images: u64,
    rejected_single: u64,
    // exact per-doc counts when not sampling
    images: BTreeMap<usize, u64>,
    tokens: BTreeMap<usize, u64>,
    // bottom-k by hash key when sampling
    sample: BinaryHeap<Profile>,
}

impl StatsAccumulator {
    pub fn new(opts: StatsOptions) -> Result<Self, CurationError> {
        if opts.token_bucket == 0 {
            return Err(CurationError::InvalidArgument("token bucket width must be at least 1".into()));
        }
        if let Some(p) = opts.reject_single_prob {
            if !(0.0..=1.0).contains(&p) {
                return Err(CurationError::InvalidArgument(format!("rejection probability {p} outside [0, 1]")));
            }
        }
        Ok(Self {
            opts,
            docs_in: 0,
            kept: 0,
            discarded_no_images: 0,
            rejected_single: 0,
            images: BTreeMap::new(),
            tokens: BTreeMap::new(),
            sample: BinaryHeap::new(),
        })
    }

    /// Filter one raw document and fold it in. Returns the kept document.
    pub fn push(&mut self, doc: &InterleavedDoc, tokenizer: &dyn Tokenizer) -> Result<Option<InterleavedDoc>, CurationError> {
        self.docs_in += 1;
        let Some(filtered) = filter_doc(doc, self.opts.threshold)? else {
            self.discarded_no_images += 1;
            return Ok(None);
        };
        if let Some(p) = self.opts.reject_single_prob {
            if !reject_single_image(&filtered, p, self.opts.seed)? {
                self.rejected_single += 1;
                return Ok(None);
            }
        }
        self.kept += 1;
        let images = filtered.images.len();
        let tokens: usize = filtered.spans.iter().map(|s| tokenizer.encode(s).len()).sum();
        match self.opts.sample_size {
            None => {
                *self.images.entry(images).or_default() += 1;
                *self.tokens.entry(tokens).or_default() += 1;
            }
            Some(k) => {
                let key = rng::derive_seed(self.opts.seed, &filtered.doc_id);
                self.offer(Profile { key, doc_id: filtered.doc_id.clone(), images, tokens }, k);
            }
        }
        Ok(Some(filtered))
    }

    fn offer(&mut self, profile: Profile, k: usize) {
        if k == 0 {
            return;
        }
        if self.sample.len() < k {
            self.sample.push(profile);
        } else if let Some(top) = self.sample.peek() {
            if profile < *top {
                self.sample.pop();
                self.sample.push(profile);
            }
        }
    }

    pub fn merge(&mut self, other: StatsAccumulator) {
        self.docs_in += other.docs_in;
        self.kept += other.kept;
        self.discarded_no_images += other.discarded_no_images;
        self.rejected_single += other.rejected_single;
        for (k, v) in other.images {
            *self.images.entry(k).or_default() += v;
        }
        for (k, v) in other.tokens {
            *self.tokens.entry(k).or_default() += v;
        }
        if let Some(k) = self.opts.sample_size {
            for p in other.sample {
                self.offer(p, k);
            }
        }
    }

    pub fn finish(self) -> Result<CorpusStats, CurationError> {
        if self.docs_in == 0 {
            return Err(CurationError::EmptyCorpus);
        }
        let (images, tokens) = match self.opts.sample_size {
            None => (self.images, self.tokens),
            Some(_) => {
                let mut images = BTreeMap::new();
                let mut tokens = BTreeMap::new();
                for p in &self.sample {
                    *images.entry(p.images).or_insert(0u64) += 1;
                    *tokens.entry(p.tokens).or_insert(0u64) += 1;
                }
                (images, tokens)
            }
        };
        let profiled: u64 = images.values().sum();
        let single = images.get(&1).copied().unwrap_or(0);
        let bucket = self.opts.token_bucket;
        let mut token_hist = BTreeMap::new();
        for (&count, &freq) in &tokens {
            *token_hist.entry(count / bucket * bucket).or_insert(0u64) += freq;
        }
        Ok(CorpusStats {
            docs_in: self.docs_in,
            docs_kept: self.kept,
            docs_discarded_no_images: self.discarded_no_images,
            docs_rejected_single: self.rejected_single,
            frac_discarded: 1.0 - self.kept as f64 / self.docs_in as f64,
            docs_profiled: profiled,
            frac_single_image: (profiled > 0).then(|| single as f64 / profiled as f64),
            median_images: histogram_median(&images),
            median_tokens: histogram_median(&tokens),
            image_count_histogram: images,
            token_count_histogram: token_hist,
            token_bucket: bucket,
        })
    }
}

/// Median of the multiset described by `hist` (value -> frequency); mean of
/// the two middle values for even sizes.
pub fn histogram_median(hist: &BTreeMap<usize, u64>) -> Option<f64> {
    let n: u64 = hist.values().sum();
    if n == 0 {
        return None;
    }
    let nth = |rank: u64| -> usize {
        let mut seen = 0;
        for (&value, &freq) in hist {
            seen += freq;
            if seen > rank {
                return value;
            }
        }
        unreachable!("rank below total")
    };
    if n % 2 == 1 {
        Some(nth(n / 2) as f64)
    } else {
        Some((nth(n / 2 - 1) as f64 + nth(n / 2) as f64) / 2.0)
    }
}

/// Filter a document stream and summarise it.
pub fn corpus_stats<I>(docs: I, tokenizer: &dyn Tokenizer, opts: &StatsOptions) -> Result<CorpusStats, CurationError>
where
    I: IntoIterator<Item = InterleavedDoc>,
{
    let mut acc = StatsAccumulator::new(opts.clone())?;
    for doc in docs {
        acc.push(&doc, tokenizer)?;
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::WhitespaceTokenizer;

    fn doc(id: &str, sims: &[f64]) -> InterleavedDoc {
        InterleavedDoc {
            doc_id: id.into(),
            spans: vec!["first span".into(), "second span here".into()],
            images: sims
                .iter()
                .enumerate()
                .map(|(i, &s)| ImageRecord { image_id: format!("{id}-img{i}"), anchor_span: i % 2, clip_sim: s })
                .collect(),
        }
    }

    #[test]
    fn filter_keeps_images_at_or_above_threshold() {
        let out = filter_doc(&doc("d", &[0.30, 0.20]), 0.24).unwrap().unwrap();
        assert_eq!(out.images.len(), 1);
        assert_eq!(out.images[0].clip_sim, 0.30);
        assert_eq!(out.spans, doc("d", &[]).spans);
    }

    #[test]
    fn filter_discards_doc_without_surviving_images() {
        assert_eq!(filter_doc(&doc("d", &[0.10, 0.15]), 0.24).unwrap(), None);
    }

    #[test]
    fn threshold_boundary_is_inclusive() {
        let out = filter_doc(&doc("d", &[0.24]), 0.24).unwrap().unwrap();
        assert_eq!(out.images.len(), 1);
    }

    #[test]
    fn bad_anchor_names_doc() {
        let mut d = doc("broken", &[0.5]);
        d.images[0].anchor_span = 7;
        match filter_doc(&d, 0.24) {
            Err(CurationError::Malformed { doc_id, .. }) => assert_eq!(doc_id, "broken"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn multi_image_docs_always_kept() {
        let d = doc("two", &[0.5, 0.6]);
        for seed in 0..50 {
            assert!(reject_single_image(&d, 1.0, seed).unwrap());
        }
    }

    #[test]
    fn single_image_decision_is_deterministic() {
        let d = doc("one", &[0.5]);
        let a = reject_single_image(&d, 0.5, 11).unwrap();
        let b = reject_single_image(&d, 0.5, 11).unwrap();
        assert_eq!(a, b);
        assert!(reject_single_image(&d, 0.0, 11).unwrap());
        assert!(!reject_single_image(&d, 1.0, 11).unwrap());
    }

    #[test]
    fn single_image_keep_rate_near_half() {
        let kept = (0..10_000)
            .filter(|i| reject_single_image(&doc(&format!("doc-{i}"), &[0.5]), 0.5, 1234).unwrap())
            .count();
        let frac = kept as f64 / 10_000.0;
        assert!((0.48..=0.52).contains(&frac), "keep fraction {frac}");
    }

    #[test]
    fn rejecting_zero_image_doc_is_contract_error() {
        let d = doc("none", &[]);
        assert_eq!(reject_single_image(&d, 0.5, 0), Err(CurationError::NoImages { doc_id: "none".into() }));
    }

    #[test]
    fn pair_filter() {
        let tok = WhitespaceTokenizer::new();
        let caption = (0..10).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let p = PairRecord { image_id: "i".into(), caption: caption.clone(), clip_sim: 0.30 };
        assert_eq!(filter_pair(&p, 0.28, 32, &tok).unwrap(), Some(p.clone()));
        let low = PairRecord { clip_sim: 0.27, ..p.clone() };
        assert_eq!(filter_pair(&low, 0.28, 32, &tok).unwrap(), None);

        let long = (0..40).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let p = PairRecord { image_id: "i".into(), caption: long, clip_sim: 0.30 };
        let out = filter_pair(&p, 0.28, 32, &tok).unwrap().unwrap();
        assert_eq!(tok.encode(&out.caption).len(), 32);
        assert!(out.caption.starts_with("w0 w1"));
        assert!(out.caption.ends_with("w31"));
    }

    #[test]
    fn empty_caption_is_distinct_error() {
        let tok = WhitespaceTokenizer::new();
        let p = PairRecord { image_id: "i".into(), caption: "   ".into(), clip_sim: 0.9 };
        assert_eq!(filter_pair(&p, 0.28, 32, &tok), Err(CurationError::EmptyCaption { image_id: "i".into() }));
    }

    #[test]
    fn stats_fixture() {
        // post-filter image counts [1, 2, 2, 0]
        let docs = vec![
            doc("a", &[0.3, 0.1]),
            doc("b", &[0.3, 0.3]),
            doc("c", &[0.25, 0.9, 0.0]),
            doc("d", &[0.1]),
        ];
        let tok = WhitespaceTokenizer::new();
        let stats = corpus_stats(docs, &tok, &StatsOptions::default()).unwrap();
        assert_eq!(stats.docs_in, 4);
        assert_eq!(stats.docs_kept, 3);
        assert_eq!(stats.frac_discarded, 0.25);
        assert!((stats.frac_single_image.unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(stats.median_images, Some(2.0));
        assert_eq!(stats.median_tokens, Some(5.0));
        assert_eq!(stats.image_count_histogram, BTreeMap::from([(1, 1), (2, 2)]));
        assert_eq!(stats.token_count_histogram, BTreeMap::from([(0, 3)]));
    }

    #[test]
    fn stats_all_discarded() {
        let docs = vec![doc("a", &[0.3]), doc("b", &[0.5, 0.2])];
        let tok = WhitespaceTokenizer::new();
        let opts = StatsOptions { threshold: 0.99, ..Default::default() };
        let stats = corpus_stats(docs, &tok, &opts).unwrap();
        assert_eq!(stats.frac_discarded, 1.0);
        assert_eq!(stats.median_images, None);
        assert_eq!(stats.median_tokens, None);
        assert_eq!(stats.frac_single_image, None);
    }

    #[test]
    fn stats_empty_stream() {
        let tok = WhitespaceTokenizer::new();
        assert_eq!(corpus_stats(Vec::new(), &tok, &StatsOptions::default()), Err(CurationError::EmptyCorpus));
    }

    #[test]
    fn sampled_stats_deterministic_and_bounded() {
        let docs: Vec<_> = (0..500).map(|i| doc(&format!("d{i}"), &[0.3; 3][..1 + i % 3])).collect();
        let tok = WhitespaceTokenizer::new();
        let opts = StatsOptions { sample_size: Some(100), seed: 5, ..Default::default() };
        let a = corpus_stats(docs.clone(), &tok, &opts).unwrap();
        let b = corpus_stats(docs.clone(), &tok, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.docs_profiled, 100);
        assert_eq!(a.docs_kept, 500);
        // sampling keyed on doc_id: reversing the stream does not change the sample
        let rev = corpus_stats(docs.into_iter().rev(), &tok, &opts).unwrap();
        assert_eq!(a, rev);
    }

    #[test]
    fn rejection_counted_separately() {
        let docs: Vec<_> = (0..200).map(|i| doc(&format!("d{i}"), &[0.3])).collect();
        let tok = WhitespaceTokenizer::new();
        let opts = StatsOptions { reject_single_prob: Some(1.0), ..Default::default() };
        let s = corpus_stats(docs, &tok, &opts).unwrap();
        assert_eq!(s.docs_rejected_single, 200);
        assert_eq!(s.docs_discarded_no_images, 0);
        assert_eq!(s.frac_discarded, 1.0);
    }

    #[test]
    fn merge_is_order_independent() {
        let tok = WhitespaceTokenizer::new();
        let docs: Vec<_> = (0..60).map(|i| doc(&format!("d{i}"), &[0.2, 0.3, 0.4][..1 + i % 3])).collect();
        for sample in [None, Some(10)] {
            let opts = StatsOptions { sample_size: sample, seed: 3, ..Default::default() };
            let mut left = StatsAccumulator::new(opts.clone()).unwrap();
            let mut right = StatsAccumulator::new(opts.clone()).unwrap();
            for (i, d) in docs.iter().enumerate() {
                if i % 2 == 0 { left.push(d, &tok).unwrap(); } else { right.push(d, &tok).unwrap(); }
            }
            let mut lr = left.clone();
            lr.merge(right.clone());
            let mut rl = right;
            rl.merge(left);
            let whole = corpus_stats(docs.clone(), &tok, &opts).unwrap();
            assert_eq!(lr.finish().unwrap(), whole);
            assert_eq!(rl.finish().unwrap(), whole);
        }
    }

    #[test]
    fn histogram_median_even_and_odd() {
        assert_eq!(histogram_median(&BTreeMap::from([(1, 1), (3, 1)])), Some(2.0));
        assert_eq!(histogram_median(&BTreeMap::from([(1, 2), (3, 1)])), Some(1.0));
        assert_eq!(histogram_median(&BTreeMap::new()), None);
    }
}
