//! Parsing of generated slot-formatted sequences and image infill by
//! retrieval with re-ranking.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::curation::{ImageRecord, InterleavedDoc};
use crate::retrieval::{cosine, topk, EmbeddingIndex, EmbeddingProvider, RetrievalError};

pub const DEFAULT_INFILL_K: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("pattern error at byte {offset}: {message}")]
    Pattern { offset: usize, message: String },
    #[error("{slot} {problem}")]
    Validation { slot: String, problem: String },
    #[error("{slot}: no candidate images")]
    NoCandidates { slot: String },
    #[error("sequence has no sentences")]
    NoSentences,
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SlotKind {
    Image,
    Sentence,
}

impl fmt::Display for SlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SlotKind::Image => "IMAGE",
            SlotKind::Sentence => "SENTENCE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub kind: SlotKind,
    pub label: String,
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.kind, self.label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotPattern {
    pub slots: Vec<Slot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "UPPERCASE")]
pub enum SynthSlot {
    Image { label: String, description: String },
    Sentence { label: String, text: String },
}

impl SynthSlot {
    pub fn slot(&self) -> Slot {
        match self {
            SynthSlot::Image { label, .. } => Slot { kind: SlotKind::Image, label: label.clone() },
            SynthSlot::Sentence { label, .. } => Slot { kind: SlotKind::Sentence, label: label.clone() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSequence {
    pub slots: Vec<SynthSlot>,
}

fn is_label(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric())
}

fn trim_offset(s: &str, base: usize) -> (&str, usize) {
    let lead = s.len() - s.trim_start().len();
    (s.trim(), base + lead)
}

/// Parse `"(image A, sentence 1, ...)"`. Kinds are case-insensitive; labels
/// are normalized to upper case.
pub fn parse_pattern(text: &str) -> Result<SlotPattern, SynthError> {
    let err = |offset, message: &str| SynthError::Pattern { offset, message: message.to_owned() };
    let (body, start) = trim_offset(text, 0);
    if !body.starts_with('(') {
        return Err(err(start, "expected '('"));
    }
    if !body.ends_with(')') || body.len() < 2 {
        return Err(err(start + body.len(), "expected ')'"));
    }
    let inner = &body[1..body.len() - 1];
    let inner_start = start + 1;
    if inner.trim().is_empty() {
        return Err(err(inner_start, "empty pattern"));
    }
    let mut slots = Vec::new();
    let mut seen = HashSet::new();
    let mut pos = inner_start;
    for item in inner.split(',') {
        let (item_text, item_start) = trim_offset(item, pos);
        pos += item.len() + 1;
        let mut words = item_text.split_whitespace();
        let kind_word = words.next().ok_or_else(|| err(item_start, "empty slot"))?;
        let kind = if kind_word.eq_ignore_ascii_case("image") {
            SlotKind::Image
        } else if kind_word.eq_ignore_ascii_case("sentence") {
            SlotKind::Sentence
        } else {
            return Err(err(item_start, &format!("unknown slot kind {kind_word:?}")));
        };
        let label_offset = item_start + item_text.find(char::is_whitespace).unwrap_or(item_text.len());
        let label = match (words.next(), words.next()) {
            (Some(l), None) if is_label(l) => l.to_ascii_uppercase(),
            (None, _) => return Err(err(label_offset, "missing slot label")),
            _ => return Err(err(label_offset, "invalid slot label")),
        };
        let slot = Slot { kind, label };
        if !seen.insert(slot.clone()) {
            return Err(err(item_start, &format!("duplicate slot {slot}")));
        }
        slots.push(slot);
    }
    Ok(SlotPattern { slots })
}

pub fn render_pattern(pattern: &SlotPattern) -> String {
    let items: Vec<String> = pattern
        .slots
        .iter()
        .map(|s| match s.kind {
            SlotKind::Image => format!("image {}", s.label),
            SlotKind::Sentence => format!("sentence {}", s.label),
        })
        .collect();
    format!("({})", items.join(", "))
}

fn slot_line(line: &str) -> Option<(Slot, &str)> {
    let line = line.trim();
    let (head, rest) = line.split_once(':')?;
    let mut words = head.split_whitespace();
    let kind = match words.next()? {
        w if w.eq_ignore_ascii_case("image") => SlotKind::Image,
        w if w.eq_ignore_ascii_case("sentence") => SlotKind::Sentence,
        _ => return None,
    };
    let label = words.next().filter(|l| is_label(l))?;
    if words.next().is_some() {
        return None;
    }
    Some((Slot { kind, label: label.to_ascii_uppercase() }, rest.trim()))
}

/// Extract `Image <L>: ...` / `Sentence <N>: ...` lines and validate them
/// against `pattern`. Lines that are not slot lines are ignored.
pub fn parse_response(text: &str, pattern: &SlotPattern) -> Result<SynthSequence, SynthError> {
    let invalid = |slot: &Slot, problem: &str| SynthError::Validation { slot: slot.to_string(), problem: problem.to_owned() };
    let expected: HashSet<&Slot> = pattern.slots.iter().collect();
    let mut found: Vec<(Slot, &str)> = Vec::new();
    let mut seen = HashSet::new();
    for (slot, body) in text.lines().filter_map(slot_line) {
        if !expected.contains(&slot) {
            return Err(invalid(&slot, "not in pattern"));
        }
        if !seen.insert(slot.clone()) {
            return Err(invalid(&slot, "duplicated"));
        }
        if body.is_empty() {
            return Err(invalid(&slot, "empty"));
        }
        found.push((slot, body));
    }
    if let Some(missing) = pattern.slots.iter().find(|s| !seen.contains(*s)) {
        return Err(invalid(missing, "absent"));
    }
    if let Some(((slot, _), _)) = found.iter().zip(&pattern.slots).find(|((got, _), want)| got != *want) {
        return Err(invalid(slot, "out of order"));
    }
    let slots = found
        .into_iter()
        .map(|(slot, body)| match slot.kind {
            SlotKind::Image => SynthSlot::Image { label: slot.label, description: body.to_owned() },
            SlotKind::Sentence => SynthSlot::Sentence { label: slot.label, text: body.to_owned() },
        })
        .collect();
    Ok(SynthSequence { slots })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalCandidate {
    pub image_id: String,
    pub index_sim: f32,
    pub rerank_sim: f32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingPolicy {
    DropSlot,
    #[default]
    DropSequence,
}

/// Retrieval configuration for [`infill`].
///
/// `queries` maps description text to an embedding in the index space;
/// `rerank_texts` and `rerank_images` map description text and image id into
/// the re-ranking space.
pub struct Infiller<'a> {
    pub index: &'a EmbeddingIndex,
    pub queries: &'a dyn EmbeddingProvider,
    pub rerank_texts: &'a dyn EmbeddingProvider,
    pub rerank_images: &'a dyn EmbeddingProvider,
    pub k: usize,
    pub policy: MissingPolicy,
    /// Opaque retrieval parameters forwarded with each query.
    pub query_params: BTreeMap<String, serde_json::Value>,
}

impl<'a> Infiller<'a> {
    pub fn new(
        index: &'a EmbeddingIndex,
        queries: &'a dyn EmbeddingProvider,
        rerank_texts: &'a dyn EmbeddingProvider,
        rerank_images: &'a dyn EmbeddingProvider,
    ) -> Self {
        Self {
            index,
            queries,
            rerank_texts,
            rerank_images,
            k: DEFAULT_INFILL_K,
            policy: MissingPolicy::default(),
            query_params: BTreeMap::new(),
        }
    }

    /// Top-k index hits for `description`, scored in the re-ranking space.
    /// Hits without a re-ranking embedding are skipped.
    pub fn candidates(&self, description: &str) -> Result<Vec<RetrievalCandidate>, SynthError> {
        if self.k == 0 {
            return Err(RetrievalError::InvalidArgument("k must be at least 1".into()).into());
        }
        let (Some(query), Some(text)) = (self.queries.embedding(description), self.rerank_texts.embedding(description))
        else {
            return Ok(Vec::new());
        };
        log::trace!("query {description:?} params {:?}", self.query_params);
        let hits = topk(self.index, query, self.k)?;
        Ok(hits
            .into_iter()
            .filter_map(|hit| {
                let image = self.rerank_images.embedding(&hit.id)?;
                let rerank_sim = cosine(text, image)?;
                Some(RetrievalCandidate { image_id: hit.id, index_sim: hit.sim, rerank_sim })
            })
            .collect())
    }
}

/// Highest re-rank similarity; ties go to the smaller image id.
pub fn select_winner(candidates: &[RetrievalCandidate]) -> Option<&RetrievalCandidate> {
    candidates.iter().min_by(|a, b| match b.rerank_sim.total_cmp(&a.rerank_sim) {
        Ordering::Equal => a.image_id.cmp(&b.image_id),
        o => o,
    })
}

/// Resolve every image slot to a retrieved image and emit a document whose
/// spans are the sentences in slot order. Each image anchors to the next
/// sentence, or to the last one when no sentence follows.
pub fn infill(doc_id: &str, seq: &SynthSequence, infiller: &Infiller<'_>) -> Result<InterleavedDoc, SynthError> {
    let spans: Vec<String> = seq
        .slots
        .iter()
        .filter_map(|s| match s {
            SynthSlot::Sentence { text, .. } => Some(text.clone()),
            SynthSlot::Image { .. } => None,
        })
        .collect();
    if spans.is_empty() {
        return Err(SynthError::NoSentences);
    }
    let mut images = Vec::new();
    let mut sentences_before = 0;
    for slot in &seq.slots {
        match slot {
            SynthSlot::Sentence { .. } => sentences_before += 1,
            SynthSlot::Image { description, .. } => {
                let candidates = infiller.candidates(description)?;
                let Some(winner) = select_winner(&candidates) else {
                    match infiller.policy {
                        MissingPolicy::DropSlot => continue,
                        MissingPolicy::DropSequence => {
                            return Err(SynthError::NoCandidates { slot: slot.slot().to_string() })
                        }
                    }
                };
                images.push(ImageRecord {
                    image_id: winner.image_id.clone(),
                    anchor_span: sentences_before.min(spans.len() - 1),
                    clip_sim: f64::from(winner.rerank_sim).clamp(-1.0, 1.0),
                });
            }
        }
    }
    Ok(InterleavedDoc { doc_id: doc_id.to_owned(), spans, images })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::{build_index, EmbeddingStore};

    fn slot(kind: SlotKind, label: &str) -> Slot {
        Slot { kind, label: label.into() }
    }

    #[test]
    fn pattern_examples() {
        let p = parse_pattern("(image A, sentence 1)").unwrap();
        assert_eq!(p.slots, vec![slot(SlotKind::Image, "A"), slot(SlotKind::Sentence, "1")]);
        let p = parse_pattern("(Image A, IMAGE B, sentence 1)").unwrap();
        assert_eq!(p.slots.len(), 3);
        assert_eq!(p.slots[1], slot(SlotKind::Image, "B"));
    }

    #[test]
    fn pattern_errors_carry_offsets() {
        match parse_pattern("(picture A)").unwrap_err() {
            SynthError::Pattern { offset, message } => {
                assert_eq!(offset, 1);
                assert!(message.contains("picture"));
            }
            e => panic!("{e}"),
        }
        match parse_pattern("(image A, image A)").unwrap_err() {
            SynthError::Pattern { offset, .. } => assert_eq!(offset, 10),
            e => panic!("{e}"),
        }
        assert!(matches!(parse_pattern("()"), Err(SynthError::Pattern { offset: 1, .. })));
        assert!(matches!(parse_pattern("image A"), Err(SynthError::Pattern { offset: 0, .. })));
        assert!(parse_pattern("(image)").is_err());
        assert!(parse_pattern("(image A B)").is_err());
    }

    #[test]
    fn render_round_trip() {
        let p = parse_pattern("(image A, sentence 1, image B, sentence 2)").unwrap();
        assert_eq!(render_pattern(&p), "(image A, sentence 1, image B, sentence 2)");
        assert_eq!(parse_pattern(&render_pattern(&p)).unwrap(), p);
    }

    #[test]
    fn response_errors_name_slot() {
        let p = parse_pattern("(image A, sentence 1, image B, sentence 2)").unwrap();
        let missing = "Image A: a\nSentence 1: b\nImage B: c\n";
        assert_eq!(parse_response(missing, &p).unwrap_err().to_string(), "SENTENCE 2 absent");
        let dup = "Image A: a\nImage A: a\nSentence 1: b\nImage B: c\nSentence 2: d";
        assert_eq!(parse_response(dup, &p).unwrap_err().to_string(), "IMAGE A duplicated");
        let swapped = "Sentence 1: b\nImage A: a\nImage B: c\nSentence 2: d";
        assert_eq!(parse_response(swapped, &p).unwrap_err().to_string(), "SENTENCE 1 out of order");
    }

    #[test]
    fn descriptions_trimmed() {
        let p = parse_pattern("(image A, sentence 1)").unwrap();
        let seq = parse_response("Sure!\n\n  Image A:   a cat  \nSentence 1: it sits. \n", &p).unwrap();
        assert_eq!(
            seq.slots,
            vec![
                SynthSlot::Image { label: "A".into(), description: "a cat".into() },
                SynthSlot::Sentence { label: "1".into(), text: "it sits.".into() },
            ]
        );
    }

    struct Fixture {
        index: EmbeddingIndex,
        queries: EmbeddingStore,
        texts: EmbeddingStore,
        images: EmbeddingStore,
    }

    fn fixture(rerank: &[(&str, Vec<f32>)]) -> Fixture {
        let index = build_index(rerank.iter().map(|(id, _)| (*id, vec![1.0, 0.0]))).unwrap();
        let mut queries = EmbeddingStore::default();
        queries.insert("a dog", vec![1.0, 0.0]);
        let mut texts = EmbeddingStore::default();
        texts.insert("a dog", vec![1.0, 0.0]);
        let mut images = EmbeddingStore::default();
        for (id, v) in rerank {
            images.insert(*id, v.clone());
        }
        Fixture { index, queries, texts, images }
    }

    fn sim_vec(s: f32) -> Vec<f32> {
        vec![s, (1.0 - s * s).sqrt()]
    }

    fn one_image_seq() -> SynthSequence {
        SynthSequence {
            slots: vec![
                SynthSlot::Image { label: "A".into(), description: "a dog".into() },
                SynthSlot::Sentence { label: "1".into(), text: "Dogs bark.".into() },
            ],
        }
    }

    #[test]
    fn argmax_rerank() {
        let f = fixture(&[("img1", sim_vec(0.2)), ("img2", sim_vec(0.9)), ("img3", sim_vec(0.5))]);
        let inf = Infiller::new(&f.index, &f.queries, &f.texts, &f.images);
        let doc = infill("d", &one_image_seq(), &inf).unwrap();
        assert_eq!(doc.images[0].image_id, "img2");
        assert_eq!(doc.images[0].anchor_span, 0);
        assert_eq!(doc.spans, vec!["Dogs bark."]);
    }

    #[test]
    fn tie_goes_to_smaller_id() {
        let f = fixture(&[("zeta", sim_vec(0.5)), ("alpha", sim_vec(0.5))]);
        let inf = Infiller::new(&f.index, &f.queries, &f.texts, &f.images);
        assert_eq!(infill("d", &one_image_seq(), &inf).unwrap().images[0].image_id, "alpha");
    }

    #[test]
    fn k_larger_than_index() {
        let f = fixture(&[("a", sim_vec(0.1)), ("b", sim_vec(0.2)), ("c", sim_vec(0.3)), ("d", sim_vec(0.4))]);
        let inf = Infiller::new(&f.index, &f.queries, &f.texts, &f.images);
        assert_eq!(inf.candidates("a dog").unwrap().len(), 4);
    }

    #[test]
    fn missing_candidates_follow_policy() {
        let f = fixture(&[("a", sim_vec(0.1))]);
        let mut inf = Infiller::new(&f.index, &f.queries, &f.texts, &f.images);
        let seq = SynthSequence {
            slots: vec![
                SynthSlot::Sentence { label: "1".into(), text: "One.".into() },
                SynthSlot::Image { label: "A".into(), description: "unknown".into() },
                SynthSlot::Image { label: "B".into(), description: "a dog".into() },
            ],
        };
        let err = infill("d", &seq, &inf).unwrap_err();
        assert_eq!(err.to_string(), "IMAGE A: no candidate images");
        inf.policy = MissingPolicy::DropSlot;
        let doc = infill("d", &seq, &inf).unwrap();
        assert_eq!(doc.images.len(), 1);
        assert_eq!(doc.images[0].anchor_span, 0);
        doc.validate().unwrap();
    }
}
