//! Token streams with image markers, per-token media indices, cross-attention
//! masks, layer placement and fixed-length windowing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::curation::{CurationError, InterleavedDoc};
use crate::tokenizer::Tokenizer;

/// Windows shorter than this are dropped by [`pack_window`].
pub const MIN_WINDOW_FRAGMENT: usize = 8;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SequenceError {
    #[error(transparent)]
    Document(#[from] CurationError),
    #[error("document {0} has no images")]
    NoImages(String),
    #[error("invalid token stream: {0}")]
    InvalidStream(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Token ids plus, per position, the 1-based index of the last image at or
/// before it (0 before the first image).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawStream", into = "RawStream")]
pub struct TokenStream {
    tokens: Vec<u32>,
    media_index: Vec<u32>,
    n_images: u32,
}

#[derive(Serialize, Deserialize)]
struct RawStream {
    tokens: Vec<u32>,
    media_index: Vec<u32>,
}

impl TryFrom<RawStream> for TokenStream {
    type Error = SequenceError;

    fn try_from(raw: RawStream) -> Result<Self, Self::Error> {
        TokenStream::new(raw.tokens, raw.media_index)
    }
}

impl From<TokenStream> for RawStream {
    fn from(s: TokenStream) -> Self {
        RawStream { tokens: s.tokens, media_index: s.media_index }
    }
}

#[derive(Serialize, Deserialize)]
struct ShardSidecar {
    dtype: String,
    count: usize,
    media_index: Vec<u32>,
}

impl TokenStream {
    /// Build from explicit parts, checking the media-index invariants.
    pub fn new(tokens: Vec<u32>, media_index: Vec<u32>) -> Result<Self, SequenceError> {
        if tokens.len() != media_index.len() {
            return Err(SequenceError::InvalidStream(format!(
                "{} tokens but {} media indices",
                tokens.len(),
                media_index.len()
            )));
        }
        let mut prev = 0u32;
        for (t, &m) in media_index.iter().enumerate() {
            if m != prev && m != prev + 1 {
                return Err(SequenceError::InvalidStream(format!("media index jumps from {prev} to {m} at {t}")));
            }
            prev = m;
        }
        Ok(Self { tokens, media_index, n_images: prev })
    }

    /// Reconstruct the media index from image-token positions alone.
    pub fn from_tokens(tokens: Vec<u32>, image_token: u32) -> Self {
        let mut count = 0u32;
        let media_index = tokens
            .iter()
            .map(|&tok| {
                if tok == image_token {
                    count += 1;
                }
                count
            })
            .collect();
        Self { tokens, media_index, n_images: count }
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn media_index(&self) -> &[u32] {
        &self.media_index
    }

    pub fn n_images(&self) -> u32 {
        self.n_images
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Positions where a new image begins.
    pub fn image_positions(&self) -> impl Iterator<Item = usize> + '_ {
        let mut prev = 0;
        self.media_index.iter().enumerate().filter_map(move |(t, &m)| {
            let start = m > prev;
            prev = m;
            start.then_some(t)
        })
    }

    /// Shard parts: `bin` holds little-endian u32 token ids, `json` a sidecar
    /// with the media index.
    pub fn to_shard_parts(&self) -> BTreeMap<String, Vec<u8>> {
        let bin: Vec<u8> = self.tokens.iter().flat_map(|t| t.to_le_bytes()).collect();
        let sidecar = ShardSidecar { dtype: "u32le".into(), count: self.tokens.len(), media_index: self.media_index.clone() };
        BTreeMap::from([
            ("bin".to_owned(), bin),
            ("json".to_owned(), serde_json::to_vec(&sidecar).expect("sidecar serializes")),
        ])
    }

    pub fn from_shard_parts(parts: &BTreeMap<String, Vec<u8>>) -> Result<Self, SequenceError> {
        let bad = |m: &str| SequenceError::InvalidStream(m.to_owned());
        let bin = parts.get("bin").ok_or_else(|| bad("missing bin part"))?;
        let json = parts.get("json").ok_or_else(|| bad("missing json part"))?;
        let sidecar: ShardSidecar = serde_json::from_slice(json).map_err(|e| bad(&e.to_string()))?;
        if sidecar.dtype != "u32le" {
            return Err(bad(&format!("unsupported dtype {}", sidecar.dtype)));
        }
        if bin.len() % 4 != 0 || bin.len() / 4 != sidecar.count {
            return Err(bad("token payload length does not match sidecar count"));
        }
        let tokens = bin.chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        Self::new(tokens, sidecar.media_index)
    }
}

/// Emit `<image>`-prefixed, `<|endofchunk|>`-terminated chunks in document
/// order. Images are placed immediately before their anchor span; text before
/// the first image carries no markers.
pub fn mark_sequence(doc: &InterleavedDoc, tokenizer: &dyn Tokenizer) -> Result<TokenStream, SequenceError> {
    doc.validate()?;
    if doc.images.is_empty() {
        return Err(SequenceError::NoImages(doc.doc_id.clone()));
    }
    let mut by_span: Vec<usize> = vec![0; doc.spans.len()];
    for img in &doc.images {
        by_span[img.anchor_span] += 1;
    }
    let image = tokenizer.image_token();
    let eoc = tokenizer.end_of_chunk_token();
    let mut tokens = Vec::new();
    let mut open = false;
    for (span, text) in doc.spans.iter().enumerate() {
        for _ in 0..by_span[span] {
            if open {
                tokens.push(eoc);
            }
            tokens.push(image);
            open = true;
        }
        tokens.extend(tokenizer.encode(text));
    }
    if open {
        tokens.push(eoc);
    }
    Ok(TokenStream::from_tokens(tokens, image))
}

/// Dense `[tokens x images]` boolean cross-attention mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MediaMask {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl MediaMask {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, token: usize, image: usize) -> bool {
        self.data[token * self.cols + image]
    }

    pub fn row(&self, token: usize) -> &[bool] {
        &self.data[token * self.cols..(token + 1) * self.cols]
    }
}

/// Token `t` attends to image `i` iff `i + 1 == media_index[t]`.
pub fn media_mask(stream: &TokenStream) -> MediaMask {
    let rows = stream.len();
    let cols = stream.n_images() as usize;
    let mut data = vec![false; rows * cols];
    for (t, &m) in stream.media_index().iter().enumerate() {
        if m > 0 {
            data[t * cols + (m as usize - 1)] = true;
        }
    }
    MediaMask { rows, cols, data }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSchedule {
    pub n_layers: usize,
    pub interval: usize,
    /// 0-based layers carrying a gated cross-attention block.
    pub gated_layers: Vec<usize>,
}

/// Cross-attention every `interval`-th layer, starting at layer 0.
pub fn layer_schedule(n_layers: usize, interval: usize) -> Result<LayerSchedule, SequenceError> {
    if interval == 0 || interval > n_layers {
        return Err(SequenceError::InvalidArgument(format!(
            "cross-attention interval {interval} must be in 1..={n_layers}"
        )));
    }
    Ok(LayerSchedule { n_layers, interval, gated_layers: (0..n_layers).step_by(interval).collect() })
}

/// Concatenate streams and cut them into `window`-token pieces with
/// window-local media indices. A trailing piece shorter than
/// [`MIN_WINDOW_FRAGMENT`] tokens is dropped.
pub fn pack_window(streams: &[TokenStream], window: usize) -> Result<Vec<TokenStream>, SequenceError> {
    if window < MIN_WINDOW_FRAGMENT {
        return Err(SequenceError::InvalidArgument(format!(
            "window {window} below minimum {MIN_WINDOW_FRAGMENT}"
        )));
    }
    let mut tokens = Vec::new();
    let mut starts = Vec::new();
    for s in streams {
        let mut is_start = vec![false; s.len()];
        for p in s.image_positions() {
            is_start[p] = true;
        }
        tokens.extend_from_slice(s.tokens());
        starts.extend(is_start);
    }
    let mut out = Vec::new();
    for (tok, st) in tokens.chunks(window).zip(starts.chunks(window)) {
        if tok.len() < MIN_WINDOW_FRAGMENT {
            continue;
        }
        let mut count = 0;
        let media_index = st
            .iter()
            .map(|&s| {
                count += u32::from(s);
                count
            })
            .collect();
        out.push(TokenStream { tokens: tok.to_vec(), media_index, n_images: count });
    }
    Ok(out)
}
