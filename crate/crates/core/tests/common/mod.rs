//! Fixtures and brute-force oracles shared by the integration suites.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use ikit_core::rng::{self, SeededRng};
use ikit_core::{EmbeddingIndex, ImageRecord, InterleavedDoc, Neighbor};
use rand::Rng;

const WORDS: [&str; 16] = [
    "the", "cat", "sat", "on", "a", "mat", "dog", "ran", "in", "park", "red", "ball", "two", "birds", "sky", "tree",
];

pub fn random_sentence(r: &mut SeededRng, max_words: usize) -> String {
    let n = 1 + rng::index(r, max_words);
    (0..n).map(|_| WORDS[rng::index(r, WORDS.len())]).collect::<Vec<_>>().join(" ")
}

/// Document with 1..=6 spans and 0..=8 images whose similarities are
/// uniform in [-0.1, 0.5).
pub fn random_doc(r: &mut SeededRng, id: usize) -> InterleavedDoc {
    let n_spans = 1 + rng::index(r, 6);
    let spans = (0..n_spans).map(|_| random_sentence(r, 8)).collect();
    let n_images = rng::index(r, 9);
    let mut images: Vec<ImageRecord> = (0..n_images)
        .map(|i| ImageRecord {
            image_id: format!("d{id}-i{i}"),
            anchor_span: rng::index(r, n_spans),
            clip_sim: -0.1 + 0.6 * rng::unit(r),
        })
        .collect();
    images.sort_by_key(|i| i.anchor_span);
    InterleavedDoc { doc_id: format!("doc-{id}"), spans, images }
}

pub fn random_docs(seed: u64, n: usize) -> Vec<InterleavedDoc> {
    let mut r = rng::from_seed(seed);
    (0..n).map(|i| random_doc(&mut r, i)).collect()
}

/// For each position, scan backwards for the nearest image token and count
/// image tokens up to it.
pub fn scan_media_index(tokens: &[u32], image_token: u32) -> Vec<u32> {
    (0..tokens.len())
        .map(|t| {
            match (0..=t).rev().find(|&j| tokens[j] == image_token) {
                None => 0,
                Some(j) => tokens[..=j].iter().filter(|&&x| x == image_token).count() as u32,
            }
        })
        .collect()
}

pub fn scan_mask(tokens: &[u32], image_token: u32) -> Vec<Vec<bool>> {
    let n_images = tokens.iter().filter(|&&x| x == image_token).count();
    let mi = scan_media_index(tokens, image_token);
    mi.iter().map(|&m| (0..n_images).map(|i| m as usize == i + 1).collect()).collect()
}

pub fn random_vectors(r: &mut SeededRng, n: usize, d: usize) -> Vec<(String, Vec<f32>)> {
    (0..n)
        .map(|i| {
            let v: Vec<f32> = (0..d).map(|_| r.random_range(-1.0f32..1.0)).collect();
            (format!("id{i:05}"), v)
        })
        .collect()
}

/// Full sort of every row by (similarity desc, id asc).
pub fn brute_topk(index: &EmbeddingIndex, query: &[f32], k: usize) -> Vec<Neighbor> {
    let norm = query.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    let q: Vec<f32> = query.iter().map(|&x| (f64::from(x) / norm) as f32).collect();
    let mut all: Vec<Neighbor> = (0..index.len())
        .map(|i| {
            let row = index.row(i);
            let mut s = 0.0f32;
            for j in 0..row.len() {
                s += q[j] * row[j];
            }
            Neighbor { id: index.ids()[i].clone(), sim: s }
        })
        .collect();
    all.sort_by(|a, b| b.sim.partial_cmp(&a.sim).unwrap().then(a.id.cmp(&b.id)));
    all.truncate(k);
    all
}

fn oracle_tokens(s: &str) -> Vec<String> {
    let cleaned: String = s.to_lowercase().chars().map(|c| if c.is_ascii_punctuation() { ' ' } else { c }).collect();
    cleaned.split_whitespace().map(String::from).collect()
}

fn oracle_grams(words: &[String], n: usize) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    if words.len() >= n {
        for i in 0..=words.len() - n {
            *m.entry(words[i..i + n].join(" ")).or_insert(0.0) += 1.0;
        }
    }
    m
}

/// Straight-line CIDEr-D: per n, per reference, clipped TF-IDF cosine with a
/// Gaussian length penalty on the bigram-count length.
pub fn cider_d_oracle(cands: &BTreeMap<String, String>, refs: &BTreeMap<String, Vec<String>>) -> f64 {
    let n_images = refs.len() as f64;
    let doc_freq = |gram: &str, n: usize| -> f64 {
        refs.values()
            .filter(|rs| rs.iter().any(|r| oracle_grams(&oracle_tokens(r), n).contains_key(gram)))
            .count() as f64
    };
    let weights = |counts: &BTreeMap<String, f64>, n: usize| -> BTreeMap<String, f64> {
        counts.iter().map(|(g, tf)| (g.clone(), tf * (n_images.ln() - doc_freq(g, n).max(1.0).ln()))).collect()
    };
    let norm = |v: &BTreeMap<String, f64>| v.values().map(|x| x * x).sum::<f64>().sqrt();
    let mut total = 0.0;
    for (id, cand) in cands {
        let cw = oracle_tokens(cand);
        let c_len = oracle_grams(&cw, 2).values().sum::<f64>();
        let mut per_ref_sum = 0.0;
        for r in &refs[id] {
            let rw = oracle_tokens(r);
            let r_len = oracle_grams(&rw, 2).values().sum::<f64>();
            let penalty = (-(c_len - r_len).powi(2) / 72.0).exp();
            let mut over_n = 0.0;
            for n in 1..=4 {
                let vc = weights(&oracle_grams(&cw, n), n);
                let vr = weights(&oracle_grams(&rw, n), n);
                let mut dot = 0.0;
                for (g, &x) in &vc {
                    let y = vr.get(g).copied().unwrap_or(0.0);
                    dot += x.min(y) * y;
                }
                let (nc, nr) = (norm(&vc), norm(&vr));
                if nc != 0.0 && nr != 0.0 {
                    dot /= nc * nr;
                }
                over_n += dot * penalty;
            }
            per_ref_sum += over_n / 4.0;
        }
        total += per_ref_sum / refs[id].len() as f64 * 10.0;
    }
    total / cands.len() as f64
}

/// Five-image caption corpus with overlapping vocabulary.
pub fn cider_fixture() -> (BTreeMap<String, String>, BTreeMap<String, Vec<String>>) {
    let refs: BTreeMap<String, Vec<String>> = [
        ("1", vec!["A cat sits on a red mat.", "a cat on the mat", "the small cat is sitting on a mat"]),
        ("2", vec!["A dog runs in the park.", "dog running through a green park", "a brown dog in a park"]),
        ("3", vec!["Two birds fly in the blue sky", "birds flying across the sky", "two birds in the sky"]),
        ("4", vec!["a man riding a bike down the street", "a person on a bicycle in the street"]),
        ("5", vec!["a plate of food with rice and beans", "rice and beans on a white plate", "a meal on a plate"]),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v.into_iter().map(String::from).collect()))
    .collect();
    let cands: BTreeMap<String, String> = [
        ("1", "a cat sitting on a mat"),
        ("2", "a dog in the park"),
        ("3", "birds in the sky"),
        ("4", "a man on a bike"),
        ("5", "a plate with rice"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v.to_owned()))
    .collect();
    (cands, refs)
}

pub fn all_ids(neighbors: &[Neighbor]) -> BTreeSet<String> {
    neighbors.iter().map(|n| n.id.clone()).collect()
}

/// Caption task whose train pool holds, for every eval image, a pool item
/// with an identical embedding and the eval item's first caption, plus
/// `extra` unrelated pool items.
pub struct CaptionWorld {
    pub dataset: ikit_core::eval::EvalDataset,
    pub images: ikit_core::retrieval::EmbeddingStore,
    pub index: EmbeddingIndex,
}

pub fn caption_world(n_eval: usize, extra: usize, seed: u64) -> CaptionWorld {
    use ikit_core::eval::{build_pool_index, EvalDataset};
    use ikit_core::retrieval::EmbeddingStore;
    use ikit_core::EvalItem;
    let mut r = rng::from_seed(seed);
    let mut images = EmbeddingStore::default();
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for i in 0..n_eval {
        let v = random_vectors(&mut r, 1, 16).remove(0).1;
        let caption = random_sentence(&mut r, 10);
        let others: Vec<String> = (0..4).map(|_| random_sentence(&mut r, 10)).collect();
        images.insert(format!("eval-img-{i}"), v.clone());
        images.insert(format!("pool-img-{i}"), v);
        eval.push(EvalItem {
            id: format!("q{i:04}"),
            image_id: format!("eval-img-{i}"),
            captions: Some(std::iter::once(caption.clone()).chain(others).collect()),
            ..Default::default()
        });
        train.push(EvalItem {
            id: format!("p{i:04}"),
            image_id: format!("pool-img-{i}"),
            captions: Some(vec![caption]),
            ..Default::default()
        });
    }
    for j in 0..extra {
        let v = random_vectors(&mut r, 1, 16).remove(0).1;
        images.insert(format!("extra-img-{j}"), v);
        train.push(EvalItem {
            id: format!("x{j:04}"),
            image_id: format!("extra-img-{j}"),
            captions: Some(vec![random_sentence(&mut r, 10)]),
            ..Default::default()
        });
    }
    let index = build_pool_index(&train, &images).unwrap();
    CaptionWorld { dataset: EvalDataset { train, eval }, images, index }
}

/// Client wrapper that records every generate request.
pub struct Recorder<'a> {
    pub inner: &'a dyn ikit_core::ModelClient,
    pub generated: std::sync::Mutex<Vec<ikit_core::GenerateRequest>>,
}

impl<'a> Recorder<'a> {
    pub fn new(inner: &'a dyn ikit_core::ModelClient) -> Self {
        Self { inner, generated: std::sync::Mutex::new(Vec::new()) }
    }

    pub fn take(&self) -> Vec<ikit_core::GenerateRequest> {
        std::mem::take(&mut *self.generated.lock().unwrap())
    }
}

impl ikit_core::ModelClient for Recorder<'_> {
    fn generate(&self, req: &ikit_core::GenerateRequest) -> Result<ikit_core::GenerateResponse, ikit_core::ClientError> {
        self.generated.lock().unwrap().push(req.clone());
        self.inner.generate(req)
    }

    fn score(&self, req: &ikit_core::ScoreRequest) -> Result<f64, ikit_core::ClientError> {
        self.inner.score(req)
    }
}
