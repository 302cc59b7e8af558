//! Seeded synthetic inputs for the benchmarks.

use std::collections::BTreeMap;

use ikit_core::rng::{self, SeededRng};
use ikit_core::{ImageRecord, InterleavedDoc, Sample};
use rand::Rng;

const WORDS: [&str; 24] = [
    "a", "the", "man", "woman", "dog", "cat", "red", "blue", "car", "street", "riding", "sitting", "on", "in", "with",
    "table", "plate", "pizza", "bike", "park", "green", "field", "two", "people",
];

fn sentence(r: &mut SeededRng, words: usize) -> String {
    (0..words).map(|_| WORDS[rng::index(r, WORDS.len())]).collect::<Vec<_>>().join(" ")
}

pub fn docs(n: usize, seed: u64) -> Vec<InterleavedDoc> {
    let mut r = rng::from_seed(seed);
    (0..n)
        .map(|i| {
            let n_spans = 2 + rng::index(&mut r, 10);
            let spans: Vec<String> = (0..n_spans)
                .map(|_| {
                    let len = 8 + rng::index(&mut r, 12);
                    sentence(&mut r, len)
                })
                .collect();
            let mut images: Vec<ImageRecord> = (0..1 + rng::index(&mut r, 6))
                .map(|j| ImageRecord {
                    image_id: format!("{i}-{j}"),
                    anchor_span: rng::index(&mut r, n_spans),
                    clip_sim: r.random_range(0.1..0.45),
                })
                .collect();
            images.sort_by_key(|im| im.anchor_span);
            InterleavedDoc { doc_id: format!("doc{i}"), spans, images }
        })
        .collect()
}

pub fn vectors(n: usize, dim: usize, seed: u64) -> Vec<(String, Vec<f32>)> {
    let mut r = rng::from_seed(seed);
    (0..n).map(|i| (format!("v{i}"), (0..dim).map(|_| r.random_range(-1.0f32..1.0)).collect())).collect()
}

pub type Captions = (BTreeMap<String, String>, BTreeMap<String, Vec<String>>);

/// `n` images with one candidate and five references each.
pub fn captions(n: usize, seed: u64) -> Captions {
    let mut r = rng::from_seed(seed);
    let mut cands = BTreeMap::new();
    let mut refs = BTreeMap::new();
    for i in 0..n {
        let id = format!("img{i}");
        cands.insert(id.clone(), sentence(&mut r, 10));
        let mut five = Vec::with_capacity(5);
        for _ in 0..5 {
            let len = 8 + rng::index(&mut r, 6);
            five.push(sentence(&mut r, len));
        }
        refs.insert(id, five);
    }
    (cands, refs)
}

pub fn samples(n: usize, bytes: usize, seed: u64) -> Vec<Sample> {
    let mut r = rng::from_seed(seed);
    (0..n)
        .map(|i| {
            let payload: Vec<u8> = (0..bytes).map(|_| r.random()).collect();
            Sample::new(format!("{i:09}")).with_part("bin", payload).with_part("json", format!("{{\"i\":{i}}}"))
        })
        .collect()
}
