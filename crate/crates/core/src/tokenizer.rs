//! Tokenizer interface and the whitespace tokenizer used for fixtures.

use std::collections::HashMap;
use std::io::BufRead;
use std::sync::RwLock;

/// Surface form of the image marker in prompts and decoded text.
pub const IMAGE_MARKER: &str = "<image>";
/// Surface form of the end-of-chunk marker.
pub const END_OF_CHUNK_MARKER: &str = "<|endofchunk|>";

pub trait Tokenizer: Send + Sync {
    fn encode(&self, text: &str) -> Vec<u32>;
    fn decode(&self, ids: &[u32]) -> String;
    fn image_token(&self) -> u32;
    fn end_of_chunk_token(&self) -> u32;

    fn is_special(&self, id: u32) -> bool {
        id == self.image_token() || id == self.end_of_chunk_token()
    }
}

/// Whitespace-splitting tokenizer over an explicit vocabulary.
///
/// Ids 0 and 1 are reserved for `<image>` and `<|endofchunk|>`, id 2 for
/// unknown words. An open tokenizer interns unseen words on first use; a
/// frozen one maps them to the unknown id. The reserved surface forms are
/// never part of the vocabulary, so `encode` cannot produce ids 0 or 1.
#[derive(Debug)]
pub struct WhitespaceTokenizer {
    vocab: RwLock<Vocab>,
    frozen: bool,
}

#[derive(Debug, Default, Clone)]
struct Vocab {
    ids: HashMap<String, u32>,
    words: Vec<String>,
}

impl WhitespaceTokenizer {
    pub const IMAGE_ID: u32 = 0;
    pub const END_OF_CHUNK_ID: u32 = 1;
    pub const UNKNOWN_ID: u32 = 2;
    const FIRST_WORD_ID: u32 = 3;
    const UNKNOWN_SURFACE: &'static str = "<unk>";

    /// Empty open-vocabulary tokenizer.
    pub fn new() -> Self {
        Self { vocab: RwLock::new(Vocab::default()), frozen: false }
    }

    /// Fixed vocabulary, in the given order. Duplicates and reserved surface
    /// forms are skipped.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = Vocab::default();
        for w in words {
            vocab.intern(w.as_ref());
        }
        Self { vocab: RwLock::new(vocab), frozen: true }
    }

    /// Fixed vocabulary made of every word in `texts`, sorted, so the id
    /// assignment does not depend on text order.
    pub fn fit<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut words: Vec<String> = texts
            .into_iter()
            .flat_map(|t| t.as_ref().split_whitespace().map(str::to_owned).collect::<Vec<_>>())
            .collect();
        words.sort();
        words.dedup();
        Self::from_words(words)
    }

    /// Vocabulary file: one word per line, line order defines ids.
    pub fn from_vocab_reader<R: BufRead>(reader: R) -> std::io::Result<Self> {
        let mut words = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let word = line.trim();
            if !word.is_empty() {
                words.push(word.to_owned());
            }
        }
        Ok(Self::from_words(words))
    }

    /// Words in id order (reserved ids excluded).
    pub fn words(&self) -> Vec<String> {
        self.vocab.read().expect("vocab lock").words.clone()
    }

    pub fn len(&self) -> usize {
        self.vocab.read().expect("vocab lock").words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(mut self) -> Self {
        self.frozen = true;
        self
    }
}

impl Default for WhitespaceTokenizer {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocab {
    fn intern(&mut self, word: &str) -> u32 {
        if word == IMAGE_MARKER || word == END_OF_CHUNK_MARKER || word == WhitespaceTokenizer::UNKNOWN_SURFACE {
            return WhitespaceTokenizer::UNKNOWN_ID;
        }
        if let Some(&id) = self.ids.get(word) {
            return id;
        }
        let id = WhitespaceTokenizer::FIRST_WORD_ID + self.words.len() as u32;
        self.ids.insert(word.to_owned(), id);
        self.words.push(word.to_owned());
        id
    }
}

impl Tokenizer for WhitespaceTokenizer {
    fn encode(&self, text: &str) -> Vec<u32> {
        let lookup = |vocab: &Vocab, w: &str| -> Option<u32> {
            if w == IMAGE_MARKER || w == END_OF_CHUNK_MARKER {
                return Some(Self::UNKNOWN_ID);
            }
            vocab.ids.get(w).copied()
        };
        {
            let vocab = self.vocab.read().expect("vocab lock");
            let known: Option<Vec<u32>> = text.split_whitespace().map(|w| lookup(&vocab, w)).collect();
            if let Some(ids) = known {
                return ids;
            }
            if self.frozen {
                return text
                    .split_whitespace()
                    .map(|w| lookup(&vocab, w).unwrap_or(Self::UNKNOWN_ID))
                    .collect();
            }
        }
        let mut vocab = self.vocab.write().expect("vocab lock");
        text.split_whitespace().map(|w| vocab.intern(w)).collect()
    }

    fn decode(&self, ids: &[u32]) -> String {
        let vocab = self.vocab.read().expect("vocab lock");
        let words: Vec<&str> = ids
            .iter()
            .map(|&id| match id {
                Self::IMAGE_ID => IMAGE_MARKER,
                Self::END_OF_CHUNK_ID => END_OF_CHUNK_MARKER,
                Self::UNKNOWN_ID => Self::UNKNOWN_SURFACE,
                _ => vocab
                    .words
                    .get((id - Self::FIRST_WORD_ID) as usize)
                    .map(String::as_str)
                    .unwrap_or(Self::UNKNOWN_SURFACE),
            })
            .collect();
        words.join(" ")
    }

    fn image_token(&self) -> u32 {
        Self::IMAGE_ID
    }

    fn end_of_chunk_token(&self) -> u32 {
        Self::END_OF_CHUNK_ID
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_on_single_spaced_text() {
        let tok = WhitespaceTokenizer::new();
        let text = "Hello world , again Hello";
        let ids = tok.encode(text);
        assert_eq!(ids.len(), 5);
        assert_eq!(ids[0], ids[4]);
        assert_eq!(tok.decode(&ids), text);
    }

    #[test]
    fn reserved_ids_never_produced() {
        let tok = WhitespaceTokenizer::new();
        let ids = tok.encode("<image> x <|endofchunk|> y");
        assert!(ids.iter().all(|&id| !tok.is_special(id)));
        let frozen = WhitespaceTokenizer::fit(["a b"]);
        assert!(frozen.encode("<image> a").iter().all(|&id| !frozen.is_special(id)));
    }

    #[test]
    fn frozen_maps_unknown() {
        let tok = WhitespaceTokenizer::fit(["b a", "c"]);
        assert_eq!(tok.words(), vec!["a", "b", "c"]);
        let ids = tok.encode("a zz c");
        assert_eq!(ids, vec![3, WhitespaceTokenizer::UNKNOWN_ID, 5]);
        assert_eq!(tok.len(), 3);
    }

    #[test]
    fn vocab_file() {
        let tok = WhitespaceTokenizer::from_vocab_reader("one\ntwo\n\nthree\n".as_bytes()).unwrap();
        assert_eq!(tok.encode("three one"), vec![5, 3]);
        assert!(tok.is_frozen());
    }
}
