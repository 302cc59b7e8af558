//! Exact cosine-similarity retrieval over precomputed embeddings.
//!
//! Embedding files are a single JSON header line
//! `{"dim": d, "count": n, "dtype": "f32le"}` followed by `n * d`
//! little-endian `f32` values; ids live in a parallel NDJSON file with one
//! `{"id": ...}` object per row.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ndjson::{read_ndjson, write_ndjson, NdjsonError};

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("embedding {id:?}: {reason}")]
    Ingest { id: String, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("embedding file: {0}")]
    Format(String),
    #[error(transparent)]
    Ndjson(#[from] NdjsonError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Immutable matrix of L2-normalized rows with ids, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    ids: Vec<String>,
    vectors: Vec<f32>,
    dim: usize,
    positions: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: String,
    pub sim: f32,
}

/// Dot product accumulated left to right in `f32`.
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).fold(0.0f32, |acc, (x, y)| acc + x * y)
}

fn normalized(v: &[f32]) -> Option<Vec<f32>> {
    if v.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let norm = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if norm == 0.0 {
        return None;
    }
    Some(v.iter().map(|&x| (f64::from(x) / norm) as f32).collect())
}

/// Cosine similarity of two raw vectors; `None` for zero or non-finite input.
pub fn cosine(a: &[f32], b: &[f32]) -> Option<f32> {
    if a.len() != b.len() {
        return None;
    }
    Some(dot(&normalized(a)?, &normalized(b)?))
}

impl EmbeddingIndex {
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.positions.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.positions.get(id).map(|&i| self.row(i))
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids.iter().map(String::as_str).zip(self.vectors.chunks_exact(self.dim))
    }
}

/// Normalize and store `(id, vector)` records.
pub fn build_index<I, S>(records: I) -> Result<EmbeddingIndex, RetrievalError>
where
    I: IntoIterator<Item = (S, Vec<f32>)>,
    S: Into<String>,
{
    let mut ids = Vec::new();
    let mut vectors = Vec::new();
    let mut positions = HashMap::new();
    let mut dim = None;
    for (id, v) in records {
        let id = id.into();
        let ingest = |reason: String| RetrievalError::Ingest { id: id.clone(), reason };
        match dim {
            None if v.is_empty() => return Err(ingest("empty vector".into())),
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => return Err(ingest(format!("dimension {} != {d}", v.len()))),
            Some(_) => {}
        }
        let unit = normalized(&v).ok_or_else(|| ingest("zero or non-finite vector".into()))?;
        if positions.contains_key(&id) {
            return Err(ingest("duplicate id".into()));
        }
        positions.insert(id.clone(), ids.len());
        ids.push(id);
        vectors.extend(unit);
    }
    let dim = dim.ok_or_else(|| RetrievalError::InvalidArgument("index needs at least one vector".into()))?;
    Ok(EmbeddingIndex { ids, vectors, dim, positions })
}

fn by_sim_desc_then_id(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.sim.total_cmp(&a.sim).then_with(|| a.id.cmp(&b.id))
}

/// The `min(k, n)` most similar rows, most similar first; equal
/// similarities are ordered by ascending id.
pub fn topk(index: &EmbeddingIndex, query: &[f32], k: usize) -> Result<Vec<Neighbor>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidArgument("k must be at least 1".into()));
    }
    if query.len() != index.dim {
        return Err(RetrievalError::InvalidArgument(format!("query dimension {} != {}", query.len(), index.dim)));
    }
    let q = normalized(query).ok_or_else(|| RetrievalError::InvalidArgument("zero or non-finite query".into()))?;
    let mut scored: Vec<Neighbor> =
        index.rows().map(|(id, row)| Neighbor { id: id.to_owned(), sim: dot(&q, row) }).collect();
    let k = k.min(scored.len());
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, by_sim_desc_then_id);
        scored.truncate(k);
    }
    scored.sort_by(by_sim_desc_then_id);
    Ok(scored)
}

/// Ascending similarity, so the closest demonstration sits next to the query.
pub fn order_for_prompt(mut demos: Vec<Neighbor>) -> Vec<Neighbor> {
    demos.sort_by(|a, b| by_sim_desc_then_id(b, a));
    demos
}

#[derive(Serialize, Deserialize)]
struct Header {
    dim: usize,
    count: usize,
    dtype: String,
}

#[derive(Serialize, Deserialize)]
struct IdLine {
    id: String,
}

/// Read raw `(id, vector)` records from an embedding file and its id file.
pub fn read_embeddings(data: &Path, ids: &Path) -> Result<Vec<(String, Vec<f32>)>, RetrievalError> {
    let id_lines: Vec<IdLine> = read_ndjson(BufReader::new(File::open(ids)?))?;
    let mut reader = BufReader::new(File::open(data)?);
    let mut header_line = String::new();
    reader.read_line(&mut header_line)?;
    let header: Header =
        serde_json::from_str(header_line.trim_end()).map_err(|e| RetrievalError::Format(format!("header: {e}")))?;
    if header.dtype != "f32le" {
        return Err(RetrievalError::Format(format!("unsupported dtype {}", header.dtype)));
    }
    if header.count != id_lines.len() {
        return Err(RetrievalError::Format(format!("{} rows but {} ids", header.count, id_lines.len())));
    }
    let mut raw = Vec::new();
    reader.read_to_end(&mut raw)?;
    if raw.len() != header.count * header.dim * 4 {
        return Err(RetrievalError::Format(format!(
            "payload is {} bytes, expected {}",
            raw.len(),
            header.count * header.dim * 4
        )));
    }
    let values: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    let rows: Vec<Vec<f32>> = if header.dim == 0 { Vec::new() } else { values.chunks(header.dim).map(<[f32]>::to_vec).collect() };
    Ok(id_lines.into_iter().map(|l| l.id).zip(rows).collect())
}

pub fn write_embeddings(data: &Path, ids: &Path, records: &[(String, Vec<f32>)]) -> Result<(), RetrievalError> {
    let dim = records.first().map_or(0, |r| r.1.len());
    if let Some((id, _)) = records.iter().find(|r| r.1.len() != dim) {
        return Err(RetrievalError::Ingest { id: id.clone(), reason: "dimension mismatch".into() });
    }
    let mut w = BufWriter::new(File::create(data)?);
    let header = Header { dim, count: records.len(), dtype: "f32le".into() };
    serde_json::to_writer(&mut w, &header).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    for (_, v) in records {
        for x in v {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    let lines: Vec<IdLine> = records.iter().map(|(id, _)| IdLine { id: id.clone() }).collect();
    write_ndjson(BufWriter::new(File::create(ids)?), &lines)?;
    Ok(())
}

/// Keyed raw-embedding lookup (image ids, caption texts, ...).
pub trait EmbeddingProvider: Sync {
    fn embedding(&self, key: &str) -> Option<&[f32]>;
}

#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    vectors: HashMap<String, Vec<f32>>,
}

impl EmbeddingStore {
    pub fn from_records(records: Vec<(String, Vec<f32>)>) -> Result<Self, RetrievalError> {
        let mut seen = HashSet::new();
        for (id, _) in &records {
            if !seen.insert(id.as_str()) {
                return Err(RetrievalError::Ingest { id: id.clone(), reason: "duplicate id".into() });
            }
        }
        Ok(Self { vectors: records.into_iter().collect() })
    }

    pub fn load(data: &Path, ids: &Path) -> Result<Self, RetrievalError> {
        Self::from_records(read_embeddings(data, ids)?)
    }

    pub fn insert(&mut self, key: impl Into<String>, v: Vec<f32>) {
        self.vectors.insert(key.into(), v);
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl EmbeddingProvider for EmbeddingStore {
    fn embedding(&self, key: &str) -> Option<&[f32]> {
        self.vectors.get(key).map(Vec::as_slice)
    }
}

impl EmbeddingProvider for EmbeddingIndex {
    fn embedding(&self, key: &str) -> Option<&[f32]> {
        self.get(key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_rows() {
        let idx = build_index([("a", vec![3.0, 0.0, 0.0]), ("b", vec![0.0, 4.0, 0.0])]).unwrap();
        assert_eq!(idx.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(idx.row(1), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn ingest_errors_name_id() {
        let err = build_index([("a", vec![1.0]), ("a", vec![2.0])]).unwrap_err();
        assert!(matches!(&err, RetrievalError::Ingest { id, .. } if id == "a"), "{err}");
        let err = build_index([("z", vec![0.0, 0.0])]).unwrap_err();
        assert!(matches!(&err, RetrievalError::Ingest { id, .. } if id == "z"));
        let err = build_index([("a", vec![1.0, 0.0]), ("b", vec![1.0])]).unwrap_err();
        assert!(matches!(&err, RetrievalError::Ingest { id, .. } if id == "b"));
        assert!(build_index(Vec::<(String, Vec<f32>)>::new()).is_err());
    }

    #[test]
    fn orthonormal_lookup() {
        let idx = build_index([("e1", vec![1.0, 0.0, 0.0]), ("e2", vec![0.0, 1.0, 0.0]), ("e3", vec![0.0, 0.0, 1.0])]).unwrap();
        let hits = topk(&idx, &[0.0, 1.0, 0.0], 1).unwrap();
        assert_eq!(hits, vec![Neighbor { id: "e2".into(), sim: 1.0 }]);
        assert!(topk(&idx, &[0.0, 1.0, 0.0], 0).is_err());
        assert_eq!(topk(&idx, &[0.0, 1.0, 0.0], 10).unwrap().len(), 3);
    }

    #[test]
    fn ties_by_ascending_id() {
        let idx = build_index([("b", vec![1.0, 1.0]), ("a", vec![1.0, 1.0])]).unwrap();
        let hits = topk(&idx, &[1.0, 0.0], 2).unwrap();
        assert_eq!(hits.iter().map(|n| n.id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    }

    #[test]
    fn prompt_order() {
        let n = |id: &str, sim| Neighbor { id: id.into(), sim };
        let out = order_for_prompt(vec![n("x", 0.9), n("y", 0.5), n("z", 0.7)]);
        assert_eq!(out.iter().map(|n| n.sim).collect::<Vec<_>>(), [0.5, 0.7, 0.9]);
        assert_eq!(order_for_prompt(vec![n("x", 0.2)]), vec![n("x", 0.2)]);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![("a".to_owned(), vec![1.0, 2.0]), ("b".to_owned(), vec![-0.5, 3.25])];
        let (d, i) = (dir.path().join("e.f32"), dir.path().join("e.ids.ndjson"));
        write_embeddings(&d, &i, &recs).unwrap();
        assert_eq!(read_embeddings(&d, &i).unwrap(), recs);
        let bytes = std::fs::read(&d).unwrap();
        let header_end = bytes.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(&bytes[..header_end], br#"{"dim":2,"count":2,"dtype":"f32le"}"#);
        assert_eq!(bytes.len() - header_end - 1, 16);
    }
}
