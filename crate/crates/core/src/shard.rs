//! WebDataset-style tar shards: packing, unpacking, replacement sampling of
//! shards and fixed-ratio interleaving of two sample streams.
//!
//! Canonical shards are uncompressed POSIX ustar archives with zeroed
//! metadata (mtime, uid, gid) and mode 0644, so packing is byte-reproducible.
//! Shards whose path ends in `.gz` are gzip-wrapped with a zero mtime header;
//! [`unpack`] detects gzip by magic bytes.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::{Compression, GzBuilder};
use serde::{Deserialize, Serialize};

use crate::rng;

#[derive(Debug, thiserror::Error)]
pub enum ShardError {
    #[error("invalid sample {key:?}: {reason}")]
    InvalidSample { key: String, reason: String },
    #[error("duplicate key {key:?} in shard {shard}")]
    DuplicateKey { key: String, shard: PathBuf },
    #[error("format error at entry {entry:?}: {reason}")]
    Format { entry: String, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One training sample: a key plus named byte parts (`json`, `txt`, `jpg`, ...).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub key: String,
    pub parts: BTreeMap<String, Vec<u8>>,
}

impl Sample {
    pub fn new(key: impl Into<String>) -> Self {
        Self { key: key.into(), parts: BTreeMap::new() }
    }

    pub fn with_part(mut self, ext: impl Into<String>, bytes: impl Into<Vec<u8>>) -> Self {
        self.parts.insert(ext.into(), bytes.into());
        self
    }

    pub fn validate(&self) -> Result<(), ShardError> {
        let invalid = |reason: &str| ShardError::InvalidSample { key: self.key.clone(), reason: reason.to_owned() };
        if self.key.is_empty() {
            return Err(invalid("empty key"));
        }
        if self.key.contains('/') || self.key.contains('.') {
            return Err(invalid("key contains '/' or '.'"));
        }
        if self.parts.is_empty() {
            return Err(invalid("no parts"));
        }
        for ext in self.parts.keys() {
            if ext.is_empty() || ext.contains('/') || ext.chars().any(|c| c.is_ascii_uppercase()) {
                return Err(invalid(&format!("bad extension {ext:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardEntry {
    pub path: PathBuf,
    pub size: usize,
}

/// Ordered shard list; serializes as the `{"shards": [{"path", "size"}]}`
/// manifest.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ShardSet {
    pub shards: Vec<ShardEntry>,
}

impl ShardSet {
    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.shards.iter().map(|s| s.path.as_path())
    }

    pub fn total_samples(&self) -> usize {
        self.shards.iter().map(|s| s.size).sum()
    }

    pub fn validate(&self) -> Result<(), ShardError> {
        let mut seen = HashSet::new();
        for s in &self.shards {
            if !seen.insert(&s.path) {
                return Err(ShardError::InvalidArgument(format!("duplicate shard path {}", s.path.display())));
            }
            if s.size == 0 {
                return Err(ShardError::InvalidArgument(format!("empty shard {}", s.path.display())));
            }
        }
        Ok(())
    }

    pub fn read_manifest(path: &Path) -> Result<Self, ShardError> {
        let set: ShardSet = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        set.validate()?;
        Ok(set)
    }

    pub fn write_manifest(&self, path: &Path) -> Result<(), ShardError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

/// Shard file name for index `i`: `{prefix}-{i:06}.tar`.
pub fn shard_path(prefix: &Path, index: usize, gzip: bool) -> PathBuf {
    let mut name = prefix.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!("-{index:06}.tar"));
    if gzip {
        name.push(".gz");
    }
    prefix.with_file_name(name)
}

fn write_tar<W: Write>(out: W, samples: &[Sample], shard: &Path) -> Result<W, ShardError> {
    let mut builder = tar::Builder::new(out);
    builder.mode(tar::HeaderMode::Deterministic);
    let mut keys = HashSet::new();
    for sample in samples {
        if !keys.insert(sample.key.as_str()) {
            return Err(ShardError::DuplicateKey { key: sample.key.clone(), shard: shard.to_owned() });
        }
        for (ext, bytes) in &sample.parts {
            let mut header = tar::Header::new_ustar();
            header.set_size(bytes.len() as u64);
            header.set_mode(0o644);
            header.set_mtime(0);
            header.set_uid(0);
            header.set_gid(0);
            header.set_entry_type(tar::EntryType::Regular);
            builder.append_data(&mut header, format!("{}.{}", sample.key, ext), bytes.as_slice())?;
        }
    }
    Ok(builder.into_inner()?)
}

/// Write `samples` into shards of at most `max_per_shard` samples each.
pub fn pack<I>(samples: I, max_per_shard: usize, out_prefix: &Path) -> Result<ShardSet, ShardError>
where
    I: IntoIterator<Item = Sample>,
{
    pack_with(samples, max_per_shard, out_prefix, false)
}

/// [`pack`] with optional gzip wrapping.
pub fn pack_with<I>(samples: I, max_per_shard: usize, out_prefix: &Path, gzip: bool) -> Result<ShardSet, ShardError>
where
    I: IntoIterator<Item = Sample>,
{
    if max_per_shard == 0 {
        return Err(ShardError::InvalidArgument("max_per_shard must be at least 1".into()));
    }
    let mut set = ShardSet::default();
    let mut pending: Vec<Sample> = Vec::with_capacity(max_per_shard);
    let flush = |pending: &mut Vec<Sample>, set: &mut ShardSet| -> Result<(), ShardError> {
        if pending.is_empty() {
            return Ok(());
        }
        let path = shard_path(out_prefix, set.shards.len(), gzip);
        let file = BufWriter::new(File::create(&path)?);
        if gzip {
            let gz = GzBuilder::new().mtime(0).write(file, Compression::default());
            write_tar(gz, pending, &path)?.finish()?.flush()?;
        } else {
            write_tar(file, pending, &path)?.flush()?;
        }
        set.shards.push(ShardEntry { path, size: pending.len() });
        pending.clear();
        Ok(())
    };
    for sample in samples {
        sample.validate()?;
        pending.push(sample);
        if pending.len() == max_per_shard {
            flush(&mut pending, &mut set)?;
        }
    }
    flush(&mut pending, &mut set)?;
    Ok(set)
}

fn split_entry_name(name: &str) -> Result<(&str, &str), ShardError> {
    match name.split_once('.') {
        Some((key, ext)) if !key.is_empty() && !ext.is_empty() && !key.contains('/') => Ok((key, ext)),
        _ => Err(ShardError::Format { entry: name.to_owned(), reason: "expected {key}.{ext}".into() }),
    }
}

/// Read samples from a tar stream, grouping consecutive entries by key.
pub fn unpack_reader<R: Read>(reader: R) -> Result<Vec<Sample>, ShardError> {
    let mut archive = tar::Archive::new(reader);
    let mut samples: Vec<Sample> = Vec::new();
    let mut finished: HashSet<String> = HashSet::new();
    let entries = archive
        .entries()
        .map_err(|e| ShardError::Format { entry: String::new(), reason: e.to_string() })?;
    for entry in entries {
        let mut entry = entry.map_err(|e| ShardError::Format { entry: String::new(), reason: e.to_string() })?;
        if !matches!(entry.header().entry_type(), tar::EntryType::Regular | tar::EntryType::Continuous) {
            continue;
        }
        let name = String::from_utf8_lossy(&entry.path_bytes()).into_owned();
        let (key, ext) = split_entry_name(&name)?;
        let (key, ext) = (key.to_owned(), ext.to_owned());
        let mut bytes = Vec::with_capacity(entry.size() as usize);
        entry
            .read_to_end(&mut bytes)
            .map_err(|e| ShardError::Format { entry: name.clone(), reason: e.to_string() })?;
        match samples.last_mut() {
            Some(current) if current.key == key => {
                if current.parts.insert(ext, bytes).is_some() {
                    return Err(ShardError::Format { entry: name, reason: "duplicate part".into() });
                }
            }
            _ => {
                if let Some(prev) = samples.last() {
                    finished.insert(prev.key.clone());
                }
                if finished.contains(&key) {
                    return Err(ShardError::Format { entry: name, reason: "non-consecutive key".into() });
                }
                samples.push(Sample { key, parts: BTreeMap::from([(ext, bytes)]) });
            }
        }
    }
    Ok(samples)
}

/// Read every sample in a shard file (plain or gzip-wrapped tar).
pub fn unpack(shard_path: &Path) -> Result<Vec<Sample>, ShardError> {
    let mut file = BufReader::new(File::open(shard_path)?);
    let mut magic = [0u8; 2];
    let n = read_prefix(&mut file, &mut magic)?;
    let head = std::io::Cursor::new(magic[..n].to_vec());
    let chained = head.chain(file);
    if n == 2 && magic == [0x1f, 0x8b] {
        unpack_reader(GzDecoder::new(chained))
    } else {
        unpack_reader(chained)
    }
}

fn read_prefix<R: Read>(r: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}

/// `n_draws` uniform draws with replacement from the shard list.
pub fn sample_shards(set: &ShardSet, n_draws: usize, rng_seed: u64) -> Result<Vec<PathBuf>, ShardError> {
    if set.shards.is_empty() {
        return Err(ShardError::InvalidArgument("cannot sample from an empty shard set".into()));
    }
    let mut rng = rng::from_seed(rng_seed);
    Ok((0..n_draws).map(|_| set.shards[rng::index(&mut rng, set.shards.len())].path.clone()).collect())
}

/// Which input stream an interleaved item came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    A,
    B,
}

/// Repeating blocks of one item from `a` followed by `ratio_b_to_a` items
/// from `b`; stops as soon as the stream due next runs dry.
pub struct Interleave<A, B> {
    a: A,
    b: B,
    ratio: usize,
    pos: usize,
    done: bool,
}

impl<T, A, B> Iterator for Interleave<A, B>
where
    A: Iterator<Item = T>,
    B: Iterator<Item = T>,
{
    type Item = (Source, T);

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = if self.pos == 0 { self.a.next().map(|x| (Source::A, x)) } else { self.b.next().map(|x| (Source::B, x)) };
        match item {
            Some(item) => {
                self.pos = (self.pos + 1) % (self.ratio + 1);
                Some(item)
            }
            None => {
                self.done = true;
                None
            }
        }
    }
}

pub fn interleave_streams<T, A, B>(a: A, b: B, ratio_b_to_a: usize) -> Result<Interleave<A::IntoIter, B::IntoIter>, ShardError>
where
    A: IntoIterator<Item = T>,
    B: IntoIterator<Item = T>,
{
    if ratio_b_to_a == 0 {
        return Err(ShardError::InvalidArgument("interleave ratio must be at least 1".into()));
    }
    Ok(Interleave { a: a.into_iter(), b: b.into_iter(), ratio: ratio_b_to_a, pos: 0, done: false })
}
