//! Exit classification, output writing and provenance sidecars.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Debug)]
pub enum Failure {
    /// Bad arguments, config or input records. Exit 1.
    Validation(anyhow::Error),
    /// I/O, network or backend failures. Exit 2.
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Validation(e) | Failure::Runtime(e) => e,
        }
    }
}

pub trait Classify<T> {
    fn invalid(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn invalid(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Validation(e.into()))
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

pub fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).with_context(|| format!("opening {}", path.display())).runtime()
}

pub fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).with_context(|| format!("creating {}", path.display())).runtime()
}

pub fn read_string(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).runtime()
}

/// Read NDJSON records; parse failures are validation errors.
pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, Failure> {
    let reader = open(path)?;
    ikit_core::read_ndjson(reader).map_err(|e| match e {
        ikit_core::NdjsonError::Io(io) => Failure::Runtime(anyhow::Error::new(io).context(path.display().to_string())),
        other => Failure::Validation(anyhow::Error::new(other).context(path.display().to_string())),
    })
}

pub fn write_records<'a, T: Serialize + 'a>(path: &Path, items: impl IntoIterator<Item = &'a T>) -> Result<(), Failure> {
    ikit_core::write_ndjson(create(path)?, items).with_context(|| format!("writing {}", path.display())).runtime()
}

pub fn to_pretty<T: Serialize>(value: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value).runtime()?;
    s.push('\n');
    Ok(s)
}

/// JSON to `path` or stdout.
pub fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), Failure> {
    let text = to_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())).runtime(),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).runtime()
        }
    }
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".provenance.json");
    PathBuf::from(s)
}

#[derive(Serialize)]
struct Provenance<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    inputs: Vec<String>,
    config: &'a RunConfig,
}

/// Record the resolved config next to `output`.
pub fn provenance(output: &Path, command: &str, inputs: &[&Path], cfg: &RunConfig) -> Result<(), Failure> {
    let p = Provenance {
        tool: "ikit",
        version: env!("CARGO_PKG_VERSION"),
        command,
        inputs: inputs.iter().map(|i| i.display().to_string()).collect(),
        config: cfg,
    };
    let path = sidecar_path(output);
    std::fs::write(&path, to_pretty(&p)?).with_context(|| format!("writing {}", path.display())).runtime()
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display())).runtime()?;
    for r in rows {
        w.serialize(r).runtime()?;
    }
    w.flush().runtime()
}

/// Sibling ids file of an embedding data file.
pub fn ids_path(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".ids.ndjson");
    PathBuf::from(s)
}
