use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum NdjsonError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Read one JSON value per non-blank line.
pub fn read_ndjson<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>, NdjsonError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value =
            serde_json::from_str(&line).map_err(|source| NdjsonError::Parse { line: i + 1, source })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_ndjson<'a, T, I, W>(mut writer: W, items: I) -> Result<(), NdjsonError>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
    W: Write,
{
    for item in items {
        serde_json::to_writer(&mut writer, item).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}
