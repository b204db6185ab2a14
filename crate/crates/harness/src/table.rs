//! Versioned CSV tables: a `# format_version=N` line, a header, then rows.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{HarnessError, Result};

pub const FORMAT_VERSION: u32 = 1;

pub fn version_line() -> String {
    format!("# format_version={FORMAT_VERSION}")
}

/// Write `rows` to `path`, replacing any existing file.
pub fn write_table<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut file = File::create(path).map_err(HarnessError::io(path))?;
    writeln!(file, "{}", version_line()).map_err(HarnessError::io(path))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r).map_err(HarnessError::csv(path))?;
    }
    w.flush().map_err(HarnessError::io(path))
}

/// Write only the version line and the header of `T`.
pub fn create_table<T: Serialize + Default>(path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.serialize(T::default()).map_err(HarnessError::csv(path))?;
        w.flush().map_err(HarnessError::io(path))?;
    }
    let header = buf.split(|&b| b == b'\n').next().unwrap_or_default();
    let mut file = File::create(path).map_err(HarnessError::io(path))?;
    writeln!(file, "{}", version_line()).map_err(HarnessError::io(path))?;
    file.write_all(header).map_err(HarnessError::io(path))?;
    file.write_all(b"\n").map_err(HarnessError::io(path))
}

/// Append rows (no header) to an existing table.
pub fn append_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = OpenOptions::new().append(true).open(path).map_err(HarnessError::io(path))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    for r in rows {
        w.serialize(r).map_err(HarnessError::csv(path))?;
    }
    w.flush().map_err(HarnessError::io(path))
}

/// Read a table, refusing files whose version line is missing or different.
pub fn read_table<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(HarnessError::MissingInput(path.display().to_string()));
    }
    let file = File::open(path).map_err(HarnessError::io(path))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(HarnessError::io(path))?;
    let first = first.trim_end();
    if first != version_line() {
        return Err(HarnessError::FormatVersion {
            path: path.to_path_buf(),
            found: first.strip_prefix("# format_version=").map(str::to_string),
            expected: FORMAT_VERSION,
        });
    }
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().map(|row| row.map_err(HarnessError::csv(path))).collect()
}

/// Write a JSON document via a temporary file and rename.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    let text = serde_json::to_string_pretty(value).map_err(HarnessError::json(path))?;
    std::fs::write(&tmp, text).map_err(HarnessError::io(&tmp))?;
    std::fs::rename(&tmp, path).map_err(HarnessError::io(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(HarnessError::MissingInput(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
    serde_json::from_str(&text).map_err(HarnessError::json(path))
}
