use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A flat record with a fixed column order.
pub trait ResultRow: Serialize + DeserializeOwned {
    const COLUMNS: &'static [&'static str];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub config_hash: String,
    pub master_seed: u64,
    pub tool_version: String,
}

impl Metadata {
    pub fn new(config_hash: String, master_seed: u64) -> Self {
        Self {
            config_hash,
            master_seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonDocument<T> {
    metadata: Metadata,
    rows: Vec<T>,
}

/// Writes the header and one record per row; the header is written even for no rows.
pub fn write_csv<T: ResultRow, W: Write>(rows: &[T], writer: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    out.write_record(T::COLUMNS)?;
    if let Some(first) = rows.first() {
        // Field names must agree with the declared columns.
        let mut probe = csv::Writer::from_writer(Vec::new());
        probe.serialize(first)?;
        let bytes = probe.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        let header = csv::Reader::from_reader(bytes.as_slice()).headers()?.clone();
        if header.iter().ne(T::COLUMNS.iter().copied()) {
            return Err(Error::input(format!(
                "row fields {:?} do not match columns {:?}",
                header.iter().collect::<Vec<_>>(),
                T::COLUMNS
            )));
        }
    }
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<T: ResultRow, R: Read>(reader: R) -> Result<Vec<T>> {
    let mut input = csv::Reader::from_reader(reader);
    let header = input.headers()?.clone();
    if header.iter().ne(T::COLUMNS.iter().copied()) {
        return Err(Error::input(format!(
            "unexpected header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    input
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn write_json<T: ResultRow, W: Write>(rows: &[T], metadata: &Metadata, writer: W) -> Result<()> {
    let doc = JsonDocument {
        metadata: metadata.clone(),
        rows: rows.iter().collect(),
    };
    let mut writer = BufWriter::new(writer);
    serde_json::to_writer_pretty(&mut writer, &doc)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

pub fn read_json<T: ResultRow, R: Read>(reader: R) -> Result<(Metadata, Vec<T>)> {
    let doc: JsonDocument<T> = serde_json::from_reader(reader)?;
    Ok((doc.metadata, doc.rows))
}

/// Writes `rows` to `path`. Non-finite floats become `null` in JSON.
pub fn emit_results<T: ResultRow>(
    rows: &[T],
    path: &Path,
    format: OutputFormat,
    metadata: &Metadata,
) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let file = File::create(path)?;
    match format {
        OutputFormat::Csv => write_csv(rows, file),
        OutputFormat::Json => write_json(rows, metadata, file),
    }
}
