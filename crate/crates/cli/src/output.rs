//! In-memory output files with schema and provenance headers.

use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::CliError;

/// Version suffix of every schema string.
pub const SCHEMA_VERSION: u32 = 1;

pub fn schema(name: &str) -> String {
    format!("steermetro.{name} v{SCHEMA_VERSION}")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

fn encode_err(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(format!("encoding output: {e}"))
}

/// CSV with three comment lines (schema, seed, resolved config) above the header.
pub fn csv<R: Serialize>(name: &str, table: &str, config: &RunConfig, rows: &[R]) -> Result<OutputFile, CliError> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(format!("# schema: {}\n", schema(table)).as_bytes());
    bytes.extend_from_slice(format!("# seed: {}\n", config.seed).as_bytes());
    let config_json = serde_json::to_string(config).map_err(encode_err)?;
    bytes.extend_from_slice(format!("# config: {config_json}\n").as_bytes());
    let mut writer = csv::Writer::from_writer(bytes);
    for row in rows {
        writer.serialize(row).map_err(encode_err)?;
    }
    let bytes = writer.into_inner().map_err(encode_err)?;
    Ok(OutputFile { name: format!("{name}.csv"), bytes })
}

/// Pretty JSON object holding `schema`, `seed`, `config` and the payload under `data`.
pub fn json<T: Serialize>(name: &str, table: &str, config: &RunConfig, data: &T) -> Result<OutputFile, CliError> {
    let value: Value = json!({
        "schema": schema(table),
        "seed": config.seed,
        "config": config,
        "data": data,
    });
    let mut bytes = serde_json::to_vec_pretty(&value).map_err(encode_err)?;
    bytes.push(b'\n');
    Ok(OutputFile { name: format!("{name}.json"), bytes })
}

pub fn write_all(dir: &Path, files: &[OutputFile]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    for f in files {
        std::fs::write(dir.join(&f.name), &f.bytes).map_err(io)?;
    }
    Ok(())
}
