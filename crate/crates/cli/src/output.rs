use std::path::Path;

use anyhow::{anyhow, Context};
use serde::Serialize;
use serde_json::Value;

use crate::config::Format;
use crate::CliError;

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Prints the fields of `record` as `prefix.key=value` lines.
pub fn print_kv<T: Serialize>(prefix: Option<&str>, record: &T) {
    let value = serde_json::to_value(record).expect("record serializes");
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                match prefix {
                    Some(p) => println!("{p}.{k}={}", scalar(&v)),
                    None => println!("{k}={}", scalar(&v)),
                }
            }
        }
        other => println!("{}", scalar(&other)),
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(anyhow!("cannot write {}: {e}", path.display()))
}

/// Writes `rows` as CSV (one row each) or as a JSON array.
pub fn write_rows<T: Serialize>(path: &Path, format: Format, rows: &[T]) -> Result<(), CliError> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
            for row in rows {
                w.serialize(row).map_err(|e| io_error(path, e))?;
            }
            w.flush().map_err(|e| io_error(path, e))
        }
        Format::Json => {
            let mut text = serde_json::to_string_pretty(rows)
                .context("serializing output")
                .map_err(CliError::Solver)?;
            text.push('\n');
            std::fs::write(path, text).map_err(|e| io_error(path, e))
        }
    }
}
