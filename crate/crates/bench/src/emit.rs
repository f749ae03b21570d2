//! Row output as CSV, JSON lines or a markdown table.

use std::io::Write;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{BenchError, Result};
use crate::experiment::{ExperimentRow, SweepPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    JsonLines,
    Markdown,
}

impl std::str::FromStr for Format {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" | "json-lines" | "ndjson" => Ok(Format::JsonLines),
            "md" | "markdown" => Ok(Format::Markdown),
            _ => Err(BenchError::Config(format!("unknown format '{s}'"))),
        }
    }
}

/// Header and 3-decimal cells for the markdown renderer.
pub trait TableRow {
    fn header() -> Vec<&'static str>;
    fn cells(&self) -> Vec<String>;
}

fn fmt3(x: f64) -> String {
    if x.is_nan() {
        "-".into()
    } else {
        format!("{x:.3}")
    }
}

impl TableRow for ExperimentRow {
    fn header() -> Vec<&'static str> {
        vec![
            "algorithm",
            "eps",
            "level",
            "|S|",
            "r_tilde",
            "u",
            "kappa",
            "trials",
            "seed",
            "error",
        ]
    }

    fn cells(&self) -> Vec<String> {
        vec![
            self.algorithm.clone(),
            fmt3(self.eps),
            fmt3(self.level),
            if self.size.is_nan() {
                "-".into()
            } else {
                format!("{:.1}", self.size)
            },
            fmt3(self.r_tilde),
            fmt3(self.u),
            fmt3(self.kappa),
            self.trials.to_string(),
            self.seed.to_string(),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

impl TableRow for SweepPoint {
    fn header() -> Vec<&'static str> {
        vec!["beta", "err_hat", "err1_hat"]
    }

    fn cells(&self) -> Vec<String> {
        vec![fmt3(self.beta), fmt3(self.err_hat), fmt3(self.err1_hat)]
    }
}

fn io_err(source: std::io::Error) -> BenchError {
    BenchError::Io {
        path: "<output>".into(),
        source,
    }
}

/// Writes `rows` in `format`. Reals keep full precision in CSV and JSON.
pub fn emit<R: Serialize + TableRow, W: Write>(rows: &[R], format: Format, out: W) -> Result<()> {
    if rows.is_empty() {
        return Err(BenchError::Config("nothing to emit".into()));
    }
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in rows {
                w.serialize(r).map_err(|source| BenchError::Csv {
                    path: "<output>".into(),
                    source,
                })?;
            }
            w.flush().map_err(io_err)
        }
        Format::JsonLines => {
            let mut out = out;
            for r in rows {
                let line = serde_json::to_string(r).map_err(|e| BenchError::Data(e.to_string()))?;
                writeln!(out, "{line}").map_err(io_err)?;
            }
            Ok(())
        }
        Format::Markdown => {
            let mut out = out;
            let header = R::header();
            writeln!(out, "| {} |", header.join(" | ")).map_err(io_err)?;
            writeln!(out, "|{}", "---|".repeat(header.len())).map_err(io_err)?;
            for r in rows {
                writeln!(out, "| {} |", r.cells().join(" | ")).map_err(io_err)?;
            }
            Ok(())
        }
    }
}

/// Convenience wrapper returning the emitted bytes.
pub fn emit_to_vec<R: Serialize + TableRow>(rows: &[R], format: Format) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    emit(rows, format, &mut buf)?;
    Ok(buf)
}

/// Parses rows previously written with `Format::Csv`.
pub fn read_csv_rows<R: DeserializeOwned>(bytes: &[u8]) -> Result<Vec<R>> {
    csv::Reader::from_reader(bytes)
        .deserialize()
        .collect::<std::result::Result<Vec<R>, _>>()
        .map_err(|source| BenchError::Csv {
            path: "<input>".into(),
            source,
        })
}
