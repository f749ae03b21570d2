//! CSV ingestion, standardization, subsampling and demo data.

use std::path::Path;

use noisy_coreset::noise::sample_unit_noise;
use noisy_coreset::rng::{seeded, substream};
use noisy_coreset::{Dataset, NoiseFamily};
use rand::Rng;

use crate::error::{BenchError, Result};

/// Column kind declared in a schema file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Continuous,
    Categorical,
}

/// Ordered `name kind` pairs, one per line of the schema file. Blank lines
/// and lines starting with `#` are ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub columns: Vec<(String, ColumnKind)>,
}

impl Schema {
    pub fn parse(text: &str) -> Result<Self> {
        let mut columns = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(name), Some(kind), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(BenchError::Data(format!(
                    "schema line {}: expected 'name kind'",
                    no + 1
                )));
            };
            let kind = match kind.to_ascii_lowercase().as_str() {
                "continuous" | "numeric" | "real" => ColumnKind::Continuous,
                "categorical" | "nominal" | "ignore" => ColumnKind::Categorical,
                other => {
                    return Err(BenchError::Data(format!(
                        "schema line {}: unknown kind '{other}'",
                        no + 1
                    )))
                }
            };
            columns.push((name.to_string(), kind));
        }
        Ok(Self { columns })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn continuous(&self) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|(_, k)| *k == ColumnKind::Continuous)
            .map(|(n, _)| n.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_dropped: usize,
    pub columns: Vec<String>,
    /// Columns whose variance fell below the floor and were only centered.
    pub constant_columns: Vec<String>,
}

/// Variance below which a column is treated as constant.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Reads the continuous columns of a headed CSV file (every column when
/// `schema` is `None`), drops rows with missing or unparsable values and
/// z-scores each column.
pub fn load_csv(path: &Path, schema: Option<&Schema>) -> Result<(Dataset<f64>, LoadReport)> {
    let csv_err = |source| BenchError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(csv_err)?;
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let wanted: Vec<String> = match schema {
        Some(s) => s.continuous().into_iter().map(str::to_string).collect(),
        None => header.clone(),
    };
    if wanted.is_empty() {
        return Err(BenchError::Data("no continuous columns selected".into()));
    }
    let idx: Vec<usize> = wanted
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| BenchError::Data(format!("column '{name}' not in header")))
        })
        .collect::<Result<_>>()?;
    let d = idx.len();
    let mut coords = Vec::new();
    let (mut read, mut dropped) = (0, 0);
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        read += 1;
        let row: Option<Vec<f64>> = idx
            .iter()
            .map(|&j| {
                let v = record.get(j)?.trim().trim_matches('"');
                if v == "?" || v.is_empty() {
                    return None;
                }
                v.parse::<f64>().ok().filter(|x| x.is_finite())
            })
            .collect();
        match row {
            Some(r) => coords.extend(r),
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!(
            "{}: dropped {dropped} of {read} rows with missing or unparsable values",
            path.display()
        );
    }
    if coords.is_empty() {
        return Err(BenchError::Data(format!("{}: no usable rows", path.display())));
    }
    let constant = standardize(&mut coords, d);
    let constant_columns: Vec<String> = constant.iter().map(|&j| wanted[j].clone()).collect();
    if !constant_columns.is_empty() {
        log::warn!("constant columns only centered: {constant_columns:?}");
    }
    Ok((
        Dataset::new(d, coords)?,
        LoadReport {
            rows_read: read,
            rows_dropped: dropped,
            columns: wanted,
            constant_columns,
        },
    ))
}

/// In-place z-scoring of row-major `coords`; returns the columns whose
/// variance was below `VARIANCE_FLOOR` (divided by 1).
pub fn standardize(coords: &mut [f64], d: usize) -> Vec<usize> {
    let n = coords.len() / d;
    let mut constant = Vec::new();
    for j in 0..d {
        let col = || coords.iter().skip(j).step_by(d).copied();
        let mu = col().sum::<f64>() / n as f64;
        let var = col().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n as f64;
        let sd = if var < VARIANCE_FLOOR {
            constant.push(j);
            1.0
        } else {
            var.sqrt()
        };
        for x in coords.iter_mut().skip(j).step_by(d) {
            *x = (*x - mu) / sd;
        }
    }
    constant
}

/// `m` rows drawn uniformly without replacement, kept in their original order.
pub fn subsample(data: &Dataset<f64>, m: usize, seed: u64) -> Result<Dataset<f64>> {
    if m > data.n() {
        return Err(BenchError::Config(format!(
            "subsample size {m} exceeds n = {}",
            data.n()
        )));
    }
    let mut idx = rand::seq::index::sample(&mut seeded(seed), data.n(), m).into_vec();
    idx.sort_unstable();
    Ok(data.select(&idx)?)
}

/// `k` Gaussian blobs (unit variance) with centers uniform on `[-spread, spread]^d`.
pub fn demo_blobs(n: usize, d: usize, k: usize, spread: f64, seed: u64) -> Result<Dataset<f64>> {
    if n == 0 || d == 0 || k == 0 {
        return Err(BenchError::Config("blobs need n, d, k >= 1".into()));
    }
    let mut rng = substream(seed, &[0]);
    let centers: Vec<f64> = (0..k * d).map(|_| rng.random_range(-spread..spread)).collect();
    let mut rng = substream(seed, &[1]);
    let mut coords = Vec::with_capacity(n * d);
    for i in 0..n {
        let j = i % k;
        for t in 0..d {
            coords.push(centers[j * d + t] + sample_unit_noise(NoiseFamily::Gaussian, &mut rng));
        }
    }
    Ok(Dataset::new(d, coords)?)
}
