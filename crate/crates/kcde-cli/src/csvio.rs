//! CSV ingestion and emission. Input files need a header row; the response
//! column is picked by name or zero-based index and defaults to the last
//! column. Parse failures report the offending line and column.

use std::path::Path;

use anyhow::{Context, bail};
use kcde::RawDataset;

pub struct LoadedDataset {
    pub raw: RawDataset,
    pub x_names: Vec<String>,
    pub y_name: String,
}

pub fn read_dataset(path: &Path, y_col: Option<&str>) -> anyhow::Result<LoadedDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers: Vec<String> = reader
        .headers()
        .context("reading CSV header")?
        .iter()
        .map(|h| h.to_string())
        .collect();
    if headers.len() < 2 {
        bail!(
            "{}: need at least two columns (predictors and a response)",
            path.display()
        );
    }
    let y_index = resolve_y_column(&headers, y_col)?;

    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut n = 0usize;
    for record in reader.records() {
        let record = record.context("reading CSV record")?;
        let line = record
            .position()
            .map(|p| p.line().to_string())
            .unwrap_or_else(|| "?".into());
        if record.len() != headers.len() {
            bail!(
                "{} line {line}: expected {} fields, found {}",
                path.display(),
                headers.len(),
                record.len()
            );
        }
        for (k, field) in record.iter().enumerate() {
            let value: f64 = field.parse().with_context(|| {
                format!(
                    "{} line {line}, column {}: invalid number {field:?}",
                    path.display(),
                    headers[k]
                )
            })?;
            if k == y_index {
                y.push(value);
            } else {
                x.push(value);
            }
        }
        n += 1;
    }
    if n == 0 {
        bail!("{}: no data rows", path.display());
    }
    let x_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != y_index)
        .map(|(_, h)| h.clone())
        .collect();
    let y_name = headers[y_index].clone();
    let raw = RawDataset::new(x, y, headers.len() - 1)
        .with_context(|| format!("validating {}", path.display()))?;
    Ok(LoadedDataset {
        raw,
        x_names,
        y_name,
    })
}

fn resolve_y_column(headers: &[String], y_col: Option<&str>) -> anyhow::Result<usize> {
    match y_col {
        None => Ok(headers.len() - 1),
        Some(spec) => {
            if let Some(idx) = headers.iter().position(|h| h == spec) {
                return Ok(idx);
            }
            if let Ok(idx) = spec.parse::<usize>() {
                if idx < headers.len() {
                    return Ok(idx);
                }
                bail!(
                    "y column index {idx} out of range for {} columns",
                    headers.len()
                );
            }
            bail!(
                "y column {spec:?} not found; available: {}",
                headers.join(", ")
            );
        }
    }
}

/// Read query points: header row plus exactly `d` numeric columns per row.
pub fn read_query(path: &Path, d: usize) -> anyhow::Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let width = reader.headers().context("reading CSV header")?.len();
    if width != d {
        bail!(
            "{}: query has {width} columns but the model expects {d} predictors",
            path.display()
        );
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.context("reading CSV record")?;
        let line = record
            .position()
            .map(|p| p.line().to_string())
            .unwrap_or_else(|| "?".into());
        let mut row = Vec::with_capacity(d);
        for (k, field) in record.iter().enumerate() {
            row.push(field.parse::<f64>().with_context(|| {
                format!(
                    "{} line {line}, column {k}: invalid number {field:?}",
                    path.display()
                )
            })?);
        }
        if row.len() != d {
            bail!("{} line {line}: expected {d} fields", path.display());
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Write a dataset as CSV with columns `x1..xd, y`.
pub fn write_dataset(path: &Path, raw: &RawDataset) -> anyhow::Result<()> {
    let mut writer =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header: Vec<String> = (1..=raw.d()).map(|k| format!("x{k}")).collect();
    header.push("y".into());
    writer.write_record(&header)?;
    for i in 0..raw.n() {
        let mut record: Vec<String> = raw.x_row(i).iter().map(|v| format!("{v}")).collect();
        record.push(format!("{}", raw.y(i)));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}
