//! Run artifacts: CSV tables, JSON documents and their schema checks.

use crate::diagnostics::{autocorrelation, summarize_series, SummaryRow};
use crate::error::{Error, Result};
use crate::sampler::Chain;
use nalgebra::DMatrix;
use serde::Serialize;
use std::path::Path;

pub const SUMMARY_HEADER: [&str; 9] = ["name", "mean", "sd", "q025", "q50", "q975", "ess", "acf1", "degenerate"];

pub const CHAIN_META_COLUMNS: [&str; 5] = ["log_density", "tree_depth", "accept_stat", "divergent", "n_leapfrog"];

/// Named columns of draws, one row per kept iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawTable {
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
}

impl DrawTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.column_index(name)
            .map(|j| self.values.column(j).iter().copied().collect())
    }

    /// Stacks tables with identical columns.
    pub fn stack(tables: &[DrawTable]) -> DrawTable {
        let names = tables[0].names.clone();
        let rows: usize = tables.iter().map(|t| t.values.nrows()).sum();
        let mut values = DMatrix::zeros(rows, names.len());
        let mut r = 0;
        for t in tables {
            assert_eq!(t.names, names, "stacked tables must share columns");
            values.rows_mut(r, t.values.nrows()).copy_from(&t.values);
            r += t.values.nrows();
        }
        DrawTable { names, values }
    }
}

fn io_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Schema {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// One row per kept draw: the named columns followed by sampler metadata.
pub fn write_chain_csv(path: &Path, table: &DrawTable, chain: &Chain) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io_err(path))?;
    let header = table
        .names
        .iter()
        .map(String::as_str)
        .chain(CHAIN_META_COLUMNS);
    w.write_record(header).map_err(io_err(path))?;
    for i in 0..table.values.nrows() {
        let mut rec: Vec<String> = table.values.row(i).iter().map(|v| fmt(*v)).collect();
        rec.push(fmt(chain.log_densities[i]));
        rec.push(chain.tree_depths[i].to_string());
        rec.push(fmt(chain.accept_stats[i]));
        rec.push((chain.divergences[i] as u8).to_string());
        rec.push(chain.n_leapfrog[i].to_string());
        w.write_record(&rec).map_err(io_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Pooled summary over chains: moments and quantiles of the stacked draws,
/// ESS summed over chains and lag-1 autocorrelation averaged.
pub fn pooled_summary(tables: &[DrawTable]) -> Vec<SummaryRow> {
    let pooled = DrawTable::stack(tables);
    pooled
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let all: Vec<f64> = pooled.values.column(j).iter().copied().collect();
            let mut row = summarize_series(name, &all);
            if tables.len() > 1 {
                let per: Vec<SummaryRow> = tables
                    .iter()
                    .map(|t| summarize_series(name, t.values.column(j).as_slice()))
                    .collect();
                row.ess = per.iter().map(|r| r.ess).sum();
                row.acf1 = per.iter().map(|r| r.acf1).sum::<f64>() / per.len() as f64;
                row.degenerate = per.iter().all(|r| r.degenerate);
            }
            row
        })
        .collect()
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io_err(path))?;
    w.write_record(SUMMARY_HEADER).map_err(io_err(path))?;
    for r in rows {
        w.write_record([
            r.name.clone(),
            fmt(r.mean),
            fmt(r.sd),
            fmt(r.q025),
            fmt(r.q50),
            fmt(r.q975),
            fmt(r.ess),
            fmt(r.acf1),
            (r.degenerate as u8).to_string(),
        ])
        .map_err(io_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Autocorrelation of the first chain: a `lag` column and one column per
/// parameter.
pub fn write_acf_csv(path: &Path, table: &DrawTable, max_lag: usize) -> Result<()> {
    let n = table.values.nrows();
    let lags = max_lag.min(n.saturating_sub(1));
    let acfs: Vec<Vec<f64>> = (0..table.names.len())
        .map(|j| autocorrelation(table.values.column(j).as_slice(), lags).values)
        .collect();
    let mut w = csv::Writer::from_path(path).map_err(io_err(path))?;
    w.write_record(std::iter::once("lag").chain(table.names.iter().map(String::as_str)))
        .map_err(io_err(path))?;
    for lag in 0..=lags {
        let rec: Vec<String> = std::iter::once(lag.to_string())
            .chain(acfs.iter().map(|a| fmt(a.get(lag).copied().unwrap_or(f64::NAN))))
            .collect();
        w.write_record(&rec).map_err(io_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn schema(path: &Path, reason: impl Into<String>) -> Error {
    Error::Schema {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Checks a CSV table: a non-empty header with distinct names, at least one
/// record, equal record lengths and numeric fields after the first
/// `text_columns`. Returns the header.
pub fn validate_csv(path: &Path, text_columns: usize) -> Result<Vec<String>> {
    let mut r = csv::Reader::from_path(path).map_err(io_err(path))?;
    let header: Vec<String> = r.headers().map_err(io_err(path))?.iter().map(String::from).collect();
    if header.is_empty() || header.iter().any(String::is_empty) {
        return Err(schema(path, "empty header or column name"));
    }
    let mut sorted = header.clone();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != header.len() {
        return Err(schema(path, "duplicate column names"));
    }
    let mut n = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(io_err(path))?;
        for (j, field) in rec.iter().enumerate().skip(text_columns) {
            if field.parse::<f64>().is_err() {
                return Err(schema(path, format!("row {i}, column `{}`: `{field}` is not numeric", header[j])));
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(schema(path, "no records"));
    }
    Ok(header)
}

/// Checks that a JSON file is an object holding every key in `required`.
pub fn validate_json(path: &Path, required: &[&str]) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| schema(path, e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| schema(path, "top level is not an object"))?;
    for key in required {
        if !obj.contains_key(*key) {
            return Err(schema(path, format!("missing key `{key}`")));
        }
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_validation_catches_bad_fields() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::write(&p, "a,b\n1,2\n3,x\n").unwrap();
        assert!(validate_csv(&p, 0).is_err());
        std::fs::write(&p, "a,a\n1,2\n").unwrap();
        assert!(validate_csv(&p, 0).is_err());
        std::fs::write(&p, "a,b\n1,2\n3\n").unwrap();
        assert!(validate_csv(&p, 0).is_err());
        std::fs::write(&p, "name,b\nx,2\ny,NaN\n").unwrap();
        assert_eq!(validate_csv(&p, 1).unwrap(), vec!["name", "b"]);
    }

    #[test]
    fn json_validation_requires_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        write_json(&p, &serde_json::json!({"a": 1})).unwrap();
        assert!(validate_json(&p, &["a"]).is_ok());
        assert!(validate_json(&p, &["a", "b"]).is_err());
    }

    #[test]
    fn pooled_ess_adds_over_chains() {
        let t = DrawTable {
            names: vec!["x".into()],
            values: DMatrix::from_fn(200, 1, |i, _| ((i * 7919) % 101) as f64),
        };
        let one = pooled_summary(std::slice::from_ref(&t));
        let two = pooled_summary(&[t.clone(), t]);
        assert!((two[0].ess - 2.0 * one[0].ess).abs() < 1e-9);
        assert!((two[0].mean - one[0].mean).abs() < 1e-12);
    }
}
