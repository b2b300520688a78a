//! Side-by-side comparison of finished runs.

use super::run::RunManifest;
use crate::error::{Error, Result};
use serde::Serialize;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdRow {
    pub name: String,
    /// Posterior sd per run, in input order.
    pub sd: Vec<f64>,
    /// `sd[i] − sd[0]`.
    pub diff_from_first: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusteringRow {
    pub method: String,
    pub db_cell_type: f64,
    pub db_batch: f64,
    /// The same indices on the first two principal components.
    pub db_cell_type_pc2: f64,
    pub db_batch_pc2: f64,
    pub nmi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub labels: Vec<String>,
    pub median_ess: Vec<f64>,
    pub ess_per_grad: Vec<f64>,
    pub divergences: Vec<usize>,
    pub sd: Vec<SdRow>,
    /// Procrustes only: raw data and first-batch alignment once, then one row
    /// per run.
    pub clustering: Vec<ClusteringRow>,
}

impl ComparisonReport {
    pub fn sd_row(&self, name: &str) -> Option<&SdRow> {
        self.sd.iter().find(|r| r.name == name)
    }

    /// Largest absolute sd difference from the first run.
    pub fn max_abs_difference(&self) -> f64 {
        self.sd
            .iter()
            .flat_map(|r| r.diff_from_first.iter())
            .fold(0.0, |m, d| m.max(d.abs()))
    }

    pub fn clustering_row(&self, method: &str) -> Option<&ClusteringRow> {
        self.clustering.iter().find(|r| r.method == method)
    }

    /// Plot-ready CSV of the sd table: `name` followed by one column per run.
    pub fn sd_csv(&self) -> String {
        let mut out = String::from("name");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for r in &self.sd {
            out.push_str(&r.name);
            for v in &r.sd {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let width = self.sd.iter().map(|r| r.name.len()).max().unwrap_or(4).max(9);
        let _ = writeln!(out, "runs:");
        for (i, l) in self.labels.iter().enumerate() {
            let _ = writeln!(
                out,
                "  [{i}] {l}  median ESS {:.1}  ESS/grad {:.3e}  divergences {}",
                self.median_ess[i], self.ess_per_grad[i], self.divergences[i]
            );
        }
        let _ = write!(out, "\n{:width$}", "parameter");
        for i in 0..self.labels.len() {
            let _ = write!(out, "  {:>12}", format!("sd[{i}]"));
        }
        out.push('\n');
        for r in &self.sd {
            let _ = write!(out, "{:width$}", r.name);
            for v in &r.sd {
                let _ = write!(out, "  {v:>12.5}");
            }
            out.push('\n');
        }
        if !self.clustering.is_empty() {
            let _ = writeln!(
                out,
                "\n{:<40} {:>10} {:>10} {:>10} {:>10} {:>8}",
                "method", "DB(type)", "DB(batch)", "PC2 type", "PC2 batch", "NMI"
            );
            for c in &self.clustering {
                let _ = writeln!(
                    out,
                    "{:<40} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>8.4}",
                    c.method, c.db_cell_type, c.db_batch, c.db_cell_type_pc2, c.db_batch_pc2, c.nmi
                );
            }
        }
        out
    }
}

fn clustering_row(method: String, v: &serde_json::Value) -> Option<ClusteringRow> {
    Some(ClusteringRow {
        method,
        db_cell_type: v.get("db_cell_type")?.as_f64()?,
        db_batch: v.get("db_batch")?.as_f64()?,
        db_cell_type_pc2: v.get("db_cell_type_pc2")?.as_f64()?,
        db_batch_pc2: v.get("db_batch_pc2")?.as_f64()?,
        nmi: v.get("nmi")?.as_f64()?,
    })
}

/// Tabulates posterior sds, sampling efficiency and, for Procrustes runs, the
/// clustering scores.
///
/// Runs must share the model and parameter layout; the first mismatching
/// block is named in the error.
pub fn compare_runs(manifests: &[RunManifest]) -> Result<ComparisonReport> {
    let Some(first) = manifests.first() else {
        return Err(Error::InvalidArgument("no manifests to compare".into()));
    };
    for (i, m) in manifests.iter().enumerate().skip(1) {
        if m.model != first.model {
            return Err(Error::InvalidArgument(format!(
                "run {i} is a {} model, run 0 is a {} model",
                m.model.name(),
                first.model.name()
            )));
        }
        let n = first.layout.len().max(m.layout.len());
        for k in 0..n {
            match (first.layout.get(k), m.layout.get(k)) {
                (Some(a), Some(b)) if a.name == b.name && a.len == b.len && a.transform == b.transform => {}
                (a, b) => {
                    let name = a.or(b).map(|x| x.name.clone()).unwrap_or_default();
                    return Err(Error::InvalidArgument(format!(
                        "incompatible layouts: block `{name}` differs between run 0 and run {i}"
                    )));
                }
            }
        }
    }
    let sd = first
        .parameters
        .iter()
        .chain(&first.derived)
        .map(|p| {
            let sd: Vec<f64> = manifests
                .iter()
                .map(|m| m.parameter(&p.name).map_or(f64::NAN, |q| q.sd))
                .collect();
            let diff_from_first = sd.iter().map(|v| v - sd[0]).collect();
            SdRow {
                name: p.name.clone(),
                sd,
                diff_from_first,
            }
        })
        .collect();
    let labels: Vec<String> = manifests.iter().map(RunManifest::label).collect();
    let mut clustering = Vec::new();
    if let Some(scores) = first.metrics.get("scores") {
        clustering.extend(clustering_row("raw".into(), &scores["raw"]));
        clustering.extend(clustering_row("align_to_first".into(), &scores["align_to_first"]));
        for (m, l) in manifests.iter().zip(&labels) {
            if let Some(s) = m.metrics.get("scores") {
                clustering.extend(clustering_row(l.clone(), &s["bridged"]));
            }
        }
    }
    Ok(ComparisonReport {
        labels,
        median_ess: manifests.iter().map(|m| m.median_ess).collect(),
        ess_per_grad: manifests.iter().map(|m| m.ess_per_grad).collect(),
        divergences: manifests.iter().map(|m| m.divergences).collect(),
        sd,
        clustering,
    })
}
