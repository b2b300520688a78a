//! Chain diagnostics and clustering metrics.

mod acf;
mod metrics;

pub use acf::{autocorrelation, effective_sample_size, Autocorrelation, EffectiveSampleSize};
pub use metrics::{
    davies_bouldin, kmeans, ks_distance_to_fitted_normal, normalized_mutual_information, principal_components,
    DaviesBouldin, Nmi,
};

use crate::sampler::Chain;
use nalgebra::DMatrix;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    pub ess: f64,
    pub acf1: f64,
    /// Constant column: ESS and ACF are not meaningful.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn get(&self, name: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn median_ess(&self) -> f64 {
        let mut e: Vec<f64> = self.rows.iter().map(|r| r.ess).collect();
        median(&mut e)
    }
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Summary of one column of draws.
pub fn summarize_series(name: &str, x: &[f64]) -> SummaryRow {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ess = effective_sample_size(x);
    let acf = autocorrelation(x, 1);
    SummaryRow {
        name: name.to_string(),
        mean,
        sd,
        q025: quantile_sorted(&sorted, 0.025),
        q50: quantile_sorted(&sorted, 0.5),
        q975: quantile_sorted(&sorted, 0.975),
        ess: ess.ess,
        acf1: acf.values[1],
        degenerate: ess.degenerate,
    }
}

/// Summaries of each column of `draws` (one row per draw).
///
/// # Panics
/// If there are fewer than 10 draws or `names` does not match the columns.
pub fn summarize_columns(names: &[String], draws: &DMatrix<f64>) -> SummaryTable {
    assert_eq!(names.len(), draws.ncols(), "one name per column");
    let rows = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let col: Vec<f64> = draws.column(j).iter().copied().collect();
            summarize_series(name, &col)
        })
        .collect();
    SummaryTable { rows }
}

/// Summary of a chain on the natural scale, one row per layout column.
pub fn summarize(chain: &Chain) -> SummaryTable {
    summarize_columns(&chain.layout.column_names(), &chain.natural_samples())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn constant_column() {
        let r = summarize_series("c", &[3.0; 50]);
        assert_eq!(r.sd, 0.0);
        assert!(r.degenerate);
        assert_eq!(r.q025, 3.0);
    }

    #[test]
    fn iid_normal_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let r = summarize_series("x", &x);
        assert!(r.mean.abs() < 0.03);
        assert!((r.sd - 1.0).abs() < 0.03);
        assert!(r.q025 < r.q50 && r.q50 < r.q975);
        assert!((r.q975 - 1.96).abs() < 0.1);
    }

    #[test]
    fn quantile_interpolates() {
        let s = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.5), 2.0);
        assert_eq!(quantile_sorted(&s, 0.125), 0.5);
    }
}
