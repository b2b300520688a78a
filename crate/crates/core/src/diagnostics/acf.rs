use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Autocorrelation {
    /// `values[k]` is the lag-`k` autocorrelation; `values[0] = 1`.
    pub values: Vec<f64>,
    /// Set when the series is constant.
    pub degenerate: bool,
}

/// Biased, mean-centred autocovariances `c_k = (1/n) Σ (x_t − x̄)(x_{t+k} − x̄)`
/// for every lag `0..n`.
fn autocovariance(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let m = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(m)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    buf.iter().take(n).map(|c| c.re / (m as f64 * n as f64)).collect()
}

/// Sample autocorrelation for lags `0..=max_lag`.
///
/// A constant series has ACF 1 at lag 0 and 0 elsewhere, flagged degenerate.
///
/// # Panics
/// If `max_lag >= series.len()`.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Autocorrelation {
    assert!(max_lag < series.len(), "max_lag must be below the series length");
    let acov = autocovariance(series);
    if !(acov[0] > 0.0) {
        let mut values = vec![0.0; max_lag + 1];
        values[0] = 1.0;
        return Autocorrelation { values, degenerate: true };
    }
    let values = acov[..=max_lag].iter().map(|c| (c / acov[0]).clamp(-1.0, 1.0)).collect();
    Autocorrelation { values, degenerate: false }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EffectiveSampleSize {
    pub ess: f64,
    /// The raw estimate exceeded `1.5 n` and was capped.
    pub capped: bool,
    pub degenerate: bool,
}

/// Geyer's initial positive sequence estimator `n / (1 + 2 Σ ρ_k)`.
///
/// Autocorrelations are summed in adjacent pairs `ρ_{2m} + ρ_{2m+1}` until the
/// first non-positive pair. The result is capped at `1.5 n`.
///
/// # Panics
/// If the series has fewer than 10 entries.
pub fn effective_sample_size(series: &[f64]) -> EffectiveSampleSize {
    let n = series.len();
    assert!(n >= 10, "ESS needs at least 10 draws");
    let acov = autocovariance(series);
    if !(acov[0] > 0.0) {
        return EffectiveSampleSize {
            ess: 0.0,
            capped: false,
            degenerate: true,
        };
    }
    let rho = |k: usize| acov[k] / acov[0];
    let mut tau = -1.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = rho(2 * m) + rho(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        m += 1;
    }
    let cap = 1.5 * n as f64;
    let raw = if tau > 0.0 { n as f64 / tau } else { f64::INFINITY };
    EffectiveSampleSize {
        ess: raw.min(cap),
        capped: raw > cap,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn iid(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn ar1(n: usize, phi: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = 0.0;
        (0..n)
            .map(|_| {
                let e: f64 = rng.sample(StandardNormal);
                x = phi * x + e;
                x
            })
            .collect()
    }

    #[test]
    fn matches_direct_sum() {
        let x = iid(50, 1);
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let c = |k: usize| (0..x.len() - k).map(|t| (x[t] - m) * (x[t + k] - m)).sum::<f64>() / n;
        let acf = autocorrelation(&x, 5);
        for k in 0..=5 {
            assert!((acf.values[k] - c(k) / c(0)).abs() < 1e-12);
        }
    }

    #[test]
    fn lag_zero_is_one() {
        assert_eq!(autocorrelation(&iid(100, 2), 3).values[0], 1.0);
    }

    #[test]
    fn ar1_lag_one() {
        let acf = autocorrelation(&ar1(100_000, 0.9, 3), 1);
        assert!((acf.values[1] - 0.9).abs() < 0.02);
    }

    #[test]
    fn iid_acf_is_small() {
        let acf = autocorrelation(&iid(100_000, 4), 20);
        assert!(acf.values[1..].iter().all(|v| v.abs() < 0.01));
    }

    #[test]
    fn constant_series_is_degenerate() {
        let acf = autocorrelation(&[2.0; 20], 4);
        assert!(acf.degenerate);
        assert_eq!(acf.values, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        let e = effective_sample_size(&[2.0; 20]);
        assert!(e.degenerate && e.ess == 0.0);
    }

    #[test]
    fn iid_ess_near_n() {
        let n = 10_000;
        let e = effective_sample_size(&iid(n, 5));
        assert!(e.ess > 0.9 * n as f64 && e.ess < 1.1 * n as f64, "{}", e.ess);
    }

    #[test]
    fn ar1_ess() {
        let n = 100_000;
        let e = effective_sample_size(&ar1(n, 0.9, 6));
        let expect = n as f64 * 0.1 / 1.9;
        assert!((e.ess / expect - 1.0).abs() < 0.15, "{} vs {expect}", e.ess);
    }

    #[test]
    fn alternating_series_is_capped() {
        let x: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let e = effective_sample_size(&x);
        assert!(e.capped);
        assert!(e.ess > 1000.0);
    }
}
