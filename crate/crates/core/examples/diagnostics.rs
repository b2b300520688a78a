//! Autocorrelation and effective sample size on an AR(1) series, whose ESS
//! is known in closed form.

use gradbridge::diagnostics::{autocorrelation, effective_sample_size, summarize_series};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 20_000;
    for phi in [0.0, 0.5, 0.9] {
        let mut x = vec![0.0; n];
        for t in 1..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            x[t] = phi * x[t - 1] + e;
        }
        let acf = autocorrelation(&x, 3);
        let ess = effective_sample_size(&x);
        let exact = n as f64 * (1.0 - phi) / (1.0 + phi);
        let s = summarize_series("x", &x);
        println!(
            "phi {phi:.1}: acf[1..=3] {:.3} {:.3} {:.3}, ESS {:.0} (exact {:.0}), sd {:.3}",
            acf.values[1], acf.values[2], acf.values[3], ess.ess, exact, s.sd
        );
    }
}
