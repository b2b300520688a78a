//! Marginal calibration of the normal-means likelihood: with `g` normalized
//! by `1/m(β)` the one-observation marginal increment no longer depends on β.

use gradbridge::models::{calibration_m, marginal_increment};

fn main() {
    let (tau, lambda) = (1.0, 10.0);
    println!("{:>6} {:>10} {:>14} {:>14}", "beta", "m(beta)", "uncalibrated", "calibrated");
    for beta in [0.25, 0.5, 1.0, 2.0, 4.0] {
        println!(
            "{beta:>6} {:>10.5} {:>14.6} {:>14.6}",
            calibration_m(beta, tau, lambda),
            marginal_increment(beta, tau, lambda, false),
            marginal_increment(beta, tau, lambda, true)
        );
    }
}
