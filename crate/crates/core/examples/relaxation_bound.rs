//! How far a point with a small sub-problem gradient can sit from the exact
//! minimizer, for a quadratic loss with constant Hessian.

use gradbridge::bridge::relaxation_bound;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> gradbridge::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = DMatrix::from_fn(4, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
    let hess = &a * a.transpose() + DMatrix::identity(4, 4) * 0.5;
    let z_hat = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
    for eps in [1.0, 0.1, 0.01] {
        let bound = relaxation_bound(&hess, 0.0, eps)?;
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            // a random gradient of norm at most eps, mapped back to z
            let dir = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal)).normalize();
            let grad = dir * eps * rng.random::<f64>();
            let z = &z_hat + hess.clone().lu().solve(&grad).expect("positive definite");
            worst = worst.max((z - &z_hat).norm());
        }
        println!("eps {eps:>5}: bound {bound:.4}, largest observed distance {worst:.4}");
    }
    Ok(())
}
