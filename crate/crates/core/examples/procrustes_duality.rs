//! The orthogonal Procrustes problem through its concave dual: maximizing
//! over a Cholesky-type factor recovers the SVD solution, and the dual value
//! bounds every orthogonal fit from below.

use gradbridge::experiment::simulate::random_orthogonal;
use gradbridge::models::{maximize_procrustes_dual, procrustes_dual_gradient, procrustes_svd_solution};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> gradbridge::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (d, n) = (3, 5);
    let beta = DMatrix::from_fn(d, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = DMatrix::from_fn(d, n, |_, _| rng.sample::<f64, _>(StandardNormal));

    let dual = maximize_procrustes_dual(&beta, &y, 1e-10)?;
    let svd = procrustes_svd_solution(&beta, &y)?;
    let grad = procrustes_dual_gradient(&dual.w, &beta, &y)?;
    println!("dual maximum        {:.10}", dual.value);
    println!("primal minimum      {:.10}", svd.objective(&beta, &y));
    println!("|R^T R - I| at dual {:.2e}", grad.norm());

    let worst = (0..1000)
        .map(|_| {
            let r = random_orthogonal(d, &mut rng);
            (&r * &y - &beta).norm_squared()
        })
        .fold(f64::INFINITY, f64::min);
    println!("best of 1000 random orthogonal fits {worst:.6}");
    Ok(())
}
