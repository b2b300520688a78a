//! Conditional posterior of `z | β` in the normal-means model for a sweep of
//! shrinkage strengths, checked against its closed form.

use gradbridge::bridge::{ConditionalPosterior, KernelConfig};
use gradbridge::diagnostics::summarize_series;
use gradbridge::models::{conditional_z_posterior_params, NormalMeansModel};
use gradbridge::sampler::{nuts_sample, MassSpec, SamplerConfig};

fn main() -> gradbridge::Result<()> {
    let (tau, beta, y) = (1.0, 1.0, vec![2.0]);
    let model = NormalMeansModel::new(tau, y.clone())?;
    println!("{:>7} {:>10} {:>10} {:>10} {:>10}", "lambda", "mean", "exact", "var", "exact");
    for lambda in [0.0, 1.0, 10.0, 100.0] {
        let cfg = KernelConfig::with_lambda(lambda);
        let target = ConditionalPosterior::new(&model, vec![f64::ln(beta)], cfg);
        let sampler = SamplerConfig {
            n_iterations: 6000,
            n_burnin: 1000,
            thin: 1,
            seed: 3,
            ..Default::default()
        };
        let chain = nuts_sample(&target, &sampler, &MassSpec::identity(1))?;
        let s = summarize_series("z", &chain.column(0));
        let (mean, var) = conditional_z_posterior_params(beta, &y, tau, lambda)?;
        println!(
            "{lambda:>7} {:>10.4} {:>10.4} {:>10.5} {:>10.5}",
            s.mean,
            mean[0],
            s.sd * s.sd,
            var
        );
    }
    Ok(())
}
