use gradbridge::bridge::{relaxation_bound, shrinkage_log_kernel, BridgeProblem, KernelConfig};
use gradbridge::diagnostics::{
    autocorrelation, davies_bouldin, effective_sample_size, normalized_mutual_information,
};
use gradbridge::experiment::check::{posterior_gradient_check, random_network, zoo};
use gradbridge::experiment::simulate::{bundled_network, random_orthogonal};
use gradbridge::lp::{max_flow, min_cut_by_enumeration, verify_cut};
use gradbridge::models::procrustes::{procrustes_dual_value, procrustes_svd_solution};
use gradbridge::models::{conditional_z_posterior_params, reparameterize_flows, NormalMeansModel};
use gradbridge::sampler::build_mass_inverse;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

fn normal_means_point(seed: u64) -> (NormalMeansModel, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<f64> = (0..6).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    let m = NormalMeansModel::new(0.5 + rng.random::<f64>(), y).unwrap();
    let theta: Vec<f64> = m
        .initial_point()
        .iter()
        .map(|v| v + rng.random_range(-0.5..0.5))
        .collect();
    (m, theta)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_is_nonpositive_and_monotone_in_lambda(seed in any::<u64>(), l1 in 0.0..50.0f64, l2 in 0.0..50.0f64) {
        let (m, theta) = normal_means_point(seed);
        let (b, z) = m.split(&theta);
        let k = |l: f64| shrinkage_log_kernel(&m, b, z, &KernelConfig::with_lambda(l)).unwrap();
        prop_assert!(k(l1) <= 0.0);
        prop_assert!(k(l1 + l2) <= k(l1));
        let (a, c, ab) = (k(l1), k(l2), k(l1 + l2));
        prop_assert!((ab - (a + c)).abs() <= 1e-10 * (1.0 + ab.abs()));
    }

    #[test]
    fn conditional_variance_decreases_in_lambda(beta in 0.05..5.0f64, tau in 0.1..5.0f64, l in 0.0..200.0f64, dl in 0.01..50.0f64) {
        let y = [0.3, -1.0, 2.2];
        let (_, v1) = conditional_z_posterior_params(beta, &y, tau, l).unwrap();
        let (_, v2) = conditional_z_posterior_params(beta, &y, tau, l + dl).unwrap();
        prop_assert!(v2 < v1);
    }

    #[test]
    fn mass_inverse_spectrum_is_two_valued(seed in any::<u64>(), dim in 2usize..9, cols in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols = cols.min(dim);
        let g = randn(&mut rng, dim, cols);
        let tau = 1e-3;
        let spec = build_mass_inverse(&g, tau).unwrap();
        let mut ev: Vec<f64> = SymmetricEigen::new(spec.inv_mass()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        prop_assert_eq!(spec.rank(), cols);
        for (i, e) in ev.iter().enumerate() {
            let want = if i < cols { tau } else { 1.0 + tau };
            prop_assert!((e - want).abs() <= 1e-9, "eigenvalue {} is {}, want {}", i, e, want);
        }
    }

    #[test]
    fn max_flow_matches_cut_enumeration(seed in any::<u64>(), n in 3usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_network(n, &mut rng);
        let caps: Vec<f64> = (0..spec.edges.len()).map(|_| rng.random_range(0.0..10.0)).collect();
        let sol = max_flow(&spec, &caps);
        prop_assert!(verify_cut(&spec, &caps, &sol));
        let cut = min_cut_by_enumeration(&spec, &caps);
        prop_assert!((sol.value - cut).abs() <= 1e-9 * (1.0 + cut));
    }

    #[test]
    fn integer_capacities_give_integer_flow(seed in any::<u64>(), n in 3usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_network(n, &mut rng);
        let caps: Vec<f64> = (0..spec.edges.len()).map(|_| rng.random_range(0..20u32) as f64).collect();
        let v = max_flow(&spec, &caps).value;
        prop_assert_eq!(v, v.round());
    }

    #[test]
    fn reparameterized_flows_conserve_exactly(free in prop::collection::vec(-10.0..10.0f64, 16)) {
        let spec = bundled_network();
        let k = spec.free_edges().len();
        let flows = reparameterize_flows(&spec, &free[..k]);
        for r in spec.conservation_residual(&flows) {
            prop_assert_eq!(r, 0.0);
        }
    }

    #[test]
    fn procrustes_weak_duality(seed in any::<u64>(), d in 2usize..4, n in 3usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (beta, y) = (randn(&mut rng, d, n), randn(&mut rng, d, n));
        let w = DMatrix::from_fn(d, d, |i, j| if i >= j { rng.random_range(0.1..2.0) } else { 0.0 });
        let dual = procrustes_dual_value(&w, &beta, &y).unwrap();
        let best = procrustes_svd_solution(&beta, &y).unwrap().objective(&beta, &y);
        prop_assert!(dual <= best + 1e-9);
        let r = random_orthogonal(d, &mut rng);
        prop_assert!(best <= (&r * &y - &beta).norm_squared() + 1e-9);
    }

    #[test]
    fn acf_is_bounded_with_unit_lag_zero(x in prop::collection::vec(-100.0..100.0f64, 20..200)) {
        let a = autocorrelation(&x, 15);
        prop_assume!(!a.degenerate);
        prop_assert!((a.values[0] - 1.0).abs() < 1e-12);
        for v in &a.values {
            prop_assert!(v.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn ess_is_affine_invariant(x in prop::collection::vec(-10.0..10.0f64, 50..300), a in 0.01..100.0f64, b in -100.0..100.0f64) {
        let e1 = effective_sample_size(&x);
        prop_assume!(!e1.degenerate);
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let e2 = effective_sample_size(&y);
        prop_assert!((e1.ess - e2.ess).abs() <= 1e-6 * e1.ess);
    }

    #[test]
    fn davies_bouldin_invariances(seed in any::<u64>(), k in 2usize..5, shift in -50.0..50.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 40;
        let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        let pts = DMatrix::from_fn(n, 3, |i, _| { let e: f64 = StandardNormal.sample(&mut rng); labels[i] as f64 * 2.0 + e });
        let base = davies_bouldin(&pts, &labels).unwrap().index;
        prop_assert!(base >= 0.0);
        let r = random_orthogonal(3, &mut rng);
        let moved = (&pts * r.transpose()).add_scalar(shift);
        let rigid = davies_bouldin(&moved, &labels).unwrap().index;
        prop_assert!((rigid - base).abs() <= 1e-9 * (1.0 + base));
        let renamed: Vec<usize> = labels.iter().map(|l| (l + 1) % k + 10).collect();
        let perm = davies_bouldin(&pts, &renamed).unwrap().index;
        prop_assert!((perm - base).abs() <= 1e-12 * (1.0 + base));
    }

    #[test]
    fn nmi_range_symmetry_and_renaming(a in prop::collection::vec(0usize..4, 30), b in prop::collection::vec(0usize..5, 30)) {
        let ab = normalized_mutual_information(&a, &b).unwrap().value;
        let ba = normalized_mutual_information(&b, &a).unwrap().value;
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        prop_assert!((ab - ba).abs() < 1e-12);
        let renamed: Vec<usize> = a.iter().map(|l| 7 - l).collect();
        let rn = normalized_mutual_information(&renamed, &b).unwrap().value;
        prop_assert!((rn - ab).abs() < 1e-12);
    }
}

#[test]
fn relaxation_bound_holds_for_quadratics() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut failures = 0;
    for _ in 0..1000 {
        let d = rng.random_range(1..6);
        let a = randn(&mut rng, d, d);
        let h = &a * a.transpose() + DMatrix::identity(d, d) * 0.1;
        let zhat = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let eps = rng.random_range(1e-3..1.0);
        let dir = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng)).normalize();
        let grad = dir * eps * rng.random::<f64>();
        let z = &zhat + h.clone().lu().solve(&grad).unwrap();
        let bound = relaxation_bound(&h, 0.0, eps).unwrap();
        if (&z - &zhat).norm() > bound * (1.0 + 1e-9) {
            failures += 1;
        }
    }
    assert_eq!(failures, 0);
}

#[test]
fn zoo_gradients_pass_at_twenty_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in zoo().unwrap() {
        let p = case.problem.as_ref();
        let mut tested = 0;
        let mut attempts = 0;
        while tested < 20 {
            attempts += 1;
            assert!(attempts < 2000, "{}: too few interior points", case.name);
            let theta: Vec<f64> = case
                .theta
                .iter()
                .map(|v| v + 0.05 * rng.random_range(-1.0..1.0))
                .collect();
            let (b, z) = p.split(&theta);
            if p.check_domain(b, z).is_err() {
                continue;
            }
            let item = posterior_gradient_check(&case.name, p, &theta, &case.cfg);
            assert!(item.passed, "{}: {}", item.name, item.detail);
            tested += 1;
        }
    }
}
