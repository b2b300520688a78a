use super::LogDensity;
use serde::Serialize;
use std::collections::VecDeque;

#[derive(Debug, Clone, Serialize)]
pub struct ModeResult {
    pub point: Vec<f64>,
    pub log_density: f64,
    /// `‖∇ log Π‖∞` at `point`.
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct ModeOptions {
    pub max_iters: usize,
    pub gtol: f64,
    /// Number of curvature pairs kept by the quasi-Newton direction.
    pub memory: usize,
}

impl Default for ModeOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            gtol: 1e-6,
            memory: 10,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Ascent to a local maximum of `log Π`.
///
/// Directions come from a limited-memory BFGS update of the ascent gradient
/// (falling back to the plain gradient when the update is not an ascent
/// direction). Step lengths are found by halving until the Armijo condition
/// holds. Points outside the domain count as failed trial steps.
pub fn find_posterior_mode<D: LogDensity + ?Sized>(target: &D, init: &[f64], opts: ModeOptions) -> ModeResult {
    let n = init.len();
    let mut x = init.to_vec();
    let mut g = vec![0.0; n];
    let mut f = match target.log_density_grad(&x, &mut g) {
        Ok(v) if v.is_finite() => v,
        _ => {
            return ModeResult {
                point: x,
                log_density: f64::NEG_INFINITY,
                grad_norm: f64::INFINITY,
                iterations: 0,
                converged: false,
            }
        }
    };
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];
    let mut iterations = 0;
    let mut stalled = 0;

    while iterations < opts.max_iters && inf_norm(&g) > opts.gtol {
        iterations += 1;
        // two-loop recursion on the negated objective
        let mut q: Vec<f64> = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            for i in 0..n {
                q[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        } else {
            let scale = 1.0 / inf_norm(&g).max(1.0);
            q.iter_mut().for_each(|v| *v *= scale);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for i in 0..n {
                q[i] += s[i] * (a - b);
            }
        }
        let mut dir = q;
        let mut slope = dot(&g, &dir);
        if !(slope > 0.0) {
            history.clear();
            let scale = 1.0 / inf_norm(&g).max(1.0);
            dir = g.iter().map(|v| v * scale).collect();
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            for i in 0..n {
                xt[i] = x[i] + step * dir[i];
            }
            if let Ok(ft) = target.log_density_grad(&xt, &mut gt) {
                let finite = ft.is_finite() && gt.iter().all(|v| v.is_finite());
                // Near the optimum the Armijo gain drops below the rounding
                // error of `f`; accept steps that shrink the gradient instead.
                let flat = (ft - f).abs() <= 1e-12 * f.abs().max(1.0) && inf_norm(&gt) < inf_norm(&g);
                if finite && (ft >= f + 1e-4 * step * slope || flat) {
                    accepted = Some(ft);
                    break;
                }
            }
            step *= 0.5;
        }
        let Some(ft) = accepted else {
            if history.is_empty() {
                break;
            }
            history.clear();
            stalled += 1;
            if stalled > 3 {
                break;
            }
            continue;
        };
        stalled = 0;
        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        // curvature of −log Π: y = −(g_new − g_old)
        let y: Vec<f64> = g.iter().zip(&gt).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            history.push_back((s, y, 1.0 / sy));
            if history.len() > opts.memory {
                history.pop_front();
            }
        }
        x.copy_from_slice(&xt);
        g.copy_from_slice(&gt);
        f = ft;
    }

    let grad_norm = inf_norm(&g);
    ModeResult {
        point: x,
        log_density: f,
        grad_norm,
        iterations,
        converged: grad_norm <= opts.gtol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::FnDensity;

    #[test]
    fn quadratic_mode() {
        let c = [1.5, -2.0, 0.25];
        let target = FnDensity::new(3, move |x: &[f64], g: &mut [f64]| {
            let mut f = 0.0;
            for i in 0..3 {
                g[i] = -(x[i] - c[i]);
                f -= 0.5 * (x[i] - c[i]).powi(2);
            }
            Ok(f)
        });
        let r = find_posterior_mode(&target, &[0.0; 3], ModeOptions::default());
        assert!(r.converged);
        for i in 0..3 {
            assert!((r.point[i] - c[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn ill_conditioned_quadratic() {
        let scales = [1.0, 1e3, 1e6];
        let target = FnDensity::new(3, move |x: &[f64], g: &mut [f64]| {
            let mut f = 0.0;
            for i in 0..3 {
                g[i] = -scales[i] * (x[i] - 1.0);
                f -= 0.5 * scales[i] * (x[i] - 1.0).powi(2);
            }
            Ok(f)
        });
        let r = find_posterior_mode(&target, &[0.0; 3], ModeOptions::default());
        assert!(r.converged, "{r:?}");
    }

    #[test]
    fn infeasible_start_is_reported() {
        let target = FnDensity::new(1, |_: &[f64], _: &mut [f64]| {
            Err(crate::error::DomainError::new("x", "outside"))
        });
        let r = find_posterior_mode(&target, &[0.0], ModeOptions::default());
        assert!(!r.converged);
    }
}
