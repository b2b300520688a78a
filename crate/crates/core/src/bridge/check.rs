use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct CoordinateCheck {
    pub index: usize,
    pub analytic: f64,
    /// `None` when `f` could not be evaluated at a perturbed point.
    pub numeric: Option<f64>,
    pub rel_error: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientReport {
    pub coordinates: Vec<CoordinateCheck>,
    pub rtol: f64,
}

impl GradientReport {
    /// Every testable coordinate passed and at least one was testable.
    pub fn passed(&self) -> bool {
        self.coordinates.iter().any(|c| c.numeric.is_some())
            && self.coordinates.iter().all(|c| c.numeric.is_none() || c.pass)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.coordinates
            .iter()
            .filter_map(|c| c.rel_error)
            .fold(0.0, f64::max)
    }

    pub fn untestable(&self) -> usize {
        self.coordinates.iter().filter(|c| c.numeric.is_none()).count()
    }
}

/// Compares `g(point)` with central differences of `f` using the per-coordinate
/// step `step · (1 + |x_i|)`.
///
/// The error is measured relative to `max(|analytic|, |numeric|, 1)`.
pub fn check_gradient<F, G>(f: F, g: G, point: &[f64], step: f64, rtol: f64) -> GradientReport
where
    F: Fn(&[f64]) -> Option<f64>,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let analytic = g(point);
    assert_eq!(analytic.len(), point.len(), "gradient length mismatch");
    let mut x = point.to_vec();
    let coordinates = (0..point.len())
        .map(|i| {
            let h = step * (1.0 + point[i].abs());
            x[i] = point[i] + h;
            let fp = f(&x);
            x[i] = point[i] - h;
            let fm = f(&x);
            x[i] = point[i];
            let numeric = match (fp, fm) {
                (Some(a), Some(b)) if a.is_finite() && b.is_finite() => Some((a - b) / (2.0 * h)),
                _ => None,
            };
            let rel_error = numeric.map(|n| {
                let scale = analytic[i].abs().max(n.abs()).max(1.0);
                (analytic[i] - n).abs() / scale
            });
            CoordinateCheck {
                index: i,
                analytic: analytic[i],
                numeric,
                rel_error,
                pass: rel_error.is_some_and(|e| e <= rtol),
            }
        })
        .collect();
    GradientReport { coordinates, rtol }
}
