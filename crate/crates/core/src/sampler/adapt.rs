//! Warm-up adaptation: dual averaging of the step size and windowed
//! estimation of a diagonal inverse mass.

/// Nesterov dual averaging on `log ε` toward a target acceptance statistic.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    target: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

impl DualAveraging {
    pub fn new(target: f64, initial_eps: f64) -> Self {
        let mut da = Self {
            target,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            mu: 0.0,
            counter: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
        };
        da.restart(initial_eps);
        da
    }

    /// Forgets the history and re-centres on `10 ε`.
    pub fn restart(&mut self, eps: f64) {
        self.mu = (10.0 * eps).ln();
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
    }

    /// Feeds one acceptance statistic and returns the next step size.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1.0;
        let a = accept_stat.min(1.0);
        let eta = 1.0 / (self.counter + self.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - a);
        let x = self.mu - self.s_bar * self.counter.sqrt() / self.gamma;
        let w = self.counter.powf(-self.kappa);
        self.x_bar = (1.0 - w) * self.x_bar + w * x;
        x.exp()
    }

    /// The averaged step size used once adaptation ends.
    pub fn final_step_size(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Running mean and variance.
#[derive(Debug, Clone)]
struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn add(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for i in 0..x.len() {
            let d = x[i] - self.mean[i];
            self.mean[i] += d / n;
            self.m2[i] += d * (x[i] - self.mean[i]);
        }
    }

    fn variance(&self) -> Vec<f64> {
        let d = (self.n.max(2) - 1) as f64;
        self.m2.iter().map(|v| v / d).collect()
    }

    fn restart(&mut self) {
        self.n = 0;
        self.mean.iter_mut().for_each(|v| *v = 0.0);
        self.m2.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Diagonal inverse-mass estimation over doubling windows.
///
/// Warm-up is split into an initial fast buffer (75 iterations), a series of
/// slow windows starting at 25 iterations and doubling, and a terminal fast
/// buffer (50 iterations). Short warm-ups shrink the buffers to 15%/10%.
#[derive(Debug, Clone)]
pub struct WindowedDiagonal {
    num_warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window_size: usize,
    next_window: usize,
    counter: usize,
    estimator: Welford,
}

impl WindowedDiagonal {
    pub fn new(dim: usize, num_warmup: usize) -> Self {
        let (mut init_buffer, mut term_buffer, mut base) = (75, 50, 25);
        if num_warmup < 20 {
            init_buffer = num_warmup;
            term_buffer = 0;
            base = 0;
        } else if init_buffer + term_buffer + base > num_warmup {
            init_buffer = (0.15 * num_warmup as f64) as usize;
            term_buffer = (0.1 * num_warmup as f64) as usize;
            base = num_warmup - init_buffer - term_buffer;
        }
        Self {
            num_warmup,
            init_buffer,
            term_buffer,
            window_size: base,
            next_window: (init_buffer + base).saturating_sub(1),
            counter: 0,
            estimator: Welford::new(dim),
        }
    }

    fn in_window(&self) -> bool {
        self.window_size > 0
            && self.counter >= self.init_buffer
            && self.counter < self.num_warmup - self.term_buffer
            && self.counter != self.num_warmup
    }

    fn window_ends(&self) -> bool {
        self.window_size > 0 && self.counter == self.next_window && self.counter != self.num_warmup
    }

    fn advance_window(&mut self) {
        let last = self.num_warmup - self.term_buffer - 1;
        if self.next_window == last {
            return;
        }
        self.window_size *= 2;
        self.next_window = self.counter + self.window_size;
        if self.next_window != last {
            let boundary = self.next_window + 2 * self.window_size;
            if boundary >= self.num_warmup - self.term_buffer {
                self.next_window = last;
            }
        }
    }

    /// Records the draw of one warm-up iteration. Returns a new regularized
    /// inverse-mass diagonal when a slow window closes.
    pub fn observe(&mut self, theta: &[f64]) -> Option<Vec<f64>> {
        if self.in_window() {
            self.estimator.add(theta);
        }
        let out = if self.window_ends() {
            self.advance_window();
            let n = self.estimator.n as f64;
            let var = self
                .estimator
                .variance()
                .into_iter()
                .map(|v| (n / (n + 5.0)) * v + 1e-3 * (5.0 / (n + 5.0)))
                .collect();
            self.estimator.restart();
            Some(var)
        } else {
            None
        };
        self.counter += 1;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_averaging_moves_toward_target() {
        let mut da = DualAveraging::new(0.8, 1.0);
        // acceptance too low: step size must shrink
        let mut eps = 1.0;
        for _ in 0..50 {
            eps = da.update(0.2);
        }
        assert!(eps < 1.0);
        let mut da = DualAveraging::new(0.8, 1.0);
        for _ in 0..50 {
            eps = da.update(1.0);
        }
        assert!(eps > 1.0);
    }

    #[test]
    fn windows_close_at_expected_iterations() {
        let mut w = WindowedDiagonal::new(1, 1000);
        let mut ends = Vec::new();
        for i in 0..1000 {
            if w.observe(&[i as f64]).is_some() {
                ends.push(i);
            }
        }
        assert_eq!(ends, vec![99, 149, 249, 449, 949]);
    }

    #[test]
    fn window_variance_is_regularized() {
        let mut w = WindowedDiagonal::new(2, 200);
        let mut last = None;
        for i in 0..200 {
            let x = if i % 2 == 0 { [1.0, 5.0] } else { [-1.0, 5.0] };
            if let Some(v) = w.observe(&x) {
                last = Some(v);
            }
        }
        let v = last.unwrap();
        assert!(v[0] > 0.9 && v[0] < 1.1);
        assert!(v[1] > 0.0 && v[1] < 1e-3);
    }

    #[test]
    fn tiny_warmup_never_adapts() {
        let mut w = WindowedDiagonal::new(1, 10);
        assert!((0..10).all(|i| w.observe(&[i as f64]).is_none()));
    }
}
