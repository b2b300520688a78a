//! Multinomial No-U-Turn transitions with the generalized U-turn criterion.

use super::leapfrog::{leapfrog, PhasePoint};
use super::mass::MassSpec;
use super::LogDensity;
use rand::Rng;

/// Energy error above which a trajectory is declared divergent.
pub const MAX_DELTA_H: f64 = 1000.0;

#[derive(Debug, Clone, Copy)]
pub struct TransitionInfo {
    pub depth: u32,
    pub n_leapfrog: u32,
    pub accept_stat: f64,
    pub divergent: bool,
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn no_u_turn(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

/// Per-transition trajectory builder.
pub(crate) struct Nuts<'a, D: ?Sized, R> {
    pub target: &'a D,
    pub mass: &'a MassSpec,
    pub eps: f64,
    pub max_depth: u32,
    pub rng: &'a mut R,
    divergent: bool,
    n_leapfrog: u32,
    sum_metro_prob: f64,
    scratch: Vec<f64>,
}

struct Edge {
    p_beg: Vec<f64>,
    p_sharp_beg: Vec<f64>,
    p_end: Vec<f64>,
    p_sharp_end: Vec<f64>,
}

impl<'a, D: LogDensity + ?Sized, R: Rng> Nuts<'a, D, R> {
    pub fn new(target: &'a D, mass: &'a MassSpec, eps: f64, max_depth: u32, rng: &'a mut R) -> Self {
        Self {
            target,
            mass,
            eps,
            max_depth,
            rng,
            divergent: false,
            n_leapfrog: 0,
            sum_metro_prob: 0.0,
            scratch: vec![0.0; mass.dim()],
        }
    }

    fn p_sharp(&mut self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; p.len()];
        self.mass.inv_mass_mul(p, &mut out);
        out
    }

    /// Draws a fresh momentum and runs one transition from `current`.
    pub fn transition(&mut self, current: &PhasePoint) -> (PhasePoint, TransitionInfo) {
        self.divergent = false;
        self.n_leapfrog = 0;
        self.sum_metro_prob = 0.0;

        let mut z0 = current.clone();
        self.mass.draw_momentum(self.rng, &mut z0.p);
        let h0 = z0.hamiltonian(self.mass);
        let p_sharp0 = self.p_sharp(&z0.p);

        let mut z_fwd = z0.clone();
        let mut z_bck = z0.clone();
        let mut z_sample = z0.clone();

        let mut fwd = Edge {
            p_beg: z0.p.clone(),
            p_sharp_beg: p_sharp0.clone(),
            p_end: z0.p.clone(),
            p_sharp_end: p_sharp0.clone(),
        };
        let mut bck = Edge {
            p_beg: z0.p.clone(),
            p_sharp_beg: p_sharp0.clone(),
            p_end: z0.p.clone(),
            p_sharp_end: p_sharp0,
        };
        let mut rho = z0.p.clone();
        let mut log_sum_weight = 0.0;
        let mut depth = 0;

        while depth < self.max_depth {
            let dim = rho.len();
            let mut rho_fwd = vec![0.0; dim];
            let mut rho_bck = vec![0.0; dim];
            let mut lsw_subtree = f64::NEG_INFINITY;
            let mut z_propose = z0.clone();

            let valid = if self.rng.random::<f64>() > 0.5 {
                rho_bck.copy_from_slice(&rho);
                bck.p_beg.clone_from(&fwd.p_end);
                bck.p_sharp_beg.clone_from(&fwd.p_sharp_end);
                self.build_tree(
                    depth,
                    &mut z_fwd,
                    &mut z_propose,
                    &mut fwd,
                    &mut rho_fwd,
                    h0,
                    1.0,
                    &mut lsw_subtree,
                )
            } else {
                rho_fwd.copy_from_slice(&rho);
                fwd.p_beg.clone_from(&bck.p_end);
                fwd.p_sharp_beg.clone_from(&bck.p_sharp_end);
                self.build_tree(
                    depth,
                    &mut z_bck,
                    &mut z_propose,
                    &mut bck,
                    &mut rho_bck,
                    h0,
                    -1.0,
                    &mut lsw_subtree,
                )
            };
            if !valid {
                break;
            }
            depth += 1;

            if lsw_subtree > log_sum_weight || self.rng.random::<f64>() < (lsw_subtree - log_sum_weight).exp() {
                z_sample = z_propose;
            }
            log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

            // The old trajectory is now one half and the new subtree the other.
            // `bck.p_end` is the backward tip and `fwd.p_end` the forward tip.
            rho = add(&rho_bck, &rho_fwd);
            let mut persist = no_u_turn(&bck.p_sharp_end, &fwd.p_sharp_end, &rho);
            let rho_ext = add(&rho_bck, &fwd.p_beg);
            persist &= no_u_turn(&bck.p_sharp_end, &fwd.p_sharp_beg, &rho_ext);
            let rho_ext = add(&rho_fwd, &bck.p_beg);
            persist &= no_u_turn(&bck.p_sharp_beg, &fwd.p_sharp_end, &rho_ext);
            if !persist {
                break;
            }
        }

        let accept_stat = if self.n_leapfrog > 0 {
            self.sum_metro_prob / self.n_leapfrog as f64
        } else {
            0.0
        };
        let mut out = z_sample;
        out.p.iter_mut().for_each(|v| *v = 0.0);
        (
            out,
            TransitionInfo {
                depth,
                n_leapfrog: self.n_leapfrog,
                accept_stat,
                divergent: self.divergent,
            },
        )
    }

    /// Extends the trajectory from `z` by `2^depth` steps in direction `sign`.
    ///
    /// `edge.p_beg` is the momentum nearest the existing trajectory and
    /// `edge.p_end` the new tip; both are overwritten.
    #[allow(clippy::too_many_arguments)]
    fn build_tree(
        &mut self,
        depth: u32,
        z: &mut PhasePoint,
        z_propose: &mut PhasePoint,
        edge: &mut Edge,
        rho: &mut [f64],
        h0: f64,
        sign: f64,
        log_sum_weight: &mut f64,
    ) -> bool {
        if depth == 0 {
            self.n_leapfrog += 1;
            let ok = leapfrog(self.target, self.mass, z, sign * self.eps, &mut self.scratch).is_ok();
            let mut h = if ok { z.hamiltonian(self.mass) } else { f64::INFINITY };
            if h.is_nan() {
                h = f64::INFINITY;
            }
            if h - h0 > MAX_DELTA_H {
                self.divergent = true;
            }
            let w = h0 - h;
            *log_sum_weight = log_sum_exp(*log_sum_weight, w);
            self.sum_metro_prob += if w > 0.0 { 1.0 } else { w.exp() };
            if self.divergent {
                return false;
            }
            z_propose.clone_from(z);
            let ps = self.p_sharp(&z.p);
            for (r, p) in rho.iter_mut().zip(&z.p) {
                *r += p;
            }
            edge.p_beg.clone_from(&z.p);
            edge.p_sharp_beg.clone_from(&ps);
            edge.p_end.clone_from(&z.p);
            edge.p_sharp_end = ps;
            return true;
        }

        let dim = rho.len();
        let mut init = Edge {
            p_beg: vec![0.0; dim],
            p_sharp_beg: vec![0.0; dim],
            p_end: vec![0.0; dim],
            p_sharp_end: vec![0.0; dim],
        };
        let mut rho_init = vec![0.0; dim];
        let mut lsw_init = f64::NEG_INFINITY;
        if !self.build_tree(depth - 1, z, z_propose, &mut init, &mut rho_init, h0, sign, &mut lsw_init) {
            return false;
        }

        let mut z_propose_final = z.clone();
        let mut fin = Edge {
            p_beg: vec![0.0; dim],
            p_sharp_beg: vec![0.0; dim],
            p_end: vec![0.0; dim],
            p_sharp_end: vec![0.0; dim],
        };
        let mut rho_final = vec![0.0; dim];
        let mut lsw_final = f64::NEG_INFINITY;
        if !self.build_tree(
            depth - 1,
            z,
            &mut z_propose_final,
            &mut fin,
            &mut rho_final,
            h0,
            sign,
            &mut lsw_final,
        ) {
            return false;
        }

        let lsw_subtree = log_sum_exp(lsw_init, lsw_final);
        *log_sum_weight = log_sum_exp(*log_sum_weight, lsw_subtree);
        if lsw_final > lsw_subtree || self.rng.random::<f64>() < (lsw_final - lsw_subtree).exp() {
            *z_propose = z_propose_final;
        }

        let rho_subtree = add(&rho_init, &rho_final);
        for (r, s) in rho.iter_mut().zip(&rho_subtree) {
            *r += s;
        }
        let mut persist = no_u_turn(&init.p_sharp_beg, &fin.p_sharp_end, &rho_subtree);
        let rho_ext = add(&rho_init, &fin.p_beg);
        persist &= no_u_turn(&init.p_sharp_beg, &fin.p_sharp_beg, &rho_ext);
        let rho_ext = add(&rho_final, &init.p_end);
        persist &= no_u_turn(&init.p_sharp_end, &fin.p_sharp_end, &rho_ext);

        edge.p_beg = init.p_beg;
        edge.p_sharp_beg = init.p_sharp_beg;
        edge.p_end = fin.p_end;
        edge.p_sharp_end = fin.p_sharp_end;
        persist
    }
}
