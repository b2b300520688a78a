//! Max-flow network with noisy flow measurements and uncertain capacities.
//!
//! Capacities `β` are observed once through designed capacities
//! `c ~ N(β, σ_c²)`, and flows through `S` replicate measurements
//! `yˢ ~ N(z, σ_y² I)`. The flow `z` is tied to `β` through the sub-problem
//!
//! ```text
//! h(β, z) = −Σ_{s→j} z_sj − (1/t) Σ_e [log z_e + log(β_e − z_e)],
//! ```
//!
//! with conservation enforced by writing the designated inflow of every
//! internal node as a linear function of the remaining (free) flows.

use crate::bridge::{BridgeProblem, KernelConfig};
use crate::error::{DomainError, Error, Result};
use crate::layout::{Layout, Transform};
use crate::lp::max_flow;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

/// A directed network with one source and one sink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowNetworkSpec {
    pub nodes: Vec<usize>,
    pub source: usize,
    pub sink: usize,
    pub edges: Vec<(usize, usize)>,
    pub designed_capacity: Vec<f64>,
    /// Internal node id to the index of its eliminated inflow edge. Defaults to
    /// the lowest-index inflow of every internal node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_edge_map: Option<BTreeMap<usize, usize>>,
}

impl FlowNetworkSpec {
    pub fn from_json_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: Self = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Node id to position in `nodes`.
    pub fn node_index(&self) -> HashMap<usize, usize> {
        self.nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect()
    }

    pub fn internal_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .copied()
            .filter(move |n| *n != self.source && *n != self.sink)
    }

    pub fn inflows(&self, node: usize) -> Vec<usize> {
        (0..self.edges.len()).filter(|&e| self.edges[e].1 == node).collect()
    }

    pub fn outflows(&self, node: usize) -> Vec<usize> {
        (0..self.edges.len()).filter(|&e| self.edges[e].0 == node).collect()
    }

    /// Whether edge `e` leaves the source.
    pub fn is_source_edge(&self, e: usize) -> bool {
        self.edges[e].0 == self.source
    }

    /// The eliminated inflow edge of every internal node.
    pub fn designated_edges(&self) -> BTreeMap<usize, usize> {
        match &self.free_edge_map {
            Some(m) => m.clone(),
            None => self
                .internal_nodes()
                .filter_map(|n| self.inflows(n).first().map(|e| (n, *e)))
                .collect(),
        }
    }

    /// Indices of the free edges, in edge order.
    pub fn free_edges(&self) -> Vec<usize> {
        let designated: Vec<usize> = self.designated_edges().values().copied().collect();
        (0..self.edges.len()).filter(|e| !designated.contains(e)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Network(m));
        let idx = self.node_index();
        if idx.len() != self.nodes.len() {
            return err("duplicate node ids".into());
        }
        if self.source == self.sink {
            return err("source and sink must differ".into());
        }
        for n in [self.source, self.sink] {
            if !idx.contains_key(&n) {
                return err(format!("node {n} is not in the node list"));
            }
        }
        if self.edges.is_empty() {
            return err("network has no edges".into());
        }
        for (e, (u, v)) in self.edges.iter().enumerate() {
            if !idx.contains_key(u) || !idx.contains_key(v) {
                return err(format!("edge {e} ({u}->{v}) references an unknown node"));
            }
            if u == v {
                return err(format!("edge {e} is a self-loop"));
            }
        }
        if self.designed_capacity.len() != self.edges.len() {
            return err(format!(
                "designed_capacity has {} entries for {} edges",
                self.designed_capacity.len(),
                self.edges.len()
            ));
        }
        if self.designed_capacity.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return err("designed capacities must be positive and finite".into());
        }
        for n in self.internal_nodes() {
            if self.inflows(n).is_empty() || self.outflows(n).is_empty() {
                return err(format!("internal node {n} needs at least one inflow and one outflow"));
            }
        }
        if let Some(m) = &self.free_edge_map {
            for n in self.internal_nodes() {
                match m.get(&n) {
                    None => return err(format!("free_edge_map has no entry for internal node {n}")),
                    Some(&e) if e >= self.edges.len() || self.edges[e].1 != n => {
                        return err(format!("free_edge_map entry {e} is not an inflow of node {n}"))
                    }
                    _ => {}
                }
            }
            if m.len() != self.internal_nodes().count() {
                return err("free_edge_map has entries for non-internal nodes".into());
            }
        }
        let fwd = self.reachable(self.source, false);
        if !fwd[idx[&self.sink]] {
            return err("sink is not reachable from the source".into());
        }
        // every edge must carry positive flow in some feasible interior point
        let bwd = self.reachable(self.sink, true);
        for (e, (u, v)) in self.edges.iter().enumerate() {
            if !fwd[idx[u]] || !bwd[idx[v]] {
                return err(format!("edge {e} ({u}->{v}) lies on no source-sink path"));
            }
        }
        self.elimination_order()?;
        Ok(())
    }

    fn reachable(&self, from: usize, reverse: bool) -> Vec<bool> {
        let idx = self.node_index();
        let mut seen = vec![false; self.nodes.len()];
        seen[idx[&from]] = true;
        let mut stack = vec![from];
        while let Some(u) = stack.pop() {
            for (a, b) in &self.edges {
                let (a, b) = if reverse { (b, a) } else { (a, b) };
                if *a == u && !seen[idx[b]] {
                    seen[idx[b]] = true;
                    stack.push(*b);
                }
            }
        }
        seen
    }

    /// Internal nodes ordered so every designated flow is computed after the
    /// designated flows it depends on.
    fn elimination_order(&self) -> Result<Vec<usize>> {
        let designated = self.designated_edges();
        // node i depends on node j when j's designated inflow leaves i
        let mut state: HashMap<usize, u8> = HashMap::new();
        let mut order = Vec::new();
        fn visit(
            spec: &FlowNetworkSpec,
            designated: &BTreeMap<usize, usize>,
            n: usize,
            state: &mut HashMap<usize, u8>,
            order: &mut Vec<usize>,
        ) -> Result<()> {
            match state.get(&n) {
                Some(2) => return Ok(()),
                Some(1) => {
                    return Err(Error::Network(format!(
                        "designated inflow edges form a cycle through node {n}"
                    )))
                }
                _ => {}
            }
            state.insert(n, 1);
            for e in spec.outflows(n) {
                let head = spec.edges[e].1;
                if designated.get(&head) == Some(&e) {
                    visit(spec, designated, head, state, order)?;
                }
            }
            state.insert(n, 2);
            order.push(n);
            Ok(())
        }
        for n in self.internal_nodes() {
            visit(self, &designated, n, &mut state, &mut order)?;
        }
        Ok(order)
    }

    /// The `E × F` matrix `A` with `z = A w` for free flows `w`.
    pub fn reparameterization_matrix(&self) -> Result<DMatrix<f64>> {
        let free = self.free_edges();
        let designated = self.designated_edges();
        let order = self.elimination_order()?;
        let mut a = DMatrix::zeros(self.edges.len(), free.len());
        for (k, &e) in free.iter().enumerate() {
            a[(e, k)] = 1.0;
        }
        for n in order {
            let d = designated[&n];
            let mut row = DVector::zeros(free.len());
            for e in self.outflows(n) {
                row += a.row(e).transpose();
            }
            for e in self.inflows(n) {
                if e != d {
                    row -= a.row(e).transpose();
                }
            }
            a.set_row(d, &row.transpose());
        }
        Ok(a)
    }

    /// Net inflow minus outflow at every internal node.
    ///
    /// At a node with a designated edge the balance is taken as that edge's
    /// flow minus the value [`reparameterize_flows`] would assign it, summed
    /// in the same order, so reparameterized flows give exact zeros.
    pub fn conservation_residual(&self, flows: &[f64]) -> Vec<f64> {
        let designated = self.designated_edges();
        self.internal_nodes()
            .map(|n| match designated.get(&n) {
                Some(&d) => flows[d] - self.designated_balance(n, d, flows),
                None => {
                    let inflow: f64 = self.inflows(n).iter().map(|&e| flows[e]).sum();
                    let outflow: f64 = self.outflows(n).iter().map(|&e| flows[e]).sum();
                    inflow - outflow
                }
            })
            .collect()
    }

    /// Outflow of `node` minus its inflows other than `designated`.
    fn designated_balance(&self, node: usize, designated: usize, flows: &[f64]) -> f64 {
        let mut v = 0.0;
        for e in self.outflows(node) {
            v += flows[e];
        }
        for e in self.inflows(node) {
            if e != designated {
                v -= flows[e];
            }
        }
        v
    }
}

/// Expands free flows to the full per-edge flow vector.
///
/// Each designated inflow is set to the node's outflow minus its other
/// inflows, so conservation holds at every internal node. Feasibility of the
/// result is not checked.
///
/// # Panics
/// If `free_flows` does not have one entry per free edge, or the designated
/// edges are cyclic (rejected by [`FlowNetworkSpec::validate`]).
pub fn reparameterize_flows(spec: &FlowNetworkSpec, free_flows: &[f64]) -> Vec<f64> {
    let free = spec.free_edges();
    assert_eq!(free_flows.len(), free.len(), "one value per free edge");
    let designated = spec.designated_edges();
    let order = spec.elimination_order().expect("designated edges must be acyclic");
    let mut z = vec![0.0; spec.edges.len()];
    for (k, &e) in free.iter().enumerate() {
        z[e] = free_flows[k];
    }
    for n in order {
        let d = designated[&n];
        z[d] = spec.designated_balance(n, d, &z);
    }
    z
}

/// Replicate flow measurements reduced to sufficient statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowData {
    pub n_obs: usize,
    /// Per-edge mean of the measurements.
    pub y_mean: Vec<f64>,
    /// Total within-edge sum of squares `Σ_s Σ_e (yˢ_e − ȳ_e)²`.
    pub y_ss: f64,
}

impl FlowData {
    /// `y` holds one row per replicate and one column per edge.
    pub fn from_observations(y: &DMatrix<f64>) -> Self {
        let n = y.nrows();
        let mean: Vec<f64> = (0..y.ncols()).map(|e| y.column(e).mean()).collect();
        let mut ss = 0.0;
        for e in 0..y.ncols() {
            for s in 0..n {
                ss += (y[(s, e)] - mean[e]).powi(2);
            }
        }
        Self {
            n_obs: n,
            y_mean: mean,
            y_ss: ss,
        }
    }
}

/// Noise variances and prior hyperparameters.
///
/// A variance given here is held fixed; otherwise it is sampled on the log
/// scale under its inverse-gamma prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowModelParams {
    pub sigma_y2: Option<f64>,
    pub sigma_c2: Option<f64>,
    pub beta_prior_scale: f64,
    pub z_prior_scale: f64,
    pub sigma_y2_prior: (f64, f64),
    pub sigma_c2_prior: (f64, f64),
}

impl Default for FlowModelParams {
    fn default() -> Self {
        Self {
            sigma_y2: None,
            sigma_c2: None,
            beta_prior_scale: 10.0,
            z_prior_scale: 10.0,
            sigma_y2_prior: (2.0, 5.0),
            sigma_c2_prior: (5.0, 2.0),
        }
    }
}

impl FlowModelParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        let fixed_ok = [self.sigma_y2, self.sigma_c2].iter().all(|v| v.is_none_or(pos));
        let scales_ok = [
            self.beta_prior_scale,
            self.z_prior_scale,
            self.sigma_y2_prior.0,
            self.sigma_y2_prior.1,
            self.sigma_c2_prior.0,
            self.sigma_c2_prior.1,
        ]
        .into_iter()
        .all(pos);
        if fixed_ok && scales_ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("flow model variances and prior scales must be positive".into()))
        }
    }
}

/// The bridged flow model. Sampling vector:
/// `[log β (E), log σ_y², log σ_c², w (F)]`, where the two variance blocks are
/// present only when not fixed.
#[derive(Debug, Clone)]
pub struct FlowModel {
    spec: FlowNetworkSpec,
    data: FlowData,
    params: FlowModelParams,
    barrier_t: f64,
    a: DMatrix<f64>,
    free: Vec<usize>,
    source_edge: Vec<f64>,
    layout: Layout,
    idx_sy: Option<usize>,
    idx_sc: Option<usize>,
}

/// Builds the bridged flow model.
pub fn flow_problem(
    spec: FlowNetworkSpec,
    data: FlowData,
    params: FlowModelParams,
    cfg: &KernelConfig,
) -> Result<FlowModel> {
    FlowModel::new(spec, data, params, cfg.barrier_t)
}

impl FlowModel {
    pub fn new(spec: FlowNetworkSpec, data: FlowData, params: FlowModelParams, barrier_t: f64) -> Result<Self> {
        spec.validate()?;
        params.validate()?;
        if !(barrier_t > 0.0 && barrier_t.is_finite()) {
            return Err(Error::InvalidArgument(format!("barrier_t must be > 0, got {barrier_t}")));
        }
        let e = spec.n_edges();
        if data.y_mean.len() != e {
            return Err(Error::InvalidArgument(format!(
                "flow data has {} edges, network has {e}",
                data.y_mean.len()
            )));
        }
        if data.n_obs == 0 || !(data.y_ss >= 0.0) || data.y_mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("flow data must have n_obs >= 1 and finite statistics".into()));
        }
        let a = spec.reparameterization_matrix()?;
        let free = spec.free_edges();
        let source_edge = (0..e).map(|k| if spec.is_source_edge(k) { 1.0 } else { 0.0 }).collect();
        let mut layout = Layout::new().push("beta", e, Transform::Log);
        let mut next = e;
        let mut idx_sy = None;
        let mut idx_sc = None;
        if params.sigma_y2.is_none() {
            layout = layout.push("sigma_y2", 1, Transform::Log);
            idx_sy = Some(next);
            next += 1;
        }
        if params.sigma_c2.is_none() {
            layout = layout.push("sigma_c2", 1, Transform::Log);
            idx_sc = Some(next);
        }
        layout = layout.push("z_free", free.len(), Transform::Identity);
        Ok(Self {
            spec,
            data,
            params,
            barrier_t,
            a,
            free,
            source_edge,
            layout,
            idx_sy,
            idx_sc,
        })
    }

    pub fn spec(&self) -> &FlowNetworkSpec {
        &self.spec
    }

    pub fn data(&self) -> &FlowData {
        &self.data
    }

    pub fn n_edges(&self) -> usize {
        self.spec.n_edges()
    }

    pub fn free_edges(&self) -> &[usize] {
        &self.free
    }

    pub fn reparameterization(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn barrier_t(&self) -> f64 {
        self.barrier_t
    }

    /// Full flows `A w`.
    pub fn full_flows(&self, w: &[f64]) -> DVector<f64> {
        &self.a * DVector::from_column_slice(w)
    }

    fn capacities(&self, beta: &[f64]) -> Vec<f64> {
        beta[..self.n_edges()].iter().map(|l| l.exp()).collect()
    }

    fn sigma_y2(&self, beta: &[f64]) -> f64 {
        self.idx_sy.map_or_else(|| self.params.sigma_y2.unwrap(), |i| beta[i].exp())
    }

    fn sigma_c2(&self, beta: &[f64]) -> f64 {
        self.idx_sc.map_or_else(|| self.params.sigma_c2.unwrap(), |i| beta[i].exp())
    }

    /// Per-edge `∂h/∂z_e` and `∂²h/∂z_e²`.
    fn edge_terms(&self, caps: &[f64], z: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let it = 1.0 / self.barrier_t;
        let e = caps.len();
        let mut u = DVector::zeros(e);
        let mut d = DVector::zeros(e);
        for k in 0..e {
            let slack = caps[k] - z[k];
            u[k] = -self.source_edge[k] - it / z[k] + it / slack;
            d[k] = it * (1.0 / (z[k] * z[k]) + 1.0 / (slack * slack));
        }
        (u, d)
    }

    /// `∂²h/∂z_e ∂log β_e`.
    fn cross_terms(&self, caps: &[f64], z: &DVector<f64>) -> Vec<f64> {
        let it = 1.0 / self.barrier_t;
        (0..caps.len())
            .map(|k| -it * caps[k] / (caps[k] - z[k]).powi(2))
            .collect()
    }

    /// A strictly feasible flow for capacities `caps`: half the maximum flow
    /// plus a small positive combination of source-sink paths through every
    /// edge.
    pub fn interior_flow(&self, caps: &[f64]) -> Result<DVector<f64>> {
        let e = caps.len();
        let lp = max_flow(&self.spec, caps);
        let mut cover = vec![0.0; e];
        for k in 0..e {
            for p in self.path_through(k) {
                cover[p] += 1.0;
            }
        }
        let eps = (0..e)
            .map(|k| 0.25 * caps[k] / cover[k])
            .fold(f64::INFINITY, f64::min);
        let z = DVector::from_iterator(e, (0..e).map(|k| 0.5 * lp.flow[k] + eps * cover[k]));
        if (0..e).any(|k| !(z[k] > 0.0 && z[k] < caps[k])) {
            return Err(Error::Initialization("could not construct an interior flow".into()));
        }
        Ok(z)
    }

    /// Edges of one source-sink path through edge `k`.
    fn path_through(&self, k: usize) -> Vec<usize> {
        let bfs = |start: usize, goal: usize, reverse: bool| -> Vec<usize> {
            let mut prev: HashMap<usize, usize> = HashMap::new();
            let mut queue = std::collections::VecDeque::from([start]);
            let mut seen = vec![start];
            while let Some(u) = queue.pop_front() {
                if u == goal {
                    break;
                }
                for (e, (a, b)) in self.spec.edges.iter().enumerate() {
                    let (from, to) = if reverse { (*b, *a) } else { (*a, *b) };
                    if from == u && !seen.contains(&to) {
                        seen.push(to);
                        prev.insert(to, e);
                        queue.push_back(to);
                    }
                }
            }
            let mut path = Vec::new();
            let mut v = goal;
            while v != start {
                let e = prev[&v];
                path.push(e);
                let (a, b) = self.spec.edges[e];
                v = if reverse { b } else { a };
            }
            path
        };
        let (u, v) = self.spec.edges[k];
        let mut path = bfs(self.spec.source, u, false);
        path.push(k);
        path.extend(bfs(self.spec.sink, v, true));
        path
    }

    /// Minimizes `h(β, ·)` over free flows by damped Newton, giving the
    /// barrier-shifted maximum flow `ẑ_β` as full per-edge flows.
    pub fn barrier_optimum(&self, caps: &[f64]) -> Result<DVector<f64>> {
        if caps.len() != self.n_edges() || caps.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidArgument("capacities must be positive, one per edge".into()));
        }
        let z0 = self.interior_flow(caps)?;
        let mut w = DVector::from_iterator(self.free.len(), self.free.iter().map(|&k| z0[k]));
        let it = 1.0 / self.barrier_t;
        let h = |z: &DVector<f64>| -> f64 {
            let mut v = 0.0;
            for k in 0..caps.len() {
                if !(z[k] > 0.0 && z[k] < caps[k]) {
                    return f64::INFINITY;
                }
                v -= self.source_edge[k] * z[k] + it * (z[k].ln() + (caps[k] - z[k]).ln());
            }
            v
        };
        for _ in 0..200 {
            let z = &self.a * &w;
            let (u, d) = self.edge_terms(caps, &z);
            let g = self.a.transpose() * u;
            let hess = self.a.transpose() * DMatrix::from_diagonal(&d) * &self.a;
            let step = hess
                .cholesky()
                .ok_or_else(|| Error::InvalidState("barrier Hessian is not positive definite".into()))?
                .solve(&g);
            let decrement = g.dot(&step);
            if decrement < 1e-20 {
                return Ok(z);
            }
            let f0 = h(&z);
            let mut s = 1.0;
            loop {
                let wt = &w - &step * s;
                let ft = h(&(&self.a * &wt));
                if ft <= f0 - 0.25 * s * decrement {
                    w = wt;
                    break;
                }
                s *= 0.5;
                if s < 1e-20 {
                    return Ok(z);
                }
            }
        }
        Ok(&self.a * &w)
    }
}

impl BridgeProblem for FlowModel {
    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn dim_beta(&self) -> usize {
        self.n_edges() + self.idx_sy.is_some() as usize + self.idx_sc.is_some() as usize
    }

    fn dim_z(&self) -> usize {
        self.free.len()
    }

    fn check_domain(&self, beta: &[f64], w: &[f64]) -> std::result::Result<(), DomainError> {
        if beta.iter().any(|v| !v.is_finite() || v.abs() > 700.0) {
            return Err(DomainError::new("beta", "log-scale parameter out of range"));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(DomainError::new("z_free", "non-finite flow"));
        }
        let caps = self.capacities(beta);
        let z = self.full_flows(w);
        for k in 0..caps.len() {
            if !(z[k] > 0.0) {
                return Err(DomainError::new("z_free", format!("flow on edge {k} is {} <= 0", z[k])));
            }
            if !(z[k] < caps[k]) {
                return Err(DomainError::new(
                    "z_free",
                    format!("flow on edge {k} ({}) reaches its capacity {}", z[k], caps[k]),
                ));
            }
        }
        Ok(())
    }

    fn log_g(&self, beta: &[f64], w: &[f64]) -> f64 {
        let caps = self.capacities(beta);
        let z = self.full_flows(w);
        let (sy, sc) = (self.sigma_y2(beta), self.sigma_c2(beta));
        let e = caps.len() as f64;
        let s = self.data.n_obs as f64;
        let mut fit = self.data.y_ss;
        let mut cap = 0.0;
        let mut zprior = 0.0;
        for k in 0..caps.len() {
            fit += s * (self.data.y_mean[k] - z[k]).powi(2);
            cap += (self.spec.designed_capacity[k] - caps[k]).powi(2);
            zprior += z[k] * z[k];
        }
        -fit / (2.0 * sy) - 0.5 * s * e * sy.ln() - cap / (2.0 * sc) - 0.5 * e * sc.ln()
            - zprior / (2.0 * self.params.z_prior_scale.powi(2))
    }

    fn grad_log_g(&self, beta: &[f64], w: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let caps = self.capacities(beta);
        let z = self.full_flows(w);
        let (sy, sc) = (self.sigma_y2(beta), self.sigma_c2(beta));
        let e = caps.len();
        let s = self.data.n_obs as f64;
        let zs2 = self.params.z_prior_scale.powi(2);
        let mut gb = DVector::zeros(beta.len());
        let mut gzfull = DVector::zeros(e);
        let mut fit = self.data.y_ss;
        let mut cap = 0.0;
        for k in 0..e {
            let r = self.data.y_mean[k] - z[k];
            fit += s * r * r;
            let rc = self.spec.designed_capacity[k] - caps[k];
            cap += rc * rc;
            gb[k] = rc / sc * caps[k];
            gzfull[k] = s * r / sy - z[k] / zs2;
        }
        if let Some(i) = self.idx_sy {
            gb[i] = fit / (2.0 * sy) - 0.5 * s * e as f64;
        }
        if let Some(i) = self.idx_sc {
            gb[i] = cap / (2.0 * sc) - 0.5 * e as f64;
        }
        (gb, self.a.transpose() * gzfull)
    }

    fn grad_h(&self, beta: &[f64], w: &[f64]) -> DVector<f64> {
        let caps = self.capacities(beta);
        let (u, _) = self.edge_terms(&caps, &self.full_flows(w));
        self.a.transpose() * u
    }

    fn hess_zz(&self, beta: &[f64], w: &[f64]) -> DMatrix<f64> {
        let caps = self.capacities(beta);
        let (_, d) = self.edge_terms(&caps, &self.full_flows(w));
        self.a.transpose() * DMatrix::from_diagonal(&d) * &self.a
    }

    fn hess_zbeta(&self, beta: &[f64], w: &[f64]) -> DMatrix<f64> {
        let caps = self.capacities(beta);
        let c = self.cross_terms(&caps, &self.full_flows(w));
        let mut out = DMatrix::zeros(self.free.len(), beta.len());
        for k in 0..caps.len() {
            let col = self.a.row(k).transpose() * c[k];
            out.column_mut(k).copy_from(&col);
        }
        out
    }

    fn kernel_vjp(&self, beta: &[f64], w: &[f64], v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let caps = self.capacities(beta);
        let z = self.full_flows(w);
        let (_, d) = self.edge_terms(&caps, &z);
        let c = self.cross_terms(&caps, &z);
        let av = &self.a * v;
        let mut kb = DVector::zeros(beta.len());
        for k in 0..caps.len() {
            kb[k] = c[k] * av[k];
        }
        (kb, self.a.transpose() * d.component_mul(&av))
    }

    fn log_prior(&self, beta: &[f64]) -> f64 {
        let bs2 = self.params.beta_prior_scale.powi(2);
        let mut lp = 0.0;
        for l in &beta[..self.n_edges()] {
            lp += -(2.0 * l).exp() / (2.0 * bs2) + l;
        }
        if let Some(i) = self.idx_sy {
            let (a, b) = self.params.sigma_y2_prior;
            lp += -a * beta[i] - b * (-beta[i]).exp();
        }
        if let Some(i) = self.idx_sc {
            let (a, b) = self.params.sigma_c2_prior;
            lp += -a * beta[i] - b * (-beta[i]).exp();
        }
        lp
    }

    fn grad_log_prior(&self, beta: &[f64]) -> DVector<f64> {
        let bs2 = self.params.beta_prior_scale.powi(2);
        let mut g = DVector::zeros(beta.len());
        for k in 0..self.n_edges() {
            g[k] = -(2.0 * beta[k]).exp() / bs2 + 1.0;
        }
        if let Some(i) = self.idx_sy {
            let (a, b) = self.params.sigma_y2_prior;
            g[i] = -a + b * (-beta[i]).exp();
        }
        if let Some(i) = self.idx_sc {
            let (a, b) = self.params.sigma_c2_prior;
            g[i] = -a + b * (-beta[i]).exp();
        }
        g
    }

    fn loss(&self, beta: &[f64], w: &[f64]) -> Option<f64> {
        let caps = self.capacities(beta);
        let z = self.full_flows(w);
        let it = 1.0 / self.barrier_t;
        let mut h = 0.0;
        for k in 0..caps.len() {
            h -= self.source_edge[k] * z[k] + it * (z[k].ln() + (caps[k] - z[k]).ln());
        }
        Some(h)
    }

    fn grad_loss(&self, beta: &[f64], w: &[f64]) -> Option<(DVector<f64>, DVector<f64>)> {
        let caps = self.capacities(beta);
        let z = self.full_flows(w);
        let it = 1.0 / self.barrier_t;
        let mut gb = DVector::zeros(beta.len());
        for k in 0..caps.len() {
            gb[k] = -it * caps[k] / (caps[k] - z[k]);
        }
        Some((gb, self.grad_h(beta, w)))
    }

    /// Capacities at the designed values, variances at a moment estimate
    /// (`σ_y²`) and one (`σ_c²`), and flows at the barrier optimum.
    fn initial_point(&self) -> Vec<f64> {
        let caps: Vec<f64> = self.spec.designed_capacity.clone();
        let mut out: Vec<f64> = caps.iter().map(|c| c.ln()).collect();
        if self.idx_sy.is_some() {
            let e = self.n_edges() as f64;
            let est = self.data.y_ss / (e * (self.data.n_obs as f64 - 1.0).max(1.0));
            out.push(est.max(1e-6).ln());
        }
        if self.idx_sc.is_some() {
            out.push(0.0);
        }
        match self.barrier_optimum(&caps) {
            Ok(z) => out.extend(self.free.iter().map(|&k| z[k])),
            Err(_) => out.extend(std::iter::repeat_n(0.0, self.free.len())),
        }
        out
    }

    fn derived_names(&self) -> Vec<String> {
        (0..self.n_edges()).map(|k| format!("flow[{k}]")).collect()
    }

    fn derived(&self, _beta: &[f64], w: &[f64]) -> Vec<f64> {
        self.full_flows(w).iter().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::{check_gradient, grad_log_posterior, log_posterior};

    fn diamond() -> FlowNetworkSpec {
        // s=0, a=1, b=2, t=3; edges sa, sb, ab, at, bt
        FlowNetworkSpec {
            nodes: vec![0, 1, 2, 3],
            source: 0,
            sink: 3,
            edges: vec![(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)],
            designed_capacity: vec![3.0, 3.0, 2.0, 2.0, 4.0],
            free_edge_map: None,
        }
    }

    fn model(params: FlowModelParams) -> FlowModel {
        let data = FlowData {
            n_obs: 50,
            y_mean: vec![2.0, 2.0, 1.0, 1.0, 3.0],
            y_ss: 12.0,
        };
        FlowModel::new(diamond(), data, params, 1000.0).unwrap()
    }

    #[test]
    fn diamond_reparameterization() {
        let s = diamond();
        assert_eq!(s.free_edges(), vec![2, 3, 4]);
        let z = reparameterize_flows(&s, &[1.0, 1.0, 3.0]);
        assert_eq!(z, vec![2.0, 2.0, 1.0, 1.0, 3.0]);
        assert_eq!(s.conservation_residual(&z), vec![0.0, 0.0]);
        let a = s.reparameterization_matrix().unwrap();
        let w = DVector::from_vec(vec![1.0, 1.0, 3.0]);
        assert_eq!((a * w).as_slice(), z.as_slice());
    }

    #[test]
    fn path_reparameterization() {
        let s = FlowNetworkSpec {
            nodes: vec![0, 1, 2],
            source: 0,
            sink: 2,
            edges: vec![(0, 1), (1, 2)],
            designed_capacity: vec![1.0, 1.0],
            free_edge_map: None,
        };
        assert_eq!(reparameterize_flows(&s, &[1.7]), vec![1.7, 1.7]);
    }

    #[test]
    fn invalid_networks_are_rejected() {
        let mut s = diamond();
        s.edges[3] = (1, 1);
        assert!(s.validate().is_err());
        let mut s = diamond();
        s.designed_capacity[0] = 0.0;
        assert!(s.validate().is_err());
        let mut s = diamond();
        s.free_edge_map = Some(BTreeMap::from([(1, 0), (2, 0)]));
        assert!(s.validate().is_err());
        let s = FlowNetworkSpec {
            nodes: vec![0, 1, 2],
            source: 0,
            sink: 2,
            edges: vec![(0, 1)],
            designed_capacity: vec![1.0],
            free_edge_map: None,
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn explicit_free_edge_map() {
        let mut s = diamond();
        s.free_edge_map = Some(BTreeMap::from([(1, 0), (2, 2)]));
        s.validate().unwrap();
        assert_eq!(s.free_edges(), vec![1, 3, 4]);
        let z = reparameterize_flows(&s, &[2.0, 1.0, 3.0]);
        assert_eq!(s.conservation_residual(&z), vec![0.0, 0.0]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = model(FlowModelParams::default());
        let caps = [3.0, 3.0, 2.0, 2.0, 4.0];
        let z = m.interior_flow(&caps).unwrap();
        let mut theta: Vec<f64> = caps.iter().map(|c: &f64| c.ln()).collect();
        theta.extend([0.3, -0.4]);
        theta.extend(m.free_edges().iter().map(|&k| z[k]));
        let cfg = KernelConfig::default();
        let f = |t: &[f64]| {
            let (b, z) = m.split(t);
            log_posterior(&m, b, z, &cfg).ok()
        };
        let g = |t: &[f64]| {
            let (b, z) = m.split(t);
            grad_log_posterior(&m, b, z, &cfg).unwrap().as_slice().to_vec()
        };
        let report = check_gradient(f, g, &theta, 1e-6, 1e-5);
        assert!(report.passed(), "{:?}", report);
    }

    #[test]
    fn barrier_optimum_is_stationary_and_near_lp() {
        let m = model(FlowModelParams::default());
        let caps = [3.0, 3.0, 2.0, 2.0, 4.0];
        let z = m.barrier_optimum(&caps).unwrap();
        let beta: Vec<f64> = caps.iter().map(|c: &f64| c.ln()).collect();
        let mut full = beta.clone();
        full.extend([0.0, 0.0]);
        let w: Vec<f64> = m.free_edges().iter().map(|&k| z[k]).collect();
        assert!(m.grad_h(&full, &w).norm() < 1e-8);
        let lp = max_flow(m.spec(), &caps);
        let total: f64 = (0..5).filter(|&k| m.spec().is_source_edge(k)).map(|k| z[k]).sum();
        assert!((total - lp.value).abs() < 0.05, "{total} vs {}", lp.value);
    }

    #[test]
    fn infeasible_flows_are_domain_errors() {
        let m = model(FlowModelParams::default());
        let mut theta = m.initial_point();
        let n = theta.len();
        theta[n - 1] = 10.0;
        let (b, z) = m.split(&theta);
        assert_eq!(m.check_domain(b, z).unwrap_err().block, "z_free");
    }

    #[test]
    fn fixed_variances_shrink_the_layout() {
        let m = model(FlowModelParams {
            sigma_y2: Some(0.1),
            sigma_c2: Some(0.25),
            ..Default::default()
        });
        assert_eq!(m.dim_beta(), 5);
        assert!(m.layout().block("sigma_y2").is_none());
    }
}
