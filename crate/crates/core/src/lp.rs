//! Exact maximum flow by shortest augmenting paths, with a min-cut certificate.

use crate::models::FlowNetworkSpec;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Residual capacities at or below this are treated as saturated.
pub const RESIDUAL_TOL: f64 = 1e-12;

const CERT_ATOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSolution {
    pub value: f64,
    /// Per-edge flow, in spec edge order.
    pub flow: Vec<f64>,
    /// `source_side[v]` for node index `v`: reachable from the source in the
    /// final residual graph.
    pub source_side: Vec<bool>,
    /// Edges crossing from the source side to the sink side.
    pub cut_edges: Vec<usize>,
}

impl FlowSolution {
    pub fn cut_capacity(&self, capacities: &[f64]) -> f64 {
        self.cut_edges.iter().map(|&e| capacities[e]).sum()
    }
}

struct Arc {
    to: usize,
    edge: usize,
    forward: bool,
}

/// Edmonds–Karp maximum flow for the given per-edge capacities.
///
/// # Panics
/// If `capacities` has the wrong length or a negative or non-finite entry.
pub fn max_flow(spec: &FlowNetworkSpec, capacities: &[f64]) -> FlowSolution {
    assert_eq!(capacities.len(), spec.edges.len(), "one capacity per edge");
    assert!(
        capacities.iter().all(|c| c.is_finite() && *c >= 0.0),
        "capacities must be finite and non-negative"
    );
    let n = spec.nodes.len();
    let idx = spec.node_index();
    let (s, t) = (idx[&spec.source], idx[&spec.sink]);
    let mut adj: Vec<Vec<Arc>> = (0..n).map(|_| Vec::new()).collect();
    for (e, (u, v)) in spec.edges.iter().enumerate() {
        let (u, v) = (idx[u], idx[v]);
        adj[u].push(Arc { to: v, edge: e, forward: true });
        adj[v].push(Arc { to: u, edge: e, forward: false });
    }
    let mut flow = vec![0.0; spec.edges.len()];
    let residual = |a: &Arc, flow: &[f64]| {
        if a.forward {
            capacities[a.edge] - flow[a.edge]
        } else {
            flow[a.edge]
        }
    };

    loop {
        // BFS for a shortest augmenting path
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut seen = vec![false; n];
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            if u == t {
                break;
            }
            for (k, a) in adj[u].iter().enumerate() {
                if !seen[a.to] && residual(a, &flow) > RESIDUAL_TOL {
                    seen[a.to] = true;
                    parent[a.to] = Some((u, k));
                    queue.push_back(a.to);
                }
            }
        }
        if !seen[t] {
            let cut_edges = spec
                .edges
                .iter()
                .enumerate()
                .filter(|(_, (u, v))| seen[idx[u]] && !seen[idx[v]])
                .map(|(e, _)| e)
                .collect();
            let value = source_net_outflow(spec, &flow);
            return FlowSolution {
                value,
                flow,
                source_side: seen,
                cut_edges,
            };
        }
        let mut bottleneck = f64::INFINITY;
        let mut v = t;
        while let Some((u, k)) = parent[v] {
            bottleneck = bottleneck.min(residual(&adj[u][k], &flow));
            v = u;
        }
        let mut v = t;
        while let Some((u, k)) = parent[v] {
            let a = &adj[u][k];
            if a.forward {
                flow[a.edge] = (flow[a.edge] + bottleneck).min(capacities[a.edge]);
            } else {
                flow[a.edge] = (flow[a.edge] - bottleneck).max(0.0);
            }
            v = u;
        }
    }
}

fn source_net_outflow(spec: &FlowNetworkSpec, flow: &[f64]) -> f64 {
    spec.edges
        .iter()
        .zip(flow)
        .map(|((u, v), f)| {
            if *u == spec.source {
                *f
            } else if *v == spec.source {
                -*f
            } else {
                0.0
            }
        })
        .sum()
}

/// Checks feasibility, conservation and that the certified cut capacity
/// equals the flow value (absolute tolerance `1e-9`).
pub fn verify_cut(spec: &FlowNetworkSpec, capacities: &[f64], solution: &FlowSolution) -> bool {
    let m = spec.edges.len();
    if solution.flow.len() != m || capacities.len() != m || solution.source_side.len() != spec.nodes.len() {
        return false;
    }
    for (f, c) in solution.flow.iter().zip(capacities) {
        if !(*f >= -CERT_ATOL && *f <= c + CERT_ATOL) {
            return false;
        }
    }
    let idx = spec.node_index();
    let mut net = vec![0.0; spec.nodes.len()];
    for ((u, v), f) in spec.edges.iter().zip(&solution.flow) {
        net[idx[u]] += f;
        net[idx[v]] -= f;
    }
    for node in &spec.nodes {
        if *node != spec.source && *node != spec.sink && net[idx[node]].abs() > CERT_ATOL {
            return false;
        }
    }
    let out_s = net[idx[&spec.source]];
    let in_t = -net[idx[&spec.sink]];
    if (out_s - solution.value).abs() > CERT_ATOL || (in_t - solution.value).abs() > CERT_ATOL {
        return false;
    }
    if !solution.source_side[idx[&spec.source]] || solution.source_side[idx[&spec.sink]] {
        return false;
    }
    let side = |n: &usize| solution.source_side[idx[n]];
    let crossing: Vec<usize> = (0..m)
        .filter(|&e| side(&spec.edges[e].0) && !side(&spec.edges[e].1))
        .collect();
    if crossing != solution.cut_edges {
        return false;
    }
    (solution.cut_capacity(capacities) - solution.value).abs() <= CERT_ATOL
}

/// Minimum s–t cut capacity by enumerating every node bipartition.
///
/// # Panics
/// If the network has more than 22 nodes.
pub fn min_cut_by_enumeration(spec: &FlowNetworkSpec, capacities: &[f64]) -> f64 {
    let idx = spec.node_index();
    let internal: Vec<usize> = spec
        .nodes
        .iter()
        .filter(|n| **n != spec.source && **n != spec.sink)
        .map(|n| idx[n])
        .collect();
    assert!(internal.len() <= 20, "too many nodes to enumerate");
    let mut best = f64::INFINITY;
    for mask in 0u32..(1u32 << internal.len()) {
        let mut side = vec![false; spec.nodes.len()];
        side[idx[&spec.source]] = true;
        for (b, &v) in internal.iter().enumerate() {
            if mask & (1 << b) != 0 {
                side[v] = true;
            }
        }
        let cap: f64 = spec
            .edges
            .iter()
            .zip(capacities)
            .filter(|((u, v), _)| side[idx[u]] && !side[idx[v]])
            .map(|(_, c)| *c)
            .sum();
        best = best.min(cap);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(nodes: usize, edges: &[(usize, usize)]) -> FlowNetworkSpec {
        FlowNetworkSpec {
            nodes: (0..nodes).collect(),
            source: 0,
            sink: nodes - 1,
            edges: edges.to_vec(),
            designed_capacity: vec![1.0; edges.len()],
            free_edge_map: None,
        }
    }

    fn diamond() -> FlowNetworkSpec {
        // s=0, a=1, b=2, t=3
        spec(4, &[(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)])
    }

    #[test]
    fn single_edge() {
        let s = spec(2, &[(0, 1)]);
        let sol = max_flow(&s, &[3.0]);
        assert_eq!(sol.value, 3.0);
        assert!(verify_cut(&s, &[3.0], &sol));
    }

    #[test]
    fn diamond_value_and_certificate() {
        let s = diamond();
        let caps = [2.0, 2.0, 1.0, 1.0, 3.0];
        let sol = max_flow(&s, &caps);
        assert!((sol.value - 4.0).abs() < 1e-12);
        assert!(verify_cut(&s, &caps, &sol));
        assert!((min_cut_by_enumeration(&s, &caps) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_capacities() {
        let s = diamond();
        let caps = [0.0; 5];
        let sol = max_flow(&s, &caps);
        assert_eq!(sol.value, 0.0);
        assert!(verify_cut(&s, &caps, &sol));
    }

    #[test]
    fn conservation_violation_is_rejected() {
        let s = diamond();
        let caps = [2.0, 2.0, 1.0, 1.0, 3.0];
        let mut sol = max_flow(&s, &caps);
        sol.flow[2] += 0.5;
        assert!(!verify_cut(&s, &caps, &sol));
    }

    #[test]
    fn unreachable_sink() {
        let s = spec(3, &[(0, 1)]);
        let sol = max_flow(&s, &[2.0]);
        assert_eq!(sol.value, 0.0);
        assert!(sol.cut_edges.is_empty());
    }
}
