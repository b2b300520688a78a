//! Maximum flow on the bundled network: the exact LP solution, its minimum
//! cut certificate, and the interior optimum of the log-barrier objective.

use gradbridge::experiment::simulate::bundled_network;
use gradbridge::lp::{max_flow, min_cut_by_enumeration, verify_cut};
use gradbridge::bridge::KernelConfig;
use gradbridge::models::{flow_problem, FlowData, FlowModelParams};
use nalgebra::DMatrix;

fn main() -> gradbridge::Result<()> {
    let spec = bundled_network();
    let caps = spec.designed_capacity.clone();
    let sol = max_flow(&spec, &caps);
    println!("max flow {:.3}, cut edges {:?}", sol.value, sol.cut_edges);
    println!("min cut by enumeration {:.3}", min_cut_by_enumeration(&spec, &caps));
    println!("certificate valid: {}", verify_cut(&spec, &caps, &sol));

    let data = FlowData::from_observations(&DMatrix::from_row_slice(1, caps.len(), &sol.flow));
    let model = flow_problem(spec.clone(), data, FlowModelParams::default(), &KernelConfig::default())?;
    let interior = model.barrier_optimum(&caps)?;
    println!("{:>4} {:>7} {:>8} {:>9} {:>9}", "edge", "(i,j)", "cap", "lp flow", "barrier");
    for (k, &(i, j)) in spec.edges.iter().enumerate() {
        println!(
            "{k:>4} {:>7} {:>8.3} {:>9.3} {:>9.3}",
            format!("({i},{j})"),
            caps[k],
            sol.flow[k],
            interior[k]
        );
    }
    Ok(())
}
