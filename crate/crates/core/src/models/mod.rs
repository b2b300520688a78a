//! Concrete bridged models and their comparators.

pub mod calibration;
pub mod flow;
pub mod gibbs;
pub mod latent_quadratic;
pub mod normal_means;
pub mod procrustes;
pub mod toy;

pub use calibration::{calibration_m, marginal_increment};
pub use flow::{flow_problem, reparameterize_flows, FlowData, FlowModel, FlowModelParams, FlowNetworkSpec};
pub use gibbs::{gibbs_baseline, GibbsBaseline, GibbsVariant};
pub use latent_quadratic::{gaussian_kernel_matrix, latent_quadratic_dual, solve_dual_root, LatentQuadraticModel};
pub use normal_means::{conditional_z_posterior_params, NormalMeansModel};
pub use procrustes::{
    align_to_first, maximize_procrustes_dual, procrustes_dual_gradient, procrustes_dual_value,
    procrustes_shrinkage_kernel, procrustes_svd_solution, ProcrustesModel, ProcrustesSolution,
};
pub use toy::ToyModel;
