//! Gain pre-estimation and alternating constrained estimation of
//! reflectance and illumination coefficients.

mod estimate;
mod gains;
pub mod nnls;
pub mod qp;

pub use estimate::{
    evaluate_cost, joint_estimate, reconstruct_result, solve_alpha, solve_beta, EstimationConfig, EstimationResult,
    IterationRecord, JointProblem, ModelBases, ReconstructedCurves,
};
pub use gains::{estimate_gains, estimate_observation_gains};
