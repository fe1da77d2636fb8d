//! Gradient-estimator statistics: MSE decompositions, optimal mixing weights
//! and the variance-versus-bias diagnostic.

mod diagnostics;
mod lambda;
mod mse;

pub use diagnostics::{benefit_diagnostic, bias_factors, finite_diff_check, BenefitReport};
pub use lambda::{
    adaptive_lambda_update, lambda_star, mixed_mse, momentum_step, LambdaEstimate, SplitMoments, DEGENERATE_TOL,
    NORM_FLOOR,
};
pub use mse::{
    empirical_mean_gradient, exact_moments, mse_decomposition_empirical, mse_decomposition_exact, EmpiricalMse,
    GradSampleSet, MseDecomposition, NodeMoments,
};
