//! Candidate embeddings of `A_k` into low-dimensional ℓ_p: a Gaussian
//! random-projection baseline, a soft-max log-ratio stress minimizer, and
//! the sweep that runs both over a parameter grid.

mod projection;
mod stress;
mod sweep;

pub use projection::{gaussian_matrix, gaussian_projection, project_with_matrix};
pub use stress::{
    stress_minimize, stress_minimize_detailed, surrogate_gradient, surrogate_value, Decay, Init,
    OptimizerConfig, RestartSummary, StressProblem, StressRun, STRESS_MAX_POINTS,
};
pub use sweep::{
    tradeoff_sweep, tradeoff_sweep_with, write_sweep_csv, Method, SweepGrid, SweepResult, SweepRow,
    SWEEP_CSV_HEADER,
};
