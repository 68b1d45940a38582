//! Metrics, robustness sweeps, timing and report files.

mod metrics;
mod report;
mod solvers;
mod sweep;
mod timing;

pub use metrics::{direct_accuracy, neighbor_accuracy, neighbor_accuracy_masked};
pub use report::{
    emit_report, mean_stderr, Aggregate, EvalRecord, EvalReport, MISSING_DENOMINATOR,
    NEIGHBOR_METRIC, REPORT_SCHEMA,
};
pub use solvers::{GreedySolver, HungPermSolver, IdentitySolver, MatcherSolver, Solver};
pub use sweep::{evaluate_one, regime_seed, robustness_sweep, Regime};
pub use timing::{time_solver, TimingReport};
