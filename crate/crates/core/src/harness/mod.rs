//! Monte Carlo experiment harness: scenarios, benchmark schemes, metrics,
//! orchestration, reports and the oracle checks.

pub mod baselines;
pub mod metrics;
pub mod montecarlo;
pub mod report;
pub mod scenario;
pub mod trial;
pub mod validate;

pub use montecarlo::{run_monte_carlo, run_sweep, MonteCarloOptions, Report, SweepParam};
pub use scenario::{gen_scenario, TrialSeed};
pub use trial::{Algorithm, TrialResult, TrialStatus};
