//! Stop-network reduction for public transportation.
//!
//! Given a stop graph, walking access times from urban zones and an
//! origin/destination demand matrix, select a reduced set of stops that
//! minimizes the total weighted travelling time while bounding the access
//! time increase per zone, the trip delay per zone pair and the number of
//! kept stops. Line-level keep/delete scenarios are derived from a solved
//! selection.
//!
//! All times are integers internally: decimal input times are multiplied
//! by the instance `time_scale` and rounded half-up at load time.

pub mod error;
pub mod evaluate;
pub mod instance;
pub mod metrics;
pub mod milp;
pub mod rational;
pub mod report;
pub mod scenario;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use evaluate::{budget, evaluate_selection, StopSelection, Violation, ViolationKind};
pub use instance::{load_instance, validate_instance, Format, Instance, Parameters, PairSet};
pub use metrics::{compute_metrics, MetricsBundle, UNREACHABLE};
pub use milp::{build_milp, decode_assignment, export_lp, MilpModel};
pub use rational::Rational;
pub use scenario::{build_scenario, histogram, line_percentages, scenario_sweep, ScenarioResult};
pub use solver::{bnb_solve, greedy_solve, oracle_solve, BnbConfig, Proof, SolveReport};

/// First 16 hex characters of the SHA-256 digest of `bytes`.
pub fn content_hash(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..8])
}
