//! Exhaustive, heuristic and exact search over kept-stop subsets.

mod bnb;
mod fast;
mod greedy;
mod oracle;

use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::evaluate::{SolutionFile, StopSelection};
use crate::metrics::MetricsBundle;
use crate::rational::Rational;

pub use bnb::{bnb_solve, root_simple_bound};
pub use greedy::{greedy_solve, greedy_solve_with, GreedyConfig};
pub use oracle::{oracle_solve, ORACLE_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Proof {
    Optimal,
    GapBounded,
    HeuristicOnly,
    InfeasibleProven,
}

impl Proof {
    pub fn as_str(self) -> &'static str {
        match self {
            Proof::Optimal => "optimal",
            Proof::GapBounded => "gap-bounded",
            Proof::HeuristicOnly => "heuristic-only",
            Proof::InfeasibleProven => "infeasible-proven",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    /// `None` means no feasible selection was found.
    pub best: Option<StopSelection>,
    pub proof: Proof,
    /// Certified lower bound on the weighted access objective (twt minus the
    /// in-network constant). Equal to the best objective when optimal.
    pub lower_bound: Option<i64>,
    pub nodes_explored: u64,
    pub wall_time: Duration,
    pub seed: u64,
    /// Zone whose candidate set cannot be served, when that is the reason for infeasibility.
    pub infeasible_zone: Option<String>,
}

impl SolveReport {
    pub fn twt(&self) -> Option<i64> {
        self.best.as_ref().map(|s| s.twt)
    }

    pub fn is_infeasible(&self) -> bool {
        self.best.is_none()
    }

    pub fn to_json(&self, metrics: &MetricsBundle) -> Value {
        let best = match &self.best {
            Some(sel) => serde_json::to_value(SolutionFile::new(metrics, sel)).expect("solution serializes"),
            None => json!("infeasible"),
        };
        json!({
            "best": best,
            "proof": self.proof.as_str(),
            "lower_bound": self.lower_bound,
            "twt_lower_bound": self.lower_bound.map(|lb| lb + metrics.pc_const),
            "nodes_explored": self.nodes_explored,
            "wall_time_ms": self.wall_time.as_secs_f64() * 1e3,
            "seed": self.seed,
            "infeasible_zone": self.infeasible_zone,
        })
    }
}

/// Snapshot passed to progress observers; both values are twt (constant included).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub nodes_explored: u64,
    pub incumbent_twt: Option<i64>,
    pub lower_bound: Option<i64>,
}

pub type ProgressFn = Arc<dyn Fn(Progress) + Send + Sync>;

#[derive(Clone)]
pub struct BnbConfig {
    pub time_limit: Option<Duration>,
    /// Stop once `(incumbent - bound) <= gap_target * incumbent`.
    pub gap_target: Rational,
    pub greedy: GreedyConfig,
    pub progress: Option<ProgressFn>,
    /// Observer call interval in explored nodes.
    pub progress_every: u64,
    /// Checked between nodes; a set flag ends the search like a time limit.
    pub cancel: Option<Arc<AtomicBool>>,
}

impl Default for BnbConfig {
    fn default() -> Self {
        BnbConfig {
            time_limit: None,
            gap_target: Rational::from_integer(0),
            greedy: GreedyConfig::default(),
            progress: None,
            progress_every: 1000,
            cancel: None,
        }
    }
}

impl std::fmt::Debug for BnbConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BnbConfig")
            .field("time_limit", &self.time_limit)
            .field("gap_target", &self.gap_target)
            .field("greedy", &self.greedy)
            .field("progress", &self.progress.is_some())
            .field("progress_every", &self.progress_every)
            .finish()
    }
}
