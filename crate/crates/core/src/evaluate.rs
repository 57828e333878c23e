//! Feasibility and objective of a candidate stop subset.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::metrics::{MetricsBundle, UNREACHABLE};
use crate::rational::{scaled, serde_rational, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViolationKind {
    /// A zone's access time exceeds `k[u] * d_acc(u)`.
    Access,
    /// A zone pair's trip time exceeds `alpha` times its baseline.
    Delay,
    /// Too many stops kept.
    Cardinality,
    /// No kept stop at all for the zone.
    Coverage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subject {
    Zone(String),
    Pair(String, String),
    Count(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub subject: Subject,
    /// Amount by which the left-hand side exceeds the bound.
    #[serde(with = "serde_rational")]
    pub margin: Rational,
}

/// An evaluated subset of kept stops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopSelection {
    /// Kept stop indices, ascending.
    pub kept: Vec<usize>,
    /// Access time to the nearest kept stop per zone; `UNREACHABLE` when nothing is kept.
    pub d_acc_sol: Vec<i64>,
    /// Total weighted travelling time; `UNREACHABLE` when nothing is kept.
    pub twt: i64,
    pub delay: i64,
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

impl StopSelection {
    pub fn contains(&self, stop: usize) -> bool {
        self.kept.binary_search(&stop).is_ok()
    }

    /// Weighted access part of the objective (twt without the in-network constant).
    pub fn weighted_access(&self, metrics: &MetricsBundle) -> i64 {
        if self.twt == UNREACHABLE {
            UNREACHABLE
        } else {
            self.twt - metrics.pc_const
        }
    }
}

/// Maximum number of kept stops: `n_t - ceil(p_elim * n_t)`.
pub fn budget(inst: &Instance) -> usize {
    let n = inst.n_stops() as i64;
    let deletions = scaled(inst.params.p_elim, n).ceil().to_integer();
    (n - deletions).max(0) as usize
}

/// Minimum number of stops to delete, `ceil(p_elim * n_t)`.
pub fn required_deletions(inst: &Instance) -> usize {
    inst.n_stops() - budget(inst)
}

/// Access time from `zone` to its nearest stop in `kept`.
pub fn nearest_kept(metrics: &MetricsBundle, zone: usize, kept: &[usize]) -> i64 {
    kept.iter().map(|&v| metrics.access(zone, v)).min().unwrap_or(UNREACHABLE)
}

pub fn evaluate_selection(metrics: &MetricsBundle, kept: &[usize]) -> Result<StopSelection> {
    let n_t = metrics.n_stops();
    if let Some(&bad) = kept.iter().find(|&&v| v >= n_t) {
        return Err(Error::UnknownStop(format!("#{bad}")));
    }
    let mut kept = kept.to_vec();
    kept.sort_unstable();
    kept.dedup();

    let n_u = metrics.n_zones();
    let d_acc_sol: Vec<i64> = (0..n_u).map(|u| nearest_kept(metrics, u, &kept)).collect();
    let mut violations = Vec::new();

    if kept.is_empty() {
        for u in 0..n_u {
            violations.push(Violation {
                kind: ViolationKind::Coverage,
                subject: Subject::Zone(metrics.zone_id(u).to_string()),
                margin: Rational::from_integer(1),
            });
        }
    } else {
        for u in 0..n_u {
            let bound = scaled(metrics.k(u), metrics.d_acc[u]);
            let excess = Rational::from_integer(d_acc_sol[u]) - bound;
            if excess > Rational::from_integer(0) {
                violations.push(Violation {
                    kind: ViolationKind::Access,
                    subject: Subject::Zone(metrics.zone_id(u).to_string()),
                    margin: excess,
                });
            }
        }
        let alpha = metrics.alpha();
        for pair in &metrics.pairs {
            let lhs = d_acc_sol[pair.u1] + d_acc_sol[pair.u2] + pair.pc;
            let excess = Rational::from_integer(lhs) - scaled(alpha, pair.opt);
            if excess > Rational::from_integer(0) {
                violations.push(Violation {
                    kind: ViolationKind::Delay,
                    subject: Subject::Pair(
                        metrics.zone_id(pair.u1).to_string(),
                        metrics.zone_id(pair.u2).to_string(),
                    ),
                    margin: excess,
                });
            }
        }
    }
    if kept.len() > metrics.budget {
        violations.push(Violation {
            kind: ViolationKind::Cardinality,
            subject: Subject::Count(kept.len()),
            margin: Rational::from_integer((kept.len() - metrics.budget) as i64),
        });
    }

    let twt = if kept.is_empty() {
        UNREACHABLE
    } else {
        (0..n_u).map(|u| metrics.weight[u] * d_acc_sol[u]).sum::<i64>() + metrics.pc_const
    };
    let delay = if twt == UNREACHABLE { UNREACHABLE } else { twt - metrics.twt_baseline };
    Ok(StopSelection { kept, d_acc_sol, twt, delay, feasible: violations.is_empty(), violations })
}

/// Evaluates a kept set given by stop ids.
pub fn evaluate_ids<S: AsRef<str>>(metrics: &MetricsBundle, ids: &[S]) -> Result<StopSelection> {
    let kept = metrics.instance.resolve_stops(ids)?;
    evaluate_selection(metrics, &kept)
}

/// On-disk solution record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub kept: Vec<String>,
    pub twt: Option<i64>,
    pub delay: Option<i64>,
    pub feasible: bool,
    pub violations: Vec<Violation>,
    pub params_echo: Value,
    pub instance_hash: String,
}

impl SolutionFile {
    pub fn new(metrics: &MetricsBundle, selection: &StopSelection) -> Self {
        let mut kept = selection.kept.clone();
        metrics.sort_by_id(&mut kept);
        let finite = |v: i64| (v != UNREACHABLE).then_some(v);
        SolutionFile {
            kept: kept.iter().map(|&v| metrics.stop_id(v).to_string()).collect(),
            twt: finite(selection.twt),
            delay: finite(selection.delay),
            feasible: selection.feasible,
            violations: selection.violations.clone(),
            params_echo: metrics.instance.params_json(),
            instance_hash: metrics.instance.content_hash(),
        }
    }
}
