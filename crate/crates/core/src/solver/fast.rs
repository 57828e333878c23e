//! Mask-based evaluation used inside the search loops.
//!
//! A zone is served by a kept stop of its candidate set or violates its
//! access bound; delay pairs implied by the access bounds are dropped up
//! front, so only pairs that can actually bind are checked.

use crate::metrics::{MetricsBundle, UNREACHABLE};
use crate::rational::{scaled, Rational};

#[derive(Debug, Clone, Copy)]
pub(crate) struct BindingPair {
    pub u1: usize,
    pub u2: usize,
    /// Largest admissible `d_sol(u1) + d_sol(u2)`.
    pub cap: i64,
}

pub(crate) struct FastEval<'a> {
    pub m: &'a MetricsBundle,
    /// Candidate stops and access times per zone, ascending.
    pub cand: Vec<Vec<(usize, i64)>>,
    pub pairs: Vec<BindingPair>,
    /// Zones listing each stop as a candidate.
    pub zones_of: Vec<Vec<usize>>,
}

/// Feasibility-first score: fewer violated constraints wins, then the
/// weighted access time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) struct Score {
    pub violations: usize,
    pub access: i64,
}

impl Score {
    pub fn feasible(self) -> bool {
        self.violations == 0
    }
}

fn floor_i64(value: Rational) -> i64 {
    value.floor().to_integer()
}

impl<'a> FastEval<'a> {
    pub fn new(m: &'a MetricsBundle) -> Self {
        let (n_t, n_u) = (m.n_stops(), m.n_zones());
        let cand: Vec<Vec<(usize, i64)>> = (0..n_u)
            .map(|u| m.candidates[u].iter().map(|&v| (v, m.access(u, v))).collect())
            .collect();
        let alpha = m.alpha();
        let mut pairs = Vec::new();
        for p in &m.pairs {
            let rhs = scaled(alpha, p.opt) - Rational::from_integer(p.pc);
            let implied = scaled(m.k(p.u1), m.d_acc[p.u1]) + scaled(m.k(p.u2), m.d_acc[p.u2]);
            if rhs < implied {
                pairs.push(BindingPair { u1: p.u1, u2: p.u2, cap: floor_i64(rhs) });
            }
        }
        let mut zones_of = vec![Vec::new(); n_t];
        for (u, c) in cand.iter().enumerate() {
            for &(v, _) in c {
                zones_of[v].push(u);
            }
        }
        FastEval { m, cand, pairs, zones_of }
    }

    /// Nearest kept candidate time per zone, `UNREACHABLE` when none is kept.
    pub fn serve(&self, kept: &[bool]) -> Vec<i64> {
        self.cand
            .iter()
            .map(|c| c.iter().find(|&&(v, _)| kept[v]).map_or(UNREACHABLE, |&(_, d)| d))
            .collect()
    }

    pub fn score_served(&self, d: &[i64]) -> Score {
        let mut violations = 0;
        let mut access = 0i64;
        for (u, &t) in d.iter().enumerate() {
            if t == UNREACHABLE {
                violations += 1;
            } else {
                access += self.m.weight[u] * t;
            }
        }
        for p in &self.pairs {
            let (a, b) = (d[p.u1], d[p.u2]);
            if a != UNREACHABLE && b != UNREACHABLE && a + b > p.cap {
                violations += 1;
            }
        }
        Score { violations, access }
    }

    /// Score ignoring the cardinality constraint.
    pub fn score(&self, kept: &[bool]) -> Score {
        self.score_served(&self.serve(kept))
    }
}
