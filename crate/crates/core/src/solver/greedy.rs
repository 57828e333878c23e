use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fast::{FastEval, Score};
use super::{Proof, SolveReport};
use crate::evaluate::evaluate_selection;
use crate::metrics::MetricsBundle;

#[derive(Debug, Clone, Default)]
pub struct GreedyConfig {
    /// Perturb-and-descend rounds after the first local optimum.
    pub restarts: usize,
    pub seed: u64,
}

pub fn greedy_solve(metrics: &MetricsBundle) -> SolveReport {
    greedy_solve_with(metrics, &GreedyConfig::default())
}

pub fn greedy_solve_with(metrics: &MetricsBundle, config: &GreedyConfig) -> SolveReport {
    let start = Instant::now();
    let fast = FastEval::new(metrics);
    let (mask, optimal) = match greedy_mask(&fast, config) {
        Some((mask, optimal)) => (Some(mask), optimal),
        None => (None, false),
    };
    let best = mask.map(|mask| {
        let kept: Vec<usize> = (0..mask.len()).filter(|&v| mask[v]).collect();
        evaluate_selection(metrics, &kept).expect("indices in range")
    });
    SolveReport {
        proof: if optimal { Proof::Optimal } else { Proof::HeuristicOnly },
        lower_bound: if optimal { best.as_ref().map(|s| s.weighted_access(metrics)) } else { None },
        best,
        nodes_explored: 0,
        wall_time: start.elapsed(),
        seed: config.seed,
        infeasible_zone: None,
    }
}

/// Feasible kept mask within budget, flagged when provably optimal.
pub(crate) fn greedy_mask(fast: &FastEval, config: &GreedyConfig) -> Option<(Vec<bool>, bool)> {
    let m = fast.m;
    let n = m.n_stops();
    let budget = m.budget;

    let mut nearest = vec![false; n];
    for &v in &m.acc {
        nearest[v] = true;
    }
    if count(&nearest) <= budget && fast.score(&nearest).feasible() {
        // every zone at its unrestricted nearest stop: the objective equals its floor
        return Some((nearest, true));
    }

    let mut kept = delete_down(fast).or_else(|| construct(fast))?;
    descend(fast, &mut kept, budget);
    let mut best_score = fast.score(&kept);

    if config.restarts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for _ in 0..config.restarts {
            let mut trial = kept.clone();
            let kicks = (count(&trial) / 4).max(1);
            for _ in 0..kicks {
                let ins: Vec<usize> = (0..n).filter(|&v| trial[v]).collect();
                let outs: Vec<usize> = (0..n).filter(|&v| !trial[v] && !fast.zones_of[v].is_empty()).collect();
                if ins.is_empty() || outs.is_empty() {
                    break;
                }
                trial[ins[rng.gen_range(0..ins.len())]] = false;
                trial[outs[rng.gen_range(0..outs.len())]] = true;
            }
            descend(fast, &mut trial, budget);
            let score = fast.score(&trial);
            if score < best_score {
                best_score = score;
                kept = trial;
            }
        }
    }
    best_score.feasible().then_some((kept, false))
}

fn count(mask: &[bool]) -> usize {
    mask.iter().filter(|&&b| b).count()
}

/// Starting from every stop, repeatedly drops the stop whose removal keeps
/// feasibility at the smallest objective increase (lowest id on ties).
/// `None` when no stop can be dropped before the budget is met.
fn delete_down(fast: &FastEval) -> Option<Vec<bool>> {
    let m = fast.m;
    let n = m.n_stops();
    let mut kept = vec![true; n];
    if !fast.score(&kept).feasible() {
        return None;
    }
    let mut size = n;
    while size > m.budget {
        let mut choice: Option<(i64, usize, usize)> = None;
        for v in 0..n {
            if !kept[v] {
                continue;
            }
            kept[v] = false;
            let score = fast.score(&kept);
            kept[v] = true;
            if score.feasible() {
                let key = (score.access, m.stop_rank[v], v);
                if choice.is_none_or(|c| key < c) {
                    choice = Some(key);
                }
            }
        }
        let (_, _, v) = choice?;
        kept[v] = false;
        size -= 1;
    }
    Some(kept)
}

/// Builds a cover from scratch (most newly served zones first), then adds
/// stops by best score while the budget allows.
fn construct(fast: &FastEval) -> Option<Vec<bool>> {
    let m = fast.m;
    let n = m.n_stops();
    let mut kept = vec![false; n];
    let mut served = vec![false; m.n_zones()];
    let mut left = served.len();
    let mut size = 0;
    while left > 0 {
        let (gain, _, v) = (0..n)
            .filter(|&v| !kept[v])
            .map(|v| {
                let gain = fast.zones_of[v].iter().filter(|&&u| !served[u]).count();
                (gain, std::cmp::Reverse(m.stop_rank[v]), v)
            })
            .max()?;
        if gain == 0 {
            return None;
        }
        kept[v] = true;
        size += 1;
        for &u in &fast.zones_of[v] {
            if !served[u] {
                served[u] = true;
                left -= 1;
            }
        }
    }
    if size > m.budget {
        return None;
    }
    let mut current = fast.score(&kept);
    while size < m.budget {
        let mut choice: Option<(Score, usize, usize)> = None;
        for v in 0..n {
            if kept[v] || fast.zones_of[v].is_empty() {
                continue;
            }
            kept[v] = true;
            let key = (fast.score(&kept), m.stop_rank[v], v);
            kept[v] = false;
            if choice.is_none_or(|c| key < c) {
                choice = Some(key);
            }
        }
        match choice {
            Some((score, _, v)) if score < current => {
                kept[v] = true;
                size += 1;
                current = score;
            }
            _ => break,
        }
    }
    Some(kept)
}

/// First-improvement local search over additions (while under budget) and
/// one-out/one-in swaps, minimizing the feasibility-first score.
pub(crate) fn descend(fast: &FastEval, kept: &mut [bool], budget: usize) {
    let m = fast.m;
    let n = kept.len();
    let mut order: Vec<usize> = (0..n).filter(|&v| !fast.zones_of[v].is_empty()).collect();
    order.sort_by_key(|&v| m.stop_rank[v]);
    let mut current = fast.score(kept);
    let mut size = count(kept);
    'outer: loop {
        if size < budget {
            for &w in &order {
                if kept[w] {
                    continue;
                }
                kept[w] = true;
                let score = fast.score(kept);
                if score < current {
                    current = score;
                    size += 1;
                    continue 'outer;
                }
                kept[w] = false;
            }
        }
        for v in 0..n {
            if !kept[v] {
                continue;
            }
            kept[v] = false;
            for &w in &order {
                if kept[w] || w == v {
                    continue;
                }
                kept[w] = true;
                let score = fast.score(kept);
                if score < current {
                    current = score;
                    continue 'outer;
                }
                kept[w] = false;
            }
            kept[v] = true;
        }
        break;
    }
}
