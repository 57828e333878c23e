//! Best-first branch-and-bound on kept/dropped stop decisions.
//!
//! Each node fixes some stops in or out. A zone's best allowed candidate is
//! its nearest candidate not forced out; delay pairs then cap how far each
//! zone may be served, which prunes candidates, forces stops that are a
//! zone's last option and detects infeasible nodes early. The node bound is
//! the larger of the per-zone best-candidate sum and a Lagrangian bound that
//! relaxes the one-assignment-per-zone rows while keeping the stop budget.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::sync::atomic::Ordering as AtomicOrdering;
use std::time::Instant;

use num_traits::Zero;

use super::fast::FastEval;
use super::greedy::{descend, greedy_mask};
use super::{BnbConfig, Progress, Proof, SolveReport};
use crate::evaluate::evaluate_selection;
use crate::metrics::MetricsBundle;
use crate::rational::Rational;

const FREE: u8 = 0;
const IN: u8 = 1;
const OUT: u8 = 2;

const ROOT_ITERATIONS: usize = 400;
const NODE_ITERATIONS: usize = 25;

struct Node {
    status: Vec<u8>,
    mu: Vec<f64>,
    /// Bound inherited from the parent; the node's own bound is computed when popped.
    bound: i64,
    depth: u32,
    seq: u64,
}

impl Node {
    fn key(&self) -> (Reverse<i64>, u32, u64) {
        (Reverse(self.bound), self.depth, self.seq)
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

enum Outcome {
    /// No feasible completion; carries the zone left without candidates, if that is why.
    Infeasible(Option<usize>),
    /// Bound reached the incumbent.
    Dominated,
    /// The node's best completion was found and offered to the incumbent.
    Solved,
    Branch { stop: usize, bound: i64 },
}

struct Search<'a> {
    fast: FastEval<'a>,
    incumbent: Option<(i64, Vec<bool>)>,
}

/// Weighted access with every zone at its nearest candidate, ignoring the budget.
pub fn root_simple_bound(metrics: &MetricsBundle) -> Option<i64> {
    (0..metrics.n_zones())
        .map(|u| metrics.candidates[u].first().map(|&v| metrics.weight[u] * metrics.access(u, v)))
        .sum()
}

pub fn bnb_solve(metrics: &MetricsBundle, config: &BnbConfig) -> SolveReport {
    let start = Instant::now();
    let n = metrics.n_stops();
    let mut search = Search { fast: FastEval::new(metrics), incumbent: None };

    if let Some((mask, optimal)) = greedy_mask(&search.fast, &config.greedy) {
        let access = search.fast.score(&mask).access;
        if optimal {
            let kept: Vec<usize> = (0..n).filter(|&v| mask[v]).collect();
            return SolveReport {
                best: Some(evaluate_selection(metrics, &kept).expect("indices in range")),
                proof: Proof::Optimal,
                lower_bound: Some(access),
                nodes_explored: 0,
                wall_time: start.elapsed(),
                seed: config.greedy.seed,
                infeasible_zone: None,
            };
        }
        search.incumbent = Some((access, mask));
    }

    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Node {
        status: vec![FREE; n],
        mu: Vec::new(),
        bound: 0,
        depth: 0,
        seq,
    });

    let mut nodes = 0u64;
    let mut infeasible_zone = None;
    let mut global_lb = 0i64;
    let mut stopped_early = false;
    let report = |search: &Search, nodes: u64, lb: i64| {
        if let Some(observer) = &config.progress {
            observer(Progress {
                nodes_explored: nodes,
                incumbent_twt: search.incumbent.as_ref().map(|(a, _)| a + metrics.pc_const),
                lower_bound: Some(lb + metrics.pc_const),
            });
        }
    };

    while let Some(mut node) = heap.pop() {
        let inc = search.incumbent.as_ref().map(|(a, _)| *a);
        if inc.is_some_and(|a| node.bound >= a) {
            heap.clear();
            break;
        }
        global_lb = global_lb.max(node.bound);
        if let Some(a) = inc {
            let gap = Rational::from_integer(a - node.bound);
            if !config.gap_target.is_zero() && gap <= config.gap_target * Rational::from_integer(a) {
                heap.push(node);
                stopped_early = true;
                break;
            }
        }
        let out_of_time = config.time_limit.is_some_and(|t| start.elapsed() >= t);
        let cancelled = config.cancel.as_ref().is_some_and(|c| c.load(AtomicOrdering::Relaxed));
        if out_of_time || cancelled {
            heap.push(node);
            stopped_early = true;
            break;
        }

        nodes += 1;
        if config.progress_every > 0 && nodes % config.progress_every == 0 {
            report(&search, nodes, global_lb);
        }
        let is_root = node.depth == 0;
        match search.process(&mut node, is_root) {
            Outcome::Infeasible(zone) => {
                if is_root {
                    infeasible_zone = zone.map(|u| metrics.zone_id(u).to_string());
                }
            }
            Outcome::Dominated | Outcome::Solved => {}
            Outcome::Branch { stop, bound } => {
                let mut out = Node {
                    status: node.status.clone(),
                    mu: node.mu.clone(),
                    bound,
                    depth: node.depth + 1,
                    seq: seq + 1,
                };
                out.status[stop] = OUT;
                node.status[stop] = IN;
                let inside = Node { status: node.status, mu: node.mu, bound, depth: node.depth + 1, seq: seq + 2 };
                seq += 2;
                heap.push(out);
                heap.push(inside);
            }
        }
    }

    let incumbent_access = search.incumbent.as_ref().map(|(a, _)| *a);
    let (proof, lower_bound) = if stopped_early {
        let open = heap.peek().map(|n| n.bound).unwrap_or(i64::MAX).max(global_lb);
        let lb = incumbent_access.map_or(open, |a| open.min(a));
        match incumbent_access {
            Some(a) if a == lb => (Proof::Optimal, Some(lb)),
            _ => (Proof::GapBounded, Some(lb)),
        }
    } else {
        match incumbent_access {
            Some(a) => (Proof::Optimal, Some(a)),
            None => (Proof::InfeasibleProven, None),
        }
    };
    if let Some(lb) = lower_bound {
        report(&search, nodes, lb);
    }
    let best = search.incumbent.map(|(_, mask)| {
        let kept: Vec<usize> = (0..n).filter(|&v| mask[v]).collect();
        evaluate_selection(metrics, &kept).expect("indices in range")
    });
    SolveReport {
        best,
        proof,
        lower_bound,
        nodes_explored: nodes,
        wall_time: start.elapsed(),
        seed: config.greedy.seed,
        infeasible_zone: if proof == Proof::InfeasibleProven { infeasible_zone } else { None },
    }
}

/// Number of zones not yet served by a forced-in stop whose allowed free
/// stops are pairwise disjoint (greedy, smallest sets first). Each needs its
/// own extra stop, so this bounds the stops still to be added.
fn unserved_packing(status: &[u8], cand: &[Vec<(usize, i64)>], end: &[usize]) -> usize {
    let mut open: Vec<(usize, usize)> = Vec::new();
    for (u, c) in cand.iter().enumerate() {
        let allowed = &c[..end[u]];
        if allowed.iter().any(|&(v, _)| status[v] == IN) {
            continue;
        }
        open.push((allowed.iter().filter(|&&(v, _)| status[v] == FREE).count(), u));
    }
    open.sort_unstable();
    let mut used = vec![false; status.len()];
    let mut packed = 0;
    for (_, u) in open {
        let free = || cand[u][..end[u]].iter().filter(|&&(v, _)| status[v] == FREE);
        if free().all(|&(v, _)| !used[v]) {
            free().for_each(|&(v, _)| used[v] = true);
            packed += 1;
        }
    }
    packed
}

fn offer(incumbent: &mut Option<(i64, Vec<bool>)>, access: i64, mask: Vec<bool>) {
    if incumbent.as_ref().is_none_or(|(a, _)| access < *a) {
        *incumbent = Some((access, mask));
    }
}

impl Search<'_> {

    fn incumbent_access(&self) -> Option<i64> {
        self.incumbent.as_ref().map(|(a, _)| *a)
    }

    fn process(&mut self, node: &mut Node, is_root: bool) -> Outcome {
        let m = self.fast.m;
        let (n, n_u, budget) = (m.n_stops(), m.n_zones(), m.budget);
        let status = &mut node.status;
        let fast = &self.fast;
        let cand = &fast.cand;

        let mut best = vec![0i64; n_u];
        let mut best_stop = vec![0usize; n_u];
        for u in 0..n_u {
            match cand[u].iter().find(|&&(v, _)| status[v] != OUT) {
                Some(&(v, d)) => {
                    best[u] = d;
                    best_stop[u] = v;
                }
                None => return Outcome::Infeasible(Some(u)),
            }
        }

        // largest admissible service time per zone given the others at their best
        let mut cap = vec![i64::MAX; n_u];
        for p in &self.fast.pairs {
            if p.u1 == p.u2 {
                cap[p.u1] = cap[p.u1].min(p.cap.div_euclid(2));
            } else {
                cap[p.u1] = cap[p.u1].min(p.cap - best[p.u2]);
                cap[p.u2] = cap[p.u2].min(p.cap - best[p.u1]);
            }
        }
        if (0..n_u).any(|u| best[u] > cap[u]) {
            return Outcome::Infeasible(None);
        }
        let end: Vec<usize> = (0..n_u).map(|u| cand[u].partition_point(|&(_, d)| d <= cap[u])).collect();

        for u in 0..n_u {
            let allowed = cand[u][..end[u]].iter().filter(|&&(v, _)| status[v] != OUT);
            let mut free = None;
            let mut n_free = 0;
            let mut served = false;
            for &(v, _) in allowed {
                match status[v] {
                    IN => {
                        served = true;
                        break;
                    }
                    _ => {
                        n_free += 1;
                        free = Some(v);
                    }
                }
            }
            if !served && n_free == 1 {
                status[free.unwrap()] = IN;
            }
        }
        let n_in = status.iter().filter(|&&s| s == IN).count();
        if n_in > budget {
            return Outcome::Infeasible(None);
        }
        if n_in < budget && n_in + unserved_packing(status, cand, &end) > budget {
            return Outcome::Infeasible(None);
        }
        if n_in == budget {
            let mask: Vec<bool> = status.iter().map(|&s| s == IN).collect();
            let score = self.fast.score(&mask);
            if score.feasible() {
                offer(&mut self.incumbent, score.access, mask);
                return Outcome::Solved;
            }
            return Outcome::Infeasible(None);
        }

        let simple: i64 = (0..n_u).map(|u| m.weight[u] * best[u]).sum();
        if self.incumbent_access().is_some_and(|a| simple >= a) {
            return Outcome::Dominated;
        }
        let mut in_t: Vec<bool> = status.iter().map(|&s| s == IN).collect();
        for &v in &best_stop {
            in_t[v] = true;
        }
        let size_t = in_t.iter().filter(|&&b| b).count();
        let t_has_free = (0..n).any(|v| in_t[v] && status[v] == FREE);
        if size_t <= budget {
            let score = self.fast.score(&in_t);
            if score.feasible() {
                debug_assert_eq!(score.access, simple);
                offer(&mut self.incumbent, score.access, in_t);
                return Outcome::Solved;
            }
        }
        if !t_has_free {
            return Outcome::Infeasible(None);
        }

        let iterations = if is_root { ROOT_ITERATIONS } else { NODE_ITERATIONS };
        if node.mu.len() != n_u {
            node.mu = (0..n_u).map(|u| (m.weight[u] * best[u]) as f64).collect();
        }
        let (lagrangian, selection) =
            self.lagrangian(status, &end, &mut node.mu, iterations, simple, n_in, is_root);
        let bound = simple.max(lagrangian);

        if let Some(mut mask) = selection {
            if is_root {
                descend(&self.fast, &mut mask, budget);
            }
            let score = self.fast.score(&mask);
            if score.feasible() && mask.iter().filter(|&&b| b).count() <= budget {
                offer(&mut self.incumbent, score.access, mask);
            }
        }
        if self.incumbent_access().is_some_and(|a| bound >= a) {
            return Outcome::Dominated;
        }

        // branch on the free stop of T whose loss costs its zones the most
        let mut regret = vec![0i64; n];
        for u in 0..n_u {
            let v = best_stop[u];
            if status[v] != FREE {
                continue;
            }
            let second = cand[u][..end[u]]
                .iter()
                .filter(|&&(w, _)| status[w] != OUT && w != v)
                .map(|&(_, d)| d)
                .next();
            let loss = match second {
                Some(d) => m.weight[u].saturating_mul(d - best[u]),
                None => i64::MAX / 4,
            };
            regret[v] = regret[v].saturating_add(loss);
        }
        let stop = (0..n)
            .filter(|&v| in_t[v] && status[v] == FREE)
            .max_by_key(|&v| (regret[v], Reverse(m.stop_rank[v])))
            .expect("T has a free stop");
        Outcome::Branch { stop, bound }
    }

    /// Subgradient ascent on the relaxation
    /// `sum mu_u + min_{|x| <= budget} sum_v x_v sum_u min(0, w_u d(u,v) - mu_u)`
    /// over allowed candidates. Returns the integer bound and the stop set of
    /// the best iterate.
    #[allow(clippy::too_many_arguments)]
    fn lagrangian(
        &self,
        status: &[u8],
        end: &[usize],
        mu: &mut [f64],
        iterations: usize,
        simple: i64,
        n_in: usize,
        is_root: bool,
    ) -> (i64, Option<Vec<bool>>) {
        let m = self.fast.m;
        let (n, n_u) = (m.n_stops(), m.n_zones());
        let cand = &self.fast.cand;
        let slots = m.budget - n_in;
        let target_fixed = self.incumbent_access().map(|a| a as f64);

        let mut best_value = f64::NEG_INFINITY;
        let mut best_mu = mu.to_vec();
        let mut best_sel: Option<Vec<bool>> = None;
        let mut theta = if is_root { 2.0 } else { 0.5 };
        let mut stall = 0;
        let mut rho = vec![0f64; n];
        let mut picked = vec![false; n];
        let mut free: Vec<usize> = Vec::with_capacity(n);

        for _ in 0..iterations.max(1) {
            rho.iter_mut().for_each(|r| *r = 0.0);
            for u in 0..n_u {
                let w = m.weight[u] as f64;
                for &(v, d) in &cand[u][..end[u]] {
                    if status[v] == OUT {
                        continue;
                    }
                    let c = w * d as f64 - mu[u];
                    if c < 0.0 {
                        rho[v] += c;
                    }
                }
            }
            free.clear();
            free.extend((0..n).filter(|&v| status[v] == FREE && rho[v] < 0.0));
            if free.len() > slots {
                free.select_nth_unstable_by(slots, |&a, &b| rho[a].total_cmp(&rho[b]).then(a.cmp(&b)));
                free.truncate(slots);
            }
            picked.iter_mut().zip(status).for_each(|(p, &s)| *p = s == IN);
            for &v in &free {
                picked[v] = true;
            }
            let value: f64 = mu.iter().sum::<f64>() + (0..n).filter(|&v| picked[v]).map(|v| rho[v]).sum::<f64>();

            if value > best_value + 1e-9 * (1.0 + value.abs()) {
                best_value = value;
                best_mu.copy_from_slice(mu);
                best_sel = Some(picked.clone());
                stall = 0;
            } else {
                stall += 1;
                if stall >= 5 {
                    theta *= 0.5;
                    stall = 0;
                }
            }
            let target = target_fixed.unwrap_or_else(|| best_value.max(simple as f64) * 1.05 + 1.0);
            if value >= target - 1e-6 || theta < 1e-4 {
                break;
            }

            let mut norm = 0.0;
            let mut grad = vec![0f64; n_u];
            for u in 0..n_u {
                let w = m.weight[u] as f64;
                let assigned = cand[u][..end[u]]
                    .iter()
                    .filter(|&&(v, d)| picked[v] && w * d as f64 - mu[u] < 0.0)
                    .count();
                grad[u] = 1.0 - assigned as f64;
                norm += grad[u] * grad[u];
            }
            if norm == 0.0 {
                break;
            }
            let step = theta * (target - value).max(1.0) / norm;
            for u in 0..n_u {
                mu[u] += step * grad[u];
            }
        }
        mu.copy_from_slice(&best_mu);
        let bound = (best_value - 1e-7 * (1.0 + best_value.abs())).ceil();
        let bound = if bound.is_finite() { bound as i64 } else { i64::MIN };
        (bound, best_sel)
    }
}
