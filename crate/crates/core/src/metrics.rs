//! Derived quantities: shortest paths between stops, nearest stops per
//! zone, candidate stop sets, demand weights and the baseline objective.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::instance::{Instance, PairSet};
use crate::rational::{le_scaled, Rational};

/// Sentinel for "no path" and "no stop".
pub const UNREACHABLE: i64 = i64::MAX;

/// Above this stop count only the rows of nearest stops are computed.
pub const FULL_MATRIX_LIMIT: usize = 2000;

/// Shortest travel times between stops, possibly restricted to a subset of source rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShortestPaths {
    n: usize,
    rows: Vec<Option<Vec<i64>>>,
}

impl ShortestPaths {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn is_full(&self) -> bool {
        self.rows.iter().all(Option::is_some)
    }

    /// Travel time between `a` and `b`; one of them must be a computed row.
    pub fn get(&self, a: usize, b: usize) -> i64 {
        match (&self.rows[a], &self.rows[b]) {
            (Some(row), _) => row[b],
            (None, Some(row)) => row[a],
            (None, None) => panic!("shortest path row for neither stop {a} nor {b} was computed"),
        }
    }

    pub fn row(&self, a: usize) -> Option<&[i64]> {
        self.rows[a].as_deref()
    }
}

fn adjacency(inst: &Instance) -> Vec<Vec<(usize, i64)>> {
    let mut adj = vec![Vec::new(); inst.n_stops()];
    for e in &inst.edges {
        adj[e.a].push((e.b, e.cost));
        adj[e.b].push((e.a, e.cost));
    }
    adj
}

fn dijkstra(adj: &[Vec<(usize, i64)>], source: usize) -> Vec<i64> {
    let mut dist = vec![UNREACHABLE; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0;
    heap.push(Reverse((0i64, source)));
    while let Some(Reverse((d, v))) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(w, cost) in &adj[v] {
            let nd = d.saturating_add(cost);
            if nd < dist[w] {
                dist[w] = nd;
                heap.push(Reverse((nd, w)));
            }
        }
    }
    dist
}

/// Shortest paths from every stop.
pub fn all_pairs_shortest_paths(inst: &Instance) -> ShortestPaths {
    let sources: Vec<usize> = (0..inst.n_stops()).collect();
    shortest_paths_from(inst, &sources)
}

/// Shortest paths from the given source stops only.
pub fn shortest_paths_from(inst: &Instance, sources: &[usize]) -> ShortestPaths {
    let adj = adjacency(inst);
    let computed: Vec<(usize, Vec<i64>)> =
        sources.par_iter().map(|&s| (s, dijkstra(&adj, s))).collect();
    let mut rows = vec![None; inst.n_stops()];
    for (s, row) in computed {
        rows[s] = Some(row);
    }
    ShortestPaths { n: inst.n_stops(), rows }
}

/// A zone pair subject to the delay constraint, with its fixed in-network time
/// and baseline trip time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZonePair {
    pub u1: usize,
    pub u2: usize,
    pub pc: i64,
    pub opt: i64,
}

#[derive(Debug, Clone)]
pub struct MetricsBundle {
    pub instance: Arc<Instance>,
    pub pc: ShortestPaths,
    /// Nearest stop per zone, lowest id on ties.
    pub acc: Vec<usize>,
    pub d_acc: Vec<i64>,
    /// Candidate stops per zone sorted by access time, then id.
    pub candidates: Vec<Vec<usize>>,
    pub weight: Vec<i64>,
    pub pc_const: i64,
    pub twt_baseline: i64,
    /// Maximum number of kept stops.
    pub budget: usize,
    /// Zone pairs checked by the delay constraint.
    pub pairs: Vec<ZonePair>,
    /// Demand dropped because no path joins the nearest stops (disconnected instances only).
    pub dropped_pairs: Vec<(usize, usize, u64)>,
    /// Position of each stop in ascending id order.
    pub stop_rank: Vec<usize>,
}

impl MetricsBundle {
    #[inline]
    pub fn access(&self, zone: usize, stop: usize) -> i64 {
        self.instance.access.get(zone, stop)
    }

    pub fn n_stops(&self) -> usize {
        self.instance.n_stops()
    }

    pub fn n_zones(&self) -> usize {
        self.instance.n_zones()
    }

    pub fn k(&self, zone: usize) -> Rational {
        self.instance.params.k(zone)
    }

    pub fn alpha(&self) -> Rational {
        self.instance.params.alpha
    }

    /// In-network time between the nearest stops of two zones.
    pub fn pc_acc(&self, u1: usize, u2: usize) -> i64 {
        self.pc.get(self.acc[u1], self.acc[u2])
    }

    /// Whether `d(u, stop) <= k[u] * d_acc(u)`.
    pub fn within_access_bound(&self, zone: usize, time: i64) -> bool {
        le_scaled(time, self.k(zone), self.d_acc[zone])
    }

    pub fn stop_id(&self, stop: usize) -> &str {
        &self.instance.stops[stop].id
    }

    pub fn zone_id(&self, zone: usize) -> &str {
        &self.instance.zones[zone].id
    }

    /// Sorts stop indices by id.
    pub fn sort_by_id(&self, stops: &mut [usize]) {
        stops.sort_by_key(|&s| self.stop_rank[s]);
    }

    /// Diagnostic CSV: zone_id, acc_stop, d_acc, n_candidates, weight.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["zone_id", "acc_stop", "d_acc", "n_candidates", "weight"])
            .map_err(csv_err)?;
        for u in 0..self.n_zones() {
            w.write_record([
                self.zone_id(u).to_string(),
                self.stop_id(self.acc[u]).to_string(),
                self.d_acc[u].to_string(),
                self.candidates[u].len().to_string(),
                self.weight[u].to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

/// Baseline trip time between two zones: both nearest-stop walks plus the
/// in-network leg between the nearest stops.
pub fn opt_v(metrics: &MetricsBundle, u1: usize, u2: usize) -> i64 {
    let pc = metrics.pc_acc(u1, u2);
    if pc == UNREACHABLE {
        return UNREACHABLE;
    }
    metrics.d_acc[u1] + metrics.d_acc[u2] + pc
}

pub fn compute_metrics(inst: impl Into<Arc<Instance>>) -> Result<MetricsBundle> {
    let inst: Arc<Instance> = inst.into();
    let (n_t, n_u) = (inst.n_stops(), inst.n_zones());

    let mut by_id: Vec<usize> = (0..n_t).collect();
    by_id.sort_by(|&a, &b| inst.stops[a].id.cmp(&inst.stops[b].id));
    let mut stop_rank = vec![0; n_t];
    for (rank, &s) in by_id.iter().enumerate() {
        stop_rank[s] = rank;
    }

    let mut acc = Vec::with_capacity(n_u);
    let mut d_acc = Vec::with_capacity(n_u);
    let mut candidates = Vec::with_capacity(n_u);
    for u in 0..n_u {
        let row = inst.access.row(u);
        let best = (0..n_t)
            .min_by_key(|&v| (row[v], stop_rank[v]))
            .expect("instance has at least one stop");
        acc.push(best);
        d_acc.push(row[best]);
        let k = inst.params.k(u);
        let mut cands: Vec<usize> =
            (0..n_t).filter(|&v| le_scaled(row[v], k, row[best])).collect();
        cands.sort_by_key(|&v| (row[v], stop_rank[v]));
        candidates.push(cands);
    }

    let pc = if n_t <= FULL_MATRIX_LIMIT {
        all_pairs_shortest_paths(&inst)
    } else {
        let mut sources = acc.clone();
        sources.sort_unstable();
        sources.dedup();
        shortest_paths_from(&inst, &sources)
    };

    let mut weight = vec![0i64; n_u];
    let mut pc_const = 0i64;
    let mut twt_baseline = 0i64;
    let mut dropped_pairs = Vec::new();
    for e in &inst.od {
        let p = pc.get(acc[e.origin], acc[e.dest]);
        if p == UNREACHABLE {
            if !inst.allow_disconnected {
                return Err(Error::UnreachablePair(
                    inst.zones[e.origin].id.clone(),
                    inst.zones[e.dest].id.clone(),
                ));
            }
            dropped_pairs.push((e.origin, e.dest, e.count));
            continue;
        }
        let n = e.count as i64;
        weight[e.origin] += n;
        weight[e.dest] += n;
        pc_const += n * p;
        twt_baseline += n * (d_acc[e.origin] + d_acc[e.dest] + p);
    }

    let pairs = configured_pairs(&inst, &acc, &d_acc, &pc);

    let budget = crate::evaluate::budget(&inst);
    Ok(MetricsBundle {
        instance: inst,
        pc,
        acc,
        d_acc,
        candidates,
        weight,
        pc_const,
        twt_baseline,
        budget,
        pairs,
        dropped_pairs,
        stop_rank,
    })
}

fn configured_pairs(inst: &Instance, acc: &[usize], d_acc: &[i64], pc: &ShortestPaths) -> Vec<ZonePair> {
    let n_u = inst.n_zones();
    let make = |u1: usize, u2: usize| {
        let p = pc.get(acc[u1], acc[u2]);
        (p != UNREACHABLE).then(|| ZonePair { u1, u2, pc: p, opt: d_acc[u1] + d_acc[u2] + p })
    };
    match inst.params.pairs {
        PairSet::AllPairs => (0..n_u)
            .flat_map(|u1| (u1..n_u).map(move |u2| (u1, u2)))
            .filter_map(|(u1, u2)| make(u1, u2))
            .collect(),
        PairSet::OdPositiveOnly => {
            let mut keys: Vec<(usize, usize)> = inst
                .od
                .iter()
                .filter(|e| e.count > 0)
                .map(|e| (e.origin.min(e.dest), e.origin.max(e.dest)))
                .collect();
            keys.sort_unstable();
            keys.dedup();
            keys.into_iter().filter_map(|(u1, u2)| make(u1, u2)).collect()
        }
    }
}
