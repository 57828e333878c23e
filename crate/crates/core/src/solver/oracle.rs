use std::time::Instant;

use super::fast::FastEval;
use super::{Proof, SolveReport};
use crate::error::{Error, Result};
use crate::evaluate::evaluate_selection;
use crate::metrics::MetricsBundle;

/// Largest stop count the exhaustive solver accepts.
pub const ORACLE_LIMIT: usize = 20;

/// Enumerates every subset within the budget. Ties on twt go to the smaller
/// subset, then to the lexicographically smaller id sequence.
pub fn oracle_solve(metrics: &MetricsBundle) -> Result<SolveReport> {
    let n = metrics.n_stops();
    if n > ORACLE_LIMIT {
        return Err(Error::TooLarge(n, ORACLE_LIMIT));
    }
    let start = Instant::now();
    let fast = FastEval::new(metrics);
    let ids_of = |mask: u32| {
        let mut kept: Vec<usize> = (0..n).filter(|&v| mask >> v & 1 == 1).collect();
        metrics.sort_by_id(&mut kept);
        kept.into_iter().map(|v| metrics.stop_id(v)).collect::<Vec<_>>()
    };

    let mut best: Option<(i64, u32, u32)> = None;
    let mut kept = vec![false; n];
    let mut visited = 0u64;
    for mask in 1u32..(1u32 << n) {
        let size = mask.count_ones();
        if size as usize > metrics.budget {
            continue;
        }
        visited += 1;
        for (v, slot) in kept.iter_mut().enumerate() {
            *slot = mask >> v & 1 == 1;
        }
        let score = fast.score(&kept);
        if !score.feasible() {
            continue;
        }
        let better = match best {
            None => true,
            Some((access, bsize, bmask)) => {
                (score.access, size) < (access, bsize)
                    || ((score.access, size) == (access, bsize) && ids_of(mask) < ids_of(bmask))
            }
        };
        if better {
            best = Some((score.access, size, mask));
        }
    }

    let best = match best {
        Some((_, _, mask)) => {
            let kept: Vec<usize> = (0..n).filter(|&v| mask >> v & 1 == 1).collect();
            Some(evaluate_selection(metrics, &kept)?)
        }
        None => None,
    };
    Ok(SolveReport {
        proof: if best.is_some() { Proof::Optimal } else { Proof::InfeasibleProven },
        lower_bound: best.as_ref().map(|s| s.weighted_access(metrics)),
        best,
        nodes_explored: visited,
        wall_time: start.elapsed(),
        seed: 0,
        infeasible_zone: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{load_instance_str, ZoneFactor};
    use crate::metrics::compute_metrics;
    use crate::rational::Rational;
    use crate::synth;
    use num_rational::Ratio;

    const T1: &str = include_str!("../../tests/fixtures/t1.json");

    fn t1(p_elim: Rational, k: i64) -> MetricsBundle {
        let mut inst = synth::with_p_elim(&load_instance_str(T1).unwrap(), p_elim);
        inst.params.k = ZoneFactor::Uniform(Ratio::from_integer(k));
        compute_metrics(inst).unwrap()
    }

    fn kept_ids(m: &MetricsBundle, r: &SolveReport) -> Vec<String> {
        r.best.as_ref().unwrap().kept.iter().map(|&v| m.stop_id(v).to_string()).collect()
    }

    #[test]
    fn t1_examples() {
        let m = t1(Ratio::new(1, 3), 2);
        let r = oracle_solve(&m).unwrap();
        assert_eq!(r.proof, Proof::Optimal);
        assert_eq!(kept_ids(&m, &r), ["v1", "v3"]);
        assert_eq!(r.twt(), Some(80));

        let m = t1(Ratio::new(3, 5), 2);
        let r = oracle_solve(&m).unwrap();
        assert_eq!(kept_ids(&m, &r), ["v2"]);
        assert_eq!(r.twt(), Some(100));
        assert_eq!(r.lower_bound, Some(40));

        let r = oracle_solve(&t1(Ratio::new(3, 5), 1)).unwrap();
        assert_eq!(r.proof, Proof::InfeasibleProven);
        assert!(r.best.is_none());
    }

    #[test]
    fn ties_prefer_smaller_sets() {
        // p_elim 0 allows all three stops; {v1, v3} already reaches baseline
        let m = t1(Ratio::new(0, 1), 2);
        let r = oracle_solve(&m).unwrap();
        assert_eq!(kept_ids(&m, &r), ["v1", "v3"]);
    }

    #[test]
    fn refuses_large_instances() {
        let spec = synth::RandomSpec { stops: 21, ..Default::default() };
        let m = compute_metrics(synth::random_instance(1, &spec)).unwrap();
        assert!(matches!(oracle_solve(&m), Err(Error::TooLarge(21, 20))));
    }
}
