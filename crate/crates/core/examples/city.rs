//! Solves synthetic grid cities and prints solver statistics.
//!
//! `cargo run --release -p osdnp-core --example city -- [first_seed] [count]`

use osdnp_core::metrics::compute_metrics;
use osdnp_core::solver::{bnb_solve, greedy_solve, BnbConfig};
use osdnp_core::synth::{grid_city, CitySpec};

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let first = args.first().copied().unwrap_or(0);
    let count = args.get(1).copied().unwrap_or(5);
    for seed in first..first + count {
        let m = compute_metrics(grid_city(seed, &CitySpec::default())).expect("valid city");
        let distinct_nearest = {
            let mut acc = m.acc.clone();
            acc.sort_unstable();
            acc.dedup();
            acc.len()
        };
        let greedy = greedy_solve(&m);
        let r = bnb_solve(&m, &BnbConfig::default());
        println!(
            "seed {seed}: budget {} nearest {} greedy {:?} bnb {:?} {:?} lb {:?} nodes {} in {:.2?}",
            m.budget,
            distinct_nearest,
            greedy.twt(),
            r.twt(),
            r.proof,
            r.lower_bound.map(|b| b + m.pc_const),
            r.nodes_explored,
            r.wall_time
        );
    }
}
