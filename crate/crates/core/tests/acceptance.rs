//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the summary lines come out
//! in a fixed order. Every threshold below is a pinned constant; equality
//! checks are exact (integer and rational arithmetic, no float tolerance).

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use osdnp_core::evaluate::{evaluate_selection, required_deletions, StopSelection};
use osdnp_core::metrics::{compute_metrics, MetricsBundle};
use osdnp_core::milp::{build_milp_with, format_lp, parse_lp, BuildOptions, MilpModel};
use osdnp_core::rational::Rational;
use osdnp_core::scenario::{build_scenario_with, scenario_sweep_with, RemovalRule};
use osdnp_core::solver::{bnb_solve, oracle_solve, BnbConfig, Proof};
use osdnp_core::synth::{grid_city, random_instance, with_p_elim, CitySpec, RandomSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ORACLE_INSTANCES: usize = 240;
const ORACLE_MAX_STOPS: usize = 12;
const ORACLE_MAX_ZONES: usize = 8;
const ORACLE_TIME_BUDGET: Duration = Duration::from_secs(60);
const CORRESPONDENCE_INSTANCES: usize = 60;
const CORRESPONDENCE_MAX_STOPS: usize = 8;
const FORCING_DRAWS: usize = 600;
const BUDGET_STOPS: usize = 1144;
const BUDGET_EXPECTED: [usize; 6] = [115, 229, 344, 458, 572, 687];
const SLACK_MIN_INSTANCES: usize = 30;
const MONO_INSTANCES: usize = 20;
const MONO_P_ELIM: [(i64, i64); 5] = [(1, 10), (1, 5), (3, 10), (2, 5), (1, 2)];
const MONO_THRESHOLDS: usize = 10;
const LP_INSTANCES: usize = 20;
const CITY_SEEDS: u64 = 5;
const CITY_TIME_LIMIT: Duration = Duration::from_secs(60);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn r(n: i64, d: i64) -> Rational {
    Ratio::new(n, d)
}

/// Solved instances collected along the way for the t = 0 check.
#[derive(Default)]
struct Solved {
    runs: Vec<(MetricsBundle, StopSelection)>,
}

fn oracle_equivalence(solved: &mut Solved) -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let grid: Vec<(Rational, Rational, Rational)> = [r(1, 5), r(1, 2), r(4, 5)]
        .into_iter()
        .flat_map(|p| [r(1, 1), r(2, 1)].into_iter().map(move |a| (p, a)))
        .flat_map(|(p, a)| [r(1, 1), r(2, 1)].into_iter().map(move |k| (p, a, k)))
        .collect();
    let mut mismatches = Vec::new();
    let (mut feasible, mut infeasible) = (0, 0);
    for i in 0..ORACLE_INSTANCES {
        let (p_elim, alpha, k) = grid[i % grid.len()];
        let spec = RandomSpec {
            stops: rng.gen_range(3..=ORACLE_MAX_STOPS),
            zones: rng.gen_range(1..=ORACLE_MAX_ZONES),
            od_density: rng.gen_range(0.05..0.4),
            p_elim,
            alpha,
            k,
            lines: 4,
            ..RandomSpec::default()
        };
        let m = compute_metrics(random_instance(10_000 + i as u64, &spec)).expect("valid instance");
        let exact = oracle_solve(&m).expect("within oracle limit");
        let bnb = bnb_solve(&m, &BnbConfig::default());
        if exact.twt() != bnb.twt() || exact.is_infeasible() != bnb.is_infeasible() {
            mismatches.push(format!("#{i}: oracle {:?} bnb {:?}", exact.twt(), bnb.twt()));
        }
        match bnb.best {
            Some(sel) => {
                feasible += 1;
                solved.runs.push((m, sel));
            }
            None => infeasible += 1,
        }
    }
    let elapsed = start.elapsed();
    let pass = mismatches.is_empty() && elapsed <= ORACLE_TIME_BUDGET;
    verdict(
        pass,
        format!(
            "{ORACLE_INSTANCES} instances ({feasible} feasible, {infeasible} infeasible), {} mismatches, {:.3}s (limit {}s){}",
            mismatches.len(),
            elapsed.as_secs_f64(),
            ORACLE_TIME_BUDGET.as_secs(),
            mismatches.first().map(|m| format!("; first {m}")).unwrap_or_default()
        ),
    )
}

fn model_correspondence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut subsets = 0usize;
    let mut feasible_subsets = 0usize;
    let mut mismatches = Vec::new();
    for i in 0..CORRESPONDENCE_INSTANCES {
        let spec = RandomSpec {
            stops: rng.gen_range(2..=CORRESPONDENCE_MAX_STOPS),
            zones: rng.gen_range(1..=6),
            p_elim: [r(1, 5), r(1, 2), r(4, 5)][i % 3],
            alpha: [r(1, 1), r(3, 2), r(2, 1)][i % 3],
            k: [r(1, 1), r(3, 2), r(2, 1)][(i / 3) % 3],
            ..RandomSpec::default()
        };
        let m = compute_metrics(random_instance(20_000 + i as u64, &spec)).expect("valid instance");
        let n = m.n_stops();
        for emit_all_pairs in [true, false] {
            let model = build_milp_with(&m, BuildOptions { emit_all_pairs }).expect("k >= 1 keeps candidates");
            for mask in 0u32..(1 << n) {
                let kept_mask: Vec<bool> = (0..n).map(|v| mask >> v & 1 == 1).collect();
                let kept: Vec<usize> = (0..n).filter(|&v| kept_mask[v]).collect();
                let sel = evaluate_selection(&m, &kept).expect("indices in range");
                let encoded = model.forced_assignment(&kept_mask);
                let model_ok = model.violated(&encoded).is_empty();
                subsets += 1;
                feasible_subsets += sel.feasible as usize;
                let objective_ok = !sel.feasible
                    || model.objective_value(&encoded) + Rational::from_integer(model.pc_const)
                        == Rational::from_integer(sel.twt);
                if model_ok != sel.feasible || !objective_ok {
                    mismatches.push(format!("instance {i} mask {mask:b} all_pairs={emit_all_pairs}"));
                }
            }
        }
    }
    verdict(
        mismatches.is_empty(),
        format!(
            "{CORRESPONDENCE_INSTANCES} instances, {subsets} subset encodings ({feasible_subsets} feasible), {} mismatches{}",
            mismatches.len(),
            mismatches.first().map(|m| format!("; first {m}")).unwrap_or_default()
        ),
    )
}

/// Feasible interval of `dacc_u` once x and the zone's selectors are fixed,
/// `None` when the zone's rows admit no value.
fn dacc_interval(model: &MilpModel, u: usize, x: &[bool], y: &[bool]) -> Option<(Rational, Rational)> {
    let zero = Rational::from_integer(0);
    let one = Rational::from_integer(1);
    let dacc = &model.dacc_vars[u];
    let mut fixed = std::collections::HashMap::new();
    for (v, name) in model.x_vars.iter().enumerate() {
        fixed.insert(name.as_str(), if x[v] { one } else { zero });
    }
    for (i, name) in model.y_vars[u].iter().enumerate() {
        fixed.insert(name.as_str(), if y[i] { one } else { zero });
    }
    let bound = model.bounds.iter().find(|b| &b.var == dacc).expect("dacc is bounded");
    let mut lo = bound.lower;
    let mut hi = bound.upper;
    for c in &model.constraints {
        // Linearization rows of this zone; delay rows (dacc terms only) are not part of it.
        let touches_zone = c.terms.keys().any(|k| k == dacc || model.y_vars[u].contains(k));
        let local = c.terms.keys().all(|k| k == dacc || fixed.contains_key(k.as_str()));
        let has_binary = c.terms.keys().any(|k| fixed.contains_key(k.as_str()));
        if !touches_zone || !local || !has_binary {
            continue;
        }
        let rest: Rational = c.terms.iter().filter(|(k, _)| *k != dacc).map(|(k, a)| *a * fixed[k.as_str()]).sum();
        let a = c.terms.get(dacc).copied().unwrap_or(zero);
        let rhs = c.rhs - rest;
        use osdnp_core::milp::Sense;
        if a == zero {
            let ok = match c.sense {
                Sense::Le => zero <= rhs,
                Sense::Ge => zero >= rhs,
                Sense::Eq => zero == rhs,
            };
            if !ok {
                return None;
            }
            continue;
        }
        let value = rhs / a;
        let (upper, lower) = match (c.sense, a > zero) {
            (Sense::Eq, _) => (true, true),
            (Sense::Le, true) | (Sense::Ge, false) => (true, false),
            _ => (false, true),
        };
        if upper {
            hi = Some(hi.map_or(value, |h| h.min(value)));
        }
        if lower {
            lo = lo.max(value);
        }
    }
    match hi {
        Some(h) if h < lo => None,
        Some(h) => Some((lo, h)),
        None => Some((lo, lo)),
    }
}

struct ForcingTally {
    draws: usize,
    counterexamples: Vec<String>,
}

fn forcing_draws(distinct: bool, draws: usize, seed: u64) -> ForcingTally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = ForcingTally { draws: 0, counterexamples: Vec::new() };
    let mut instance_seed = 30_000 + seed * 1000;
    while tally.draws < draws {
        instance_seed += 1;
        let spec = RandomSpec {
            stops: rng.gen_range(3..=10),
            zones: rng.gen_range(1..=5),
            k: [r(3, 2), r(2, 1), r(3, 1)][rng.gen_range(0..3)],
            distinct_access: distinct,
            ..RandomSpec::default()
        };
        let m = compute_metrics(random_instance(instance_seed, &spec)).expect("valid instance");
        let model = build_milp_with(&m, BuildOptions::default()).expect("candidates exist");
        for _ in 0..10 {
            let u = rng.gen_range(0..m.n_zones());
            let cands = &m.candidates[u];
            let mut x: Vec<bool> = (0..m.n_stops()).map(|_| rng.gen_bool(0.5)).collect();
            x[cands[rng.gen_range(0..cands.len())]] = true;
            let forced = cands
                .iter()
                .map(|&v| m.access(u, v) + if x[v] { 0 } else { model.big_m[u] })
                .min()
                .expect("non-empty");
            let forced = Rational::from_integer(forced);
            let mut feasible = Vec::new();
            for ymask in 0u32..(1 << cands.len()) {
                let y: Vec<bool> = (0..cands.len()).map(|i| ymask >> i & 1 == 1).collect();
                if let Some(iv) = dacc_interval(&model, u, &x, &y) {
                    feasible.push((ymask, iv));
                }
            }
            tally.draws += 1;
            let ok = if distinct {
                feasible.len() == 1 && feasible[0].1 == (forced, forced)
            } else {
                !feasible.is_empty() && feasible.iter().all(|(_, iv)| *iv == (forced, forced))
            };
            if !ok {
                tally.counterexamples.push(format!("seed {instance_seed} zone {u} x {x:?} candidates {cands:?} forced {forced} k {} d_acc {} access {:?} bound {:?}: feasible y {feasible:?}", m.k(u), m.d_acc[u], cands.iter().map(|&v| m.access(u, v)).collect::<Vec<_>>(), model.bounds[u]));
            }
        }
    }
    tally
}

fn linearization_forcing() -> Verdict {
    let distinct = forcing_draws(true, FORCING_DRAWS, 1);
    let ties = forcing_draws(false, FORCING_DRAWS / 2, 2);
    let bad = distinct.counterexamples.len() + ties.counterexamples.len();
    verdict(
        bad == 0,
        format!(
            "{} distinct-time draws with exactly one feasible selector at the forced value, {} tie draws where every feasible selector forces the same value, {} counterexamples{}",
            distinct.draws,
            ties.draws,
            bad,
            distinct.counterexamples.iter().chain(&ties.counterexamples).next().map(|c| format!("; first {c}")).unwrap_or_default()
        ),
    )
}

fn budget_table() -> Verdict {
    let base = random_instance(5, &RandomSpec { stops: BUDGET_STOPS, zones: 1, ..RandomSpec::default() });
    let got: Vec<usize> = (1..=6).map(|i| required_deletions(&with_p_elim(&base, r(i, 10)))).collect();
    verdict(got == BUDGET_EXPECTED, format!("n_t = {BUDGET_STOPS}, p_elim 0.1..0.6 -> {got:?}, expected {BUDGET_EXPECTED:?}"))
}

fn distinct_nearest(m: &MetricsBundle) -> usize {
    m.acc.iter().collect::<BTreeSet<_>>().len()
}

fn small_p_slack() -> Verdict {
    let mut checked = 0;
    let mut failures = Vec::new();
    let mut candidates: Vec<MetricsBundle> = Vec::new();
    for seed in 0..60u64 {
        let spec = RandomSpec { stops: 12 + (seed as usize % 10), zones: 3 + (seed as usize % 5), p_elim: r(1, 10), ..RandomSpec::default() };
        candidates.push(compute_metrics(random_instance(40_000 + seed, &spec)).expect("valid instance"));
    }
    for seed in 0..5u64 {
        let spec = CitySpec { p_elim: r(1, 10), zones: 30, ..CitySpec::default() };
        candidates.push(compute_metrics(grid_city(seed, &spec)).expect("valid city"));
    }
    let mut max_slack = 0;
    for m in candidates {
        let nearest = distinct_nearest(&m);
        if nearest >= m.budget {
            continue;
        }
        checked += 1;
        let report = bnb_solve(&m, &BnbConfig::default());
        match &report.best {
            Some(sel) if report.proof == Proof::Optimal && sel.delay == 0 && sel.kept.len() == nearest => {
                max_slack = max_slack.max(m.budget - nearest);
            }
            other => failures.push(format!("{:?} kept {:?} nearest {nearest}", report.proof, other.as_ref().map(|s| s.kept.len()))),
        }
    }
    verdict(
        failures.is_empty() && checked >= SLACK_MIN_INSTANCES,
        format!(
            "{checked} instances with fewer distinct nearest stops than the budget (need {SLACK_MIN_INSTANCES}): delay 0 and kept = nearest set in all but {}; largest unused budget {max_slack}",
            failures.len()
        ),
    )
}

fn is_superset(later: &[usize], earlier: &[usize]) -> bool {
    let later: BTreeSet<_> = later.iter().collect();
    earlier.iter().all(|x| later.contains(x))
}

fn monotonicity(solved: &mut Solved) -> Verdict {
    let mut twt_breaks = Vec::new();
    for i in 0..MONO_INSTANCES as u64 {
        let spec = RandomSpec { stops: 10, zones: 6, alpha: r(3, 2), k: r(2, 1), ..RandomSpec::default() };
        let base = random_instance(50_000 + i, &spec);
        let mut last: Option<i64> = Some(i64::MIN);
        for (n, d) in MONO_P_ELIM {
            let m = compute_metrics(with_p_elim(&base, r(n, d))).expect("valid instance");
            let report = bnb_solve(&m, &BnbConfig::default());
            let twt = report.twt();
            let ok = match (last, twt) {
                (Some(prev), Some(now)) => now >= prev,
                (None, Some(_)) => false,
                _ => true,
            };
            if !ok {
                twt_breaks.push(format!("instance {i} at p_elim {n}/{d}"));
            }
            last = twt;
            if let Some(sel) = report.best {
                solved.runs.push((m, sel));
            }
        }
    }

    let thresholds: Vec<Rational> = (0..MONO_THRESHOLDS as i64).map(|j| r(j, MONO_THRESHOLDS as i64 - 1)).collect();
    let mut scenario_breaks = Vec::new();
    let mut scenario_instances = 0;
    let mut seed = 60_000u64;
    while scenario_instances < MONO_INSTANCES {
        seed += 1;
        let spec = RandomSpec { stops: 12, zones: 6, lines: 6, p_elim: r(3, 10), ..RandomSpec::default() };
        let m = compute_metrics(random_instance(seed, &spec)).expect("valid instance");
        let Some(sel) = bnb_solve(&m, &BnbConfig::default()).best else { continue };
        scenario_instances += 1;
        for rule in [RemovalRule::AllLinesDeleted, RemovalRule::AnyLineDeleted] {
            for min_line_size in [0, 2] {
                let sweep = scenario_sweep_with(&sel, &m.instance.lines, &thresholds, min_line_size, &m, rule)
                    .expect("ascending thresholds");
                for w in sweep.windows(2) {
                    if !is_superset(&w[1].deleted_lines, &w[0].deleted_lines) || !is_superset(&w[1].violated, &w[0].violated) {
                        scenario_breaks.push(format!("seed {seed} {rule:?} min_line_size {min_line_size} at t {}", w[1].t));
                    }
                }
            }
        }
        solved.runs.push((m, sel));
    }
    verdict(
        twt_breaks.is_empty() && scenario_breaks.is_empty(),
        format!(
            "twt over {MONO_INSTANCES} instances x {} p_elim values: {} breaks; deleted lines and violated zones over {scenario_instances} instances x {MONO_THRESHOLDS} thresholds x 2 rules x 2 line sizes: {} breaks",
            MONO_P_ELIM.len(),
            twt_breaks.len(),
            scenario_breaks.len()
        ),
    )
}

fn t_zero_identity(solved: &Solved) -> Verdict {
    let mut failures = 0;
    let mut checks = 0;
    for (m, sel) in &solved.runs {
        for rule in [RemovalRule::AllLinesDeleted, RemovalRule::AnyLineDeleted] {
            for min_line_size in [0, 1, 2, 10] {
                let s = build_scenario_with(sel, &m.instance.lines, Rational::from_integer(0), min_line_size, m, rule)
                    .expect("t = 0 is valid");
                checks += 1;
                if !s.deleted_lines.is_empty() || !s.violated.is_empty() {
                    failures += 1;
                }
            }
        }
    }
    verdict(
        failures == 0 && !solved.runs.is_empty(),
        format!("{} solved instances, {checks} scenarios at t = 0, {failures} with deleted lines or violated zones", solved.runs.len()),
    )
}

fn lp_round_trip() -> Verdict {
    let mut rows = 0;
    let mut failures = Vec::new();
    for i in 0..LP_INSTANCES as u64 {
        let spec = RandomSpec {
            stops: 6 + (i as usize % 8),
            zones: 2 + (i as usize % 6),
            alpha: [r(1, 1), r(3, 2), r(2, 1), r(5, 4)][i as usize % 4],
            k: [r(1, 1), r(5, 4), r(3, 2), r(2, 1)][(i as usize / 4) % 4],
            ..RandomSpec::default()
        };
        let m = compute_metrics(random_instance(70_000 + i, &spec)).expect("valid instance");
        for emit_all_pairs in [true, false] {
            let model = build_milp_with(&m, BuildOptions { emit_all_pairs }).expect("candidates exist");
            let parsed = parse_lp(&format_lp(&model)).expect("exported LP parses");
            rows += model.constraints.len();
            let objective: std::collections::BTreeMap<String, Rational> =
                model.objective.iter().filter(|(_, c)| *c != Rational::from_integer(0)).cloned().collect();
            if parsed.constraints != model.constraints
                || parsed.bounds != model.bounds
                || parsed.binaries != model.binaries
                || parsed.objective.iter().filter(|(_, c)| **c != Rational::from_integer(0)).map(|(v, c)| (v.clone(), *c)).collect::<std::collections::BTreeMap<_, _>>() != objective
            {
                let part = if parsed.constraints != model.constraints {
                    let at = parsed.constraints.iter().zip(&model.constraints).position(|(a, b)| a != b);
                    format!("constraints (row {at:?}: {:?} vs {:?})", at.map(|j| &parsed.constraints[j]), at.map(|j| &model.constraints[j]))
                } else if parsed.bounds != model.bounds {
                    "bounds".to_string()
                } else if parsed.binaries != model.binaries {
                    "binaries".to_string()
                } else {
                    "objective".to_string()
                };
                failures.push(format!("instance {i} all_pairs={emit_all_pairs}: {part}"));
            }
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "{LP_INSTANCES} instances x 2 row sets, {rows} constraints re-parsed; {} differ in name, coefficients, sense or rhs{}",
            failures.len(),
            failures.first().map(|f| format!("; first {f}")).unwrap_or_default()
        ),
    )
}

fn desk_scale() -> Verdict {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("thread pool");
    pool.install(|| {
        let spec = CitySpec::default();
        let mut worst = Duration::ZERO;
        let mut nodes = 0;
        let mut failures = Vec::new();
        for seed in 0..CITY_SEEDS {
            let start = Instant::now();
            let m = compute_metrics(grid_city(seed, &spec)).expect("valid city");
            let report = bnb_solve(&m, &BnbConfig { time_limit: Some(CITY_TIME_LIMIT), ..BnbConfig::default() });
            let elapsed = start.elapsed();
            worst = worst.max(elapsed);
            nodes = nodes.max(report.nodes_explored);
            if report.proof != Proof::Optimal || elapsed > CITY_TIME_LIMIT || report.best.is_none() {
                failures.push(format!("seed {seed}: {:?} in {elapsed:.2?}", report.proof));
            }
        }
        verdict(
            failures.is_empty(),
            format!(
                "{CITY_SEEDS} grid cities ({} stops, {} zones, p_elim 1/2), one worker: all proven optimal, slowest {:.3}s (limit {}s), at most {nodes} nodes{}",
                spec.rows * spec.cols,
                spec.zones,
                worst.as_secs_f64(),
                CITY_TIME_LIMIT.as_secs(),
                failures.first().map(|f| format!("; first failure {f}")).unwrap_or_default()
            ),
        )
    })
}

fn main() -> ExitCode {
    let mut solved = Solved::default();
    let checks: Vec<(&str, Verdict)> = vec![
        ("oracle equivalence", oracle_equivalence(&mut solved)),
        ("model correspondence", model_correspondence()),
        ("linearization forcing", linearization_forcing()),
        ("budget table", budget_table()),
        ("small p_elim slack", small_p_slack()),
        ("monotonicity", monotonicity(&mut solved)),
        ("scenario t = 0 identity", t_zero_identity(&solved)),
        ("LP round trip", lp_round_trip()),
        ("desk-scale city", desk_scale()),
    ];
    let mut failed = 0;
    for (name, v) in &checks {
        println!("{} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += !v.pass as usize;
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
