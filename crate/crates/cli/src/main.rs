use std::fs;
use std::io::{self, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use osdnp_core::evaluate::{evaluate_ids, SolutionFile, StopSelection};
use osdnp_core::milp::{build_milp_with, parse_values, BuildOptions};
use osdnp_core::rational::{parse_rational, serde_rational};
use osdnp_core::scenario::{
    build_scenario_with, parse_lines, scenario_sweep_with, RemovalRule, DEFAULT_BIN_COUNT, DEFAULT_MIN_LINE_SIZE,
};
use osdnp_core::solver::{bnb_solve, oracle_solve, BnbConfig, Proof, SolveReport};
use osdnp_core::{compute_metrics, decode_assignment, export_lp, load_instance, report, Format, MetricsBundle, Rational};
use serde_json::{json, Map, Value};

#[derive(Parser)]
#[command(name = "osdnp", version, about = "Bus stop deletion under access and delay bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Branch-and-bound solve; writes the solution file.
    Solve {
        instance: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
        /// Seconds; unlimited when omitted.
        #[arg(long)]
        time_limit: Option<f64>,
        /// Stop once (incumbent - bound) <= gap * incumbent.
        #[arg(long, default_value = "0")]
        gap: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the full solve report (proof status, bounds, node count).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Exhaustive solve for small instances.
    Oracle {
        instance: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluates a given kept set.
    Check {
        instance: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
        /// Comma-separated stop ids, or @file with a solution file or one id per line.
        #[arg(long)]
        kept: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes the mixed-integer model as an LP file plus a JSON name map.
    ExportLp {
        instance: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the LP path with a `.names.json` extension.
        #[arg(long)]
        names: Option<PathBuf>,
        /// Emit delay rows that the access bounds already imply.
        #[arg(long)]
        all_pair_rows: bool,
    },
    /// Turns solver variable values ("name value" lines or a JSON object) into a solution.
    Decode {
        instance: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        values: PathBuf,
        #[arg(long)]
        all_pair_rows: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Line-deletion scenario for one threshold.
    Scenario {
        instance: PathBuf,
        solution: PathBuf,
        #[arg(long)]
        t: String,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = DEFAULT_BIN_COUNT)]
        bins: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        uf_csv: Option<PathBuf>,
        #[arg(long)]
        p_ros_csv: Option<PathBuf>,
    },
    /// Scenario summary for an ascending threshold list, as CSV.
    Sweep {
        instance: PathBuf,
        solution: PathBuf,
        /// Comma-separated thresholds.
        #[arg(long)]
        t: String,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// GeoJSON map and stop status CSV, optionally under a scenario.
    Report {
        instance: PathBuf,
        solution: PathBuf,
        #[arg(long)]
        t: Option<String>,
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// GeoJSON destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Starts the HTTP service.
    Serve {
        #[arg(long, env = "OSDNP_DATA_DIR", default_value = "osdnp-data")]
        data_dir: PathBuf,
        #[arg(long, env = "OSDNP_PORT", default_value_t = osdnp_service::DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Solve jobs running at once.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Default per-job time limit in seconds.
        #[arg(long, default_value_t = 60.0)]
        time_limit: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Pairs {
    All,
    Od,
}

#[derive(Args)]
struct ParamArgs {
    #[arg(long)]
    p_elim: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    /// Number, or @file holding a number or an object of zone id to factor.
    #[arg(long)]
    k: Option<String>,
    #[arg(long, value_enum)]
    pairs: Option<Pairs>,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long, default_value_t = DEFAULT_MIN_LINE_SIZE)]
    min_line_size: usize,
    /// Remove a stop as soon as any of its lines is deleted.
    #[arg(long)]
    strict: bool,
    /// Line file overriding the instance's lines.
    #[arg(long)]
    lines: Option<PathBuf>,
}

impl ScenarioArgs {
    fn rule(&self) -> RemovalRule {
        if self.strict {
            RemovalRule::AnyLineDeleted
        } else {
            RemovalRule::AllLinesDeleted
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Internal(_) => 4,
        }
    }
}

impl From<osdnp_core::Error> for Failure {
    fn from(e: osdnp_core::Error) -> Self {
        use osdnp_core::Error as E;
        match e {
            E::EmptyCandidates(_) => Failure::Infeasible(e.to_string()),
            E::Consistency(_) | E::Json(_) => Failure::Internal(e.to_string()),
            E::Io(_) => Failure::Internal(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn read_input(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).map_err(|e| Failure::Validation(format!("cannot read {}: {e}", path.display())))
}

fn read_json(path: &Path) -> Outcome<Value> {
    serde_json::from_str(&read_input(path)?)
        .map_err(|e| Failure::Validation(format!("{} is not valid JSON: {e}", path.display())))
}

fn rational_arg(name: &str, text: &str) -> Outcome<Rational> {
    parse_rational(text).map_err(|e| Failure::Usage(format!("--{name}: {e}")))
}

fn overrides(params: &ParamArgs) -> Outcome<Value> {
    let mut map = Map::new();
    if let Some(p) = &params.p_elim {
        map.insert("p_elim".into(), serde_rational::to_json(rational_arg("p-elim", p)?));
    }
    if let Some(a) = &params.alpha {
        map.insert("alpha".into(), serde_rational::to_json(rational_arg("alpha", a)?));
    }
    if let Some(k) = &params.k {
        let value = match k.strip_prefix('@') {
            Some(path) => read_json(Path::new(path))?,
            None => serde_rational::to_json(rational_arg("k", k)?),
        };
        map.insert("k".into(), value);
    }
    if let Some(pairs) = params.pairs {
        let name = match pairs {
            Pairs::All => "all-pairs",
            Pairs::Od => "od-positive-only",
        };
        map.insert("constraint3_pairs".into(), json!(name));
    }
    Ok(Value::Object(map))
}

fn load_metrics(path: &Path, changes: &Value) -> Outcome<MetricsBundle> {
    let text = read_input(path)?;
    let mut inst = load_instance(text.as_bytes(), Format::Json)?;
    for w in osdnp_core::validate_instance(&inst) {
        eprintln!("warning: {w}");
    }
    if changes.as_object().is_some_and(|m| !m.is_empty()) {
        inst = inst.with_param_overrides(changes)?;
    }
    Ok(compute_metrics(inst)?)
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Outcome {
    let result = match out {
        Some(path) => fs::write(path, bytes),
        None => io::stdout().lock().write_all(bytes),
    };
    result.map_err(|e| Failure::Internal(format!("cannot write output: {e}")))
}

fn write_json(out: Option<&Path>, value: &Value) -> Outcome {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Failure::Internal(e.to_string()))?;
    bytes.push(b'\n');
    write_output(out, &bytes)
}

fn solution_json(metrics: &MetricsBundle, selection: &StopSelection) -> Value {
    serde_json::to_value(SolutionFile::new(metrics, selection)).expect("solution serializes")
}

fn summarize(r: &SolveReport, metrics: &MetricsBundle) {
    let lb = r.lower_bound.map(|lb| lb + metrics.pc_const);
    eprintln!(
        "{}: twt {}, lower bound {}, {} nodes, {:.1} ms",
        r.proof.as_str(),
        r.twt().map_or("-".into(), |t| t.to_string()),
        lb.map_or("-".into(), |t| t.to_string()),
        r.nodes_explored,
        r.wall_time.as_secs_f64() * 1e3,
    );
}

/// Writes the solution or reports why there is none.
fn finish_solve(r: &SolveReport, metrics: &MetricsBundle, out: Option<&Path>) -> Outcome {
    summarize(r, metrics);
    match &r.best {
        Some(sel) => write_json(out, &solution_json(metrics, sel)),
        None if r.proof == Proof::InfeasibleProven => {
            let why = match &r.infeasible_zone {
                Some(z) => format!("infeasible: zone {z} cannot be served"),
                None => "infeasible: no selection satisfies the constraints".into(),
            };
            Err(Failure::Infeasible(why))
        }
        None => Err(Failure::Internal("no feasible selection found before the time limit".into())),
    }
}

fn kept_ids(arg: &str) -> Outcome<Vec<String>> {
    let Some(path) = arg.strip_prefix('@') else {
        return Ok(arg.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect());
    };
    let text = read_input(Path::new(path))?;
    if let Ok(value) = serde_json::from_str::<Value>(&text) {
        let kept = value.get("solution").unwrap_or(&value).get("kept").unwrap_or(&value);
        return serde_json::from_value(kept.clone())
            .map_err(|_| Failure::Validation(format!("{path}: expected a list of stop ids")));
    }
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

/// Loads a solution file (or a stored service solution record) and
/// re-evaluates it under the parameters it was solved with.
fn load_solution(instance: &Path, solution: &Path) -> Outcome<(MetricsBundle, StopSelection)> {
    let value = read_json(solution)?;
    let record = value.get("solution").unwrap_or(&value);
    let file: SolutionFile = serde_json::from_value(record.clone())
        .map_err(|e| Failure::Validation(format!("{} is not a solution file: {e}", solution.display())))?;
    let metrics = load_metrics(instance, &file.params_echo)?;
    let selection = evaluate_ids(&metrics, &file.kept)?;
    Ok((metrics, selection))
}

/// Swaps in the line file when one is given; lines do not affect any metric.
fn with_lines(metrics: MetricsBundle, args: &ScenarioArgs) -> Outcome<MetricsBundle> {
    let Some(path) = &args.lines else { return Ok(metrics) };
    let lines = parse_lines(&metrics.instance, &read_json(path)?)?;
    let mut inst = (*metrics.instance).clone();
    inst.lines = lines;
    Ok(MetricsBundle { instance: Arc::new(inst), ..metrics })
}

fn threshold(text: &str) -> Outcome<Rational> {
    rational_arg("t", text.trim())
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Solve { instance, params, time_limit, gap, out, report: report_path } => {
            let metrics = load_metrics(&instance, &overrides(&params)?)?;
            let time_limit = match time_limit {
                Some(s) if s.is_finite() && s > 0.0 => Some(Duration::from_secs_f64(s)),
                Some(_) => return Err(Failure::Usage("--time-limit must be positive".into())),
                None => None,
            };
            let gap = rational_arg("gap", &gap)?;
            if gap < Rational::from_integer(0) {
                return Err(Failure::Usage("--gap must be non-negative".into()));
            }
            let config = BnbConfig { time_limit, gap_target: gap, ..BnbConfig::default() };
            let r = bnb_solve(&metrics, &config);
            if let Some(path) = report_path {
                write_json(Some(&path), &r.to_json(&metrics))?;
            }
            finish_solve(&r, &metrics, out.as_deref())
        }
        Command::Oracle { instance, params, out } => {
            let metrics = load_metrics(&instance, &overrides(&params)?)?;
            let r = oracle_solve(&metrics)?;
            finish_solve(&r, &metrics, out.as_deref())
        }
        Command::Check { instance, params, kept, out } => {
            let metrics = load_metrics(&instance, &overrides(&params)?)?;
            let selection = evaluate_ids(&metrics, &kept_ids(&kept)?)?;
            eprintln!(
                "{}, {} violations",
                if selection.feasible { "feasible" } else { "infeasible" },
                selection.violations.len()
            );
            write_json(out.as_deref(), &solution_json(&metrics, &selection))
        }
        Command::ExportLp { instance, params, out, names, all_pair_rows } => {
            let metrics = load_metrics(&instance, &overrides(&params)?)?;
            let model = build_milp_with(&metrics, BuildOptions { emit_all_pairs: all_pair_rows })?;
            let mut lp = Vec::new();
            export_lp(&model, &mut lp)?;
            write_output(Some(&out), &lp)?;
            let names = names.unwrap_or_else(|| out.with_extension("names.json"));
            let mut map = Vec::new();
            model.write_name_map(&mut map)?;
            write_output(Some(&names), &map)?;
            eprintln!(
                "{} binaries, {} continuous, {} constraints",
                model.binaries.len(),
                model.continuous.len(),
                model.n_constraints()
            );
            Ok(())
        }
        Command::Decode { instance, params, values, all_pair_rows, out } => {
            let metrics = load_metrics(&instance, &overrides(&params)?)?;
            let model = build_milp_with(&metrics, BuildOptions { emit_all_pairs: all_pair_rows })?;
            let text = read_input(&values)?;
            let assignment = match serde_json::from_str::<std::collections::HashMap<String, f64>>(&text) {
                Ok(map) => map,
                Err(_) => parse_values(&text)?,
            };
            let selection = decode_assignment(&model, &assignment, &metrics)?;
            write_json(out.as_deref(), &solution_json(&metrics, &selection))
        }
        Command::Scenario { instance, solution, t, scenario, bins, out, uf_csv, p_ros_csv } => {
            let (metrics, selection) = load_solution(&instance, &solution)?;
            let metrics = with_lines(metrics, &scenario)?;
            let t = threshold(&t)?;
            let lines = &metrics.instance.lines;
            let result = build_scenario_with(&selection, lines, t, scenario.min_line_size, &metrics, scenario.rule())?;
            if let Some(path) = uf_csv {
                let mut buf = Vec::new();
                result.write_uf_csv(&metrics, &mut buf)?;
                write_output(Some(&path), &buf)?;
            }
            if let Some(path) = p_ros_csv {
                let mut buf = Vec::new();
                result.write_p_ros_csv(&metrics, &mut buf)?;
                write_output(Some(&path), &buf)?;
            }
            if bins == 0 {
                return Err(Failure::Usage("--bins must be positive".into()));
            }
            write_json(out.as_deref(), &result.to_json(&metrics, bins))
        }
        Command::Sweep { instance, solution, t, scenario, out } => {
            let (metrics, selection) = load_solution(&instance, &solution)?;
            let metrics = with_lines(metrics, &scenario)?;
            let lines = &metrics.instance.lines;
            let thresholds = t.split(',').map(threshold).collect::<Outcome<Vec<_>>>()?;
            let results =
                scenario_sweep_with(&selection, lines, &thresholds, scenario.min_line_size, &metrics, scenario.rule())?;
            let mut csv = String::from("t,deleted_lines,violated,kept_lines,open_stops\n");
            for s in &results {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    serde_rational::to_json(s.t),
                    s.deleted_lines.len(),
                    s.violated.len(),
                    s.kept_lines.len(),
                    s.v_s.len()
                ));
            }
            write_output(out.as_deref(), csv.as_bytes())
        }
        Command::Report { instance, solution, t, scenario, out, csv } => {
            let (metrics, selection) = load_solution(&instance, &solution)?;
            let metrics = with_lines(metrics, &scenario)?;
            let result = match t {
                Some(t) => Some(build_scenario_with(
                    &selection,
                    &metrics.instance.lines,
                    threshold(&t)?,
                    scenario.min_line_size,
                    &metrics,
                    scenario.rule(),
                )?),
                None => None,
            };
            let map = report::geojson(&metrics, &selection, result.as_ref())?;
            if let Some(path) = csv {
                let mut buf = Vec::new();
                report::write_stop_csv(&metrics, &selection, result.as_ref(), &mut buf)?;
                write_output(Some(&path), &buf)?;
            }
            write_json(out.as_deref(), &map)
        }
        Command::Serve { data_dir, port, host, workers, time_limit } => {
            if !(time_limit.is_finite() && time_limit > 0.0) {
                return Err(Failure::Usage("--time-limit must be positive".into()));
            }
            let config = osdnp_service::ServiceConfig {
                data_dir,
                workers: workers.max(1),
                default_time_limit: Duration::from_secs_f64(time_limit),
            };
            osdnp_service::run_blocking(SocketAddr::new(host, port), config)
                .map_err(|e| Failure::Internal(format!("service stopped: {e}")))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
