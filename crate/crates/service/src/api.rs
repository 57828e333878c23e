use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use osdnp_core::evaluate::{evaluate_ids, SolutionFile, StopSelection};
use osdnp_core::rational::{from_json_number, parse_rational, serde_rational, to_f64};
use osdnp_core::scenario::{build_scenario_with, scenario_sweep_with, RemovalRule, DEFAULT_BIN_COUNT, DEFAULT_MIN_LINE_SIZE};
use osdnp_core::solver::{bnb_solve, BnbConfig, Proof};
use osdnp_core::{compute_metrics, load_instance, report, validate_instance, Format, Instance, MetricsBundle, Rational};
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

use crate::jobs::Outcome;
use crate::store::{ArtifactKind, StoreError};
use crate::{AppState, ScenarioKey};

const BODY_LIMIT: usize = 512 * 1024 * 1024;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/api/instances", get(list_instances).post(post_instance))
        .route("/api/instances/{id}", get(get_instance))
        .route("/api/instances/{id}/metrics", get(get_metrics))
        .route("/api/solve", axum::routing::post(post_solve))
        .route("/api/jobs", get(list_jobs))
        .route("/api/jobs/{id}", get(get_job).delete(cancel_job))
        .route("/api/solutions/{id}", get(get_solution))
        .route("/api/solutions/{id}/scenario", get(get_scenario))
        .route("/api/solutions/{id}/sweep", get(get_sweep))
        .route("/api/solutions/{id}/geojson", get(get_geojson))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

#[derive(Debug)]
pub(crate) struct ApiError {
    status: StatusCode,
    message: String,
    job_id: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into(), job_id: None }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(what: &str, id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, format!("unknown {what} {id}"))
    }

    fn infeasible(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({"error": self.message});
        if let Some(id) = self.job_id {
            body["job_id"] = Value::String(id);
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<osdnp_core::Error> for ApiError {
    fn from(e: osdnp_core::Error) -> Self {
        use osdnp_core::Error as E;
        let status = match &e {
            E::Parse(_) | E::Validation(_) | E::UnknownStop(_) | E::Disconnected(..) | E::UnreachablePair(..) => {
                StatusCode::BAD_REQUEST
            }
            E::EmptyCandidates(_) | E::TooLarge(..) | E::MissingCoordinates(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl From<serde_json::Error> for ApiError {
    fn from(e: serde_json::Error) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> ApiResult<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

fn json_bytes(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

impl AppState {
    fn instance(&self, id: &str) -> ApiResult<Arc<Instance>> {
        if let Some(inst) = self.instances.lock().expect("cache lock").get(id) {
            return Ok(inst.clone());
        }
        let bytes = self
            .store
            .get(ArtifactKind::Instance, id)?
            .ok_or_else(|| ApiError::not_found("instance", id))?;
        let inst = Arc::new(load_instance(&bytes[..], Format::Json)?);
        self.instances.lock().expect("cache lock").insert(id.to_string(), inst.clone());
        Ok(inst)
    }

    fn metrics_for(&self, inst: Instance) -> ApiResult<Arc<MetricsBundle>> {
        let key = inst.content_hash();
        if let Some(m) = self.metrics.lock().expect("cache lock").get(&key) {
            return Ok(m.clone());
        }
        let m = Arc::new(compute_metrics(inst)?);
        self.metrics.lock().expect("cache lock").insert(key, m.clone());
        Ok(m)
    }

    /// Instance with overrides applied and its metrics.
    fn effective(&self, instance_id: &str, overrides: &Value) -> ApiResult<Arc<MetricsBundle>> {
        let inst = self.instance(instance_id)?;
        let effective = match overrides {
            Value::Object(map) if map.is_empty() => (*inst).clone(),
            Value::Null => (*inst).clone(),
            other => inst.with_param_overrides(other)?,
        };
        self.metrics_for(effective)
    }

    fn solution(&self, id: &str) -> ApiResult<(Arc<MetricsBundle>, StopSelection)> {
        let bytes = self
            .store
            .get(ArtifactKind::Solution, id)?
            .ok_or_else(|| ApiError::not_found("solution", id))?;
        let record: SolutionRecord = serde_json::from_slice(&bytes)?;
        let metrics = self.effective(&record.instance_id, &record.solution.params_echo)?;
        let selection = evaluate_ids(&metrics, &record.solution.kept)?;
        Ok((metrics, selection))
    }
}

#[derive(Deserialize)]
struct SolutionRecord {
    instance_id: String,
    solution: SolutionFile,
}

async fn list_instances(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!(state.store.list(ArtifactKind::Instance)))
}

async fn post_instance(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    blocking(move || {
        let inst = load_instance(&body[..], Format::Json)?;
        let warnings: Vec<String> = validate_instance(&inst).iter().map(|w| w.to_string()).collect();
        let bytes = inst.canonical_bytes();
        let id = osdnp_core::content_hash(&bytes);
        let existed = state.store.record(&id).is_some();
        // metrics catch disconnected demand before anything is stored
        match state.metrics_for(inst.clone()) {
            Ok(_) | Err(ApiError { status: StatusCode::UNPROCESSABLE_ENTITY, .. }) => {}
            Err(e) => return Err(e),
        }
        let record = state.store.put(ArtifactKind::Instance, &bytes)?;
        let body = json!({
            "id": record.id,
            "created_at": record.created_at,
            "n_stops": inst.n_stops(),
            "n_zones": inst.n_zones(),
            "n_lines": inst.lines.len(),
            "has_coordinates": inst.has_coordinates(),
            "params": inst.params_json(),
            "warnings": warnings,
        });
        let status = if existed { StatusCode::OK } else { StatusCode::CREATED };
        Ok((status, Json(body)).into_response())
    })
    .await
}

async fn get_instance(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let bytes = state
        .store
        .get(ArtifactKind::Instance, &id)?
        .ok_or_else(|| ApiError::not_found("instance", &id))?;
    Ok(json_bytes(bytes))
}

async fn get_metrics(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    blocking(move || {
        let metrics = state.effective(&id, &Value::Null)?;
        let mut out = Vec::new();
        metrics.write_csv(&mut out)?;
        Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], out).into_response())
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SolveRequest {
    instance_id: String,
    #[serde(default)]
    overrides: Option<Value>,
    /// Seconds.
    #[serde(default)]
    time_limit: Option<serde_json::Number>,
    #[serde(default)]
    gap: Option<serde_json::Number>,
}

fn positive_seconds(n: &serde_json::Number) -> ApiResult<f64> {
    match n.as_f64() {
        Some(s) if s.is_finite() && s > 0.0 => Ok(s),
        _ => Err(ApiError::bad_request("time_limit must be a positive number of seconds")),
    }
}

async fn post_solve(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: SolveRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("bad solve request: {e}")))?;
    let overrides = req.overrides.unwrap_or_else(|| json!({}));
    if !overrides.is_object() {
        return Err(ApiError::bad_request("overrides must be an object"));
    }
    let time_limit = match &req.time_limit {
        Some(n) => positive_seconds(n)?,
        None => state.config.default_time_limit.as_secs_f64(),
    };
    let gap: Rational = match &req.gap {
        Some(n) => from_json_number(n).map_err(|e| ApiError::bad_request(format!("gap: {e}")))?,
        None => Rational::from_integer(0),
    };
    if gap < Rational::from_integer(0) {
        return Err(ApiError::bad_request("gap must be non-negative"));
    }

    let metrics = {
        let (state, id, overrides) = (state.clone(), req.instance_id.clone(), overrides.clone());
        blocking(move || state.effective(&id, &overrides)).await?
    };
    check_solvable(&metrics)?;

    let key = format!("{}:{time_limit}:{gap}", metrics.instance.content_hash());
    let submitted = state
        .jobs
        .submit(&key, &req.instance_id, overrides.clone(), time_limit, to_f64(gap))
        .map_err(|existing| ApiError {
            status: StatusCode::CONFLICT,
            message: "an identical solve is already queued or running".into(),
            job_id: Some(existing),
        })?;
    let job_id = submitted.id.clone();

    let config = BnbConfig {
        time_limit: Some(Duration::from_secs_f64(time_limit)),
        gap_target: gap,
        cancel: Some(submitted.cancel.clone()),
        progress_every: 200,
        ..BnbConfig::default()
    };
    let instance_id = req.instance_id;
    let task_state = state.clone();
    tokio::spawn(async move {
        let state = task_state;
        let Ok(_permit) = state.slots.clone().acquire_owned().await else { return };
        if submitted.cancel.load(std::sync::atomic::Ordering::Relaxed) {
            let reason = "cancelled before start".to_string();
            state.jobs.finish(&submitted.id, Outcome::Failed { reason, proof: None, wall_time_ms: None });
            return;
        }
        state.jobs.start(&submitted.id);
        let id = submitted.id.clone();
        let worker = state.clone();
        let outcome = tokio::task::spawn_blocking(move || run_solve(&worker, &id, &instance_id, &overrides, &metrics, config))
            .await
            .unwrap_or_else(|e| Outcome::Failed { reason: format!("solver crashed: {e}"), proof: None, wall_time_ms: None });
        state.jobs.finish(&submitted.id, outcome);
    });

    let body = json!({"job_id": job_id, "state": "queued"});
    Ok((StatusCode::ACCEPTED, Json(body)).into_response())
}

/// Rejects requests whose infeasibility is visible before any search.
fn check_solvable(m: &MetricsBundle) -> ApiResult<()> {
    if let Some(u) = (0..m.n_zones()).find(|&u| m.candidates[u].is_empty()) {
        return Err(ApiError::infeasible(format!("infeasible: zone {} has no admissible stop", m.zone_id(u))));
    }
    if m.budget == 0 {
        return Err(ApiError::infeasible("infeasible: the deletion share leaves no stop to keep"));
    }
    Ok(())
}

fn run_solve(
    state: &Arc<AppState>,
    job_id: &str,
    instance_id: &str,
    overrides: &Value,
    metrics: &MetricsBundle,
    mut config: BnbConfig,
) -> Outcome {
    let observer = state.clone();
    let id = job_id.to_string();
    config.progress = Some(Arc::new(move |p| observer.jobs.progress(&id, p)));
    let report = bnb_solve(metrics, &config);
    let wall_time_ms = report.wall_time.as_secs_f64() * 1e3;
    state.jobs.progress(
        job_id,
        osdnp_core::solver::Progress {
            nodes_explored: report.nodes_explored,
            incumbent_twt: report.twt(),
            lower_bound: report.lower_bound.map(|lb| lb + metrics.pc_const),
        },
    );
    let Some(best) = &report.best else {
        let reason = match (report.proof, &report.infeasible_zone) {
            (Proof::InfeasibleProven, Some(z)) => format!("infeasible: zone {z} cannot be served"),
            (Proof::InfeasibleProven, None) => "infeasible: no selection satisfies the constraints".to_string(),
            _ => "no feasible selection found within the time limit".to_string(),
        };
        return Outcome::Failed { reason, proof: Some(report.proof.as_str().into()), wall_time_ms: Some(wall_time_ms) };
    };
    let mut summary = report.to_json(metrics);
    if let Value::Object(map) = &mut summary {
        map.remove("best");
        map.remove("wall_time_ms");
    }
    let record = json!({
        "instance_id": instance_id,
        "overrides": overrides,
        "solution": SolutionFile::new(metrics, best),
        "report": summary,
    });
    let stored = serde_json::to_vec(&record)
        .map_err(StoreError::from)
        .and_then(|bytes| state.store.put(ArtifactKind::Solution, &bytes));
    match stored {
        Ok(artifact) => Outcome::Solved {
            solution_id: artifact.id,
            proof: report.proof.as_str().into(),
            wall_time_ms,
        },
        Err(e) => Outcome::Failed { reason: e.to_string(), proof: None, wall_time_ms: Some(wall_time_ms) },
    }
}

async fn list_jobs(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!(state.jobs.list()))
}

async fn get_job(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let job = state.jobs.get(&id).ok_or_else(|| ApiError::not_found("job", &id))?;
    Ok(Json(json!(job)))
}

async fn cancel_job(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let job = state.jobs.cancel(&id).ok_or_else(|| ApiError::not_found("job", &id))?;
    Ok((StatusCode::ACCEPTED, Json(json!(job))).into_response())
}

async fn get_solution(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let bytes = state
        .store
        .get(ArtifactKind::Solution, &id)?
        .ok_or_else(|| ApiError::not_found("solution", &id))?;
    Ok(json_bytes(bytes))
}

struct ScenarioQuery {
    t: Option<Rational>,
    min_line_size: usize,
    rule: RemovalRule,
    bins: usize,
}

fn parse_t(text: &str) -> ApiResult<Rational> {
    let t = parse_rational(text).map_err(|e| ApiError::bad_request(format!("t: {e}")))?;
    if t < Rational::from_integer(0) || t > Rational::from_integer(1) {
        return Err(ApiError::bad_request("t must lie in [0, 1]"));
    }
    Ok(t)
}

fn parse_query(q: &HashMap<String, String>, allowed: &[&str]) -> ApiResult<ScenarioQuery> {
    if let Some(key) = q.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(ApiError::bad_request(format!("unknown query parameter {key}")));
    }
    let t = q.get("t").filter(|s| !s.is_empty()).map(|s| parse_t(s)).transpose()?;
    let usize_param = |name: &str, default: usize| -> ApiResult<usize> {
        match q.get(name) {
            None => Ok(default),
            Some(text) => text.parse().map_err(|_| ApiError::bad_request(format!("{name} must be a non-negative integer"))),
        }
    };
    let strict = match q.get("strict").map(String::as_str) {
        None | Some("false") | Some("0") => false,
        Some("true") | Some("1") => true,
        Some(other) => return Err(ApiError::bad_request(format!("strict must be true or false, got {other}"))),
    };
    let bins = usize_param("bins", DEFAULT_BIN_COUNT)?;
    if bins == 0 {
        return Err(ApiError::bad_request("bins must be positive"));
    }
    Ok(ScenarioQuery {
        t,
        min_line_size: usize_param("min_line_size", DEFAULT_MIN_LINE_SIZE)?,
        rule: if strict { RemovalRule::AnyLineDeleted } else { RemovalRule::AllLinesDeleted },
        bins,
    })
}

async fn get_scenario(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let query = parse_query(&q, &["t", "min_line_size", "strict", "bins"])?;
    let t = query.t.ok_or_else(|| ApiError::bad_request("missing t"))?;
    blocking(move || {
        let key = ScenarioKey {
            solution: id.clone(),
            t: t.to_string(),
            min_line_size: query.min_line_size,
            strict: query.rule == RemovalRule::AnyLineDeleted,
            bins: query.bins,
        };
        let cached = state.scenarios.lock().expect("cache lock").get(&key).cloned();
        if let Some(bytes) = cached.and_then(|sid| state.store.get(ArtifactKind::Scenario, &sid).ok().flatten()) {
            return Ok(json_bytes(bytes));
        }
        let (metrics, selection) = state.solution(&id)?;
        let lines = &metrics.instance.lines;
        let scenario = build_scenario_with(&selection, lines, t, query.min_line_size, &metrics, query.rule)?;
        let bytes = serde_json::to_vec(&scenario.to_json(&metrics, query.bins))?;
        let artifact = state.store.put(ArtifactKind::Scenario, &bytes)?;
        state.scenarios.lock().expect("cache lock").insert(key, artifact.id);
        Ok(json_bytes(bytes))
    })
    .await
}

/// Summary counts per threshold, `?t=0,0.1,0.2`.
async fn get_sweep(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Json<Value>> {
    let list = q.get("t").cloned().ok_or_else(|| ApiError::bad_request("missing t"))?;
    let rest: HashMap<String, String> = q.into_iter().filter(|(k, _)| k != "t").collect();
    let query = parse_query(&rest, &["min_line_size", "strict"])?;
    let thresholds = list.split(',').map(|s| parse_t(s.trim())).collect::<ApiResult<Vec<_>>>()?;
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(ApiError::bad_request("thresholds must be ascending"));
    }
    blocking(move || {
        let (metrics, selection) = state.solution(&id)?;
        let lines = &metrics.instance.lines;
        let results = scenario_sweep_with(&selection, lines, &thresholds, query.min_line_size, &metrics, query.rule)?;
        let rows: Vec<Value> = results
            .iter()
            .map(|s| {
                json!({
                    "t": serde_rational::to_json(s.t),
                    "deleted_lines": s.deleted_lines.len(),
                    "violated": s.violated.len(),
                })
            })
            .collect();
        Ok(Json(json!({"min_line_size": query.min_line_size, "rows": rows})))
    })
    .await
}

async fn get_geojson(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let query = parse_query(&q, &["t", "min_line_size", "strict"])?;
    blocking(move || {
        let (metrics, selection) = state.solution(&id)?;
        let scenario = match query.t {
            Some(t) => Some(build_scenario_with(
                &selection,
                &metrics.instance.lines,
                t,
                query.min_line_size,
                &metrics,
                query.rule,
            )?),
            None => None,
        };
        let map = report::geojson(&metrics, &selection, scenario.as_ref())?;
        Ok(([(header::CONTENT_TYPE, "application/geo+json")], serde_json::to_vec(&map)?).into_response())
    })
    .await
}
