//! HTTP service over the stop network design solver.
//!
//! Instances and solutions are kept in a content-addressed [`store::Store`];
//! solves run as background jobs and are polled through `/api/jobs/{id}`.

mod api;
pub mod jobs;
pub mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use osdnp_core::{Instance, MetricsBundle};
use tokio::sync::Semaphore;

pub use api::router;
pub use jobs::{JobProgress, JobState, SolveJob};
pub use store::{ArtifactKind, Store, StoreError, StoredArtifact};

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_TIME_LIMIT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Solve jobs allowed to run at once; further jobs wait queued.
    pub workers: usize,
    pub default_time_limit: Duration,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig { data_dir: data_dir.into(), workers: 1, default_time_limit: DEFAULT_TIME_LIMIT }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct ScenarioKey {
    solution: String,
    t: String,
    min_line_size: usize,
    strict: bool,
    bins: usize,
}

pub struct AppState {
    pub config: ServiceConfig,
    pub store: Store,
    pub jobs: jobs::JobTable,
    slots: Arc<Semaphore>,
    instances: Mutex<HashMap<String, Arc<Instance>>>,
    /// Keyed by the content hash of the instance with overrides applied.
    metrics: Mutex<HashMap<String, Arc<MetricsBundle>>>,
    /// Scenario artifact id per query.
    scenarios: Mutex<HashMap<ScenarioKey, String>>,
}

impl AppState {
    pub fn open(config: ServiceConfig) -> Result<Arc<AppState>, StoreError> {
        let store = Store::open(&config.data_dir)?;
        Ok(Arc::new(AppState {
            slots: Arc::new(Semaphore::new(config.workers.max(1))),
            config,
            store,
            jobs: jobs::JobTable::default(),
            instances: Mutex::default(),
            metrics: Mutex::default(),
            scenarios: Mutex::default(),
        }))
    }
}

/// Serves until ctrl-c on a fresh multi-threaded runtime.
pub fn run_blocking(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let state = AppState::open(config).map_err(std::io::Error::other)?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })
}
