//! In-memory table of solve jobs.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use osdnp_core::solver::Progress;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn is_active(self) -> bool {
        matches!(self, JobState::Queued | JobState::Running)
    }
}

/// Search progress in twt units. Merged monotonically: nodes and bound only
/// grow, the incumbent only shrinks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobProgress {
    pub nodes_explored: u64,
    pub incumbent_twt: Option<i64>,
    pub lower_bound: Option<i64>,
}

impl JobProgress {
    fn merge(&mut self, p: Progress) {
        self.nodes_explored = self.nodes_explored.max(p.nodes_explored);
        self.incumbent_twt = match (self.incumbent_twt, p.incumbent_twt) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.lower_bound = self.lower_bound.max(p.lower_bound);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveJob {
    pub id: String,
    pub instance_id: String,
    pub overrides: Value,
    pub time_limit_s: f64,
    pub gap: f64,
    pub state: JobState,
    /// Solution artifact id once done.
    pub result: Option<String>,
    pub proof: Option<String>,
    pub error: Option<String>,
    pub wall_time_ms: Option<f64>,
    pub progress: JobProgress,
}

/// How a finished job ended.
pub enum Outcome {
    Solved { solution_id: String, proof: String, wall_time_ms: f64 },
    Failed { reason: String, proof: Option<String>, wall_time_ms: Option<f64> },
}

struct Entry {
    job: SolveJob,
    key: String,
    cancel: Arc<AtomicBool>,
}

#[derive(Default)]
struct Inner {
    jobs: HashMap<String, Entry>,
    /// Request key to the id of its queued or running job.
    active: HashMap<String, String>,
    seq: u64,
}

#[derive(Default)]
pub struct JobTable {
    inner: Mutex<Inner>,
}

#[derive(Debug)]
pub struct Submitted {
    pub id: String,
    pub cancel: Arc<AtomicBool>,
}

impl JobTable {
    /// Registers a queued job, or returns the id of the active job with the same key.
    pub fn submit(
        &self,
        key: &str,
        instance_id: &str,
        overrides: Value,
        time_limit_s: f64,
        gap: f64,
    ) -> Result<Submitted, String> {
        let mut inner = self.inner.lock().expect("job lock");
        if let Some(id) = inner.active.get(key) {
            return Err(id.clone());
        }
        inner.seq += 1;
        let id = osdnp_core::content_hash(format!("{key}#{}", inner.seq).as_bytes());
        let cancel = Arc::new(AtomicBool::new(false));
        let job = SolveJob {
            id: id.clone(),
            instance_id: instance_id.to_string(),
            overrides,
            time_limit_s,
            gap,
            state: JobState::Queued,
            result: None,
            proof: None,
            error: None,
            wall_time_ms: None,
            progress: JobProgress::default(),
        };
        inner.active.insert(key.to_string(), id.clone());
        inner.jobs.insert(id.clone(), Entry { job, key: key.to_string(), cancel: cancel.clone() });
        Ok(Submitted { id, cancel })
    }

    pub fn get(&self, id: &str) -> Option<SolveJob> {
        self.inner.lock().expect("job lock").jobs.get(id).map(|e| e.job.clone())
    }

    pub fn list(&self) -> Vec<SolveJob> {
        let inner = self.inner.lock().expect("job lock");
        let mut jobs: Vec<SolveJob> = inner.jobs.values().map(|e| e.job.clone()).collect();
        jobs.sort_by(|a, b| a.id.cmp(&b.id));
        jobs
    }

    pub fn start(&self, id: &str) {
        let mut inner = self.inner.lock().expect("job lock");
        if let Some(e) = inner.jobs.get_mut(id) {
            if e.job.state == JobState::Queued {
                e.job.state = JobState::Running;
            }
        }
    }

    pub fn progress(&self, id: &str, p: Progress) {
        let mut inner = self.inner.lock().expect("job lock");
        if let Some(e) = inner.jobs.get_mut(id) {
            e.job.progress.merge(p);
        }
    }

    pub fn finish(&self, id: &str, outcome: Outcome) {
        let mut inner = self.inner.lock().expect("job lock");
        let Some(e) = inner.jobs.get_mut(id) else { return };
        if !e.job.state.is_active() {
            return;
        }
        match outcome {
            Outcome::Solved { solution_id, proof, wall_time_ms } => {
                e.job.state = JobState::Done;
                e.job.result = Some(solution_id);
                e.job.proof = Some(proof);
                e.job.wall_time_ms = Some(wall_time_ms);
            }
            Outcome::Failed { reason, proof, wall_time_ms } => {
                e.job.state = JobState::Failed;
                e.job.error = Some(reason);
                e.job.proof = proof;
                e.job.wall_time_ms = wall_time_ms;
            }
        }
        let key = e.key.clone();
        if inner.active.get(&key).map(String::as_str) == Some(id) {
            inner.active.remove(&key);
        }
    }

    /// Asks an active job to stop; it keeps its best selection so far.
    pub fn cancel(&self, id: &str) -> Option<SolveJob> {
        let inner = self.inner.lock().expect("job lock");
        let e = inner.jobs.get(id)?;
        e.cancel.store(true, Ordering::Relaxed);
        Some(e.job.clone())
    }
}
