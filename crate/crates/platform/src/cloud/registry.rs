//! Task registry: the cloud's single source of truth for tasks,
//! assignments, models and estimate history, with a JSON-lines journal
//! so the control plane survives restarts.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use radiosense_core::inference::KnnClassifier;
use radiosense_core::pca::PcaModel;

use crate::files::{KnnModelFile, PcaModelFile};
use crate::wire::{FeatureMessage, LatentEstimateWire, StartTaskRequest, TaskProfile};
use crate::{PlatformError, Result};

/// WebSocket fan-out backlog; consumers lagging past this are dropped.
pub const SUBSCRIBER_BACKLOG: usize = 256;

/// One registered task with its runtime state.
pub struct TaskEntry {
    /// Canonical registration body, kept for idempotency comparison
    /// and journal snapshots.
    pub request: StartTaskRequest,
    pub gw_ids: BTreeSet<String>,
    pub model: Option<PcaModel>,
    pub knn: Option<KnnClassifier>,
    pub model_version: u64,
    pub last_msgs: BTreeMap<String, FeatureMessage>,
    pub last_window_start: BTreeMap<String, i64>,
    pub history: VecDeque<Arc<LatentEstimateWire>>,
    pub seq: u64,
    pub subscribers: broadcast::Sender<Arc<LatentEstimateWire>>,
}

impl TaskEntry {
    fn new(request: StartTaskRequest) -> Result<Self> {
        let model = match &request.model {
            Some(file) => Some(file.clone().into_model()?),
            None => None,
        };
        let knn = match &request.knn {
            Some(file) => Some(file.fit()?),
            None => None,
        };
        let (subscribers, _) = broadcast::channel(SUBSCRIBER_BACKLOG);
        Ok(TaskEntry {
            request,
            gw_ids: BTreeSet::new(),
            model,
            knn,
            model_version: 1,
            last_msgs: BTreeMap::new(),
            last_window_start: BTreeMap::new(),
            history: VecDeque::new(),
            seq: 0,
            subscribers,
        })
    }

    pub fn task(&self) -> &radiosense_core::cqi::SensingTask {
        &self.request.task
    }

    pub fn profile(&self) -> TaskProfile {
        self.request.profile
    }

    pub fn model_file(&self) -> Option<&PcaModelFile> {
        self.request.model.as_ref()
    }

    pub fn knn_file(&self) -> Option<&KnnModelFile> {
        self.request.knn.as_ref()
    }

    pub fn latest(&self) -> Option<Arc<LatentEstimateWire>> {
        self.history.back().cloned()
    }

    pub fn push_estimate(&mut self, estimate: Arc<LatentEstimateWire>, ring: usize) {
        self.history.push_back(estimate.clone());
        while self.history.len() > ring {
            self.history.pop_front();
        }
        // fan-out happens off the inference path: send never blocks
        let _ = self.subscribers.send(estimate);
    }
}

/// Journal mutation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum JournalOp {
    StartTask { gw_id: String, request: StartTaskRequest },
    StopTask { task_id: String, gw_id: Option<String> },
}

/// Append-only journal with periodic snapshot compaction.
pub struct Journal {
    journal_path: PathBuf,
    snapshot_path: PathBuf,
    snapshot_every: u64,
    appended: u64,
}

impl Journal {
    pub fn open(path: &Path, snapshot_every: u64) -> Journal {
        Journal {
            journal_path: path.to_path_buf(),
            snapshot_path: path.with_extension("snapshot.json"),
            snapshot_every: snapshot_every.max(1),
            appended: 0,
        }
    }

    /// Replay snapshot plus journal tail into a list of operations.
    pub fn load(&self) -> Result<Vec<JournalOp>> {
        let mut ops: Vec<JournalOp> = Vec::new();
        if self.snapshot_path.exists() {
            let text = std::fs::read_to_string(&self.snapshot_path)
                .map_err(|e| PlatformError::io(&self.snapshot_path, e))?;
            ops = serde_json::from_str(&text)
                .map_err(|e| PlatformError::format("journal snapshot", e))?;
        }
        if self.journal_path.exists() {
            let file = std::fs::File::open(&self.journal_path)
                .map_err(|e| PlatformError::io(&self.journal_path, e))?;
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| PlatformError::io(&self.journal_path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                ops.push(
                    serde_json::from_str(&line)
                        .map_err(|e| PlatformError::format("journal line", e))?,
                );
            }
        }
        Ok(ops)
    }

    pub fn append(&mut self, op: &JournalOp, registry: &TaskRegistry) -> Result<()> {
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.journal_path)
            .map_err(|e| PlatformError::io(&self.journal_path, e))?;
        let line =
            serde_json::to_string(op).map_err(|e| PlatformError::format("journal line", e))?;
        writeln!(file, "{line}").map_err(|e| PlatformError::io(&self.journal_path, e))?;
        file.sync_data().ok();
        self.appended += 1;
        if self.appended >= self.snapshot_every {
            self.compact(registry)?;
        }
        Ok(())
    }

    /// Write the snapshot equivalent to the current registry and
    /// truncate the journal.
    pub fn compact(&mut self, registry: &TaskRegistry) -> Result<()> {
        let ops = registry.snapshot_ops();
        let text = serde_json::to_string_pretty(&ops)
            .map_err(|e| PlatformError::format("journal snapshot", e))?;
        std::fs::write(&self.snapshot_path, text)
            .map_err(|e| PlatformError::io(&self.snapshot_path, e))?;
        std::fs::write(&self.journal_path, b"")
            .map_err(|e| PlatformError::io(&self.journal_path, e))?;
        self.appended = 0;
        Ok(())
    }
}

/// Outcome of a start request.
#[derive(Debug, PartialEq, Eq)]
pub enum StartOutcome {
    Created,
    Idempotent,
    Conflict,
}

/// All registered tasks. Mutations run under one writer lock so
/// registry updates are serialized; readers work on snapshots.
#[derive(Default)]
pub struct TaskRegistry {
    pub tasks: BTreeMap<String, TaskEntry>,
}

impl TaskRegistry {
    /// Register a task or re-assert an identical registration.
    pub fn start_task(&mut self, gw_id: &str, request: StartTaskRequest) -> Result<StartOutcome> {
        request.task.validate().map_err(PlatformError::Core)?;
        let task_id = request.task.task_id.clone();
        match self.tasks.get_mut(&task_id) {
            Some(entry) => {
                if entry.request == request {
                    let outcome = if entry.gw_ids.insert(gw_id.to_string()) {
                        StartOutcome::Created
                    } else {
                        StartOutcome::Idempotent
                    };
                    Ok(outcome)
                } else {
                    Ok(StartOutcome::Conflict)
                }
            }
            None => {
                let mut entry = TaskEntry::new(request)?;
                entry.gw_ids.insert(gw_id.to_string());
                self.tasks.insert(task_id, entry);
                Ok(StartOutcome::Created)
            }
        }
    }

    /// Remove one gateway assignment, or the whole task without `gw_id`.
    pub fn stop_task(&mut self, task_id: &str, gw_id: Option<&str>) -> bool {
        match gw_id {
            Some(gw) => {
                let Some(entry) = self.tasks.get_mut(task_id) else {
                    return false;
                };
                let removed = entry.gw_ids.remove(gw);
                if entry.gw_ids.is_empty() {
                    self.tasks.remove(task_id);
                }
                removed
            }
            None => self.tasks.remove(task_id).is_some(),
        }
    }

    pub fn apply(&mut self, op: JournalOp) -> Result<()> {
        match op {
            JournalOp::StartTask { gw_id, request } => {
                self.start_task(&gw_id, request)?;
            }
            JournalOp::StopTask { task_id, gw_id } => {
                self.stop_task(&task_id, gw_id.as_deref());
            }
        }
        Ok(())
    }

    /// Minimal operation list reconstructing the current registry.
    pub fn snapshot_ops(&self) -> Vec<JournalOp> {
        let mut ops = Vec::new();
        for entry in self.tasks.values() {
            for gw in &entry.gw_ids {
                ops.push(JournalOp::StartTask {
                    gw_id: gw.clone(),
                    request: entry.request.clone(),
                });
            }
        }
        ops
    }

    pub fn get(&self, task_id: &str) -> Option<&TaskEntry> {
        self.tasks.get(task_id)
    }

    pub fn get_mut(&mut self, task_id: &str) -> Option<&mut TaskEntry> {
        self.tasks.get_mut(task_id)
    }

    /// Tasks of one type assigned to a gateway, sorted by task id.
    pub fn tasks_for_gw(
        &self,
        task_type: radiosense_core::cqi::TaskType,
        gw_id: &str,
        include_private: bool,
    ) -> Vec<&TaskEntry> {
        self.tasks
            .values()
            .filter(|e| {
                e.task().task_type == task_type
                    && e.gw_ids.contains(gw_id)
                    && (include_private || e.profile() == TaskProfile::Public)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use radiosense_core::cqi::{CqiType, FeatureRecipe, OtaProfile, SensingTask, TaskType};
    use tempfile::tempdir;

    fn request(task_id: &str) -> StartTaskRequest {
        StartTaskRequest {
            task: SensingTask {
                task_id: task_id.into(),
                task_type: TaskType::Detection,
                latent_labels: vec!["empty".into(), "occupied".into()],
                priors: vec![0.5, 0.5],
                feature_recipe: FeatureRecipe::Pca,
                num_components: Some(2),
                eigenvalue_threshold: None,
                window_ms: 600,
                hop_ms: None,
                cqi_type: CqiType::Up,
                ota_profile: OtaProfile {
                    neighborhood_links: vec![0],
                    carrier_frequency_hz: 2.4e9,
                    bandwidth_hz: 2e6,
                    subcarriers: 1,
                    duty_cycle_ms: 60,
                    cqi_type: CqiType::Up,
                    cqi_sampling_ms: 60,
                },
                gateway_combine: Default::default(),
            },
            profile: TaskProfile::Public,
            model: None,
            knn: None,
        }
    }

    #[test]
    fn idempotent_and_conflicting_starts() {
        let mut reg = TaskRegistry::default();
        assert_eq!(reg.start_task("gw0", request("t1")).unwrap(), StartOutcome::Created);
        assert_eq!(reg.start_task("gw0", request("t1")).unwrap(), StartOutcome::Idempotent);
        let mut different = request("t1");
        different.task.priors = vec![0.9, 0.1];
        assert_eq!(reg.start_task("gw0", different).unwrap(), StartOutcome::Conflict);
        assert_eq!(reg.tasks.len(), 1);
    }

    #[test]
    fn stop_removes_assignment_then_task() {
        let mut reg = TaskRegistry::default();
        reg.start_task("gw0", request("t1")).unwrap();
        reg.start_task("gw1", request("t1")).unwrap();
        assert!(reg.stop_task("t1", Some("gw0")));
        assert!(reg.get("t1").is_some());
        assert!(reg.stop_task("t1", Some("gw1")));
        assert!(reg.get("t1").is_none());
        assert!(!reg.stop_task("t1", None));
    }

    #[test]
    fn journal_replay_reconstructs_registry() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("journal.jsonl");
        let mut registry = TaskRegistry::default();
        let mut journal = Journal::open(&path, 1000);
        for op in [
            JournalOp::StartTask { gw_id: "gw0".into(), request: request("t1") },
            JournalOp::StartTask { gw_id: "gw0".into(), request: request("t2") },
            JournalOp::StopTask { task_id: "t2".into(), gw_id: None },
        ] {
            registry.apply(op.clone()).unwrap();
            journal.append(&op, &registry).unwrap();
        }
        let mut restored = TaskRegistry::default();
        for op in Journal::open(&path, 1000).load().unwrap() {
            restored.apply(op).unwrap();
        }
        assert_eq!(restored.tasks.len(), 1);
        assert!(restored.get("t1").is_some());
        assert!(restored.get("t1").unwrap().gw_ids.contains("gw0"));
    }

    #[test]
    fn snapshot_compaction_survives_reload() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("journal.jsonl");
        let mut registry = TaskRegistry::default();
        // snapshot_every = 2 triggers compaction mid-way
        let mut journal = Journal::open(&path, 2);
        for id in ["a", "b", "c"] {
            let op = JournalOp::StartTask { gw_id: "gw0".into(), request: request(id) };
            registry.apply(op.clone()).unwrap();
            journal.append(&op, &registry).unwrap();
        }
        let mut restored = TaskRegistry::default();
        for op in Journal::open(&path, 2).load().unwrap() {
            restored.apply(op).unwrap();
        }
        assert_eq!(restored.tasks.len(), 3);
    }
}
