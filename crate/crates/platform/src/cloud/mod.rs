//! The cloud PaaS unit: feature ingestion, latent-value retrieval
//! (pull and WebSocket push), task lifecycle resources, and the JSON
//! resource catalog.

mod catalog;
mod registry;
mod routes;

pub use registry::{Journal, JournalOp, StartOutcome, TaskEntry, TaskRegistry, SUBSCRIBER_BACKLOG};

use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use radiosense_core::cqi::DeploymentConfig;

use crate::Result;

/// Cloud service configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CloudConfig {
    /// Bearer token protecting private-profile tasks. Public tasks
    /// need no authentication.
    #[serde(default)]
    pub private_token: Option<String>,
    /// Estimates retained per task.
    #[serde(default = "default_history_ring")]
    pub history_ring: usize,
    /// Staleness horizon multiplier on the task window for combining
    /// gateways with unequal cadence.
    #[serde(default = "default_staleness_factor")]
    pub staleness_factor: u32,
    /// Deployment description served through the catalog.
    #[serde(default)]
    pub deployment: Option<DeploymentConfig>,
    /// Journal lines between snapshot compactions.
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: u64,
}

fn default_history_ring() -> usize {
    1024
}
fn default_staleness_factor() -> u32 {
    2
}
fn default_snapshot_every() -> u64 {
    100
}

/// Shared service state. The registry takes one writer at a time, so
/// mutations are serialized; read handlers clone what they need out of
/// short read-lock sections.
pub struct CloudState {
    pub cfg: CloudConfig,
    pub registry: RwLock<TaskRegistry>,
    pub journal: Mutex<Option<Journal>>,
}

pub type SharedState = Arc<CloudState>;

impl CloudState {
    pub fn new(cfg: CloudConfig, journal_path: Option<PathBuf>) -> Result<SharedState> {
        let mut registry = TaskRegistry::default();
        let journal = match journal_path {
            Some(path) => {
                let journal = Journal::open(&path, cfg.snapshot_every);
                for op in journal.load()? {
                    registry.apply(op)?;
                }
                Some(journal)
            }
            None => None,
        };
        Ok(Arc::new(CloudState {
            cfg,
            registry: RwLock::new(registry),
            journal: Mutex::new(journal),
        }))
    }

    pub(crate) fn record(&self, op: JournalOp) -> Result<()> {
        let mut guard = self.journal.lock().expect("journal lock");
        if let Some(journal) = guard.as_mut() {
            let registry = self.registry.read().expect("registry lock");
            journal.append(&op, &registry)?;
        }
        Ok(())
    }

    /// Check a bearer token (header or `token` query parameter)
    /// against the private-profile token.
    pub fn token_ok(&self, presented: Option<&str>) -> bool {
        match (&self.cfg.private_token, presented) {
            (None, _) => true,
            (Some(want), Some(got)) => want == got,
            (Some(_), None) => false,
        }
    }
}

/// Build the HTTP application.
pub fn app(state: SharedState) -> axum::Router {
    routes::router(state)
}

/// Serve until `shutdown` resolves.
pub async fn serve(
    state: SharedState,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app(state))
        .with_graceful_shutdown(shutdown)
        .await
}
