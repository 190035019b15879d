//! The gateway daemon: ingest raw CQI, calibrate, compute per-window
//! features for every active task, push them to the cloud, and poll
//! the control plane for task changes.
//!
//! Three kinds of cooperating threads hand work forward with channels:
//! one ingestion thread writes the cache, one pipeline thread per task
//! reads immutable window snapshots, and one uploader owns the retry
//! buffer. The control-plane poller starts and stops pipelines.

mod cache;
mod source;

pub use cache::EdgeCache;
pub use source::{ingest_samples, IngestCounters, ReplaySource, TcpSource};

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tracing::{debug, info, warn};

use radiosense_core::behavior::PeakConfig;
use radiosense_core::cqi::{BackgroundProfile, CqiSeries, SensingTask};
use radiosense_core::pca::PcaModel;

use crate::eval::{peak_config_from_background, preprocess, segment_features};
use crate::wire::{ActiveTasks, FeatureMessage, ModelBundle, PushAck, TaskDescriptor};
use crate::{PlatformError, Result};

/// Gateway daemon configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeConfig {
    #[serde(default = "default_cache_capacity")]
    pub cache_capacity_per_link: usize,
    #[serde(default = "default_poll_interval")]
    pub poll_interval_ms: u64,
    #[serde(default = "default_backoff_base")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_backoff_cap")]
    pub backoff_cap_ms: u64,
    #[serde(default = "default_push_buffer")]
    pub push_buffer: usize,
    #[serde(default = "default_reorder_horizon")]
    pub reorder_horizon_ms: i64,
    #[serde(default = "default_calibration")]
    pub calibration_ms: u32,
    #[serde(default = "default_denoise_len")]
    pub denoise_len: usize,
    /// Bearer token for private-profile tasks.
    #[serde(default)]
    pub token: Option<String>,
}

fn default_cache_capacity() -> usize {
    8192
}
fn default_poll_interval() -> u64 {
    2000
}
fn default_backoff_base() -> u64 {
    250
}
fn default_backoff_cap() -> u64 {
    8000
}
fn default_push_buffer() -> usize {
    1000
}
fn default_reorder_horizon() -> i64 {
    500
}
fn default_calibration() -> u32 {
    3000
}
fn default_denoise_len() -> usize {
    3
}

impl Default for EdgeConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

/// Daemon-wide counters, exposed for supervision and tests.
#[derive(Debug, Default)]
pub struct EdgeCounters {
    pub windows_emitted: AtomicU64,
    pub windows_skipped: AtomicU64,
    pub pushed_ok: AtomicU64,
    pub push_retries: AtomicU64,
    pub push_rejected: AtomicU64,
    pub push_dropped: AtomicU64,
}

/// Estimate the background profile for a task from the oldest
/// `duration_ms` of cached samples on the task's links.
pub fn calibrate(
    cache: &Mutex<EdgeCache>,
    task: &SensingTask,
    duration_ms: u32,
    denoise_len: usize,
) -> Result<(BackgroundProfile, i64)> {
    let links = &task.ota_profile.neighborhood_links;
    let guard = cache.lock().expect("cache lock");
    let (start, end) = guard
        .span_for(links)
        .ok_or_else(|| PlatformError::Config("insufficient data: cache empty".into()))?;
    let have = end - start + i64::from(task.ota_profile.cqi_sampling_ms);
    if have < i64::from(duration_ms) {
        return Err(PlatformError::Config(format!(
            "insufficient data: have {have} ms of {duration_ms} ms"
        )));
    }
    let cal_end = start + i64::from(duration_ms);
    let samples = guard.snapshot(links, start, cal_end);
    drop(guard);
    let series = CqiSeries::new(
        "calibration",
        task.cqi_type,
        task.ota_profile.cqi_sampling_ms,
        task.ota_profile.subcarriers,
        links.clone(),
        samples,
    )?;
    let series = preprocess(&series, denoise_len)?;
    let profile = BackgroundProfile::estimate(&series)?;
    Ok((profile, cal_end))
}

struct Pipeline {
    descriptor: TaskDescriptor,
    stop: Arc<AtomicBool>,
    handle: std::thread::JoinHandle<()>,
    ota_version: u64,
}

/// Long-running gateway daemon bound to one cloud endpoint.
pub struct EdgeGateway {
    pub cfg: EdgeConfig,
    pub gw_id: String,
    pub cloud_url: String,
    pub cache: Arc<Mutex<EdgeCache>>,
    pub ingest: Arc<IngestCounters>,
    pub counters: Arc<EdgeCounters>,
    pub shutdown: Arc<AtomicBool>,
    agent: ureq::Agent,
}

impl EdgeGateway {
    pub fn new(cfg: EdgeConfig, gw_id: &str, cloud_url: &str, shutdown: Arc<AtomicBool>) -> Self {
        let cache = Arc::new(Mutex::new(EdgeCache::new(
            cfg.cache_capacity_per_link,
            cfg.reorder_horizon_ms,
        )));
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(5)))
            .http_status_as_error(false)
            .build()
            .new_agent();
        EdgeGateway {
            cfg,
            gw_id: gw_id.to_string(),
            cloud_url: cloud_url.trim_end_matches('/').to_string(),
            cache,
            ingest: Arc::new(IngestCounters::default()),
            counters: Arc::new(EdgeCounters::default()),
            shutdown,
            agent,
        }
    }

    fn authorized<B>(&self, req: ureq::RequestBuilder<B>) -> ureq::RequestBuilder<B> {
        match &self.cfg.token {
            Some(t) => req.header("Authorization", format!("Bearer {t}")),
            None => req,
        }
    }

    fn fetch_active_tasks(&self) -> Result<Vec<TaskDescriptor>> {
        let mut out = Vec::new();
        for task_type in ["detection", "localization", "activity"] {
            let url = format!(
                "{}/api/{task_type}/CQI_feature?GW={}",
                self.cloud_url, self.gw_id
            );
            let mut resp = self
                .authorized(self.agent.get(&url))
                .call()
                .map_err(|e| PlatformError::Config(format!("poll {url}: {e}")))?;
            if resp.status().is_success() {
                let body: ActiveTasks = resp
                    .body_mut()
                    .read_json()
                    .map_err(|e| PlatformError::format("active tasks", e))?;
                out.extend(body.active_tasks);
            }
        }
        out.sort_by(|a, b| a.task.task_id.cmp(&b.task.task_id));
        Ok(out)
    }

    fn fetch_model(&self, task: &SensingTask) -> Result<ModelBundle> {
        let url = format!(
            "{}/api/{}/model?task={}",
            self.cloud_url,
            task.task_type.as_str(),
            task.task_id
        );
        let mut resp = self
            .authorized(self.agent.get(&url))
            .call()
            .map_err(|e| PlatformError::Config(format!("fetch model: {e}")))?;
        if !resp.status().is_success() {
            return Err(PlatformError::Config(format!(
                "model fetch returned {}",
                resp.status()
            )));
        }
        resp.body_mut()
            .read_json()
            .map_err(|e| PlatformError::format("model bundle", e))
    }

    fn spawn_pipeline(
        &self,
        descriptor: TaskDescriptor,
        model: PcaModel,
        peak_cfg: Option<PeakConfig>,
        tx: mpsc::Sender<FeatureMessage>,
        input_done: Arc<AtomicBool>,
    ) -> Pipeline {
        let stop = Arc::new(AtomicBool::new(false));
        let task = descriptor.task.clone();
        let cache = Arc::clone(&self.cache);
        let counters = Arc::clone(&self.counters);
        let cfg = self.cfg.clone();
        let gw_id = self.gw_id.clone();
        let stop_flag = Arc::clone(&stop);
        let shutdown = Arc::clone(&self.shutdown);
        let ota_version = descriptor.model_version;
        let handle = std::thread::spawn(move || {
            run_pipeline(
                &task, model, peak_cfg, &cache, &counters, &cfg, &gw_id, tx, &stop_flag,
                &shutdown, &input_done,
            );
        });
        Pipeline { descriptor, stop, handle, ota_version }
    }

    /// One reconciliation pass: poll the control plane, start new
    /// tasks, stop removed ones, apply OTA changes.
    #[allow(clippy::too_many_arguments)]
    fn reconcile(
        &self,
        pipelines: &mut BTreeMap<String, Pipeline>,
        tx: &mpsc::Sender<FeatureMessage>,
        input_done: &Arc<AtomicBool>,
        sampling_handle: Option<&Arc<AtomicU32>>,
        ota_version: &AtomicU64,
    ) {
        let active = match self.fetch_active_tasks() {
            Ok(a) => a,
            Err(e) => {
                debug!("control plane unreachable, keeping current tasks: {e}");
                return;
            }
        };
        let active_ids: std::collections::BTreeSet<String> =
            active.iter().map(|d| d.task.task_id.clone()).collect();
        // stop removed tasks
        let stopped: Vec<String> = pipelines
            .keys()
            .filter(|id| !active_ids.contains(*id))
            .cloned()
            .collect();
        for id in stopped {
            if let Some(p) = pipelines.remove(&id) {
                info!("stopping task {id}");
                p.stop.store(true, Ordering::Relaxed);
                let _ = p.handle.join();
            }
        }
        for descriptor in active {
            let id = descriptor.task.task_id.clone();
            let changed = pipelines
                .get(&id)
                .map(|p| {
                    p.descriptor.model_version != descriptor.model_version
                        || p.descriptor.task != descriptor.task
                })
                .unwrap_or(false);
            if changed {
                if let Some(p) = pipelines.remove(&id) {
                    info!("reconfiguring task {id}");
                    p.stop.store(true, Ordering::Relaxed);
                    let _ = p.handle.join();
                }
            }
            if !pipelines.contains_key(&id) {
                match self.fetch_model(&descriptor.task) {
                    Ok(bundle) => {
                        let model = match bundle.model.map(|m| m.into_model()) {
                            Some(Ok(m)) => m,
                            Some(Err(e)) => {
                                warn!("task {id}: bad model: {e}");
                                continue;
                            }
                            None => {
                                debug!("task {id}: no model uploaded yet");
                                continue;
                            }
                        };
                        let peak_cfg = bundle.knn.as_ref().map(|k| k.peak_config());
                        // apply the OTA profile to the ingestion layer
                        if let Some(handle) = sampling_handle {
                            handle.store(
                                descriptor.task.ota_profile.cqi_sampling_ms,
                                Ordering::Relaxed,
                            );
                            ota_version.fetch_add(1, Ordering::Relaxed);
                        }
                        info!("starting task {id}");
                        let p = self.spawn_pipeline(
                            descriptor,
                            model,
                            peak_cfg,
                            tx.clone(),
                            Arc::clone(input_done),
                        );
                        pipelines.insert(id, p);
                    }
                    Err(e) => debug!("task {id}: model fetch failed: {e}"),
                }
            } else if let (Some(handle), Some(p)) = (sampling_handle, pipelines.get_mut(&id)) {
                // OTA sampling change without other task edits
                let want = p.descriptor.task.ota_profile.cqi_sampling_ms;
                if handle.swap(want, Ordering::Relaxed) != want {
                    p.ota_version += 1;
                }
            }
        }
    }

    /// Replay a trace file through the daemon; returns once the trace
    /// is exhausted and every emitted feature was pushed (or dropped).
    pub fn run_replay(&self, trace: &std::path::Path, speed: f64) -> Result<()> {
        let (replay, skipped) = ReplaySource::open(trace, speed)?;
        self.ingest.parse_errors.fetch_add(skipped, Ordering::Relaxed);
        let sampling_handle = replay.sampling_handle();
        let input_done = Arc::new(AtomicBool::new(false));
        let (tx, rx) = mpsc::channel::<FeatureMessage>();

        let uploader = self.spawn_uploader(rx);
        let pipelines: Arc<Mutex<BTreeMap<String, Pipeline>>> =
            Arc::new(Mutex::new(BTreeMap::new()));
        let poller = self.spawn_poller(
            Arc::clone(&pipelines),
            tx.clone(),
            Arc::clone(&input_done),
            Some(sampling_handle),
        );

        replay.run(&self.cache, &self.ingest, &self.shutdown);
        info!("replay finished");
        input_done.store(true, Ordering::Relaxed);

        // wait for pipelines to drain their remaining windows
        loop {
            if self.shutdown.load(Ordering::Relaxed) {
                break;
            }
            let busy = {
                let guard = pipelines.lock().expect("pipelines lock");
                guard.values().any(|p| !p.handle.is_finished())
            };
            if !busy {
                break;
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        self.shutdown.store(true, Ordering::Relaxed);
        drop(tx);
        let _ = poller.join();
        {
            let mut guard = pipelines.lock().expect("pipelines lock");
            for (_, p) in std::mem::take(&mut *guard) {
                p.stop.store(true, Ordering::Relaxed);
                let _ = p.handle.join();
            }
        }
        let _ = uploader.join();
        Ok(())
    }

    /// Serve a live TCP ingest socket until shutdown.
    pub fn run_listen(&self, addr: &str) -> Result<()> {
        let source = TcpSource::bind(addr)?;
        info!("listening for CQI rows on {}", source.local_addr());
        let input_done = Arc::new(AtomicBool::new(false));
        let (tx, rx) = mpsc::channel::<FeatureMessage>();
        let uploader = self.spawn_uploader(rx);
        let pipelines: Arc<Mutex<BTreeMap<String, Pipeline>>> =
            Arc::new(Mutex::new(BTreeMap::new()));
        let poller =
            self.spawn_poller(Arc::clone(&pipelines), tx.clone(), Arc::clone(&input_done), None);
        let result = source.run(&self.cache, &self.ingest, &self.shutdown);
        input_done.store(true, Ordering::Relaxed);
        drop(tx);
        let _ = poller.join();
        {
            let mut guard = pipelines.lock().expect("pipelines lock");
            for (_, p) in std::mem::take(&mut *guard) {
                p.stop.store(true, Ordering::Relaxed);
                let _ = p.handle.join();
            }
        }
        let _ = uploader.join();
        result
    }

    fn spawn_poller(
        &self,
        pipelines: Arc<Mutex<BTreeMap<String, Pipeline>>>,
        tx: mpsc::Sender<FeatureMessage>,
        input_done: Arc<AtomicBool>,
        sampling_handle: Option<Arc<AtomicU32>>,
    ) -> std::thread::JoinHandle<()> {
        let this = self.clone_refs();
        std::thread::spawn(move || {
            let ota_version = AtomicU64::new(0);
            loop {
                {
                    let mut guard = pipelines.lock().expect("pipelines lock");
                    this.reconcile(
                        &mut guard,
                        &tx,
                        &input_done,
                        sampling_handle.as_ref(),
                        &ota_version,
                    );
                }
                let mut waited = 0u64;
                while waited < this.cfg.poll_interval_ms {
                    if this.shutdown.load(Ordering::Relaxed) {
                        return;
                    }
                    std::thread::sleep(Duration::from_millis(50));
                    waited += 50;
                }
            }
        })
    }

    fn spawn_uploader(&self, rx: mpsc::Receiver<FeatureMessage>) -> std::thread::JoinHandle<()> {
        let this = self.clone_refs();
        std::thread::spawn(move || this.uploader_loop(rx))
    }

    // cheap clone sharing the Arc'd state; ureq agents clone shared pools
    fn clone_refs(&self) -> EdgeGateway {
        EdgeGateway {
            cfg: self.cfg.clone(),
            gw_id: self.gw_id.clone(),
            cloud_url: self.cloud_url.clone(),
            cache: Arc::clone(&self.cache),
            ingest: Arc::clone(&self.ingest),
            counters: Arc::clone(&self.counters),
            shutdown: Arc::clone(&self.shutdown),
            agent: self.agent.clone(),
        }
    }

    fn uploader_loop(&self, rx: mpsc::Receiver<FeatureMessage>) {
        let url = format!("{}/api/post_CQIfeatures", self.cloud_url);
        let mut queue: std::collections::VecDeque<FeatureMessage> = Default::default();
        let mut backoff = self.cfg.backoff_base_ms;
        let mut disconnected = false;
        let mut consecutive_failures = 0u32;
        loop {
            // pull everything currently queued on the channel
            loop {
                match rx.try_recv() {
                    Ok(msg) => {
                        queue.push_back(msg);
                        while queue.len() > self.cfg.push_buffer {
                            queue.pop_front();
                            self.counters.push_dropped.fetch_add(1, Ordering::Relaxed);
                        }
                    }
                    Err(mpsc::TryRecvError::Empty) => break,
                    Err(mpsc::TryRecvError::Disconnected) => {
                        disconnected = true;
                        break;
                    }
                }
            }
            // deliver in order
            while let Some(front) = queue.front() {
                match self.authorized(self.agent.post(&url)).send_json(front) {
                    Ok(resp) if resp.status().is_success() => {
                        let mut resp = resp;
                        let _ack: Option<PushAck> = resp.body_mut().read_json().ok();
                        queue.pop_front();
                        self.counters.pushed_ok.fetch_add(1, Ordering::Relaxed);
                        backoff = self.cfg.backoff_base_ms;
                        consecutive_failures = 0;
                    }
                    Ok(resp) if resp.status().is_client_error() => {
                        // permanent rejection (validation, staleness): drop
                        debug!("push rejected with {}", resp.status());
                        queue.pop_front();
                        self.counters.push_rejected.fetch_add(1, Ordering::Relaxed);
                        backoff = self.cfg.backoff_base_ms;
                        consecutive_failures = 0;
                    }
                    _ => {
                        self.counters.push_retries.fetch_add(1, Ordering::Relaxed);
                        consecutive_failures += 1;
                        let mut slept = 0u64;
                        while slept < backoff && !self.shutdown.load(Ordering::Relaxed) {
                            std::thread::sleep(Duration::from_millis(25));
                            slept += 25;
                        }
                        backoff = (backoff * 2).min(self.cfg.backoff_cap_ms);
                        break;
                    }
                }
            }
            // `disconnected` implies the channel is fully drained —
            // try_recv keeps yielding buffered messages until empty —
            // so these exits cannot lose queued work
            if disconnected && queue.is_empty() {
                return;
            }
            let giving_up = consecutive_failures > 20
                || (self.shutdown.load(Ordering::Relaxed) && consecutive_failures > 2);
            if disconnected && giving_up {
                self.counters
                    .push_dropped
                    .fetch_add(queue.len() as u64, Ordering::Relaxed);
                return;
            }
            if queue.is_empty() && !disconnected {
                match rx.recv_timeout(Duration::from_millis(50)) {
                    Ok(msg) => queue.push_back(msg),
                    Err(mpsc::RecvTimeoutError::Timeout) => {}
                    Err(mpsc::RecvTimeoutError::Disconnected) => disconnected = true,
                }
            }
        }
    }
}

/// Per-task window pipeline: calibrate, then stream features in
/// strictly increasing window order.
#[allow(clippy::too_many_arguments)]
fn run_pipeline(
    task: &SensingTask,
    model: PcaModel,
    peak_cfg: Option<PeakConfig>,
    cache: &Arc<Mutex<EdgeCache>>,
    counters: &Arc<EdgeCounters>,
    cfg: &EdgeConfig,
    gw_id: &str,
    tx: mpsc::Sender<FeatureMessage>,
    stop: &Arc<AtomicBool>,
    shutdown: &Arc<AtomicBool>,
    input_done: &Arc<AtomicBool>,
) {
    let links = &task.ota_profile.neighborhood_links;
    let window = i64::from(task.window_ms);
    let hop = i64::from(task.hop_ms());

    // calibration gate: a task never emits features without a profile
    let (_profile, cal_end) = loop {
        if stop.load(Ordering::Relaxed) || shutdown.load(Ordering::Relaxed) {
            return;
        }
        match calibrate(cache, task, cfg.calibration_ms, cfg.denoise_len) {
            Ok(p) => break p,
            Err(_) if !input_done.load(Ordering::Relaxed) => {
                std::thread::sleep(Duration::from_millis(20));
            }
            Err(e) => {
                warn!("task {}: calibration impossible: {e}", task.task_id);
                return;
            }
        }
    };

    // derive peak parameters from calibration when no frozen config
    // arrived with the model
    let peak_cfg = match (task.feature_recipe, peak_cfg) {
        (radiosense_core::cqi::FeatureRecipe::PcaPeakPhase, None) => {
            let guard = cache.lock().expect("cache lock");
            let span = guard.span_for(links);
            let samples = span
                .map(|(s, _)| guard.snapshot(links, s, s + i64::from(cfg.calibration_ms)))
                .unwrap_or_default();
            drop(guard);
            CqiSeries::new(
                "calibration",
                task.cqi_type,
                task.ota_profile.cqi_sampling_ms,
                task.ota_profile.subcarriers,
                links.clone(),
                samples,
            )
            .ok()
            .and_then(|s| preprocess(&s, cfg.denoise_len).ok())
            .and_then(|s| peak_config_from_background(&model, &s).ok())
        }
        (_, cfg) => cfg,
    };

    let mut next_start = cal_end.div_euclid(hop) * hop;
    if next_start < cal_end {
        next_start += hop;
    }
    info!(
        "task {}: calibrated, first window at {next_start} ms",
        task.task_id
    );
    loop {
        if stop.load(Ordering::Relaxed) || shutdown.load(Ordering::Relaxed) {
            return;
        }
        let ready = {
            let guard = cache.lock().expect("cache lock");
            guard.ready_until(links)
        };
        let window_end = next_start + window;
        match ready {
            Some(t) if t + i64::from(task.ota_profile.cqi_sampling_ms) >= window_end => {
                let samples = {
                    let guard = cache.lock().expect("cache lock");
                    guard.snapshot(links, next_start, window_end)
                };
                let result = CqiSeries::new(
                    gw_id,
                    task.cqi_type,
                    task.ota_profile.cqi_sampling_ms,
                    task.ota_profile.subcarriers,
                    links.clone(),
                    samples,
                )
                .map_err(PlatformError::Core)
                .and_then(|s| preprocess(&s, cfg.denoise_len))
                .and_then(|s| segment_features(&s, task, &model, peak_cfg.as_ref()));
                match result {
                    Ok(wf) => {
                        let msg = wf.to_message(gw_id, task);
                        counters.windows_emitted.fetch_add(1, Ordering::Relaxed);
                        if tx.send(msg).is_err() {
                            return;
                        }
                    }
                    Err(e) => {
                        debug!("task {}: window at {next_start} skipped: {e}", task.task_id);
                        counters.windows_skipped.fetch_add(1, Ordering::Relaxed);
                    }
                }
                next_start += hop;
            }
            _ if input_done.load(Ordering::Relaxed) => return,
            _ => std::thread::sleep(Duration::from_millis(5)),
        }
    }
}
