//! Multi-command CLI: simulate, train, evaluate, e2e orchestration,
//! plus the `edge` and `cloud` daemons as subcommands.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 runtime failure.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use tracing::info;

use radiosense_core::cqi::{SensingTask, TaskType};
use radiosense_core::inference::{cross_validate, detection_metrics, localization_rmse};
use radiosense_core::pca::{train_pca, ComponentSelection, PcaModel};

use crate::cloud::{CloudConfig, CloudState};
use crate::edge::{EdgeConfig, EdgeGateway};
use crate::eval::{evaluate_trace, peak_config_from_background, preprocess, series_for_task};
use crate::files::{
    load_json, load_pca_model, save_json, save_pca_model, save_training_set, KnnExample,
    KnnModelFile, PcaModelFile,
};
use crate::sim::{simulate, training_scenes, training_segments, Scene, TrainingSpec};
use crate::trace::{read_trace, read_truth, write_trace, write_truth, CsvLog};
use crate::wire::{LatentEstimateWire, StartTaskRequest, TaskProfile};

/// Command failure carrying its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub exit_code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { exit_code: 1, message: message.into() }
    }
    pub fn data(message: impl std::fmt::Display) -> Self {
        CliError { exit_code: 2, message: message.to_string() }
    }
    pub fn runtime(message: impl std::fmt::Display) -> Self {
        CliError { exit_code: 3, message: message.to_string() }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

pub type CmdResult = Result<(), CliError>;

#[derive(Parser, Debug)]
#[command(name = "radiosense", about = "Cloud-edge passive radio sensing pipeline")]
pub struct RootArgs {
    /// Emit machine-readable JSON reports on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: RootCommand,
}

#[derive(Subcommand, Debug)]
pub enum RootCommand {
    /// Generate a synthetic trace and ground truth for an experiment.
    Simulate(ExperimentArgs),
    /// Train the subspace (and KNN) models for an experiment.
    Train(ExperimentArgs),
    /// Run the offline pipeline and report metrics.
    Evaluate(ExperimentArgs),
    /// Orchestrate cloud + edge end to end over loopback.
    E2e(ExperimentArgs),
    /// Run the gateway daemon.
    Edge(EdgeArgs),
    /// Run the cloud service.
    Cloud(CloudArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ExperimentArgs {
    /// Experiment configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Override the scene seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct EdgeArgs {
    /// Gateway configuration file (JSON); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub cloud_url: String,
    #[arg(long)]
    pub gw_id: String,
    /// Replay a trace file instead of listening.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Replay speed multiplier (0 = as fast as possible).
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    /// Listen address for live CSV-row ingest.
    #[arg(long)]
    pub listen: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct CloudArgs {
    /// Cloud configuration file (JSON); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub bind: String,
    /// Journal path enabling restart-durable task registration.
    #[arg(long)]
    pub journal: Option<PathBuf>,
}

/// End-to-end run parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct E2eSpec {
    #[serde(default = "default_speed")]
    pub speed: f64,
    #[serde(default = "default_e2e_calibration")]
    pub calibration_ms: u32,
    /// Stop after this many estimates (0 = run to trace end).
    #[serde(default)]
    pub max_estimates: usize,
    /// Asserted p95 POST-to-push latency budget.
    #[serde(default = "default_latency_budget")]
    pub latency_budget_ms: f64,
}

fn default_speed() -> f64 {
    1.0
}
fn default_e2e_calibration() -> u32 {
    3000
}
fn default_latency_budget() -> f64 {
    100.0
}

impl Default for E2eSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

/// One experiment: a task, an evaluation scene, training parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: SensingTask,
    pub scene: Scene,
    #[serde(default)]
    pub training: TrainingSpec,
    #[serde(default = "default_folds")]
    pub cv_folds: usize,
    #[serde(default = "default_cv_seed")]
    pub cv_seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub e2e: E2eSpec,
}

fn default_folds() -> usize {
    10
}
fn default_cv_seed() -> u64 {
    42
}

impl ExperimentConfig {
    pub fn load(args: &ExperimentArgs) -> Result<Self, CliError> {
        let mut cfg: ExperimentConfig = load_json(&args.config)
            .map_err(|e| CliError::data(format!("config {}: {e}", args.config.display())))?;
        if let Some(seed) = args.seed {
            cfg.scene.seed = seed;
        }
        if let Some(dir) = &args.output_dir {
            cfg.output_dir = dir.clone();
        }
        cfg.task.validate().map_err(CliError::data)?;
        cfg.scene.validate().map_err(CliError::data)?;
        Ok(cfg)
    }

    pub fn trace_path(&self) -> PathBuf {
        self.output_dir.join("trace.csv")
    }
    pub fn truth_path(&self) -> PathBuf {
        self.output_dir.join("truth.csv")
    }
    pub fn training_set_path(&self) -> PathBuf {
        self.output_dir.join("training_set.json")
    }
    pub fn model_path(&self) -> PathBuf {
        self.output_dir.join("model.json")
    }
    pub fn knn_path(&self) -> PathBuf {
        self.output_dir.join("knn.json")
    }
    pub fn report_path(&self) -> PathBuf {
        self.output_dir.join("report.json")
    }
}

pub fn cmd_simulate(args: &ExperimentArgs, json: bool) -> CmdResult {
    let cfg = ExperimentConfig::load(args)?;
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::data(format!("output dir: {e}")))?;
    let output = simulate(&cfg.scene, &cfg.task).map_err(CliError::runtime)?;
    write_trace(&cfg.trace_path(), &output.rows).map_err(CliError::runtime)?;
    write_truth(&cfg.truth_path(), &output.truth).map_err(CliError::runtime)?;
    if json {
        println!(
            "{}",
            serde_json::json!({
                "trace": cfg.trace_path(),
                "truth": cfg.truth_path(),
                "rows": output.rows.len(),
                "windows": output.truth.len(),
            })
        );
    } else {
        println!("trace: {} ({} rows)", cfg.trace_path().display(), output.rows.len());
        println!("truth: {} ({} windows)", cfg.truth_path().display(), output.truth.len());
    }
    Ok(())
}

/// Priors aligned with the sorted class-label order used in training.
fn sorted_priors(task: &SensingTask) -> Vec<f64> {
    let mut labels = task.latent_labels.clone();
    labels.sort();
    labels
        .iter()
        .map(|l| task.priors[task.label_index(l).expect("validated")])
        .collect()
}

fn selection_for(task: &SensingTask) -> ComponentSelection {
    match (task.eigenvalue_threshold, task.num_components) {
        (Some(h), _) => ComponentSelection::Threshold(h),
        (None, Some(p)) => ComponentSelection::Fixed(p),
        (None, None) => unreachable!("validated"),
    }
}

/// Train the models for an experiment; returns what evaluate needs.
pub fn train_models(cfg: &ExperimentConfig) -> Result<(PcaModel, Option<KnnModelFile>), CliError> {
    let scenes = training_scenes(&cfg.scene, &cfg.task, &cfg.training).map_err(CliError::data)?;
    let training_set =
        crate::sim::emit_training_set(&scenes, &cfg.task, &cfg.training).map_err(CliError::runtime)?;
    save_training_set(&cfg.training_set_path(), &training_set).map_err(CliError::runtime)?;
    let model = train_pca(&training_set, &sorted_priors(&cfg.task), selection_for(&cfg.task))
        .map_err(CliError::runtime)?;
    save_pca_model(&cfg.model_path(), &model).map_err(CliError::runtime)?;

    let knn = if crate::eval::needs_behavior(&cfg.task) {
        // freeze the peak parameters against the quiet class so the
        // same configuration applies at training and query time
        let none_scene = scenes
            .get(&cfg.scene.none_label)
            .ok_or_else(|| CliError::data("activity training needs a no-activity scene"))?;
        let sim = simulate(none_scene, &cfg.task).map_err(CliError::runtime)?;
        let series = series_for_task(&sim.rows, &cfg.task, "calibration")
            .and_then(|s| preprocess(&s, cfg.training.denoise_len))
            .map_err(CliError::runtime)?;
        let peak_cfg =
            peak_config_from_background(&model, &series).map_err(CliError::runtime)?;
        let segments = training_segments(&scenes, &cfg.task, &cfg.training)
            .map_err(CliError::runtime)?;
        let mut examples = Vec::new();
        for (label, segment) in &segments {
            let features = radiosense_core::behavior::build_behavior_features(
                segment, &model, &peak_cfg,
            )
            .map_err(CliError::runtime)?;
            examples.push(KnnExample { label: label.clone(), features: features.to_vec() });
        }
        let knn = KnnModelFile {
            task_id: cfg.task.task_id.clone(),
            neighbors: radiosense_core::inference::DEFAULT_NEIGHBORS,
            peak_prominence: peak_cfg.prominence,
            peak_min_width_ms: peak_cfg.min_width_ms,
            examples,
        };
        save_json(&cfg.knn_path(), &knn).map_err(CliError::runtime)?;
        Some(knn)
    } else {
        None
    };
    Ok((model, knn))
}

pub fn cmd_train(args: &ExperimentArgs, json: bool) -> CmdResult {
    let cfg = ExperimentConfig::load(args)?;
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::data(format!("output dir: {e}")))?;
    let (model, knn) = train_models(&cfg)?;
    let training_set = crate::files::load_training_set(&cfg.training_set_path())
        .map_err(CliError::runtime)?;
    let class_counts: BTreeMap<&String, usize> = training_set
        .classes
        .iter()
        .map(|(k, v)| (k, v.len()))
        .collect();
    if json {
        println!(
            "{}",
            serde_json::json!({
                "model": cfg.model_path(),
                "P": model.components,
                "V": model.dim,
                "threshold": model.threshold_used,
                "threshold_fallback": model.threshold_fallback,
                "eigenvalues": model.spectrum,
                "class_counts": class_counts,
                "knn_examples": knn.as_ref().map(|k| k.examples.len()),
            })
        );
    } else {
        println!("model: {}", cfg.model_path().display());
        println!("selected P = {} of V = {}", model.components, model.dim);
        if let Some(h) = model.threshold_used {
            println!(
                "threshold h = {h}{}",
                if model.threshold_fallback { " (no eigenvalue reached it; P forced to 1)" } else { "" }
            );
        }
        let spectrum: Vec<String> = model.spectrum.iter().map(|l| format!("{l:.6}")).collect();
        println!("eigenvalues: [{}]", spectrum.join(", "));
        for (label, count) in &class_counts {
            println!("class {label}: {count} examples");
        }
        if let Some(k) = &knn {
            println!("knn: {} ({} examples)", cfg.knn_path().display(), k.examples.len());
        }
    }
    Ok(())
}

/// Flat metrics report written by `evaluate`.
#[derive(Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub task_id: String,
    pub task_type: String,
    pub windows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detection: Option<radiosense_core::inference::DetectionMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub localization: Option<LocalizationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub activity: Option<ActivityReport>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub rmse_m: f64,
    pub exact_cell_accuracy: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ActivityReport {
    pub accuracy: f64,
    pub folds: usize,
    pub labels: Vec<String>,
    pub confusion: Vec<Vec<usize>>,
    /// Per-class means of the behavior statistics, for the qualitative
    /// arm/head contrasts.
    pub class_stats: BTreeMap<String, ActivityClassStats>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ActivityClassStats {
    pub mean_peak_count: f64,
    pub mean_phase_dev: f64,
}

pub fn run_evaluation(cfg: &ExperimentConfig) -> Result<EvalReport, CliError> {
    let model = load_pca_model(&cfg.model_path())
        .map_err(|e| CliError::data(format!("model: {e} (run `train` first)")))?;
    let mut report = EvalReport {
        task_id: cfg.task.task_id.clone(),
        task_type: cfg.task.task_type.as_str().to_string(),
        windows: 0,
        detection: None,
        localization: None,
        activity: None,
    };

    if cfg.task.task_type == TaskType::Activity {
        let knn: KnnModelFile = load_json(&cfg.knn_path())
            .map_err(|e| CliError::data(format!("knn: {e} (run `train` first)")))?;
        let features: Vec<Vec<f64>> = knn.examples.iter().map(|e| e.features.clone()).collect();
        let labels: Vec<String> = knn.examples.iter().map(|e| e.label.clone()).collect();
        let cv = cross_validate(knn.neighbors, &features, &labels, cfg.cv_folds, cfg.cv_seed)
            .map_err(CliError::runtime)?;
        let p = model.components;
        let mut class_stats: BTreeMap<String, ActivityClassStats> = BTreeMap::new();
        for class in &cv.class_labels {
            let rows: Vec<&Vec<f64>> = knn
                .examples
                .iter()
                .filter(|e| &e.label == class)
                .map(|e| &e.features)
                .collect();
            let n = rows.len() as f64;
            class_stats.insert(
                class.clone(),
                ActivityClassStats {
                    mean_peak_count: rows.iter().map(|r| r[p]).sum::<f64>() / n,
                    mean_phase_dev: rows.iter().map(|r| r[p + 3]).sum::<f64>() / n,
                },
            );
        }
        report.windows = knn.examples.len();
        report.activity = Some(ActivityReport {
            accuracy: cv.accuracy,
            folds: cv.folds,
            labels: cv.class_labels,
            confusion: cv.confusion,
            class_stats,
        });
        return Ok(report);
    }

    let (rows, _skipped) = read_trace(&cfg.trace_path())
        .map_err(|e| CliError::data(format!("trace: {e} (run `simulate` first)")))?;
    let truth = read_truth(&cfg.truth_path())
        .map_err(|e| CliError::data(format!("truth: {e} (run `simulate` first)")))?;
    let decided = evaluate_trace(
        &rows,
        &truth,
        &cfg.task,
        &model,
        None,
        None,
        cfg.training.denoise_len,
    )
    .map_err(CliError::runtime)?;
    report.windows = decided.len();

    // plot-ready posterior grid plus the raw decisions
    let mut header = vec!["window_start_ms".to_string()];
    header.extend(cfg.task.latent_labels.iter().cloned());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut grid = CsvLog::create(&cfg.output_dir.join("posterior_grid.csv"), &header_refs)
        .map_err(CliError::runtime)?;
    let mut decisions = CsvLog::create(
        &cfg.output_dir.join("decisions.csv"),
        &["window_start_ms", "truth", "estimate"],
    )
    .map_err(CliError::runtime)?;
    for w in &decided {
        let mut row = vec![w.start_ms.to_string()];
        row.extend(w.posteriors.iter().map(|p| crate::trace::fmt_f64(*p)));
        grid.write(&row).map_err(CliError::runtime)?;
        decisions
            .write(&[w.start_ms.to_string(), w.truth.clone(), w.estimate.clone()])
            .map_err(CliError::runtime)?;
    }

    match cfg.task.task_type {
        TaskType::Detection => {
            let positive = &cfg.task.latent_labels[1];
            let est: Vec<bool> = decided.iter().map(|w| &w.estimate == positive).collect();
            let truth_bits: Vec<bool> = decided.iter().map(|w| &w.truth == positive).collect();
            report.detection =
                Some(detection_metrics(&est, &truth_bits).map_err(CliError::runtime)?);
        }
        TaskType::Localization => {
            let positions: BTreeMap<String, [f64; 2]> = cfg
                .scene
                .cells
                .iter()
                .map(|c| (c.label.clone(), [c.x, c.y]))
                .collect();
            let est: Vec<String> = decided.iter().map(|w| w.estimate.clone()).collect();
            let truth_labels: Vec<String> = decided.iter().map(|w| w.truth.clone()).collect();
            let rmse =
                localization_rmse(&est, &truth_labels, &positions).map_err(CliError::runtime)?;
            let exact = decided.iter().filter(|w| w.truth == w.estimate).count() as f64
                / decided.len().max(1) as f64;
            report.localization =
                Some(LocalizationReport { rmse_m: rmse, exact_cell_accuracy: exact });
        }
        TaskType::Activity => unreachable!("handled above"),
    }
    Ok(report)
}

pub fn cmd_evaluate(args: &ExperimentArgs, json: bool) -> CmdResult {
    let cfg = ExperimentConfig::load(args)?;
    let report = run_evaluation(&cfg)?;
    save_json(&cfg.report_path(), &report).map_err(CliError::runtime)?;
    if json {
        println!("{}", serde_json::to_string(&report).expect("report json"));
    } else {
        println!("report: {}", cfg.report_path().display());
        println!("windows evaluated: {}", report.windows);
        if let Some(d) = &report.detection {
            println!(
                "detection: sensitivity {} fpr {} accuracy {:.4} specificity {}",
                d.sensitivity.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into()),
                d.fpr.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into()),
                d.accuracy,
                d.specificity.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into()),
            );
        }
        if let Some(l) = &report.localization {
            println!(
                "localization: rmse {:.3} m, exact-cell accuracy {:.4}",
                l.rmse_m, l.exact_cell_accuracy
            );
        }
        if let Some(a) = &report.activity {
            println!("activity: {}-fold accuracy {:.4}", a.folds, a.accuracy);
            println!("labels: {:?}", a.labels);
            for (i, row) in a.confusion.iter().enumerate() {
                println!("  {:>12} {:?}", a.labels[i], row);
            }
            for (label, stats) in &a.class_stats {
                println!(
                    "  {label}: mean peaks {:.2}, mean phase dev {:.4}",
                    stats.mean_peak_count, stats.mean_phase_dev
                );
            }
        }
    }
    Ok(())
}

/// Child process that dies with the supervisor.
struct Supervised {
    child: Child,
}

impl Supervised {
    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Supervised {
    fn drop(&mut self) {
        self.kill();
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((sorted.len() as f64 - 1.0) * q).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

pub fn cmd_e2e(args: &ExperimentArgs, json: bool) -> CmdResult {
    let cfg = ExperimentConfig::load(args)?;
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::data(format!("output dir: {e}")))?;

    let interrupted = Arc::new(AtomicBool::new(false));
    {
        let flag = Arc::clone(&interrupted);
        let _ = ctrlc::set_handler(move || flag.store(true, Ordering::Relaxed));
    }

    // artifacts: simulate + train if missing
    if !cfg.trace_path().exists() || !cfg.truth_path().exists() {
        cmd_simulate(args, false)?;
    }
    if !cfg.model_path().exists() {
        let _ = train_models(&cfg)?;
    }
    let model: PcaModelFile = load_json(&cfg.model_path()).map_err(CliError::data)?;
    let knn: Option<KnnModelFile> = if crate::eval::needs_behavior(&cfg.task) {
        Some(load_json(&cfg.knn_path()).map_err(CliError::data)?)
    } else {
        None
    };

    let exe = std::env::current_exe().map_err(CliError::runtime)?;

    // cloud first; parse its LISTENING line for the bound address
    let mut cloud = Supervised {
        child: Command::new(&exe)
            .args(["cloud", "--bind", "127.0.0.1:0"])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| CliError::runtime(format!("spawn cloud: {e}")))?,
    };
    let cloud_addr = {
        let stdout = cloud.child.stdout.take().expect("piped stdout");
        let mut reader = std::io::BufReader::new(stdout);
        let mut addr = None;
        for _ in 0..100 {
            let mut line = String::new();
            match reader.read_line(&mut line) {
                Ok(0) => break,
                Ok(_) => {
                    if let Some(rest) = line.trim().strip_prefix("LISTENING ") {
                        addr = Some(rest.to_string());
                        break;
                    }
                }
                Err(_) => break,
            }
        }
        // keep draining in the background so the child never blocks
        std::thread::spawn(move || {
            let mut sink = String::new();
            while let Ok(n) = reader.read_line(&mut sink) {
                if n == 0 {
                    break;
                }
                sink.clear();
            }
        });
        addr.ok_or_else(|| CliError::runtime("cloud did not report its address"))?
    };
    let base = format!("http://{cloud_addr}");
    info!("cloud on {base}");

    // register the task with its models
    let request = StartTaskRequest {
        task: cfg.task.clone(),
        profile: TaskProfile::Public,
        model: Some(model),
        knn,
    };
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(5)))
        .http_status_as_error(false)
        .build()
        .new_agent();
    let start_url = format!(
        "{base}/api/{}/start_task?GW=gw0",
        cfg.task.task_type.as_str()
    );
    let resp = agent
        .post(&start_url)
        .send_json(&request)
        .map_err(|e| CliError::runtime(format!("start_task: {e}")))?;
    if resp.status() != 201 {
        return Err(CliError::runtime(format!("start_task returned {}", resp.status())));
    }

    // subscribe before the edge starts so nothing is missed
    let ws_url = format!(
        "ws://{cloud_addr}/api/{}/subscribe?GW=gw0",
        cfg.task.task_type.as_str()
    );
    let (mut ws, _) = tungstenite::connect(&ws_url)
        .map_err(|e| CliError::runtime(format!("subscribe: {e}")))?;
    if let tungstenite::stream::MaybeTlsStream::Plain(stream) = ws.get_ref() {
        stream
            .set_read_timeout(Some(Duration::from_millis(200)))
            .map_err(CliError::runtime)?;
    }

    // edge replaying the trace
    let edge_cfg_path = cfg.output_dir.join("edge.json");
    let edge_cfg = EdgeConfig {
        calibration_ms: cfg.e2e.calibration_ms,
        denoise_len: cfg.training.denoise_len,
        poll_interval_ms: 300,
        ..EdgeConfig::default()
    };
    save_json(&edge_cfg_path, &edge_cfg).map_err(CliError::runtime)?;
    let mut edge = Supervised {
        child: Command::new(&exe)
            .args([
                "edge",
                "--config",
                &edge_cfg_path.display().to_string(),
                "--cloud-url",
                &base,
                "--gw-id",
                "gw0",
                "--replay",
                &cfg.trace_path().display().to_string(),
                "--speed",
                &cfg.e2e.speed.to_string(),
            ])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| CliError::runtime(format!("spawn edge: {e}")))?,
    };

    // collect pushed estimates with receive timestamps
    let estimates_path = cfg.output_dir.join("estimates.csv");
    let mut log = CsvLog::create(
        &estimates_path,
        &["seq", "timestamp_ms", "estimate", "ingested_at_us", "recv_at_us", "latency_us"],
    )
    .map_err(CliError::runtime)?;
    let mut latencies_ms: Vec<f64> = Vec::new();
    let mut out_of_order = 0usize;
    let mut last_seq = 0u64;
    let mut last_timestamp = i64::MIN;
    let mut received = 0usize;
    let mut edge_done_at: Option<std::time::Instant> = None;
    let interrupted_run = loop {
        if interrupted.load(Ordering::Relaxed) {
            break true;
        }
        if edge_done_at.is_none() && edge.child.try_wait().ok().flatten().is_some() {
            edge_done_at = Some(std::time::Instant::now());
        }
        if let Some(done) = edge_done_at {
            if done.elapsed() > Duration::from_secs(2) {
                break false;
            }
        }
        if cfg.e2e.max_estimates > 0 && received >= cfg.e2e.max_estimates {
            break false;
        }
        match ws.read() {
            Ok(tungstenite::Message::Text(text)) => {
                let recv_at_us = std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_micros() as u64)
                    .unwrap_or(0);
                let estimate: LatentEstimateWire = match serde_json::from_str(text.as_str()) {
                    Ok(e) => e,
                    Err(e) => return Err(CliError::runtime(format!("bad push payload: {e}"))),
                };
                if estimate.seq <= last_seq && last_seq != 0 {
                    out_of_order += 1;
                }
                if estimate.timestamp_ms < last_timestamp {
                    out_of_order += 1;
                }
                last_seq = estimate.seq;
                last_timestamp = estimate.timestamp_ms;
                let latency_us = recv_at_us.saturating_sub(estimate.ingested_at_us);
                latencies_ms.push(latency_us as f64 / 1000.0);
                log.write(&[
                    estimate.seq.to_string(),
                    estimate.timestamp_ms.to_string(),
                    estimate.estimate.clone(),
                    estimate.ingested_at_us.to_string(),
                    recv_at_us.to_string(),
                    latency_us.to_string(),
                ])
                .map_err(CliError::runtime)?;
                received += 1;
            }
            Ok(tungstenite::Message::Close(_)) => break false,
            Ok(_) => {}
            Err(tungstenite::Error::Io(ref e))
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut => {}
            Err(_) => break false,
        }
    };

    edge.kill();
    cloud.kill();

    latencies_ms.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let p50 = percentile(&latencies_ms, 0.50);
    let p95 = percentile(&latencies_ms, 0.95);
    let p99 = percentile(&latencies_ms, 0.99);
    let within_budget = p95 < cfg.e2e.latency_budget_ms;
    let summary = serde_json::json!({
        "estimates": received,
        "estimates_csv": estimates_path,
        "out_of_order": out_of_order,
        "latency_ms": { "p50": p50, "p95": p95, "p99": p99 },
        "latency_budget_ms": cfg.e2e.latency_budget_ms,
        "within_budget": within_budget,
        "interrupted": interrupted_run,
    });
    save_json(&cfg.output_dir.join("e2e_report.json"), &summary).map_err(CliError::runtime)?;
    if json {
        println!("{summary}");
    } else {
        println!("estimates: {received} ({})", estimates_path.display());
        println!("out-of-order estimates: {out_of_order}");
        println!("push latency p50 {p50:.2} ms, p95 {p95:.2} ms, p99 {p99:.2} ms");
        println!(
            "p95 {} the {} ms budget",
            if within_budget { "within" } else { "EXCEEDS" },
            cfg.e2e.latency_budget_ms
        );
    }
    if interrupted_run {
        return Err(CliError::runtime("interrupted"));
    }
    if received == 0 {
        return Err(CliError::runtime("no estimates received"));
    }
    Ok(())
}

pub fn cmd_edge(args: &EdgeArgs) -> CmdResult {
    let cfg: EdgeConfig = match &args.config {
        Some(path) => load_json(path).map_err(CliError::data)?,
        None => EdgeConfig::default(),
    };
    let shutdown = Arc::new(AtomicBool::new(false));
    {
        let flag = Arc::clone(&shutdown);
        let _ = ctrlc::set_handler(move || flag.store(true, Ordering::Relaxed));
    }
    let gateway = EdgeGateway::new(cfg, &args.gw_id, &args.cloud_url, shutdown);
    match (&args.replay, &args.listen) {
        (Some(trace), None) => gateway.run_replay(trace, args.speed).map_err(CliError::runtime),
        (None, Some(addr)) => gateway.run_listen(addr).map_err(CliError::runtime),
        (None, None) => Err(CliError::usage("edge needs --replay or --listen")),
        (Some(_), Some(_)) => Err(CliError::usage("--replay and --listen are exclusive")),
    }?;
    let pushed = gateway.counters.pushed_ok.load(Ordering::Relaxed);
    let emitted = gateway.counters.windows_emitted.load(Ordering::Relaxed);
    info!("edge done: {emitted} windows emitted, {pushed} pushed");
    Ok(())
}

pub fn cmd_cloud(args: &CloudArgs) -> CmdResult {
    let cfg: CloudConfig = match &args.config {
        Some(path) => load_json(path).map_err(CliError::data)?,
        None => CloudConfig::default(),
    };
    let state = CloudState::new(cfg, args.journal.clone()).map_err(CliError::data)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(CliError::runtime)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&args.bind)
            .await
            .map_err(|e| CliError::runtime(format!("bind {}: {e}", args.bind)))?;
        let addr = listener.local_addr().map_err(CliError::runtime)?;
        // supervisors parse this line to learn the bound port
        println!("LISTENING {addr}");
        use std::io::Write;
        let _ = std::io::stdout().flush();
        crate::cloud::serve(state, listener, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(CliError::runtime)
    })
}

/// Top-level dispatch used by the `radiosense` binary.
pub fn run(args: RootArgs) -> CmdResult {
    match &args.command {
        RootCommand::Simulate(a) => cmd_simulate(a, args.json),
        RootCommand::Train(a) => cmd_train(a, args.json),
        RootCommand::Evaluate(a) => cmd_evaluate(a, args.json),
        RootCommand::E2e(a) => cmd_e2e(a, args.json),
        RootCommand::Edge(a) => cmd_edge(a),
        RootCommand::Cloud(a) => cmd_cloud(a),
    }
}
