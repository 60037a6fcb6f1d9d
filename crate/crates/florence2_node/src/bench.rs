//! Continuous-mode throughput harness.
//!
//! Replays a repeatable image stream (deterministic synthetic frames or a
//! directory of recorded images) through a node running the configured task
//! continuously, then reports min/avg/max FPS over sliding windows of
//! completed inferences. The harness talks to the node only through the
//! graph: it publishes frames on the image topic and consumes completions
//! from the results topic; drop counts come from the node's stats snapshot.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use florence2_interfaces::{parse_result, Image, Stamp};
use rograph::{Context, QosProfile};

use crate::adapter::{bind, RunningNode};
use crate::backend::{BackendConfig, DevicePolicy, ResolvedDevice};
use crate::engine::NodeConfig;

/// How completion timestamps are taken.
///
/// `Wall` measures end-to-end wall-clock arrival of results (the throughput
/// number a robot actually sees). `Reported` builds a virtual clock from the
/// backend-reported inference times, which makes mock-backend reports
/// byte-identical across runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimingSource {
    #[default]
    Wall,
    Reported,
}

impl TimingSource {
    fn as_str(&self) -> &'static str {
        match self {
            TimingSource::Wall => "wall",
            TimingSource::Reported => "reported",
        }
    }
}

/// Input stream: a deterministic synthetic generator (no recording needed)
/// or a directory of PNG/JPEG frames replayed in sorted order, looping until
/// enough completions are collected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StreamSource {
    Synthetic {
        #[serde(default = "default_width")]
        width: u32,
        #[serde(default = "default_height")]
        height: u32,
        rate_hz: f64,
        #[serde(default = "default_seed")]
        seed: u64,
    },
    ImageDir {
        path: PathBuf,
        rate_hz: f64,
    },
}

fn default_width() -> u32 {
    640
}

fn default_height() -> u32 {
    480
}

fn default_seed() -> u64 {
    7
}

fn default_warmup() -> usize {
    20
}

fn default_window() -> usize {
    10
}

fn default_startup_deadline() -> f64 {
    10.0
}

fn default_task() -> String {
    "<OD>".to_string()
}

/// One benchmark cell: a (model, device, stream) combination.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    #[serde(default = "default_task")]
    pub task_token: String,
    pub model_id: String,
    #[serde(default)]
    pub model_revision: Option<String>,
    #[serde(default)]
    pub device: Option<String>,
    pub stream: StreamSource,
    /// Completions excluded from statistics (first-inference warmup).
    #[serde(default = "default_warmup")]
    pub warmup_frames: usize,
    pub measure_frames: usize,
    /// Frames per FPS sample window.
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default)]
    pub timing: TimingSource,
    #[serde(default = "default_startup_deadline")]
    pub startup_deadline_s: f64,
}

impl BenchConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, BenchError> {
        let cfg: Self = toml::from_str(s).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, BenchError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&raw)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.window < 1 || self.measure_frames < self.window {
            return Err(BenchError::Config(format!(
                "need measure_frames >= window >= 1 (got measure={}, window={})",
                self.measure_frames, self.window
            )));
        }
        let rate = match &self.stream {
            StreamSource::Synthetic { rate_hz, .. } | StreamSource::ImageDir { rate_hz, .. } => {
                *rate_hz
            }
        };
        if !(rate.is_finite() && rate > 0.0) {
            return Err(BenchError::Config(format!("stream rate must be > 0, got {rate}")));
        }
        Ok(())
    }
}

/// Statistics for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub device: String,
    pub model_id: String,
    pub task_token: String,
    pub fps_min: f64,
    pub fps_avg: f64,
    pub fps_max: f64,
    pub frames_processed: u64,
    pub frames_dropped: u64,
    pub window: usize,
    pub warmup_frames: usize,
    pub measure_frames: usize,
    pub timing: String,
    pub runtime: BTreeMap<String, String>,
}

impl BenchReport {
    pub fn validate(&self) -> Result<(), BenchError> {
        let ordered = self.fps_min > 0.0
            && self.fps_min <= self.fps_avg
            && self.fps_avg <= self.fps_max;
        if !ordered {
            return Err(BenchError::Config(format!(
                "fps triplet must satisfy 0 < min <= avg <= max, got {}/{}/{}",
                self.fps_min, self.fps_avg, self.fps_max
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, BenchError> {
        serde_json::from_str(s).map_err(|e| BenchError::Config(format!("bad report JSON: {e}")))
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("STREAM_EMPTY: the input stream yields no frames")]
    StreamEmpty,
    #[error("NODE_NOT_PROCESSING: no completions within {0:.1}s of stream start")]
    NodeNotProcessing(f64),
    #[error("collected only {got} completions, need {need}")]
    InsufficientCompletions { got: usize, need: usize },
    #[error("bench config error: {0}")]
    Config(String),
    #[error(transparent)]
    Bind(#[from] crate::adapter::BindError),
}

/// Runs one cell: binds a node with the continuous task, replays the stream,
/// and reduces completion times to an FPS triplet.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let ctx = Context::new();
    let mut node_config = NodeConfig::with_backend(build_backend_config(cfg)?);
    node_config.continuous_task = Some(cfg.task_token.clone());
    node_config.publish_annotated = false;
    let node = bind(&ctx, node_config)?;

    // One anchor completion ahead of the measured ones (window edges need
    // w+1 timestamps).
    let needed = cfg.warmup_frames + cfg.measure_frames + 1;
    let probe = ctx.create_node("bench_probe").map_err(|e| BenchError::Config(e.to_string()))?;
    let listener = probe
        .create_listener::<String>("/florence2/results_json", QosProfile::reliable(needed + 64))
        .map_err(|e| BenchError::Config(e.to_string()))?;

    let stop = Arc::new(AtomicBool::new(false));
    let stream_thread = spawn_stream(&ctx, cfg, stop.clone())?;

    let started = Instant::now();
    let startup_deadline = Duration::from_secs_f64(cfg.startup_deadline_s);
    // Collection cap: generous multiple of the expected duration.
    let hard_deadline = startup_deadline + Duration::from_secs(115);
    let mut completions: Vec<f64> = Vec::with_capacity(needed);
    let mut virtual_clock = 0.0f64;
    while completions.len() < needed {
        let elapsed = started.elapsed();
        if completions.is_empty() && elapsed > startup_deadline {
            stop.store(true, Ordering::SeqCst);
            let _ = stream_thread.join();
            return Err(BenchError::NodeNotProcessing(cfg.startup_deadline_s));
        }
        if elapsed > hard_deadline {
            break;
        }
        if let Some(json) = listener.recv_timeout(Duration::from_millis(200)) {
            let t = match cfg.timing {
                TimingSource::Wall => started.elapsed().as_secs_f64(),
                TimingSource::Reported => {
                    let doc = parse_result(&json)
                        .map_err(|e| BenchError::Config(format!("bad result on topic: {e}")))?;
                    virtual_clock += doc.inference_time_s;
                    virtual_clock
                }
            };
            completions.push(t);
        }
    }
    stop.store(true, Ordering::SeqCst);
    let _ = stream_thread.join();

    if completions.len() < needed {
        return Err(BenchError::InsufficientCompletions {
            got: completions.len(),
            need: needed,
        });
    }

    let measured = &completions[cfg.warmup_frames..cfg.warmup_frames + cfg.measure_frames + 1];
    let (fps_min, fps_avg, fps_max) = compute_fps_windows(measured, cfg.window)
        .ok_or(BenchError::InsufficientCompletions {
            got: measured.len(),
            need: cfg.window + 1,
        })?;

    let stats = node.stats();
    let report = BenchReport {
        device: device_description(&node),
        model_id: cfg.model_id.clone(),
        task_token: cfg.task_token.clone(),
        fps_min,
        fps_avg,
        fps_max,
        frames_processed: cfg.measure_frames as u64,
        frames_dropped: stats.frames_dropped,
        window: cfg.window,
        warmup_frames: cfg.warmup_frames,
        measure_frames: cfg.measure_frames,
        timing: cfg.timing.as_str().to_string(),
        runtime: runtime_map(&node),
    };
    node.shutdown();
    report.validate()?;
    Ok(report)
}

fn build_backend_config(cfg: &BenchConfig) -> Result<BackendConfig, BenchError> {
    let mut backend = BackendConfig::new(cfg.model_id.clone());
    if let Some(rev) = &cfg.model_revision {
        backend.revision = rev.clone();
    }
    if let Some(device) = &cfg.device {
        backend.device_policy =
            DevicePolicy::parse(device).map_err(|e| BenchError::Config(e.to_string()))?;
    }
    Ok(backend)
}

fn device_description(node: &RunningNode) -> String {
    let backend = node.engine().backend();
    let runtime: BTreeMap<String, String> = backend.runtime_info().into_iter().collect();
    if let Some(name) = runtime.get("gpu_name") {
        return name.clone();
    }
    match backend.device() {
        ResolvedDevice::Cpu if backend.model_label() == "mock" => "mock".to_string(),
        device => device.to_string(),
    }
}

fn runtime_map(node: &RunningNode) -> BTreeMap<String, String> {
    let mut map: BTreeMap<String, String> = node.engine().backend().runtime_info().into_iter().collect();
    map.insert("harness".to_string(), format!("florence2_node {}", env!("CARGO_PKG_VERSION")));
    map
}

fn spawn_stream(
    ctx: &Context,
    cfg: &BenchConfig,
    stop: Arc<AtomicBool>,
) -> Result<std::thread::JoinHandle<()>, BenchError> {
    let node = ctx
        .create_node("bench_stream")
        .map_err(|e| BenchError::Config(e.to_string()))?;
    let publisher = node
        .create_publisher::<Image>("/camera/image_raw", QosProfile::sensor_data())
        .map_err(|e| BenchError::Config(e.to_string()))?;

    match &cfg.stream {
        StreamSource::Synthetic {
            width,
            height,
            rate_hz,
            seed,
        } => {
            let (width, height, rate_hz, seed) = (*width, *height, *rate_hz, *seed);
            if width == 0 || height == 0 {
                return Err(BenchError::StreamEmpty);
            }
            let interval = Duration::from_secs_f64(1.0 / rate_hz);
            Ok(std::thread::Builder::new()
                .name("bench-stream".into())
                .spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let mut buf = vec![0u8; (width * height * 3) as usize];
                    // Absolute-deadline pacing: sleep overshoot must not
                    // accumulate into the effective frame rate.
                    let mut next = Instant::now();
                    while !stop.load(Ordering::SeqCst) {
                        rng.fill_bytes(&mut buf);
                        publisher.publish(Image {
                            stamp: Stamp::now(),
                            frame_id: "bench".to_string(),
                            width,
                            height,
                            encoding: "rgb8".to_string(),
                            step: width * 3,
                            data: buf.clone(),
                        });
                        next += interval;
                        let now = Instant::now();
                        if next > now {
                            std::thread::sleep(next - now);
                        }
                    }
                })
                .expect("spawn stream thread"))
        }
        StreamSource::ImageDir { path, rate_hz } => {
            let frames = load_image_dir(path)?;
            if frames.is_empty() {
                return Err(BenchError::StreamEmpty);
            }
            let interval = Duration::from_secs_f64(1.0 / rate_hz);
            Ok(std::thread::Builder::new()
                .name("bench-stream".into())
                .spawn(move || {
                    // Loop the recorded sequence until the collector is done,
                    // so every device sees the same frames in the same order.
                    let mut next = Instant::now();
                    'outer: loop {
                        for frame in &frames {
                            if stop.load(Ordering::SeqCst) {
                                break 'outer;
                            }
                            let mut msg = frame.clone();
                            msg.stamp = Stamp::now();
                            publisher.publish(msg);
                            next += interval;
                            let now = Instant::now();
                            if next > now {
                                std::thread::sleep(next - now);
                            }
                        }
                    }
                })
                .expect("spawn stream thread"))
        }
    }
}

fn load_image_dir(dir: &std::path::Path) -> Result<Vec<Image>, BenchError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                Some("png") | Some("jpg") | Some("jpeg")
            )
        })
        .collect();
    paths.sort();
    let mut frames = Vec::with_capacity(paths.len());
    for p in paths {
        let rgb = image::open(&p)
            .map_err(|e| BenchError::Config(format!("cannot load {}: {e}", p.display())))?
            .to_rgb8();
        let (width, height) = rgb.dimensions();
        frames.push(Image {
            stamp: Stamp::zero(),
            frame_id: "replay".to_string(),
            width,
            height,
            encoding: "rgb8".to_string(),
            step: width * 3,
            data: rgb.into_raw(),
        });
    }
    Ok(frames)
}

/// Sliding-window FPS reduction: for completion times `t[0..n]`, each window
/// covers `window` completions over `t[i] - t[i-window]` seconds. Returns
/// (min, avg, max) over all windows, or `None` when fewer than `window + 1`
/// timestamps are available.
pub fn compute_fps_windows(times: &[f64], window: usize) -> Option<(f64, f64, f64)> {
    if window < 1 || times.len() < window + 1 {
        return None;
    }
    let mut samples = Vec::with_capacity(times.len() - window);
    for i in window..times.len() {
        let dt = times[i] - times[i - window];
        if dt <= 0.0 {
            return None;
        }
        samples.push(window as f64 / dt);
    }
    let min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let avg = samples.iter().sum::<f64>() / samples.len() as f64;
    Some((min, avg, max))
}

/// Reference throughput rows published for the Object Detection task,
/// reported as FPS min/avg/max per (graphics card, model variant).
pub struct ReferenceRow {
    pub device: &'static str,
    pub base: [f64; 3],
    pub large: [f64; 3],
}

pub const REFERENCE_BASE_MODEL: &str = "microsoft/Florence-2-base";
pub const REFERENCE_LARGE_MODEL: &str = "microsoft/Florence-2-large";

pub const REFERENCE_ROWS: &[ReferenceRow] = &[
    ReferenceRow {
        device: "GTX 1060 Mobile (80 W)",
        base: [5.50, 5.81, 5.99],
        large: [2.44, 2.50, 2.56],
    },
    ReferenceRow {
        device: "RTX 3060 Mobile (80 W)",
        base: [9.23, 9.75, 10.1],
        large: [4.05, 4.21, 4.29],
    },
    ReferenceRow {
        device: "RTX 3080 Ti Desktop",
        base: [25.3, 26.6, 27.5],
        large: [11.1, 11.5, 11.7],
    },
];

/// Formats at the reference table's precision (3 significant digits).
fn format_fps(v: f64) -> String {
    if v >= 100.0 {
        format!("{v:.0}")
    } else if v >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

fn triplet(min: f64, avg: f64, max: f64) -> String {
    format!("{} - {} - {}", format_fps(min), format_fps(avg), format_fps(max))
}

#[derive(Clone)]
struct TableRow {
    device: String,
    model: String,
    fps: [f64; 3],
    reference: bool,
}

fn table_rows(reports: &[BenchReport], include_reference: bool) -> Vec<TableRow> {
    let mut rows: Vec<TableRow> = reports
        .iter()
        .map(|r| TableRow {
            device: r.device.clone(),
            model: r.model_id.clone(),
            fps: [r.fps_min, r.fps_avg, r.fps_max],
            reference: false,
        })
        .collect();
    if include_reference {
        for row in REFERENCE_ROWS {
            rows.push(TableRow {
                device: row.device.to_string(),
                model: REFERENCE_BASE_MODEL.to_string(),
                fps: row.base,
                reference: true,
            });
            rows.push(TableRow {
                device: row.device.to_string(),
                model: REFERENCE_LARGE_MODEL.to_string(),
                fps: row.large,
                reference: true,
            });
        }
    }
    rows.sort_by(|a, b| {
        (&a.device, &a.model, a.reference).cmp(&(&b.device, &b.model, b.reference))
    });
    rows
}

/// Human-readable table: one row per device, one `min - avg - max` column
/// per model. Byte-deterministic for a given report set.
pub fn emit_table_text(reports: &[BenchReport], include_reference: bool) -> String {
    let rows = table_rows(reports, include_reference);
    let mut devices: Vec<String> = Vec::new();
    let mut models: Vec<String> = Vec::new();
    for row in &rows {
        let device = display_device(row);
        if !devices.contains(&device) {
            devices.push(device);
        }
        if !models.contains(&row.model) {
            models.push(row.model.clone());
        }
    }
    models.sort();

    let mut cells: BTreeMap<(String, String), String> = BTreeMap::new();
    for row in &rows {
        cells.insert(
            (display_device(row), row.model.clone()),
            triplet(row.fps[0], row.fps[1], row.fps[2]),
        );
    }

    let mut widths: Vec<usize> = Vec::new();
    let device_width = devices
        .iter()
        .map(String::len)
        .chain(std::iter::once("Device".len()))
        .max()
        .unwrap_or(6);
    for model in &models {
        let w = cells
            .iter()
            .filter(|((_, m), _)| m == model)
            .map(|(_, v)| v.len())
            .chain(std::iter::once(model.len()))
            .max()
            .unwrap_or(model.len());
        widths.push(w);
    }

    let mut out = String::new();
    out.push_str(&format!("{:<device_width$}", "Device"));
    for (model, w) in models.iter().zip(&widths) {
        out.push_str(&format!("  {model:<w$}"));
    }
    out.push('\n');
    out.push_str(&"-".repeat(device_width + widths.iter().map(|w| w + 2).sum::<usize>()));
    out.push('\n');
    for device in &devices {
        out.push_str(&format!("{device:<device_width$}"));
        for (model, w) in models.iter().zip(&widths) {
            let cell = cells
                .get(&(device.clone(), model.clone()))
                .cloned()
                .unwrap_or_else(|| "-".to_string());
            out.push_str(&format!("  {cell:<w$}"));
        }
        out.push('\n');
    }
    out
}

fn display_device(row: &TableRow) -> String {
    if row.reference {
        format!("{} [reference]", row.device)
    } else {
        row.device.clone()
    }
}

/// CSV emission with the same deterministic ordering as the text table.
pub fn emit_table_csv(reports: &[BenchReport], include_reference: bool) -> String {
    let rows = table_rows(reports, include_reference);
    let mut out = String::from("device,model,fps_min,fps_avg,fps_max,source\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            csv_field(&row.device),
            csv_field(&row.model),
            format_fps(row.fps[0]),
            format_fps(row.fps[1]),
            format_fps(row.fps[2]),
            if row.reference { "reference" } else { "measured" },
        ));
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
