//! Inference backends behind one blocking interface.
//!
//! The real backend delegates to the upstream Florence-2 runtime through a
//! Python worker subprocess; the mock backend is a pure function of the
//! request, giving CI and the bench harness deterministic outputs and
//! latency. Selection is by `model_id`: `mock` (or `mock:<millis>`) picks
//! the mock, anything else is treated as an upstream model identifier.

mod device;
mod mock;
mod python;

pub use device::{
    resolve_precision, select_device, DevicePolicy, GpuInfo, HardwareProbe, NvidiaSmiProbe,
    PrecisionPolicy, ResolvedDevice, ResolvedPrecision, StaticProbe,
};
pub use mock::{MockBackend, MockCall};
pub use python::{bundled_worker_source, PythonBackend, PYTHON_ENV, WORKER_SCRIPT_ENV};

use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

use crate::registry::TaskSpec;
use florence2_interfaces::{RasterImage, TaskOutput};

/// Environment variable naming the model cache root (weights are resolved
/// locally; network fetch is opt-in via [`BackendConfig::allow_network_fetch`]).
pub const CACHE_ROOT_ENV: &str = "FLORENCE2_CACHE_ROOT";

/// Symbolic default revision. Deployments should pin a concrete upstream
/// revision hash here or via configuration; the resolved value is recorded
/// in every result document's `model` field.
pub const DEFAULT_MODEL_REVISION: &str = "main";

/// Parameters of the blocking generation call, held fixed across devices so
/// throughput cells stay comparable.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub max_new_tokens: u32,
    pub num_beams: u32,
    pub sampling_enabled: bool,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            max_new_tokens: 1024,
            num_beams: 3,
            sampling_enabled: false,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_new_tokens < 1 || self.num_beams < 1 {
            return Err(BackendError::InvalidConfig(format!(
                "generation parameters must be >= 1 (max_new_tokens={}, num_beams={})",
                self.max_new_tokens, self.num_beams
            )));
        }
        Ok(())
    }
}

/// Everything needed to load one backend instance.
#[derive(Debug, Clone)]
pub struct BackendConfig {
    pub model_id: String,
    pub revision: String,
    pub device_policy: DevicePolicy,
    pub precision_policy: PrecisionPolicy,
    pub generation: GenerationParams,
    pub cache_root: Option<PathBuf>,
    pub allow_network_fetch: bool,
}

impl BackendConfig {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            revision: DEFAULT_MODEL_REVISION.to_string(),
            device_policy: DevicePolicy::Auto,
            precision_policy: PrecisionPolicy::Auto,
            generation: GenerationParams::default(),
            cache_root: std::env::var_os(CACHE_ROOT_ENV).map(PathBuf::from),
            allow_network_fetch: false,
        }
    }

    pub fn mock_with_latency_ms(latency_ms: u64) -> Self {
        Self::new(format!("mock:{latency_ms}"))
    }

    pub fn is_mock(&self) -> bool {
        self.model_id == "mock" || self.model_id.starts_with("mock:")
    }
}

/// Output of one blocking generation call, already parsed into the task's
/// output shape with coordinates in absolute pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendResult {
    pub raw_text: String,
    pub parsed_output: TaskOutput,
    pub inference_time: f64,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("MODEL_NOT_FOUND: {0}")]
    ModelNotFound(String),
    #[error("OUT_OF_MEMORY: {0}")]
    OutOfMemory(String),
    #[error("GPU_UNAVAILABLE: requested gpu:{requested} but {available} device(s) present")]
    GpuUnavailable { requested: u32, available: usize },
    #[error("INFERENCE_FAILURE: {0}")]
    InferenceFailure(String),
    #[error("worker protocol error: {0}")]
    WorkerProtocol(String),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
}

/// A loaded model handle. `infer` blocks for the whole generation; callers
/// are expected to serialize calls onto one lane, and implementations assert
/// non-reentrancy.
pub trait InferenceBackend: Send + Sync {
    /// Identifier recorded in result documents (`<model_id>@<revision>`,
    /// or `mock`).
    fn model_label(&self) -> &str;

    /// Resolved execution device.
    fn device(&self) -> ResolvedDevice;

    /// Resolved numeric precision.
    fn precision(&self) -> ResolvedPrecision;

    /// Runtime version strings for reports (torch/driver/... when known).
    fn runtime_info(&self) -> Vec<(String, String)> {
        Vec::new()
    }

    fn infer(
        &self,
        prompt: &str,
        image: &RasterImage,
        spec: &TaskSpec,
    ) -> Result<BackendResult, BackendError>;
}

/// Loads the backend selected by `config.model_id`.
pub fn load_backend(
    config: &BackendConfig,
    probe: &dyn HardwareProbe,
) -> Result<Arc<dyn InferenceBackend>, BackendError> {
    config.generation.validate()?;
    if let Some(latency) = parse_mock_model_id(&config.model_id)? {
        return Ok(Arc::new(MockBackend::with_latency_ms(latency)));
    }
    let device = select_device(config.device_policy, probe)?;
    let precision = resolve_precision(config.precision_policy, device);
    Ok(Arc::new(PythonBackend::load(config, device, precision)?))
}

/// `mock` => 1 ms, `mock:<millis>` => explicit latency, anything else => None.
fn parse_mock_model_id(model_id: &str) -> Result<Option<u64>, BackendError> {
    if model_id == "mock" {
        return Ok(Some(1));
    }
    if let Some(rest) = model_id.strip_prefix("mock:") {
        let ms: u64 = rest.parse().map_err(|_| {
            BackendError::InvalidConfig(format!("bad mock latency in model_id `{model_id}`"))
        })?;
        return Ok(Some(ms.max(1)));
    }
    Ok(None)
}

/// Clamps every coordinate of a parsed output into the image bounds and
/// normalizes corner boxes to x1<=x2, y1<=y2. Applied to all backend output
/// so one coordinate convention holds across the repo.
pub fn clamp_output_to_bounds(output: &mut TaskOutput, width: u32, height: u32) {
    let w = width as f64;
    let h = height as f64;
    let clamp_pair = |coords: &mut [f64]| {
        for (i, v) in coords.iter_mut().enumerate() {
            let bound = if i % 2 == 0 { w } else { h };
            *v = v.clamp(0.0, bound);
        }
    };
    match output {
        TaskOutput::Text { .. } => {}
        TaskOutput::BoxesLabels { bboxes, .. } | TaskOutput::RegionTextPairs { bboxes, .. } => {
            for b in bboxes {
                clamp_pair(b.as_mut_slice());
                if b[0] > b[2] {
                    b.swap(0, 2);
                }
                if b[1] > b[3] {
                    b.swap(1, 3);
                }
            }
        }
        TaskOutput::QuadBoxesText { quad_boxes, .. } => {
            for q in quad_boxes {
                clamp_pair(q.as_mut_slice());
            }
        }
        TaskOutput::PolygonsLabels { polygons, .. } => {
            for p in polygons {
                clamp_pair(p.as_mut_slice());
            }
        }
    }
}
