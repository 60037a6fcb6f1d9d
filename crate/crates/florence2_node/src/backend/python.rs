use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use base64::Engine;
use serde_json::{json, Value};
use tracing::{debug, info};

use florence2_interfaces::{OutputKind, PixelFormat, RasterImage, TaskOutput};

use super::{
    clamp_output_to_bounds, BackendConfig, BackendError, BackendResult, InferenceBackend,
    ResolvedDevice, ResolvedPrecision,
};
use crate::registry::TaskSpec;

/// Env var overriding the worker script location (default: the bundled
/// script, materialized under the system temp dir).
pub const WORKER_SCRIPT_ENV: &str = "FLORENCE2_WORKER_SCRIPT";

/// Env var overriding the Python interpreter used for the worker.
pub const PYTHON_ENV: &str = "FLORENCE2_PYTHON";

const BUNDLED_WORKER: &str = include_str!("../../python/florence2_worker.py");

/// Real backend: drives the upstream Florence-2 runtime in a Python worker
/// subprocess over a line-delimited JSON protocol. The protocol mutex also
/// serializes calls, and a blocking generation call cannot be interrupted —
/// cancellation is observed only at stage boundaries upstream of here.
pub struct PythonBackend {
    worker: Mutex<WorkerProc>,
    model_label: String,
    device: ResolvedDevice,
    precision: ResolvedPrecision,
    runtime: Vec<(String, String)>,
    script_cleanup: Option<PathBuf>,
}

struct WorkerProc {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl WorkerProc {
    fn spawn(python: &str, script: &Path) -> Result<Self, BackendError> {
        let mut child = Command::new(python)
            .arg(script)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| {
                BackendError::WorkerProtocol(format!("could not spawn `{python}`: {e}"))
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            child,
            stdin,
            stdout,
        })
    }

    fn round_trip(&mut self, request: &Value) -> Result<Value, BackendError> {
        let line = serde_json::to_string(request).expect("requests serialize");
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.write_all(b"\n"))
            .and_then(|_| self.stdin.flush())
            .map_err(|e| BackendError::WorkerProtocol(format!("worker stdin closed: {e}")))?;
        let mut response = String::new();
        let n = self
            .stdout
            .read_line(&mut response)
            .map_err(|e| BackendError::WorkerProtocol(format!("worker stdout read failed: {e}")))?;
        if n == 0 {
            let status = self.child.try_wait().ok().flatten();
            return Err(BackendError::WorkerProtocol(format!(
                "worker exited unexpectedly (status: {status:?})"
            )));
        }
        serde_json::from_str(&response)
            .map_err(|e| BackendError::WorkerProtocol(format!("bad worker reply: {e}")))
    }
}

impl PythonBackend {
    pub fn load(
        config: &BackendConfig,
        device: ResolvedDevice,
        precision: ResolvedPrecision,
    ) -> Result<Self, BackendError> {
        let (script, cleanup) = resolve_worker_script()?;
        Self::load_with_script(config, device, precision, &script, cleanup)
    }

    /// Loads against an explicit worker script; protocol tests substitute a
    /// stub worker through this entry point.
    pub fn load_with_script(
        config: &BackendConfig,
        device: ResolvedDevice,
        precision: ResolvedPrecision,
        script: &Path,
        script_cleanup: Option<PathBuf>,
    ) -> Result<Self, BackendError> {
        let python = std::env::var(PYTHON_ENV).unwrap_or_else(|_| "python3".to_string());
        let mut worker = WorkerProc::spawn(&python, script)?;

        let load_req = json!({
            "op": "load",
            "model_id": config.model_id,
            "revision": config.revision,
            "device": device.to_string(),
            "precision": precision.to_string(),
            "cache_root": config.cache_root.as_ref().map(|p| p.display().to_string()),
            "allow_fetch": config.allow_network_fetch,
            "generation": {
                "max_new_tokens": config.generation.max_new_tokens,
                "num_beams": config.generation.num_beams,
                "sampling_enabled": config.generation.sampling_enabled,
            },
        });
        let reply = worker.round_trip(&load_req)?;
        check_ok(&reply)?;
        let model_label = reply
            .get("model")
            .and_then(Value::as_str)
            .unwrap_or(&config.model_id)
            .to_string();
        let mut runtime: Vec<(String, String)> = reply
            .get("runtime")
            .and_then(Value::as_object)
            .map(|m| {
                m.iter()
                    .map(|(k, v)| (k.clone(), v.as_str().unwrap_or_default().to_string()))
                    .collect()
            })
            .unwrap_or_default();
        runtime.sort();
        info!(model = %model_label, %device, %precision, "florence2 worker ready");
        Ok(Self {
            worker: Mutex::new(worker),
            model_label,
            device,
            precision,
            runtime,
            script_cleanup,
        })
    }
}

impl InferenceBackend for PythonBackend {
    fn model_label(&self) -> &str {
        &self.model_label
    }

    fn device(&self) -> ResolvedDevice {
        self.device
    }

    fn precision(&self) -> ResolvedPrecision {
        self.precision
    }

    fn runtime_info(&self) -> Vec<(String, String)> {
        self.runtime.clone()
    }

    fn infer(
        &self,
        prompt: &str,
        image: &RasterImage,
        spec: &TaskSpec,
    ) -> Result<BackendResult, BackendError> {
        let mut worker = self.worker.try_lock().unwrap_or_else(|_| {
            panic!("backend invoked reentrantly; the inference lane must serialize")
        });
        let format = match image.format() {
            PixelFormat::Rgb8 => "rgb8",
            PixelFormat::Mono8 => "mono8",
        };
        let req = json!({
            "op": "infer",
            "task_token": spec.token,
            "prompt": prompt,
            "output_kind": spec.output_kind.as_str(),
            "width": image.width(),
            "height": image.height(),
            "format": format,
            "data_b64": base64::engine::general_purpose::STANDARD.encode(image.data()),
        });
        let reply = worker.round_trip(&req)?;
        check_ok(&reply)?;
        let raw_text = reply
            .get("raw_text")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        let inference_time = reply
            .get("inference_time_s")
            .and_then(Value::as_f64)
            .filter(|t| t.is_finite() && *t > 0.0)
            .ok_or_else(|| {
                BackendError::WorkerProtocol("missing or non-positive inference_time_s".into())
            })?;
        let output_value = reply
            .get("output")
            .ok_or_else(|| BackendError::WorkerProtocol("missing output".into()))?;
        let mut parsed_output = parse_task_output(spec.output_kind, output_value)?;
        clamp_output_to_bounds(&mut parsed_output, image.width(), image.height());
        parsed_output.validate().map_err(|e| {
            BackendError::InferenceFailure(format!("worker output violates schema: {e}"))
        })?;
        debug!(task = %spec.token, time = inference_time, "inference complete");
        Ok(BackendResult {
            raw_text,
            parsed_output,
            inference_time,
        })
    }
}

impl Drop for PythonBackend {
    fn drop(&mut self) {
        if let Ok(mut worker) = self.worker.lock() {
            let _ = worker.round_trip(&json!({"op": "shutdown"}));
            let _ = worker.child.wait();
        }
        if let Some(path) = &self.script_cleanup {
            let _ = std::fs::remove_file(path);
        }
    }
}

fn check_ok(reply: &Value) -> Result<(), BackendError> {
    if reply.get("ok").and_then(Value::as_bool) == Some(true) {
        return Ok(());
    }
    let message = reply
        .get("message")
        .and_then(Value::as_str)
        .unwrap_or("worker reported an error")
        .to_string();
    match reply.get("error_kind").and_then(Value::as_str) {
        Some("model_not_found") => Err(BackendError::ModelNotFound(message)),
        Some("oom") => Err(BackendError::OutOfMemory(message)),
        Some("bad_request") => Err(BackendError::WorkerProtocol(message)),
        _ => Err(BackendError::InferenceFailure(message)),
    }
}

/// Decodes the worker's kind-shaped output object into a [`TaskOutput`].
fn parse_task_output(kind: OutputKind, value: &Value) -> Result<TaskOutput, BackendError> {
    let get_floats_list = |key: &str, arity: Option<usize>| -> Result<Vec<Vec<f64>>, BackendError> {
        let list = value
            .get(key)
            .and_then(Value::as_array)
            .ok_or_else(|| proto_err(format!("output missing `{key}` array")))?;
        list.iter()
            .enumerate()
            .map(|(i, entry)| {
                let coords = entry
                    .as_array()
                    .ok_or_else(|| proto_err(format!("`{key}[{i}]` is not an array")))?;
                if let Some(expected) = arity {
                    if coords.len() != expected {
                        return Err(proto_err(format!(
                            "`{key}[{i}]` has {} coords, expected {expected}",
                            coords.len()
                        )));
                    }
                }
                coords
                    .iter()
                    .map(|c| {
                        c.as_f64()
                            .ok_or_else(|| proto_err(format!("`{key}[{i}]` holds a non-number")))
                    })
                    .collect()
            })
            .collect()
    };
    let get_strings = |key: &str| -> Result<Vec<String>, BackendError> {
        let list = value
            .get(key)
            .and_then(Value::as_array)
            .ok_or_else(|| proto_err(format!("output missing `{key}` array")))?;
        list.iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| proto_err(format!("`{key}` holds a non-string")))
            })
            .collect()
    };

    let to_fixed = |v: Vec<f64>| -> [f64; 4] { [v[0], v[1], v[2], v[3]] };
    match kind {
        OutputKind::Text => {
            let text = value
                .get("text")
                .and_then(Value::as_str)
                .ok_or_else(|| proto_err("output missing `text` string".to_string()))?;
            Ok(TaskOutput::Text {
                text: text.to_string(),
            })
        }
        OutputKind::BoxesLabels => Ok(TaskOutput::BoxesLabels {
            bboxes: get_floats_list("bboxes", Some(4))?.into_iter().map(to_fixed).collect(),
            labels: get_strings("labels")?,
        }),
        OutputKind::QuadBoxesText => Ok(TaskOutput::QuadBoxesText {
            quad_boxes: get_floats_list("quad_boxes", Some(8))?
                .into_iter()
                .map(|v| [v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]])
                .collect(),
            labels: get_strings("labels")?,
        }),
        OutputKind::PolygonsLabels => Ok(TaskOutput::PolygonsLabels {
            polygons: get_floats_list("polygons", None)?,
            labels: get_strings("labels")?,
        }),
        OutputKind::RegionTextPairs => Ok(TaskOutput::RegionTextPairs {
            bboxes: get_floats_list("bboxes", Some(4))?.into_iter().map(to_fixed).collect(),
            texts: get_strings("texts")?,
        }),
    }
}

fn proto_err(message: String) -> BackendError {
    BackendError::WorkerProtocol(message)
}

fn resolve_worker_script() -> Result<(PathBuf, Option<PathBuf>), BackendError> {
    if let Some(path) = std::env::var_os(WORKER_SCRIPT_ENV) {
        return Ok((PathBuf::from(path), None));
    }
    let path = std::env::temp_dir().join(format!("florence2_worker_{}.py", std::process::id()));
    std::fs::write(&path, BUNDLED_WORKER)
        .map_err(|e| BackendError::WorkerProtocol(format!("cannot write worker script: {e}")))?;
    Ok((path.clone(), Some(path)))
}

/// The bundled worker source, exposed for deploy tooling that wants to ship
/// it standalone.
pub fn bundled_worker_source() -> &'static str {
    BUNDLED_WORKER
}
