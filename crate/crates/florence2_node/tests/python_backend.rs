//! Protocol tests for the Python worker backend.
//!
//! A stub worker (pure Python, no torch) exercises the line-JSON protocol,
//! output decoding, clamping, and error mapping. One slower test drives the
//! real bundled worker script far enough to verify load-error
//! classification when model weights are unavailable.

use std::io::Write;
use std::sync::Arc;

use florence2_interfaces::{OutputKind, RasterImage, Stamp, TaskOutput};
use florence2_node::backend::{
    BackendConfig, BackendError, InferenceBackend, PythonBackend, ResolvedDevice,
    ResolvedPrecision,
};
use florence2_node::registry::TaskRegistry;

const STUB_WORKER: &str = r#"
import base64, json, sys

def reply(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()

loaded = False
for line in sys.stdin:
    req = json.loads(line)
    op = req.get("op")
    if op == "load":
        if req["model_id"] == "stub/missing":
            reply({"ok": False, "error_kind": "model_not_found", "message": "no local snapshot"})
            continue
        if req["model_id"] == "stub/huge":
            reply({"ok": False, "error_kind": "oom", "message": "CUDA out of memory"})
            continue
        loaded = True
        reply({"ok": True, "event": "ready",
               "model": req["model_id"] + "@" + req.get("revision", "?"),
               "runtime": {"stub": "1", "device": req.get("device", "")}})
    elif op == "infer":
        if not loaded:
            reply({"ok": False, "error_kind": "bad_request", "message": "infer before load"})
            continue
        data = base64.b64decode(req["data_b64"])
        w, h = req["width"], req["height"]
        kind = req["output_kind"]
        if req["task_token"] == "<FAIL>":
            reply({"ok": False, "error_kind": "inference_failure", "message": "synthetic failure"})
            continue
        if kind == "text":
            out = {"text": f"stub saw {len(data)} bytes for {req['prompt']}"}
        elif kind == "boxes_labels":
            # Deliberately out of bounds and inverted: the host must clamp.
            out = {"bboxes": [[w + 50.0, -10.0, 10.0, h / 2.0]], "labels": ["thing"]}
        elif kind == "quad_boxes_text":
            out = {"quad_boxes": [[0, 0, w, 0, w, h, 0, h]], "labels": ["line"]}
        elif kind == "polygons_labels":
            out = {"polygons": [[0, 0, w, 0, w, h]], "labels": ["blob"]}
        else:
            out = {"bboxes": [[0, 0, 4, 4]], "texts": ["pair"]}
        reply({"ok": True, "raw_text": "raw", "output": out, "inference_time_s": 0.01})
    elif op == "shutdown":
        reply({"ok": True, "event": "bye"})
        break
"#;

fn write_stub() -> tempfile::TempPath {
    let mut f = tempfile::Builder::new()
        .prefix("stub_worker")
        .suffix(".py")
        .tempfile()
        .unwrap();
    f.write_all(STUB_WORKER.as_bytes()).unwrap();
    f.into_temp_path()
}

fn stub_backend(model_id: &str) -> Result<PythonBackend, BackendError> {
    let script = write_stub();
    let config = BackendConfig::new(model_id);
    PythonBackend::load_with_script(
        &config,
        ResolvedDevice::Cpu,
        ResolvedPrecision::Full,
        &script,
        None,
    )
}

fn image(width: u32, height: u32) -> RasterImage {
    RasterImage::rgb8(width, height, vec![5; (width * height * 3) as usize], Stamp::zero()).unwrap()
}

#[test]
fn stub_load_and_text_inference() {
    let backend = stub_backend("stub/model").unwrap();
    assert_eq!(backend.model_label(), "stub/model@main");
    assert!(backend.runtime_info().iter().any(|(k, _)| k == "stub"));

    let registry = TaskRegistry::builtin();
    let spec = registry.lookup("<CAPTION>").unwrap();
    let result = backend.infer("<CAPTION>", &image(8, 4), spec).unwrap();
    assert_eq!(
        result.parsed_output,
        TaskOutput::Text {
            text: "stub saw 96 bytes for <CAPTION>".to_string()
        }
    );
    assert!(result.inference_time > 0.0);
}

#[test]
fn stub_boxes_are_clamped_and_ordered() {
    let backend = stub_backend("stub/model").unwrap();
    let registry = TaskRegistry::builtin();
    let spec = registry.lookup("<OD>").unwrap();
    let result = backend.infer("<OD>", &image(100, 80), spec).unwrap();
    match result.parsed_output {
        TaskOutput::BoxesLabels { bboxes, labels } => {
            assert_eq!(labels, vec!["thing"]);
            // Worker sent [150, -10, 10, 40] for a 100x80 frame.
            assert_eq!(bboxes, vec![[10.0, 0.0, 100.0, 40.0]]);
        }
        other => panic!("wrong kind: {other:?}"),
    }
}

#[test]
fn stub_covers_all_output_kinds() {
    let backend = stub_backend("stub/model").unwrap();
    let registry = TaskRegistry::builtin();
    for (token, kind) in [
        ("<CAPTION>", OutputKind::Text),
        ("<OD>", OutputKind::BoxesLabels),
        ("<OCR_WITH_REGION>", OutputKind::QuadBoxesText),
        ("<REFERRING_EXPRESSION_SEGMENTATION>", OutputKind::PolygonsLabels),
    ] {
        let spec = registry.lookup(token).unwrap();
        let result = backend
            .infer(&format!("{token}x"), &image(32, 16), spec)
            .unwrap_or_else(|e| panic!("{token}: {e}"));
        assert_eq!(result.parsed_output.kind(), kind, "{token}");
        result.parsed_output.validate().unwrap();
    }
}

#[test]
fn stub_error_kinds_map_to_backend_errors() {
    match stub_backend("stub/missing") {
        Err(BackendError::ModelNotFound(msg)) => assert!(msg.contains("snapshot")),
        other => panic!("expected ModelNotFound, got {other:?}", other = other.err()),
    }
    match stub_backend("stub/huge") {
        Err(BackendError::OutOfMemory(_)) => {}
        other => panic!("expected OutOfMemory, got {other:?}", other = other.err()),
    }
    let backend = stub_backend("stub/model").unwrap();
    let registry = TaskRegistry::builtin();
    let mut spec = registry.lookup("<OD>").unwrap().clone();
    spec.token = "<FAIL>".to_string();
    match backend.infer("<FAIL>", &image(8, 8), &spec) {
        Err(BackendError::InferenceFailure(msg)) => assert!(msg.contains("synthetic")),
        other => panic!("expected InferenceFailure, got {other:?}"),
    }
}

#[test]
fn backend_is_usable_behind_the_dyn_trait() {
    let backend: Arc<dyn InferenceBackend> = Arc::new(stub_backend("stub/model").unwrap());
    let registry = TaskRegistry::builtin();
    let spec = registry.lookup("<CAPTION>").unwrap();
    assert!(backend.infer("<CAPTION>", &image(4, 4), spec).is_ok());
}

/// Drives the real bundled worker (torch + transformers import) far enough
/// to prove load errors classify as MODEL_NOT_FOUND when no weights are
/// reachable. Slow (~10 s for the torch import), so one test covers it.
#[test]
fn real_worker_classifies_missing_weights() {
    let mut config = BackendConfig::new("definitely/not-a-real-model");
    config.allow_network_fetch = false;
    config.cache_root = Some(std::env::temp_dir().join("florence2_empty_cache"));
    match PythonBackend::load(&config, ResolvedDevice::Cpu, ResolvedPrecision::Full) {
        Err(BackendError::ModelNotFound(_)) => {}
        Err(BackendError::WorkerProtocol(msg)) => {
            panic!("worker protocol failed before classification: {msg}")
        }
        Err(other) => panic!("expected ModelNotFound, got {other}"),
        Ok(_) => panic!("load must fail without weights"),
    }
}
