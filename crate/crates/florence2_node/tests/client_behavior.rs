//! Client behavior: line-oriented report, exit codes per failure class, and
//! stability of the output against the mock backend.

use std::path::PathBuf;
use std::time::Duration;

use florence2_node::adapter::{bind, RunningNode};
use florence2_node::client::{exit_code, run_client, ClientInvocation};
use florence2_node::engine::NodeConfig;
use rograph::Context;

fn mock_node(ctx: &Context, latency_ms: u64) -> RunningNode {
    let mut config = NodeConfig::default();
    config.backend.model_id = format!("mock:{latency_ms}");
    bind(ctx, config).expect("bind mock node")
}

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/scene.png")
}

fn run(ctx: &Context, inv: &ClientInvocation) -> (i32, String) {
    let mut out = Vec::new();
    let code = run_client(ctx, inv, &mut out);
    (code, String::from_utf8(out).unwrap())
}

/// Masks the volatile fields (elapsed, stamps) so the rest of the report can
/// be compared byte-for-byte across runs.
fn normalize(report: &str) -> String {
    let mut out = String::new();
    for line in report.lines() {
        let line = if let Some(idx) = line.find("elapsed=") {
            format!("{}elapsed=<T>", &line[..idx])
        } else if let Some(json) = line.strip_prefix("results_json: ") {
            let mut value: serde_json::Value = serde_json::from_str(json).unwrap();
            value["stamp"] = serde_json::json!({"sec": 0, "nanosec": 0});
            format!("results_json: {value}")
        } else {
            line.to_string()
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}

#[test]
fn service_caption_prints_result_and_exits_zero() {
    let ctx = Context::new();
    let node = mock_node(&ctx, 10);
    let mut inv = ClientInvocation::service("<CAPTION>");
    inv.image_path = Some(fixture());
    let (code, report) = run(&ctx, &inv);
    assert_eq!(code, exit_code::OK, "{report}");
    assert!(report.contains("mode: service"));
    assert!(report.contains("task: <CAPTION>"));
    assert!(report.contains("success: true"));
    assert!(report.contains(r#""text":"mock caption"#), "{report}");
    assert!(report.contains("detections: -"));
    node.shutdown();
}

#[test]
fn service_od_prints_detection_summary() {
    let ctx = Context::new();
    let node = mock_node(&ctx, 10);
    let mut inv = ClientInvocation::service("<OD>");
    inv.image_path = Some(fixture());
    let (code, report) = run(&ctx, &inv);
    assert_eq!(code, exit_code::OK, "{report}");
    assert!(report.contains("detections: 1"));
    assert!(
        report.contains(r#"detection[0]: label="mock" center=(320.0,240.0) size=(320.0,240.0) score=1.0"#),
        "{report}"
    );
    node.shutdown();
}

#[test]
fn unknown_task_prints_error_and_nonzero_exit() {
    let ctx = Context::new();
    let node = mock_node(&ctx, 10);
    let mut inv = ClientInvocation::service("<BOGUS>");
    inv.image_path = Some(fixture());
    let (code, report) = run(&ctx, &inv);
    assert_eq!(code, exit_code::TASK_ERROR);
    assert!(report.contains("success: false"));
    assert!(report.contains("error: UNKNOWN_TASK"), "{report}");
    node.shutdown();
}

#[test]
fn action_immediate_cancel_reports_canceled() {
    let ctx = Context::new();
    let node = mock_node(&ctx, 200);
    let mut inv = ClientInvocation::action("<OD>");
    inv.image_path = Some(fixture());
    inv.cancel_after = Some(Duration::from_secs_f64(0.0));
    let (code, report) = run(&ctx, &inv);
    assert_eq!(code, exit_code::CANCELED, "{report}");
    assert!(report.contains("status: canceled"));
    assert!(report.contains("error: CANCELED"));
    node.shutdown();
}

#[test]
fn action_prints_all_feedback_stages() {
    let ctx = Context::new();
    let node = mock_node(&ctx, 30);
    let mut inv = ClientInvocation::action("<OD>");
    inv.image_path = Some(fixture());
    let (code, report) = run(&ctx, &inv);
    assert_eq!(code, exit_code::OK, "{report}");
    for stage in ["RECEIVED", "PREPROCESSING", "INFERENCE_RUNNING", "POSTPROCESSING"] {
        assert!(
            report.contains(&format!("feedback: stage={stage} elapsed=")),
            "missing {stage} in:\n{report}"
        );
    }
    assert!(report.contains("status: succeeded"));
    node.shutdown();
}

#[test]
fn unreachable_node_is_a_distinct_exit_code() {
    let ctx = Context::new(); // no node bound
    let mut inv = ClientInvocation::service("<OD>");
    inv.image_path = Some(fixture());
    inv.timeout = Duration::from_millis(300);
    let (code, report) = run(&ctx, &inv);
    assert_eq!(code, exit_code::NODE_UNREACHABLE);
    assert!(report.contains("error: node unreachable"));

    let mut inv = ClientInvocation::action("<OD>");
    inv.image_path = Some(fixture());
    inv.timeout = Duration::from_millis(300);
    let (code, _) = run(&ctx, &inv);
    assert_eq!(code, exit_code::NODE_UNREACHABLE);
}

#[test]
fn slow_call_times_out_with_distinct_exit_code() {
    let ctx = Context::new();
    let node = mock_node(&ctx, 400);
    let mut inv = ClientInvocation::service("<OD>");
    inv.image_path = Some(fixture());
    inv.timeout = Duration::from_millis(80);
    let (code, report) = run(&ctx, &inv);
    assert_eq!(code, exit_code::TIMEOUT, "{report}");
    assert!(report.contains("error: timeout"));
    node.shutdown();
}

#[test]
fn invalid_invocations_are_usage_errors() {
    let ctx = Context::new();
    let node = mock_node(&ctx, 10);
    // cancel_after outside action mode.
    let mut inv = ClientInvocation::service("<OD>");
    inv.image_path = Some(fixture());
    inv.cancel_after = Some(Duration::from_secs(1));
    let (code, report) = run(&ctx, &inv);
    assert_eq!(code, exit_code::INVOCATION);
    assert!(report.contains("only valid in action mode"));

    // Image file and --use-latest together.
    let mut inv = ClientInvocation::service("<OD>");
    inv.image_path = Some(fixture());
    inv.use_latest_image = true;
    let (code, _) = run(&ctx, &inv);
    assert_eq!(code, exit_code::INVOCATION);

    // Unreadable image file.
    let mut inv = ClientInvocation::service("<OD>");
    inv.image_path = Some(PathBuf::from("/nonexistent/image.png"));
    let (code, report) = run(&ctx, &inv);
    assert_eq!(code, exit_code::INVOCATION);
    assert!(report.contains("cannot load"));
    node.shutdown();
}

#[test]
fn service_report_is_stable_across_runs() {
    let ctx = Context::new();
    let node = mock_node(&ctx, 10);
    let mut inv = ClientInvocation::service("<OD>");
    inv.image_path = Some(fixture());
    let (_, first) = run(&ctx, &inv);
    let (_, second) = run(&ctx, &inv);
    assert_eq!(normalize(&first), normalize(&second));
    node.shutdown();
}
