//! Example service and action clients.
//!
//! The client loads the image file itself and embeds it in the request, so
//! no live camera is needed; `--use-latest` switches to the node-side cache
//! instead. Output is line-oriented so scripts can parse it, and exit codes
//! distinguish task errors, cancellation, timeouts, and an unreachable node.

use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use florence2_interfaces::{
    ExecuteTask, ExecuteTaskAction, ExecuteTaskRequest, ExecuteTaskResponse, RasterImage, Stamp,
};
use rograph::{Context, GoalStatus, GraphError};

/// Process exit codes, kept distinct per failure class.
pub mod exit_code {
    pub const OK: i32 = 0;
    pub const TASK_ERROR: i32 = 1;
    pub const CANCELED: i32 = 2;
    pub const TIMEOUT: i32 = 3;
    pub const NODE_UNREACHABLE: i32 = 4;
    pub const INVOCATION: i32 = 64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientMode {
    Service,
    Action,
}

impl ClientMode {
    fn as_str(&self) -> &'static str {
        match self {
            ClientMode::Service => "service",
            ClientMode::Action => "action",
        }
    }
}

/// One client run, mirroring the CLI flags.
#[derive(Debug, Clone)]
pub struct ClientInvocation {
    pub mode: ClientMode,
    pub task_token: String,
    pub text_input: String,
    pub image_path: Option<PathBuf>,
    pub use_latest_image: bool,
    pub timeout: Duration,
    /// Only valid in action mode: send a cancel request this long after the
    /// goal is submitted.
    pub cancel_after: Option<Duration>,
    /// Name of the node to call (endpoints live under `/<node>/...`).
    pub node_name: String,
}

impl ClientInvocation {
    pub fn service(task_token: impl Into<String>) -> Self {
        Self {
            mode: ClientMode::Service,
            task_token: task_token.into(),
            text_input: String::new(),
            image_path: None,
            use_latest_image: false,
            timeout: Duration::from_secs(30),
            cancel_after: None,
            node_name: "florence2".to_string(),
        }
    }

    pub fn action(task_token: impl Into<String>) -> Self {
        Self {
            mode: ClientMode::Action,
            ..Self::service(task_token)
        }
    }
}

/// Loads a PNG/JPEG file into the request image format (rgb8, stamped now).
pub fn load_request_image(path: &std::path::Path) -> Result<RasterImage, String> {
    let dynamic = image::open(path).map_err(|e| format!("cannot load `{}`: {e}", path.display()))?;
    let rgb = dynamic.to_rgb8();
    let (width, height) = rgb.dimensions();
    RasterImage::rgb8(width, height, rgb.into_raw(), Stamp::now())
        .map_err(|e| format!("decoded image is inconsistent: {e}"))
}

/// Runs one invocation against a node on `ctx`, writing the line-oriented
/// report to `out`. Returns the process exit code.
pub fn run_client(ctx: &Context, inv: &ClientInvocation, out: &mut dyn Write) -> i32 {
    match run_inner(ctx, inv, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            exit_code::INVOCATION
        }
    }
}

fn run_inner(ctx: &Context, inv: &ClientInvocation, out: &mut dyn Write) -> Result<i32, String> {
    if inv.cancel_after.is_some() && inv.mode != ClientMode::Action {
        return Err("--cancel-after is only valid in action mode".to_string());
    }
    let image = match &inv.image_path {
        Some(path) => Some(load_request_image(path)?),
        None => None,
    };
    if image.is_some() && inv.use_latest_image {
        return Err("pass either an image file or --use-latest, not both".to_string());
    }
    let request = ExecuteTaskRequest {
        task_token: inv.task_token.clone(),
        text_input: inv.text_input.clone(),
        image,
        use_latest_image: inv.use_latest_image,
    };
    let node = ctx
        .create_node("florence2_client")
        .map_err(|e| e.to_string())?;
    let w = |out: &mut dyn Write, line: String| {
        let _ = writeln!(out, "{line}");
    };
    w(out, format!("mode: {}", inv.mode.as_str()));
    w(out, format!("task: {}", inv.task_token));

    let discovery = inv.timeout.min(Duration::from_secs(2));
    match inv.mode {
        ClientMode::Service => {
            let client = node
                .create_client::<ExecuteTask>(&format!("/{}/execute_task", inv.node_name))
                .map_err(|e| e.to_string())?;
            if !client.wait_for_service(discovery) {
                w(out, "error: node unreachable".to_string());
                return Ok(exit_code::NODE_UNREACHABLE);
            }
            match client.call_with_timeout(request, inv.timeout) {
                Ok(response) => {
                    print_response(out, &response);
                    Ok(if response.success {
                        exit_code::OK
                    } else {
                        exit_code::TASK_ERROR
                    })
                }
                Err(GraphError::Timeout(_)) => {
                    w(out, "error: timeout".to_string());
                    Ok(exit_code::TIMEOUT)
                }
                Err(e) => {
                    w(out, format!("error: {e}"));
                    Ok(exit_code::NODE_UNREACHABLE)
                }
            }
        }
        ClientMode::Action => {
            let client = node
                .create_action_client::<ExecuteTaskAction>(&format!(
                    "/{}/execute_task_action",
                    inv.node_name
                ))
                .map_err(|e| e.to_string())?;
            if !client.wait_for_action(discovery) {
                w(out, "error: node unreachable".to_string());
                return Ok(exit_code::NODE_UNREACHABLE);
            }
            let handle = client.send_goal(request).map_err(|e| e.to_string())?;
            if let Some(after) = inv.cancel_after {
                let token = handle.cancel_token();
                // Detached timer; the token is shared, the thread just flips it.
                std::thread::spawn(move || {
                    std::thread::sleep(after);
                    token.request();
                });
            }
            let deadline = Instant::now() + inv.timeout;
            let result = loop {
                while let Some(fb) = handle.next_feedback(Duration::from_millis(25)) {
                    w(
                        out,
                        format!("feedback: stage={} elapsed={:.3}", fb.stage.as_str(), fb.elapsed),
                    );
                }
                match handle.result(Duration::from_millis(1)) {
                    Ok(done) => break Some(done),
                    Err(GraphError::Timeout(_)) => {
                        if Instant::now() >= deadline {
                            break None;
                        }
                    }
                    Err(e) => {
                        w(out, format!("error: {e}"));
                        return Ok(exit_code::TASK_ERROR);
                    }
                }
            };
            let Some((status, response)) = result else {
                w(out, "error: timeout".to_string());
                return Ok(exit_code::TIMEOUT);
            };
            // Feedback that raced the result.
            while let Some(fb) = handle.next_feedback(Duration::from_millis(1)) {
                w(
                    out,
                    format!("feedback: stage={} elapsed={:.3}", fb.stage.as_str(), fb.elapsed),
                );
            }
            w(
                out,
                format!(
                    "status: {}",
                    match status {
                        GoalStatus::Succeeded => "succeeded",
                        GoalStatus::Canceled => "canceled",
                        GoalStatus::Aborted => "aborted",
                    }
                ),
            );
            print_response(out, &response);
            Ok(match status {
                GoalStatus::Succeeded => exit_code::OK,
                GoalStatus::Canceled => exit_code::CANCELED,
                GoalStatus::Aborted => exit_code::TASK_ERROR,
            })
        }
    }
}

fn print_response(out: &mut dyn Write, response: &ExecuteTaskResponse) {
    let _ = writeln!(out, "success: {}", response.success);
    let _ = writeln!(
        out,
        "error: {}",
        if response.error_message.is_empty() {
            "-"
        } else {
            &response.error_message
        }
    );
    let _ = writeln!(out, "inference_time_s: {:.3}", response.inference_time);
    let _ = writeln!(
        out,
        "results_json: {}",
        if response.results_json.is_empty() {
            "-"
        } else {
            &response.results_json
        }
    );
    match &response.detections {
        None => {
            let _ = writeln!(out, "detections: -");
        }
        Some(set) => {
            let _ = writeln!(out, "detections: {}", set.len());
            for (i, d) in set.detections.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "detection[{i}]: label=\"{}\" center=({:.1},{:.1}) size=({:.1},{:.1}) score={:.1}",
                    d.label, d.center_x, d.center_y, d.size_x, d.size_y, d.score
                );
            }
        }
    }
}
