use crate::detections::DetectionSet;
use crate::image::RasterImage;

/// Shared request shape for the service and the action goal.
///
/// Exactly one image source must be resolvable: either `image` is embedded,
/// or `use_latest_image` is set and the node holds a cached frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecuteTaskRequest {
    pub task_token: String,
    pub text_input: String,
    pub image: Option<RasterImage>,
    pub use_latest_image: bool,
}

impl ExecuteTaskRequest {
    pub fn with_image(task_token: impl Into<String>, image: RasterImage) -> Self {
        Self {
            task_token: task_token.into(),
            text_input: String::new(),
            image: Some(image),
            use_latest_image: false,
        }
    }

    pub fn with_latest_image(task_token: impl Into<String>) -> Self {
        Self {
            task_token: task_token.into(),
            text_input: String::new(),
            image: None,
            use_latest_image: true,
        }
    }

    pub fn text(mut self, text_input: impl Into<String>) -> Self {
        self.text_input = text_input.into();
        self
    }
}

/// Shared result shape for the service response and the action result.
/// Errors are delivered in-band: `success=false` plus a non-empty
/// `error_message`, never a transport fault.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecuteTaskResponse {
    pub success: bool,
    pub error_message: String,
    pub results_json: String,
    pub detections: Option<DetectionSet>,
    pub inference_time: f64,
}

/// In-band marker for a canceled goal's result.
pub const CANCELED_MESSAGE: &str = "CANCELED";

impl ExecuteTaskResponse {
    pub fn failure(message: impl Into<String>) -> Self {
        Self {
            success: false,
            error_message: message.into(),
            results_json: String::new(),
            detections: None,
            inference_time: 0.0,
        }
    }

    pub fn canceled(inference_time: f64) -> Self {
        Self {
            success: false,
            error_message: CANCELED_MESSAGE.to_string(),
            results_json: String::new(),
            detections: None,
            inference_time,
        }
    }

    pub fn is_canceled(&self) -> bool {
        !self.success && self.error_message == CANCELED_MESSAGE
    }
}

/// Progress stages reported by the action server, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FeedbackStage {
    Received,
    Preprocessing,
    InferenceRunning,
    Postprocessing,
}

impl FeedbackStage {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeedbackStage::Received => "RECEIVED",
            FeedbackStage::Preprocessing => "PREPROCESSING",
            FeedbackStage::InferenceRunning => "INFERENCE_RUNNING",
            FeedbackStage::Postprocessing => "POSTPROCESSING",
        }
    }
}

/// One feedback message of an action goal: the stage just entered and the
/// seconds elapsed since the goal was received.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionFeedback {
    pub stage: FeedbackStage,
    pub elapsed: f64,
}

impl rograph::Message for ActionFeedback {
    fn type_name() -> &'static str {
        "florence2_interfaces/msg/ActionFeedback"
    }
}

/// Service definition: synchronous task execution with a direct response.
pub struct ExecuteTask;

impl rograph::Service for ExecuteTask {
    type Request = ExecuteTaskRequest;
    type Response = ExecuteTaskResponse;
    fn type_name() -> &'static str {
        "florence2_interfaces/srv/ExecuteTask"
    }
}

/// Action definition: asynchronous task execution with feedback and result.
pub struct ExecuteTaskAction;

impl rograph::Action for ExecuteTaskAction {
    type Goal = ExecuteTaskRequest;
    type Feedback = ActionFeedback;
    type Result = ExecuteTaskResponse;
    fn type_name() -> &'static str {
        "florence2_interfaces/action/ExecuteTask"
    }
}

/// Why a request was rejected before inference. The display form is the
/// string placed in `ExecuteTaskResponse::error_message`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectionReason {
    UnknownTask,
    NoImageAvailable,
    MissingTextInput,
    AmbiguousImageSource,
}

impl RejectionReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectionReason::UnknownTask => "UNKNOWN_TASK",
            RejectionReason::NoImageAvailable => "NO_IMAGE_AVAILABLE",
            RejectionReason::MissingTextInput => "MISSING_TEXT_INPUT",
            RejectionReason::AmbiguousImageSource => "AMBIGUOUS_IMAGE_SOURCE",
        }
    }
}

impl std::fmt::Display for RejectionReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What request validation needs to know about a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskRequirements {
    pub requires_text_input: bool,
}

/// Minimal read-only registry view, kept here so the contracts package does
/// not depend on the implementation package.
pub trait TaskDirectory {
    fn requirements(&self, token: &str) -> Option<TaskRequirements>;
}

/// Checks every `ExecuteTaskRequest` invariant. Total and deterministic:
/// every field combination maps to `Ok` or exactly one rejection reason.
///
/// An absent image with `use_latest_image=false` is rejected as
/// `AmbiguousImageSource` instead of silently falling back to the cache.
pub fn validate_request(
    req: &ExecuteTaskRequest,
    registry: &dyn TaskDirectory,
    cache_populated: bool,
) -> Result<(), RejectionReason> {
    let requirements = match registry.requirements(&req.task_token) {
        Some(r) if !req.task_token.is_empty() => r,
        _ => return Err(RejectionReason::UnknownTask),
    };
    let explicit = req.image.is_some();
    let fallback = req.use_latest_image && cache_populated;
    if explicit == fallback {
        // Both sources resolvable, or neither: the one recoverable sub-case
        // is "asked for the cache and it is empty".
        return if !explicit && req.use_latest_image {
            Err(RejectionReason::NoImageAvailable)
        } else {
            Err(RejectionReason::AmbiguousImageSource)
        };
    }
    if requirements.requires_text_input && req.text_input.is_empty() {
        return Err(RejectionReason::MissingTextInput);
    }
    Ok(())
}
