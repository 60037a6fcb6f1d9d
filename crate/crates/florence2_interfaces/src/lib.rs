//! Communication contracts for the Florence-2 bridge.
//!
//! This crate is the interfaces package: wire messages, the `ExecuteTask`
//! service and action definitions, request validation, and the versioned
//! JSON result schema. It carries no inference or node logic, so the
//! contracts can be reused independently of the implementation package.

mod detections;
mod image;
mod request;
mod result;
mod time;

pub use detections::{Detection2D, DetectionSet};
pub use image::{Image, ImageError, PixelFormat, RasterImage, SourceEncoding};
pub use request::{
    validate_request, ActionFeedback, ExecuteTask, ExecuteTaskAction, ExecuteTaskRequest,
    ExecuteTaskResponse, FeedbackStage, RejectionReason, TaskDirectory, TaskRequirements,
};
pub use result::{
    parse_result, serialize_result, OutputKind, ResultDocument, SchemaError, TaskOutput,
    RESULT_DOCUMENT_SCHEMA_JSON, SCHEMA_VERSION,
};
pub use time::Stamp;
