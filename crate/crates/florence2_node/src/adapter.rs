//! Binding from the execution engine to the graph middleware.
//!
//! This layer owns conversion and delegation only: image messages are
//! normalized at the boundary, requests are forwarded to the engine
//! handlers, and finished outputs are published on the endpoints listed in
//! [`TopicBindings`]. Mode behavior lives entirely in [`crate::engine`] and
//! is tested middleware-free there.

use std::sync::Arc;

use thiserror::Error;
use tracing::info;

use florence2_interfaces::{
    DetectionSet, ExecuteTask, ExecuteTaskAction, ExecuteTaskRequest, Image, RasterImage,
};
use rograph::{Context, GoalResult, Node, Publisher, QosProfile};

use crate::backend::{load_backend, NvidiaSmiProbe};
use crate::engine::{CancellationToken, Engine, NodeConfig, OutputSink, StatsSnapshot};
use crate::registry::TaskRegistry;

/// Graph names the node binds, with their conventional defaults. Only the
/// image topic is commonly remapped; the node-private names stay fixed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicBindings {
    pub input_image: String,
    pub results_json: String,
    pub detections: String,
    pub annotated_image: String,
    pub service: String,
    pub action: String,
}

impl Default for TopicBindings {
    fn default() -> Self {
        Self {
            input_image: "/camera/image_raw".to_string(),
            results_json: "~/results_json".to_string(),
            detections: "~/detections".to_string(),
            annotated_image: "~/annotated_image".to_string(),
            service: "~/execute_task".to_string(),
            action: "~/execute_task_action".to_string(),
        }
    }
}

impl TopicBindings {
    /// Bindings with the image subscription remapped.
    pub fn with_image_topic(topic: &str) -> Self {
        Self {
            input_image: topic.to_string(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("UNSUPPORTED_ENCODING: `{0}` (supported: rgb8, bgr8, mono8)")]
    UnsupportedEncoding(String),
    #[error("malformed image: {0}")]
    MalformedImage(String),
}

#[derive(Debug, Error)]
pub enum BindError {
    #[error("backend load failed: {0}")]
    Backend(#[from] crate::backend::BackendError),
    #[error("engine setup failed: {0}")]
    Engine(#[from] crate::engine::EngineError),
    #[error("graph setup failed: {0}")]
    Graph(#[from] rograph::GraphError),
}

/// Normalizes a wire image into the internal representation. `bgr8` is
/// stored RGB with the original order recorded; anything outside
/// {rgb8, bgr8, mono8} is rejected before inference.
pub fn convert_image_in(msg: &Image) -> Result<RasterImage, AdapterError> {
    let expected_step = |channels: u32| msg.width * channels;
    let build = |result: Result<RasterImage, florence2_interfaces::ImageError>| {
        result.map_err(|e| AdapterError::MalformedImage(e.to_string()))
    };
    match msg.encoding.as_str() {
        "rgb8" => {
            check_step(msg, expected_step(3))?;
            build(RasterImage::rgb8(msg.width, msg.height, msg.data.clone(), msg.stamp))
        }
        "bgr8" => {
            check_step(msg, expected_step(3))?;
            build(RasterImage::bgr8(msg.width, msg.height, msg.data.clone(), msg.stamp))
        }
        "mono8" => {
            check_step(msg, expected_step(1))?;
            build(RasterImage::mono8(msg.width, msg.height, msg.data.clone(), msg.stamp))
        }
        other => Err(AdapterError::UnsupportedEncoding(other.to_string())),
    }
}

fn check_step(msg: &Image, expected: u32) -> Result<(), AdapterError> {
    if msg.step != 0 && msg.step != expected {
        return Err(AdapterError::MalformedImage(format!(
            "step {} does not match width {} for encoding {}",
            msg.step, msg.width, msg.encoding
        )));
    }
    Ok(())
}

/// Restores the wire form, including the original channel order for images
/// that arrived as `bgr8`.
pub fn convert_image_out(image: &RasterImage) -> Image {
    let channels = image.format().channels();
    Image {
        stamp: image.stamp(),
        frame_id: String::new(),
        width: image.width(),
        height: image.height(),
        encoding: image.source_encoding().wire_name().to_string(),
        step: image.width() * channels,
        data: image.wire_bytes(),
    }
}

struct GraphOutputSink {
    results: Publisher<String>,
    detections: Publisher<DetectionSet>,
    annotated: Option<Publisher<Image>>,
}

impl OutputSink for GraphOutputSink {
    fn publish_result_json(&self, json: &str) {
        self.results.publish(json.to_string());
    }

    fn publish_detections(&self, detections: &DetectionSet) {
        self.detections.publish(detections.clone());
    }

    fn publish_annotated(&self, image: &RasterImage) {
        if let Some(publisher) = &self.annotated {
            publisher.publish(convert_image_out(image));
        }
    }
}

/// A bound, running node: engine started, all endpoints live. Endpoints are
/// torn down when this handle drops.
pub struct RunningNode {
    node: Arc<Node>,
    engine: Arc<Engine>,
    _image_sub: rograph::Subscription,
    _service: rograph::ServiceServer,
    _action: rograph::ActionServer,
}

impl RunningNode {
    pub fn node(&self) -> &Arc<Node> {
        &self.node
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    pub fn stats(&self) -> StatsSnapshot {
        self.engine.stats()
    }

    pub fn shutdown(self) {
        self.engine.stop();
    }
}

/// Loads the backend, builds the engine, and binds every endpoint of the
/// node onto the graph. Startup failures (bad parameters, model load) are
/// returned as errors for the launcher to abort on.
pub fn bind(ctx: &Context, config: NodeConfig) -> Result<RunningNode, BindError> {
    bind_with_registry(ctx, config, TaskRegistry::builtin())
}

pub fn bind_with_registry(
    ctx: &Context,
    config: NodeConfig,
    registry: TaskRegistry,
) -> Result<RunningNode, BindError> {
    let bindings = TopicBindings::with_image_topic(&config.image_topic);
    let node = ctx.create_node(&config.node_name)?;
    declare_parameters(&node, &config, &registry);

    let backend = load_backend(&config.backend, &NvidiaSmiProbe)?;
    let sink = GraphOutputSink {
        results: node.create_publisher::<String>(&bindings.results_json, QosProfile::reliable(10))?,
        detections: node
            .create_publisher::<DetectionSet>(&bindings.detections, QosProfile::reliable(10))?,
        annotated: if config.publish_annotated {
            Some(node.create_publisher::<Image>(&bindings.annotated_image, QosProfile::reliable(10))?)
        } else {
            None
        },
    };

    let engine = Arc::new(Engine::new(
        config,
        Arc::new(registry),
        backend,
        Arc::new(sink),
    )?);
    engine.start()?;

    let sub_engine = Arc::clone(&engine);
    let image_sub = node.create_subscription::<Image, _>(
        &bindings.input_image,
        QosProfile::sensor_data(),
        move |msg: Image| match convert_image_in(&msg) {
            Ok(raster) => sub_engine.on_image(raster),
            Err(e) => sub_engine.note_malformed_frame(&e.to_string()),
        },
    )?;

    let svc_engine = Arc::clone(&engine);
    let service = node.create_service::<ExecuteTask, _>(&bindings.service, move |req| {
        svc_engine.handle_service(req)
    })?;

    let act_engine = Arc::clone(&engine);
    let action = node.create_action_server::<ExecuteTaskAction, _>(
        &bindings.action,
        move |goal: ExecuteTaskRequest, feedback_sink, cancel_token| {
            let cancel = CancellationToken::from_flag(cancel_token.flag());
            let response =
                act_engine.handle_action(goal, &mut |fb| feedback_sink.publish(fb), &cancel);
            if response.is_canceled() {
                GoalResult::Canceled(response)
            } else if response.success {
                GoalResult::Succeeded(response)
            } else {
                GoalResult::Aborted(response)
            }
        },
    )?;

    info!(node = %node.name(), image_topic = %bindings.input_image, "node bound to graph");
    Ok(RunningNode {
        node,
        engine,
        _image_sub: image_sub,
        _service: service,
        _action: action,
    })
}

fn declare_parameters(node: &Node, config: &NodeConfig, registry: &TaskRegistry) {
    node.declare_parameter("image_topic", config.image_topic.as_str());
    node.declare_parameter("model", config.backend.model_id.as_str());
    node.declare_parameter("model_revision", config.backend.revision.as_str());
    node.declare_parameter(
        "continuous_task",
        config.continuous_task.clone().unwrap_or_default(),
    );
    node.declare_parameter("continuous_text_input", config.continuous_text_input.as_str());
    node.declare_parameter("publish_annotated", config.publish_annotated);
    node.declare_parameter("on_demand_queue_depth", config.on_demand_queue_depth as i64);
    // Read-only registry introspection for clients.
    node.declare_parameter("task_catalog", registry.catalog_json());
}

#[cfg(test)]
mod tests {
    use super::*;
    use florence2_interfaces::{SourceEncoding, Stamp};

    fn wire(encoding: &str, width: u32, height: u32, data: Vec<u8>) -> Image {
        let channels = if encoding == "mono8" { 1 } else { 3 };
        Image {
            stamp: Stamp::new(3, 30),
            frame_id: "camera".to_string(),
            width,
            height,
            encoding: encoding.to_string(),
            step: width * channels,
            data,
        }
    }

    #[test]
    fn rgb8_round_trips_byte_identical() {
        let msg = wire("rgb8", 2, 2, (0..12u8).collect());
        let raster = convert_image_in(&msg).unwrap();
        assert_eq!(raster.data(), &msg.data[..]);
        let back = convert_image_out(&raster);
        assert_eq!(back.data, msg.data);
        assert_eq!(back.encoding, "rgb8");
        assert_eq!(back.stamp, msg.stamp);
    }

    #[test]
    fn bgr8_is_normalized_then_restored() {
        let msg = wire("bgr8", 2, 1, vec![10, 20, 30, 40, 50, 60]);
        let raster = convert_image_in(&msg).unwrap();
        assert_eq!(raster.data(), &[30, 20, 10, 60, 50, 40], "stored as rgb");
        assert_eq!(raster.source_encoding(), SourceEncoding::Bgr8);
        let back = convert_image_out(&raster);
        assert_eq!(back.encoding, "bgr8");
        assert_eq!(back.data, msg.data, "wire bytes restored exactly");
    }

    #[test]
    fn unsupported_encodings_rejected() {
        let msg = wire("16UC1", 2, 2, vec![0; 8]);
        let err = convert_image_in(&msg).unwrap_err();
        assert!(matches!(err, AdapterError::UnsupportedEncoding(e) if e == "16UC1"));
    }

    #[test]
    fn bad_buffer_is_malformed() {
        let mut msg = wire("rgb8", 2, 2, vec![0; 12]);
        msg.data.pop();
        assert!(matches!(
            convert_image_in(&msg),
            Err(AdapterError::MalformedImage(_))
        ));
        let msg = Image {
            step: 5,
            ..wire("rgb8", 2, 2, vec![0; 12])
        };
        assert!(matches!(
            convert_image_in(&msg),
            Err(AdapterError::MalformedImage(_))
        ));
    }
}
