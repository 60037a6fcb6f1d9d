//! Graph-level behavior of the bound node: endpoint surface, QoS, wire
//! conversions, sensor-time propagation, and parameter declarations.

use std::time::Duration;

use florence2_interfaces::{
    parse_result, DetectionSet, ExecuteTask, ExecuteTaskRequest, Image, Stamp,
};
use rograph::{Context, EndpointKind, QosProfile, Reliability};

use florence2_node::adapter::{bind, RunningNode};
use florence2_node::deploy::expected_endpoints;
use florence2_node::engine::NodeConfig;

fn mock_node(ctx: &Context, continuous: Option<&str>) -> RunningNode {
    let mut config = NodeConfig::default();
    config.backend.model_id = "mock:1".to_string();
    config.continuous_task = continuous.map(str::to_string);
    bind(ctx, config).expect("bind mock node")
}

fn wire_image(fill: u8, stamp: Stamp) -> Image {
    Image {
        stamp,
        frame_id: "cam".to_string(),
        width: 64,
        height: 48,
        encoding: "rgb8".to_string(),
        step: 64 * 3,
        data: vec![fill; 64 * 48 * 3],
    }
}

#[test]
fn exposes_exactly_the_documented_surface() {
    let ctx = Context::new();
    let _node = mock_node(&ctx, Some("<OD>"));
    let mut live: Vec<(String, EndpointKind)> = ctx
        .endpoints_of("florence2")
        .into_iter()
        .map(|e| (e.name, e.kind))
        .collect();
    live.sort();
    let mut expected = expected_endpoints("florence2", "/camera/image_raw");
    expected.sort();
    assert_eq!(live, expected);
}

#[test]
fn qos_profiles_follow_sensor_pipeline_convention() {
    let ctx = Context::new();
    let _node = mock_node(&ctx, None);
    for endpoint in ctx.endpoints_of("florence2") {
        match endpoint.kind {
            EndpointKind::Subscription => {
                assert_eq!(
                    endpoint.qos,
                    Some(QosProfile::sensor_data()),
                    "image subscription must be best-effort depth 1"
                );
            }
            EndpointKind::Publisher => {
                let qos = endpoint.qos.expect("publishers carry qos");
                assert_eq!(qos.reliability, Reliability::Reliable);
                assert_eq!(qos.depth, 10);
            }
            _ => {}
        }
    }
}

#[test]
fn wire_types_match_documented_formats() {
    let ctx = Context::new();
    let _node = mock_node(&ctx, None);
    let types: std::collections::BTreeMap<String, String> =
        ctx.topic_names_and_types().into_iter().collect();
    assert_eq!(types["/camera/image_raw"], "sensor_msgs/msg/Image");
    assert_eq!(types["/florence2/results_json"], "std_msgs/msg/String");
    assert_eq!(types["/florence2/detections"], "vision_msgs/msg/Detection2DArray");
    assert_eq!(types["/florence2/annotated_image"], "sensor_msgs/msg/Image");
}

#[test]
fn image_topic_override_moves_the_subscription() {
    let ctx = Context::new();
    let mut config = NodeConfig::default();
    config.backend.model_id = "mock:1".to_string();
    config.image_topic = "/front_cam/image".to_string();
    let _node = bind(&ctx, config).unwrap();
    let subs: Vec<String> = ctx
        .endpoints_of("florence2")
        .into_iter()
        .filter(|e| e.kind == EndpointKind::Subscription)
        .map(|e| e.name)
        .collect();
    assert_eq!(subs, vec!["/front_cam/image".to_string()]);
}

#[test]
fn continuous_stream_publishes_results_detections_and_overlay() {
    let ctx = Context::new();
    let node = mock_node(&ctx, Some("<OD>"));
    let probe = ctx.create_node("probe").unwrap();
    let results = probe
        .create_listener::<String>("/florence2/results_json", QosProfile::reliable(64))
        .unwrap();
    let detections = probe
        .create_listener::<DetectionSet>("/florence2/detections", QosProfile::reliable(64))
        .unwrap();
    let annotated = probe
        .create_listener::<Image>("/florence2/annotated_image", QosProfile::reliable(64))
        .unwrap();
    let camera = ctx.create_node("camera").unwrap();
    let publisher = camera
        .create_publisher::<Image>("/camera/image_raw", QosProfile::sensor_data())
        .unwrap();

    let stamp = Stamp::new(1234, 567);
    publisher.publish(wire_image(9, stamp));

    let json = results.recv_timeout(Duration::from_secs(2)).expect("result published");
    let doc = parse_result(&json).unwrap();
    assert_eq!(doc.task, "<OD>");
    assert_eq!(doc.stamp, stamp, "document carries sensor time");

    let dets = detections.recv_timeout(Duration::from_secs(2)).expect("detections published");
    assert_eq!(dets.source_stamp, stamp, "detections carry sensor time");
    assert_eq!(dets.len(), 1);

    let overlay = annotated.recv_timeout(Duration::from_secs(2)).expect("overlay published");
    assert_eq!(overlay.stamp, stamp, "overlay carries sensor time");
    assert_eq!((overlay.width, overlay.height), (64, 48));
    assert_eq!(overlay.encoding, "rgb8");
    node.shutdown();
}

#[test]
fn no_continuous_task_means_silent_until_called() {
    let ctx = Context::new();
    let node = mock_node(&ctx, None);
    let probe = ctx.create_node("probe").unwrap();
    let results = probe
        .create_listener::<String>("/florence2/results_json", QosProfile::reliable(64))
        .unwrap();
    let camera = ctx.create_node("camera").unwrap();
    let publisher = camera
        .create_publisher::<Image>("/camera/image_raw", QosProfile::sensor_data())
        .unwrap();
    for i in 0..5 {
        publisher.publish(wire_image(i, Stamp::new(i as i32 + 1, 0)));
    }
    assert!(
        results.recv_timeout(Duration::from_millis(300)).is_none(),
        "no publications without a continuous task"
    );

    // A service call triggers the publication path.
    let client_node = ctx.create_node("caller").unwrap();
    let client = client_node
        .create_client::<ExecuteTask>("/florence2/execute_task")
        .unwrap();
    let response = client
        .call(ExecuteTaskRequest::with_latest_image("<OD>"))
        .unwrap();
    assert!(response.success, "{}", response.error_message);
    assert!(results.recv_timeout(Duration::from_secs(1)).is_some());
    node.shutdown();
}

#[test]
fn unsupported_encoding_is_counted_not_processed() {
    let ctx = Context::new();
    let node = mock_node(&ctx, Some("<OD>"));
    let camera = ctx.create_node("camera").unwrap();
    let publisher = camera
        .create_publisher::<Image>("/camera/image_raw", QosProfile::sensor_data())
        .unwrap();
    publisher.publish(Image {
        stamp: Stamp::now(),
        frame_id: "depth".to_string(),
        width: 4,
        height: 4,
        encoding: "16UC1".to_string(),
        step: 8,
        data: vec![0; 32],
    });
    let deadline = std::time::Instant::now() + Duration::from_secs(2);
    while node.stats().malformed_frames == 0 && std::time::Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(5));
    }
    let stats = node.stats();
    assert_eq!(stats.malformed_frames, 1);
    assert_eq!(stats.frames_received, 0, "malformed frames never reach the engine");
    node.shutdown();
}

#[test]
fn parameters_reflect_configuration_and_catalog() {
    let ctx = Context::new();
    let node = mock_node(&ctx, Some("<OD>"));
    let params = node.node();
    assert_eq!(
        params.get_parameter("model").unwrap().as_str(),
        Some("mock:1")
    );
    assert_eq!(
        params.get_parameter("continuous_task").unwrap().as_str(),
        Some("<OD>")
    );
    let catalog = params.get_parameter("task_catalog").unwrap();
    let parsed: serde_json::Value = serde_json::from_str(catalog.as_str().unwrap()).unwrap();
    let tokens: Vec<&str> = parsed
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["token"].as_str().unwrap())
        .collect();
    assert!(tokens.contains(&"<OD>"));
    assert!(tokens.contains(&"<CAPTION>"));
    node.shutdown();
}

#[test]
fn startup_aborts_on_bad_configuration() {
    let ctx = Context::new();
    let mut config = NodeConfig::default();
    config.backend.model_id = "mock:nonsense".to_string();
    assert!(bind(&ctx, config).is_err(), "bad model id must abort startup");

    let config = NodeConfig {
        continuous_task: Some("<MISSING>".to_string()),
        ..NodeConfig::default()
    };
    assert!(bind(&ctx, config).is_err(), "unknown continuous task must abort startup");
}
