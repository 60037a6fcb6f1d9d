//! In-process robot graph middleware.
//!
//! `rograph` provides the middleware seam this workspace binds its node to:
//! named topics with publish/subscribe and QoS, request/response services,
//! long-running actions with feedback and cancellation, per-node typed
//! parameters, and graph introspection. Names follow ROS 2 conventions
//! (`/absolute`, `~/node_private`), so endpoint tables written against a
//! ROS 2 graph map onto this one unchanged.
//!
//! Everything lives inside one process: a [`Context`] owns the graph, nodes
//! register endpoints on it, and handles deregister on drop. There is no
//! network transport; clients and servers must share the `Context`.

mod action;
mod context;
mod error;
mod graph;
mod name;
mod node;
mod param;
mod qos;
mod service;
mod topic;

pub use action::{
    ActionClient, ActionServer, CancelToken, ClientGoalHandle, FeedbackSink, GoalResult,
    GoalStatus,
};
pub use context::Context;
pub use error::GraphError;
pub use graph::{EndpointInfo, EndpointKind};
pub use node::Node;
pub use param::ParamValue;
pub use qos::{QosProfile, Reliability};
pub use service::{ServiceClient, ServiceServer};
pub use topic::{Listener, Publisher, Subscription};

/// Marker trait for values that can travel over a topic.
///
/// `type_name` is the wire-format identifier recorded in the graph; override
/// it to advertise a conventional name (e.g. `sensor_msgs/msg/Image`).
pub trait Message: Clone + Send + Sync + 'static {
    fn type_name() -> &'static str {
        std::any::type_name::<Self>()
    }
}

impl Message for String {
    fn type_name() -> &'static str {
        "std_msgs/msg/String"
    }
}

/// A service definition: request/response pair plus a wire-format name.
pub trait Service: 'static {
    type Request: Send + 'static;
    type Response: Send + 'static;
    fn type_name() -> &'static str;
}

/// An action definition: goal, feedback stream, and terminal result.
pub trait Action: 'static {
    type Goal: Send + 'static;
    type Feedback: Message;
    type Result: Send + 'static;
    fn type_name() -> &'static str;
}
