use std::any::{Any, TypeId};
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::action::ErasedExecutor;
use crate::error::GraphError;
use crate::qos::QosProfile;
use crate::topic::SubQueue;

/// What kind of endpoint a graph entry is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EndpointKind {
    Publisher,
    Subscription,
    Service,
    Action,
}

impl std::fmt::Display for EndpointKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EndpointKind::Publisher => "publisher",
            EndpointKind::Subscription => "subscription",
            EndpointKind::Service => "service",
            EndpointKind::Action => "action",
        };
        f.write_str(s)
    }
}

/// One introspectable endpoint currently live on the graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndpointInfo {
    pub node: String,
    pub name: String,
    pub kind: EndpointKind,
    pub type_name: String,
    pub qos: Option<QosProfile>,
}

pub(crate) struct PublisherEntry {
    pub id: u64,
    pub node: String,
    pub qos: QosProfile,
}

pub(crate) struct SubscriptionEntry {
    pub id: u64,
    pub node: String,
    pub qos: QosProfile,
    pub queue: Arc<SubQueue>,
}

pub(crate) struct TopicState {
    pub type_id: TypeId,
    pub type_name: &'static str,
    pub publishers: Vec<PublisherEntry>,
    pub subscriptions: Vec<SubscriptionEntry>,
}

pub(crate) type ErasedHandler =
    Arc<dyn Fn(Box<dyn Any + Send>) -> Box<dyn Any + Send> + Send + Sync>;

pub(crate) struct ServiceEntry {
    pub id: u64,
    pub node: String,
    pub type_name: &'static str,
    pub req_type: TypeId,
    pub res_type: TypeId,
    pub handler: ErasedHandler,
}

pub(crate) struct ActionEntry {
    pub id: u64,
    pub node: String,
    pub type_name: &'static str,
    pub goal_type: TypeId,
    pub result_type: TypeId,
    pub executor: ErasedExecutor,
}

/// Shared graph state behind a [`crate::Context`].
pub(crate) struct GraphInner {
    next_id: AtomicU64,
    pub topics: Mutex<HashMap<String, TopicState>>,
    pub services: Mutex<HashMap<String, ServiceEntry>>,
    pub actions: Mutex<HashMap<String, ActionEntry>>,
}

impl GraphInner {
    pub fn new() -> Self {
        Self {
            next_id: AtomicU64::new(1),
            topics: Mutex::new(HashMap::new()),
            services: Mutex::new(HashMap::new()),
            actions: Mutex::new(HashMap::new()),
        }
    }

    pub fn next_id(&self) -> u64 {
        self.next_id.fetch_add(1, Ordering::Relaxed)
    }

    /// Ensures `name` is registered with the given payload type, creating the
    /// topic on first use.
    pub fn topic_entry(
        &self,
        name: &str,
        type_id: TypeId,
        type_name: &'static str,
    ) -> Result<(), GraphError> {
        let mut topics = self.topics.lock().unwrap();
        match topics.get(name) {
            Some(state) if state.type_id != type_id => Err(GraphError::TypeMismatch {
                name: name.to_string(),
                registered: state.type_name.to_string(),
                requested: type_name,
            }),
            Some(_) => Ok(()),
            None => {
                topics.insert(
                    name.to_string(),
                    TopicState {
                        type_id,
                        type_name,
                        publishers: Vec::new(),
                        subscriptions: Vec::new(),
                    },
                );
                Ok(())
            }
        }
    }

    pub fn drop_publisher(&self, topic: &str, id: u64) {
        let mut topics = self.topics.lock().unwrap();
        if let Some(state) = topics.get_mut(topic) {
            state.publishers.retain(|p| p.id != id);
            if state.publishers.is_empty() && state.subscriptions.is_empty() {
                topics.remove(topic);
            }
        }
    }

    pub fn drop_subscription(&self, topic: &str, id: u64) {
        let mut topics = self.topics.lock().unwrap();
        if let Some(state) = topics.get_mut(topic) {
            state.subscriptions.retain(|s| s.id != id);
            if state.publishers.is_empty() && state.subscriptions.is_empty() {
                topics.remove(topic);
            }
        }
    }

    pub fn drop_service(&self, name: &str, id: u64) {
        let mut services = self.services.lock().unwrap();
        if services.get(name).is_some_and(|e| e.id == id) {
            services.remove(name);
        }
    }

    pub fn drop_action(&self, name: &str, id: u64) {
        let mut actions = self.actions.lock().unwrap();
        if actions.get(name).is_some_and(|e| e.id == id) {
            actions.remove(name);
        }
    }

    /// Snapshot of every live endpoint, sorted for stable assertions.
    pub fn endpoints(&self) -> Vec<EndpointInfo> {
        let mut out = Vec::new();
        {
            let topics = self.topics.lock().unwrap();
            for (name, state) in topics.iter() {
                for p in &state.publishers {
                    out.push(EndpointInfo {
                        node: p.node.clone(),
                        name: name.clone(),
                        kind: EndpointKind::Publisher,
                        type_name: state.type_name.to_string(),
                        qos: Some(p.qos),
                    });
                }
                for s in &state.subscriptions {
                    out.push(EndpointInfo {
                        node: s.node.clone(),
                        name: name.clone(),
                        kind: EndpointKind::Subscription,
                        type_name: state.type_name.to_string(),
                        qos: Some(s.qos),
                    });
                }
            }
        }
        {
            let services = self.services.lock().unwrap();
            for (name, entry) in services.iter() {
                out.push(EndpointInfo {
                    node: entry.node.clone(),
                    name: name.clone(),
                    kind: EndpointKind::Service,
                    type_name: entry.type_name.to_string(),
                    qos: None,
                });
            }
        }
        {
            let actions = self.actions.lock().unwrap();
            for (name, entry) in actions.iter() {
                out.push(EndpointInfo {
                    node: entry.node.clone(),
                    name: name.clone(),
                    kind: EndpointKind::Action,
                    type_name: entry.type_name.to_string(),
                    qos: None,
                });
            }
        }
        out.sort_by(|a, b| {
            (&a.name, a.kind, &a.node).cmp(&(&b.name, b.kind, &b.node))
        });
        out
    }
}
