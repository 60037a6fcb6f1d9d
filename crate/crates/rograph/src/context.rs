use std::sync::Arc;

use crate::graph::{EndpointInfo, EndpointKind, GraphInner};
use crate::node::Node;
use crate::GraphError;

/// Owns one in-process graph. Nodes created from the same context can reach
/// each other; separate contexts are fully isolated.
#[derive(Clone)]
pub struct Context {
    graph: Arc<GraphInner>,
}

impl Context {
    pub fn new() -> Self {
        Self {
            graph: Arc::new(GraphInner::new()),
        }
    }

    pub fn create_node(&self, name: &str) -> Result<Arc<Node>, GraphError> {
        Node::new(self.graph.clone(), name).map(Arc::new)
    }

    /// Every live endpoint, sorted by (name, kind, node).
    pub fn endpoints(&self) -> Vec<EndpointInfo> {
        self.graph.endpoints()
    }

    /// Endpoints owned by one node.
    pub fn endpoints_of(&self, node: &str) -> Vec<EndpointInfo> {
        self.graph
            .endpoints()
            .into_iter()
            .filter(|e| e.node == node)
            .collect()
    }

    pub fn topic_names_and_types(&self) -> Vec<(String, String)> {
        let mut seen = std::collections::BTreeMap::new();
        for e in self.graph.endpoints() {
            if matches!(e.kind, EndpointKind::Publisher | EndpointKind::Subscription) {
                seen.insert(e.name.clone(), e.type_name.clone());
            }
        }
        seen.into_iter().collect()
    }

    pub fn service_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .graph
            .services
            .lock()
            .unwrap()
            .keys()
            .cloned()
            .collect();
        names.sort();
        names
    }

    pub fn action_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .graph
            .actions
            .lock()
            .unwrap()
            .keys()
            .cloned()
            .collect();
        names.sort();
        names
    }
}

impl Default for Context {
    fn default() -> Self {
        Self::new()
    }
}
