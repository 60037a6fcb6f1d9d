use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use crate::action::{ActionClient, ActionServer, CancelToken, FeedbackSink, GoalResult};
use crate::graph::GraphInner;
use crate::name;
use crate::param::ParamValue;
use crate::service::{ServiceClient, ServiceServer};
use crate::topic::{Listener, Publisher, Subscription};
use crate::{Action, GraphError, Message, QosProfile, Service};

/// A named participant on the graph. Endpoint factories resolve `~/` names
/// against the node name and register ownership for introspection.
pub struct Node {
    graph: Arc<GraphInner>,
    name: String,
    params: Mutex<BTreeMap<String, ParamValue>>,
}

impl Node {
    pub(crate) fn new(graph: Arc<GraphInner>, name: &str) -> Result<Self, GraphError> {
        name::validate_node_name(name)?;
        Ok(Self {
            graph,
            name: name.to_string(),
            params: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Expands a possibly node-relative name to its absolute graph name.
    pub fn resolve(&self, graph_name: &str) -> Result<String, GraphError> {
        name::resolve(&self.name, graph_name)
    }

    pub fn create_publisher<T: Message>(
        &self,
        topic: &str,
        qos: QosProfile,
    ) -> Result<Publisher<T>, GraphError> {
        let topic = self.resolve(topic)?;
        Publisher::register(self.graph.clone(), &self.name, topic, qos)
    }

    pub fn create_subscription<T: Message, F>(
        &self,
        topic: &str,
        qos: QosProfile,
        callback: F,
    ) -> Result<Subscription, GraphError>
    where
        F: Fn(T) + Send + 'static,
    {
        let topic = self.resolve(topic)?;
        Subscription::register(self.graph.clone(), &self.name, topic, qos, callback)
    }

    pub fn create_listener<T: Message>(
        &self,
        topic: &str,
        qos: QosProfile,
    ) -> Result<Listener<T>, GraphError> {
        let topic = self.resolve(topic)?;
        Listener::register(self.graph.clone(), &self.name, topic, qos)
    }

    pub fn create_service<S, F>(&self, name: &str, handler: F) -> Result<ServiceServer, GraphError>
    where
        S: Service,
        F: Fn(S::Request) -> S::Response + Send + Sync + 'static,
    {
        let name = self.resolve(name)?;
        ServiceServer::register::<S, F>(self.graph.clone(), &self.name, name, handler)
    }

    pub fn create_client<S: Service>(&self, name: &str) -> Result<ServiceClient<S>, GraphError> {
        let name = self.resolve(name)?;
        Ok(ServiceClient::new(self.graph.clone(), name))
    }

    pub fn create_action_server<A, F>(
        &self,
        name: &str,
        executor: F,
    ) -> Result<ActionServer, GraphError>
    where
        A: Action,
        F: Fn(A::Goal, FeedbackSink<A::Feedback>, CancelToken) -> GoalResult<A::Result>
            + Send
            + Sync
            + 'static,
    {
        let name = self.resolve(name)?;
        ActionServer::register::<A, F>(self.graph.clone(), &self.name, name, executor)
    }

    pub fn create_action_client<A: Action>(
        &self,
        name: &str,
    ) -> Result<ActionClient<A>, GraphError> {
        let name = self.resolve(name)?;
        Ok(ActionClient::new(self.graph.clone(), name))
    }

    /// Declares a parameter with its initial value. Re-declaring replaces the
    /// value (used when a launch configuration overrides a default).
    pub fn declare_parameter(&self, name: &str, value: impl Into<ParamValue>) {
        self.params.lock().unwrap().insert(name.to_string(), value.into());
    }

    pub fn get_parameter(&self, name: &str) -> Result<ParamValue, GraphError> {
        self.params
            .lock()
            .unwrap()
            .get(name)
            .cloned()
            .ok_or_else(|| GraphError::UndeclaredParameter(name.to_string()))
    }

    /// Updates an already-declared parameter, keeping its type.
    pub fn set_parameter(&self, name: &str, value: impl Into<ParamValue>) -> Result<(), GraphError> {
        let value = value.into();
        let mut params = self.params.lock().unwrap();
        match params.get(name) {
            None => Err(GraphError::UndeclaredParameter(name.to_string())),
            Some(held) if held.kind() != value.kind() => Err(GraphError::ParameterType {
                name: name.to_string(),
                held: held.kind(),
                requested: value.kind(),
            }),
            Some(_) => {
                params.insert(name.to_string(), value);
                Ok(())
            }
        }
    }

    pub fn list_parameters(&self) -> Vec<(String, ParamValue)> {
        self.params
            .lock()
            .unwrap()
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }
}
