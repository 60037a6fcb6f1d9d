use std::any::{Any, TypeId};
use std::marker::PhantomData;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::graph::{ErasedHandler, GraphInner, ServiceEntry};
use crate::{GraphError, Service};

/// Server-side registration guard; dropping it removes the service.
pub struct ServiceServer {
    graph: Arc<GraphInner>,
    name: String,
    id: u64,
}

impl ServiceServer {
    pub(crate) fn register<S, F>(
        graph: Arc<GraphInner>,
        node: &str,
        name: String,
        handler: F,
    ) -> Result<Self, GraphError>
    where
        S: Service,
        F: Fn(S::Request) -> S::Response + Send + Sync + 'static,
    {
        let erased: ErasedHandler = Arc::new(move |req: Box<dyn Any + Send>| {
            let req = req
                .downcast::<S::Request>()
                .expect("request type checked at dispatch");
            Box::new(handler(*req)) as Box<dyn Any + Send>
        });
        let mut services = graph.services.lock().unwrap();
        if services.contains_key(&name) {
            return Err(GraphError::ServerExists(name));
        }
        let id = graph.next_id();
        services.insert(
            name.clone(),
            ServiceEntry {
                id,
                node: node.to_string(),
                type_name: S::type_name(),
                req_type: TypeId::of::<S::Request>(),
                res_type: TypeId::of::<S::Response>(),
                handler: erased,
            },
        );
        drop(services);
        Ok(Self { graph, name, id })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl Drop for ServiceServer {
    fn drop(&mut self) {
        self.graph.drop_service(&self.name, self.id);
    }
}

/// Client handle for a service name.
pub struct ServiceClient<S: Service> {
    graph: Arc<GraphInner>,
    name: String,
    _marker: PhantomData<fn(S)>,
}

impl<S: Service> ServiceClient<S> {
    pub(crate) fn new(graph: Arc<GraphInner>, name: String) -> Self {
        Self {
            graph,
            name,
            _marker: PhantomData,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn service_available(&self) -> bool {
        self.graph.services.lock().unwrap().contains_key(&self.name)
    }

    /// Polls until a server appears or the deadline lapses.
    pub fn wait_for_service(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        loop {
            if self.service_available() {
                return true;
            }
            if Instant::now() >= deadline {
                return false;
            }
            std::thread::sleep(Duration::from_millis(2));
        }
    }

    fn lookup(&self) -> Result<ErasedHandler, GraphError> {
        let services = self.graph.services.lock().unwrap();
        let entry = services
            .get(&self.name)
            .ok_or_else(|| GraphError::NoServer(self.name.clone()))?;
        if entry.req_type != TypeId::of::<S::Request>() || entry.res_type != TypeId::of::<S::Response>()
        {
            return Err(GraphError::TypeMismatch {
                name: self.name.clone(),
                registered: entry.type_name.to_string(),
                requested: S::type_name(),
            });
        }
        Ok(entry.handler.clone())
    }

    /// Invokes the handler synchronously on the calling thread.
    pub fn call(&self, req: S::Request) -> Result<S::Response, GraphError> {
        let handler = self.lookup()?;
        let outcome = catch_unwind(AssertUnwindSafe(|| handler(Box::new(req))));
        match outcome {
            Ok(res) => Ok(*res
                .downcast::<S::Response>()
                .expect("response type checked at lookup")),
            Err(_) => Err(GraphError::ServerPanic(self.name.clone())),
        }
    }

    /// Runs the call on a helper thread so the caller can bound the wait.
    ///
    /// On timeout the handler keeps running detached; its response is
    /// discarded when it eventually returns.
    pub fn call_with_timeout(
        &self,
        req: S::Request,
        timeout: Duration,
    ) -> Result<S::Response, GraphError> {
        let handler = self.lookup()?;
        let name = self.name.clone();
        let (tx, rx) = mpsc::sync_channel(1);
        std::thread::Builder::new()
            .name("svc-call".into())
            .spawn(move || {
                let outcome = catch_unwind(AssertUnwindSafe(|| handler(Box::new(req))));
                let _ = tx.send(outcome);
            })
            .expect("spawn service call thread");
        match rx.recv_timeout(timeout) {
            Ok(Ok(res)) => Ok(*res
                .downcast::<S::Response>()
                .expect("response type checked at lookup")),
            Ok(Err(_)) => Err(GraphError::ServerPanic(name)),
            Err(_) => Err(GraphError::Timeout(name)),
        }
    }
}
