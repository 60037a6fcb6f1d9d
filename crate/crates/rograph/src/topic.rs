use std::any::{Any, TypeId};
use std::collections::VecDeque;
use std::marker::PhantomData;
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use crate::graph::{GraphInner, PublisherEntry, SubscriptionEntry};
use crate::qos::{QosProfile, Reliability};
use crate::Message;

type AnyMsg = Arc<dyn Any + Send + Sync>;

/// Per-subscription delivery queue. QoS decides what happens on overflow:
/// best-effort keeps only the newest message, reliable drops the oldest.
pub(crate) struct SubQueue {
    state: Mutex<SubQueueState>,
    cv: Condvar,
    qos: QosProfile,
}

struct SubQueueState {
    buf: VecDeque<AnyMsg>,
    closed: bool,
}

impl SubQueue {
    pub fn new(qos: QosProfile) -> Self {
        Self {
            state: Mutex::new(SubQueueState {
                buf: VecDeque::new(),
                closed: false,
            }),
            cv: Condvar::new(),
            qos,
        }
    }

    pub fn push(&self, msg: AnyMsg) {
        let mut st = self.state.lock().unwrap();
        if st.closed {
            return;
        }
        match self.qos.reliability {
            Reliability::BestEffort => {
                while st.buf.len() >= self.qos.depth.max(1) {
                    st.buf.pop_front();
                }
            }
            Reliability::Reliable => {
                if st.buf.len() >= self.qos.depth.max(1) {
                    st.buf.pop_front();
                }
            }
        }
        st.buf.push_back(msg);
        self.cv.notify_one();
    }

    /// Blocks until a message arrives, the timeout lapses, or the queue closes.
    pub fn pop(&self, timeout: Duration) -> Option<AnyMsg> {
        let mut st = self.state.lock().unwrap();
        loop {
            if let Some(msg) = st.buf.pop_front() {
                return Some(msg);
            }
            if st.closed {
                return None;
            }
            let (next, res) = self.cv.wait_timeout(st, timeout).unwrap();
            st = next;
            if res.timed_out() && st.buf.is_empty() {
                return None;
            }
        }
    }

    pub fn close(&self) {
        let mut st = self.state.lock().unwrap();
        st.closed = true;
        self.cv.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.state.lock().unwrap().closed
    }
}

/// Sends messages to every subscription on a topic.
pub struct Publisher<T: Message> {
    graph: Arc<GraphInner>,
    topic: String,
    id: u64,
    _marker: PhantomData<fn(T)>,
}

impl<T: Message> Publisher<T> {
    pub(crate) fn register(
        graph: Arc<GraphInner>,
        node: &str,
        topic: String,
        qos: QosProfile,
    ) -> Result<Self, crate::GraphError> {
        graph.topic_entry(&topic, TypeId::of::<T>(), T::type_name())?;
        let id = graph.next_id();
        graph
            .topics
            .lock()
            .unwrap()
            .get_mut(&topic)
            .expect("topic registered above")
            .publishers
            .push(PublisherEntry {
                id,
                node: node.to_string(),
                qos,
            });
        Ok(Self {
            graph,
            topic,
            id,
            _marker: PhantomData,
        })
    }

    pub fn publish(&self, msg: T) {
        let any: AnyMsg = Arc::new(msg);
        let queues: Vec<Arc<SubQueue>> = {
            let topics = self.graph.topics.lock().unwrap();
            match topics.get(&self.topic) {
                Some(state) => state.subscriptions.iter().map(|s| s.queue.clone()).collect(),
                None => Vec::new(),
            }
        };
        for q in queues {
            q.push(any.clone());
        }
    }

    pub fn topic(&self) -> &str {
        &self.topic
    }

    /// Number of live subscriptions on this topic.
    pub fn subscription_count(&self) -> usize {
        self.graph
            .topics
            .lock()
            .unwrap()
            .get(&self.topic)
            .map_or(0, |s| s.subscriptions.len())
    }
}

impl<T: Message> Drop for Publisher<T> {
    fn drop(&mut self) {
        self.graph.drop_publisher(&self.topic, self.id);
    }
}

fn register_queue<T: Message>(
    graph: &Arc<GraphInner>,
    node: &str,
    topic: &str,
    qos: QosProfile,
) -> Result<(u64, Arc<SubQueue>), crate::GraphError> {
    graph.topic_entry(topic, TypeId::of::<T>(), T::type_name())?;
    let id = graph.next_id();
    let queue = Arc::new(SubQueue::new(qos));
    graph
        .topics
        .lock()
        .unwrap()
        .get_mut(topic)
        .expect("topic registered above")
        .subscriptions
        .push(SubscriptionEntry {
            id,
            node: node.to_string(),
            qos,
            queue: queue.clone(),
        });
    Ok((id, queue))
}

/// Callback subscription; the callback runs on a dedicated dispatch thread,
/// one message at a time, in arrival order.
pub struct Subscription {
    graph: Arc<GraphInner>,
    topic: String,
    id: u64,
    queue: Arc<SubQueue>,
    worker: Option<JoinHandle<()>>,
}

impl Subscription {
    pub(crate) fn register<T: Message, F>(
        graph: Arc<GraphInner>,
        node: &str,
        topic: String,
        qos: QosProfile,
        callback: F,
    ) -> Result<Self, crate::GraphError>
    where
        F: Fn(T) + Send + 'static,
    {
        let (id, queue) = register_queue::<T>(&graph, node, &topic, qos)?;
        let dispatch_queue = queue.clone();
        let worker = std::thread::Builder::new()
            .name(format!("sub{topic}").replace('/', "-"))
            .spawn(move || loop {
                match dispatch_queue.pop(Duration::from_millis(100)) {
                    Some(any) => {
                        let msg = any
                            .downcast_ref::<T>()
                            .expect("topic type checked at registration")
                            .clone();
                        callback(msg);
                    }
                    None if dispatch_queue.is_closed() => break,
                    None => {}
                }
            })
            .expect("spawn subscription dispatcher");
        Ok(Self {
            graph,
            topic,
            id,
            queue,
            worker: Some(worker),
        })
    }

    pub fn topic(&self) -> &str {
        &self.topic
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        self.graph.drop_subscription(&self.topic, self.id);
        self.queue.close();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

/// Polling subscription: the caller pops messages at its own pace.
pub struct Listener<T: Message> {
    graph: Arc<GraphInner>,
    topic: String,
    id: u64,
    queue: Arc<SubQueue>,
    _marker: PhantomData<fn() -> T>,
}

impl<T: Message> Listener<T> {
    pub(crate) fn register(
        graph: Arc<GraphInner>,
        node: &str,
        topic: String,
        qos: QosProfile,
    ) -> Result<Self, crate::GraphError> {
        let (id, queue) = register_queue::<T>(&graph, node, &topic, qos)?;
        Ok(Self {
            graph,
            topic,
            id,
            queue,
            _marker: PhantomData,
        })
    }

    /// Waits up to `timeout` for the next message.
    pub fn recv_timeout(&self, timeout: Duration) -> Option<T> {
        self.queue
            .pop(timeout)
            .map(|any| any.downcast_ref::<T>().expect("typed queue").clone())
    }

    pub fn try_recv(&self) -> Option<T> {
        self.recv_timeout(Duration::from_millis(0))
    }

    /// Drains everything currently queued without blocking.
    pub fn drain(&self) -> Vec<T> {
        let mut out = Vec::new();
        while let Some(m) = self.try_recv() {
            out.push(m);
        }
        out
    }

    pub fn topic(&self) -> &str {
        &self.topic
    }
}

impl<T: Message> Drop for Listener<T> {
    fn drop(&mut self) {
        self.graph.drop_subscription(&self.topic, self.id);
        self.queue.close();
    }
}
