use std::any::{Any, TypeId};
use std::marker::PhantomData;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use crate::graph::{ActionEntry, GraphInner};
use crate::qos::QosProfile;
use crate::topic::SubQueue;
use crate::{Action, GraphError, Message};

/// Cooperative cancellation flag for one goal. Set-once: once requested it
/// stays requested.
#[derive(Clone)]
pub struct CancelToken {
    flag: Arc<AtomicBool>,
}

impl CancelToken {
    pub fn new() -> Self {
        Self {
            flag: Arc::new(AtomicBool::new(false)),
        }
    }

    pub fn request(&self) {
        self.flag.store(true, Ordering::SeqCst);
    }

    pub fn is_requested(&self) -> bool {
        self.flag.load(Ordering::SeqCst)
    }

    /// Raw flag, for bridging into middleware-agnostic code.
    pub fn flag(&self) -> Arc<AtomicBool> {
        self.flag.clone()
    }
}

impl Default for CancelToken {
    fn default() -> Self {
        Self::new()
    }
}

/// Terminal state of a goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalStatus {
    Succeeded,
    Canceled,
    Aborted,
}

/// Executor outcome: terminal state plus the result payload.
pub enum GoalResult<R> {
    Succeeded(R),
    Canceled(R),
    Aborted(R),
}

impl<R> GoalResult<R> {
    pub fn status(&self) -> GoalStatus {
        match self {
            GoalResult::Succeeded(_) => GoalStatus::Succeeded,
            GoalResult::Canceled(_) => GoalStatus::Canceled,
            GoalResult::Aborted(_) => GoalStatus::Aborted,
        }
    }

    fn into_parts(self) -> (GoalStatus, R) {
        match self {
            GoalResult::Succeeded(r) => (GoalStatus::Succeeded, r),
            GoalResult::Canceled(r) => (GoalStatus::Canceled, r),
            GoalResult::Aborted(r) => (GoalStatus::Aborted, r),
        }
    }
}

/// Push side of a goal's feedback stream.
pub struct FeedbackSink<F: Message> {
    queue: Arc<SubQueue>,
    _marker: PhantomData<fn(F)>,
}

impl<F: Message> FeedbackSink<F> {
    pub fn publish(&self, feedback: F) {
        self.queue.push(Arc::new(feedback));
    }
}

pub(crate) type ErasedExecutor = Arc<
    dyn Fn(Box<dyn Any + Send>, Arc<SubQueue>, CancelToken) -> (GoalStatus, Box<dyn Any + Send>)
        + Send
        + Sync,
>;

/// Server-side registration guard; dropping it removes the action.
pub struct ActionServer {
    graph: Arc<GraphInner>,
    name: String,
    id: u64,
}

impl ActionServer {
    pub(crate) fn register<A, F>(
        graph: Arc<GraphInner>,
        node: &str,
        name: String,
        executor: F,
    ) -> Result<Self, GraphError>
    where
        A: Action,
        F: Fn(A::Goal, FeedbackSink<A::Feedback>, CancelToken) -> GoalResult<A::Result>
            + Send
            + Sync
            + 'static,
    {
        let erased: ErasedExecutor = Arc::new(move |goal, queue, token| {
            let goal = goal
                .downcast::<A::Goal>()
                .expect("goal type checked at dispatch");
            let sink = FeedbackSink::<A::Feedback> {
                queue,
                _marker: PhantomData,
            };
            let (status, result) = executor(*goal, sink, token).into_parts();
            (status, Box::new(result) as Box<dyn Any + Send>)
        });
        let mut actions = graph.actions.lock().unwrap();
        if actions.contains_key(&name) {
            return Err(GraphError::ServerExists(name));
        }
        let id = graph.next_id();
        actions.insert(
            name.clone(),
            ActionEntry {
                id,
                node: node.to_string(),
                type_name: A::type_name(),
                goal_type: TypeId::of::<A::Goal>(),
                result_type: TypeId::of::<A::Result>(),
                executor: erased,
            },
        );
        drop(actions);
        Ok(Self { graph, name, id })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl Drop for ActionServer {
    fn drop(&mut self) {
        self.graph.drop_action(&self.name, self.id);
    }
}

/// Client handle for an action name.
pub struct ActionClient<A: Action> {
    graph: Arc<GraphInner>,
    name: String,
    _marker: PhantomData<fn(A)>,
}

impl<A: Action> ActionClient<A> {
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

    pub fn action_available(&self) -> bool {
        self.graph.actions.lock().unwrap().contains_key(&self.name)
    }

    pub fn wait_for_action(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        loop {
            if self.action_available() {
                return true;
            }
            if Instant::now() >= deadline {
                return false;
            }
            std::thread::sleep(Duration::from_millis(2));
        }
    }

    /// Submits a goal; the executor runs on its own thread.
    pub fn send_goal(&self, goal: A::Goal) -> Result<ClientGoalHandle<A>, GraphError> {
        let executor = {
            let actions = self.graph.actions.lock().unwrap();
            let entry = actions
                .get(&self.name)
                .ok_or_else(|| GraphError::NoServer(self.name.clone()))?;
            if entry.goal_type != TypeId::of::<A::Goal>()
                || entry.result_type != TypeId::of::<A::Result>()
            {
                return Err(GraphError::TypeMismatch {
                    name: self.name.clone(),
                    registered: entry.type_name.to_string(),
                    requested: A::type_name(),
                });
            }
            entry.executor.clone()
        };
        let feedback = Arc::new(SubQueue::new(QosProfile::reliable(64)));
        let token = CancelToken::new();
        let (result_tx, result_rx) = mpsc::sync_channel(1);
        let goal_feedback = feedback.clone();
        let goal_token = token.clone();
        let name = self.name.clone();
        std::thread::Builder::new()
            .name("action-goal".into())
            .spawn(move || {
                let fb = goal_feedback.clone();
                let outcome = catch_unwind(AssertUnwindSafe(|| {
                    executor(Box::new(goal), fb, goal_token)
                }));
                goal_feedback.close();
                let _ = result_tx.send(outcome.map_err(|_| GraphError::ServerPanic(name)));
            })
            .expect("spawn action goal thread");
        Ok(ClientGoalHandle {
            name: self.name.clone(),
            feedback,
            result_rx,
            token,
            _marker: PhantomData,
        })
    }
}

type GoalOutcome = Result<(GoalStatus, Box<dyn Any + Send>), GraphError>;

/// Client-side view of one submitted goal.
pub struct ClientGoalHandle<A: Action> {
    name: String,
    feedback: Arc<SubQueue>,
    result_rx: mpsc::Receiver<GoalOutcome>,
    token: CancelToken,
    _marker: PhantomData<fn(A)>,
}

impl<A: Action> ClientGoalHandle<A> {
    /// Next feedback message, or `None` once the stream is closed and drained.
    pub fn next_feedback(&self, timeout: Duration) -> Option<A::Feedback> {
        self.feedback
            .pop(timeout)
            .map(|any| any.downcast_ref::<A::Feedback>().expect("typed queue").clone())
    }

    /// Requests cancellation; the executor observes it at its own boundaries.
    pub fn cancel(&self) {
        self.token.request();
    }

    /// Clone of this goal's cancel token, e.g. for timer-driven cancellation.
    pub fn cancel_token(&self) -> CancelToken {
        self.token.clone()
    }

    /// Waits for the terminal result.
    pub fn result(&self, timeout: Duration) -> Result<(GoalStatus, A::Result), GraphError> {
        match self.result_rx.recv_timeout(timeout) {
            Ok(Ok((status, result))) => Ok((
                status,
                *result
                    .downcast::<A::Result>()
                    .expect("result type checked at send_goal"),
            )),
            Ok(Err(e)) => Err(e),
            Err(_) => Err(GraphError::Timeout(self.name.clone())),
        }
    }
}
