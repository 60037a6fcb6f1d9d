//! Middleware-independent execution engine.
//!
//! Implements the three interaction modes over one inference lane:
//! continuous frames feed a zero-depth tick slot (latest wins, drops
//! counted), on-demand service/action jobs queue FIFO ahead of continuous
//! ticks, and a single worker thread owns every backend call, so two
//! inferences never overlap. The latest-image cache backs the
//! `use_latest_image` fallback with snapshot reads.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Condvar, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;
use tracing::{debug, warn};

use florence2_interfaces::{
    serialize_result, validate_request, ActionFeedback, DetectionSet, ExecuteTaskRequest,
    ExecuteTaskResponse, FeedbackStage, OutputKind, RasterImage, Stamp,
};

use crate::backend::{BackendConfig, BackendError, BackendResult, InferenceBackend};
use crate::mapping::{render_annotations, to_detections, to_result_document, AnnotationStyle};
use crate::registry::{build_prompt, TaskRegistry, TaskSpec};

/// Backpressure policy for continuous frames. Only latest-wins is defined:
/// it is the one policy that bounds latency for a perception stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DropPolicy {
    #[default]
    LatestWins,
}

/// Node configuration shared by the engine and the middleware binding.
#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub node_name: String,
    pub image_topic: String,
    pub backend: BackendConfig,
    pub continuous_task: Option<String>,
    pub continuous_text_input: String,
    pub publish_annotated: bool,
    pub continuous_drop_policy: DropPolicy,
    pub on_demand_queue_depth: usize,
    pub annotation_style: AnnotationStyle,
}

impl NodeConfig {
    pub fn with_backend(backend: BackendConfig) -> Self {
        Self {
            node_name: "florence2".to_string(),
            image_topic: "/camera/image_raw".to_string(),
            backend,
            continuous_task: None,
            continuous_text_input: String::new(),
            publish_annotated: true,
            continuous_drop_policy: DropPolicy::LatestWins,
            on_demand_queue_depth: 8,
            annotation_style: AnnotationStyle::default(),
        }
    }
}

impl Default for NodeConfig {
    fn default() -> Self {
        Self::with_backend(BackendConfig::new("mock"))
    }
}

/// Where finished outputs go. The middleware binding publishes them on the
/// output topics; tests collect them in memory.
pub trait OutputSink: Send + Sync {
    fn publish_result_json(&self, json: &str);
    fn publish_detections(&self, detections: &DetectionSet);
    fn publish_annotated(&self, image: &RasterImage);
}

/// Discards everything.
pub struct NullSink;

impl OutputSink for NullSink {
    fn publish_result_json(&self, _json: &str) {}
    fn publish_detections(&self, _detections: &DetectionSet) {}
    fn publish_annotated(&self, _image: &RasterImage) {}
}

/// Collects published outputs for inspection; useful when embedding the
/// engine without a middleware binding.
#[derive(Default)]
pub struct MemorySink {
    results: Mutex<Vec<String>>,
    detections: Mutex<Vec<DetectionSet>>,
    annotated: Mutex<Vec<RasterImage>>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn results(&self) -> Vec<String> {
        self.results.lock().unwrap().clone()
    }

    pub fn detections(&self) -> Vec<DetectionSet> {
        self.detections.lock().unwrap().clone()
    }

    pub fn annotated(&self) -> Vec<RasterImage> {
        self.annotated.lock().unwrap().clone()
    }
}

impl OutputSink for MemorySink {
    fn publish_result_json(&self, json: &str) {
        self.results.lock().unwrap().push(json.to_string());
    }

    fn publish_detections(&self, detections: &DetectionSet) {
        self.detections.lock().unwrap().push(detections.clone());
    }

    fn publish_annotated(&self, image: &RasterImage) {
        self.annotated.lock().unwrap().push(image.clone());
    }
}

/// Set-once cancellation flag observed at stage boundaries only; a cancel
/// arriving mid-generation takes effect after the blocking call returns.
#[derive(Clone, Default)]
pub struct CancellationToken {
    flag: Arc<AtomicBool>,
}

impl CancellationToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_flag(flag: Arc<AtomicBool>) -> Self {
        Self { flag }
    }

    pub fn request(&self) {
        self.flag.store(true, Ordering::SeqCst);
    }

    pub fn is_requested(&self) -> bool {
        self.flag.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("continuous task `{0}` is not in the registry")]
    UnknownContinuousTask(String),
    #[error("continuous task `{0}` requires text input; set continuous_text_input")]
    ContinuousTextMissing(String),
    #[error("engine already started")]
    AlreadyStarted,
}

/// Counters exposed as a stats snapshot.
#[derive(Debug, Default)]
struct Counters {
    frames_received: AtomicU64,
    frames_dropped: AtomicU64,
    malformed_frames: AtomicU64,
    continuous_jobs: AtomicU64,
    continuous_failures: AtomicU64,
    service_jobs: AtomicU64,
    action_jobs: AtomicU64,
    canceled_goals: AtomicU64,
    busy_rejections: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StatsSnapshot {
    pub frames_received: u64,
    pub frames_dropped: u64,
    pub malformed_frames: u64,
    pub continuous_jobs: u64,
    pub continuous_failures: u64,
    pub service_jobs: u64,
    pub action_jobs: u64,
    pub canceled_goals: u64,
    pub busy_rejections: u64,
}

struct OnDemandJob {
    prompt: String,
    image: Arc<RasterImage>,
    spec: TaskSpec,
    reply: mpsc::SyncSender<Result<BackendResult, BackendError>>,
}

enum LaneJob {
    OnDemand(OnDemandJob),
    ContinuousTick(Arc<RasterImage>),
}

#[derive(Default)]
struct LaneState {
    on_demand: VecDeque<OnDemandJob>,
    continuous: Option<Arc<RasterImage>>,
    executing: bool,
    stopped: bool,
}

/// The single inference lane: a mutex-guarded queue pair drained by one
/// worker thread. On-demand jobs always dequeue before continuous ticks.
struct Lane {
    state: Mutex<LaneState>,
    cv: Condvar,
    depth: usize,
}

enum SubmitError {
    Full,
    Stopped,
}

impl Lane {
    fn new(depth: usize) -> Self {
        Self {
            state: Mutex::new(LaneState::default()),
            cv: Condvar::new(),
            depth: depth.max(1),
        }
    }

    fn submit(&self, job: OnDemandJob) -> Result<(), SubmitError> {
        let mut st = self.state.lock().unwrap();
        if st.stopped {
            return Err(SubmitError::Stopped);
        }
        if st.on_demand.len() >= self.depth {
            return Err(SubmitError::Full);
        }
        st.on_demand.push_back(job);
        self.cv.notify_one();
        Ok(())
    }

    /// Offers a continuous tick. Accepted only when the lane is fully idle;
    /// a busy lane drops the frame (latest-wins, zero queue depth).
    fn offer_tick(&self, image: Arc<RasterImage>) -> bool {
        let mut st = self.state.lock().unwrap();
        if st.stopped || st.executing || !st.on_demand.is_empty() || st.continuous.is_some() {
            return false;
        }
        st.continuous = Some(image);
        self.cv.notify_one();
        true
    }

    /// Blocks for the next job; `None` means stopped and drained.
    fn next_job(&self) -> Option<LaneJob> {
        let mut st = self.state.lock().unwrap();
        loop {
            if let Some(job) = st.on_demand.pop_front() {
                st.executing = true;
                return Some(LaneJob::OnDemand(job));
            }
            if let Some(image) = st.continuous.take() {
                st.executing = true;
                return Some(LaneJob::ContinuousTick(image));
            }
            if st.stopped {
                return None;
            }
            st = self.cv.wait(st).unwrap();
        }
    }

    fn job_done(&self) {
        let mut st = self.state.lock().unwrap();
        st.executing = false;
        self.cv.notify_all();
    }

    fn stop(&self) {
        let mut st = self.state.lock().unwrap();
        st.stopped = true;
        self.cv.notify_all();
    }
}

struct CacheEntry {
    image: Arc<RasterImage>,
    seq: u64,
}

struct ContinuousSetup {
    spec: TaskSpec,
    prompt: String,
}

struct Prepared {
    spec: TaskSpec,
    prompt: String,
    image: Arc<RasterImage>,
    doc_stamp: Stamp,
}

/// Execution engine. Construct with [`Engine::new`], then [`Engine::start`]
/// the inference worker before invoking handlers.
pub struct Engine {
    registry: Arc<TaskRegistry>,
    backend: Arc<dyn InferenceBackend>,
    sink: Arc<dyn OutputSink>,
    config: NodeConfig,
    continuous: Option<ContinuousSetup>,
    cache: RwLock<Option<CacheEntry>>,
    next_seq: AtomicU64,
    lane: Lane,
    counters: Counters,
    started: AtomicBool,
    worker: Mutex<Option<JoinHandle<()>>>,
}

impl Engine {
    pub fn new(
        config: NodeConfig,
        registry: Arc<TaskRegistry>,
        backend: Arc<dyn InferenceBackend>,
        sink: Arc<dyn OutputSink>,
    ) -> Result<Self, EngineError> {
        let continuous = match &config.continuous_task {
            None => None,
            Some(token) => {
                let spec = registry
                    .lookup(token)
                    .ok_or_else(|| EngineError::UnknownContinuousTask(token.clone()))?
                    .clone();
                let prompt = build_prompt(&spec, &config.continuous_text_input)
                    .map_err(|_| EngineError::ContinuousTextMissing(token.clone()))?;
                Some(ContinuousSetup { spec, prompt })
            }
        };
        Ok(Self {
            registry,
            backend,
            sink,
            lane: Lane::new(config.on_demand_queue_depth),
            config,
            continuous,
            cache: RwLock::new(None),
            next_seq: AtomicU64::new(0),
            counters: Counters::default(),
            started: AtomicBool::new(false),
            worker: Mutex::new(None),
        })
    }

    pub fn registry(&self) -> &TaskRegistry {
        &self.registry
    }

    pub fn backend(&self) -> &Arc<dyn InferenceBackend> {
        &self.backend
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    /// Spawns the inference worker.
    pub fn start(self: &Arc<Self>) -> Result<(), EngineError> {
        if self.started.swap(true, Ordering::SeqCst) {
            return Err(EngineError::AlreadyStarted);
        }
        let engine = Arc::clone(self);
        let handle = std::thread::Builder::new()
            .name("inference-lane".to_string())
            .spawn(move || engine.worker_loop())
            .expect("spawn inference worker");
        *self.worker.lock().unwrap() = Some(handle);
        Ok(())
    }

    /// Stops the worker after draining queued on-demand jobs.
    pub fn stop(&self) {
        self.lane.stop();
        if let Some(handle) = self.worker.lock().unwrap().take() {
            let _ = handle.join();
        }
    }

    fn worker_loop(self: Arc<Self>) {
        while let Some(job) = self.lane.next_job() {
            match job {
                LaneJob::OnDemand(job) => {
                    let result = self.backend.infer(&job.prompt, &job.image, &job.spec);
                    let _ = job.reply.send(result);
                }
                LaneJob::ContinuousTick(image) => self.run_continuous(image),
            }
            self.lane.job_done();
        }
    }

    /// Ingests one frame: the cache updates unconditionally; with a
    /// continuous task configured the frame becomes a tick when the lane is
    /// idle and is dropped (counted) when it is busy.
    pub fn on_image(&self, image: RasterImage) {
        self.counters.frames_received.fetch_add(1, Ordering::Relaxed);
        let image = Arc::new(image);
        let seq = self.next_seq.fetch_add(1, Ordering::SeqCst) + 1;
        *self.cache.write().unwrap() = Some(CacheEntry {
            image: Arc::clone(&image),
            seq,
        });
        if self.continuous.is_some() && self.started.load(Ordering::SeqCst) {
            let DropPolicy::LatestWins = self.config.continuous_drop_policy;
            if !self.lane.offer_tick(image) {
                self.counters.frames_dropped.fetch_add(1, Ordering::Relaxed);
            }
        }
    }

    /// Records a frame that failed middleware conversion; the cache is
    /// untouched by such frames.
    pub fn note_malformed_frame(&self, reason: &str) {
        self.counters.malformed_frames.fetch_add(1, Ordering::Relaxed);
        warn!(reason, "discarded malformed frame");
    }

    /// Synchronous on-demand execution. Never panics across the caller
    /// boundary: every failure becomes `success=false` with a reason.
    pub fn handle_service(&self, req: ExecuteTaskRequest) -> ExecuteTaskResponse {
        self.counters.service_jobs.fetch_add(1, Ordering::Relaxed);
        let receipt = Stamp::now();
        let prepared = match self.prepare(&req, receipt) {
            Ok(p) => p,
            Err(resp) => return resp,
        };
        let result = match self.execute(&prepared) {
            Ok(r) => r,
            Err(resp) => return resp,
        };
        self.finish(&prepared, &result, true)
    }

    /// Asynchronous execution with staged feedback. Cancellation is checked
    /// before preprocessing, before inference, and again after the blocking
    /// generation returns; a cancel observed at any boundary yields a
    /// canceled result and suppresses all output publication.
    pub fn handle_action(
        &self,
        goal: ExecuteTaskRequest,
        feedback: &mut dyn FnMut(ActionFeedback),
        cancel: &CancellationToken,
    ) -> ExecuteTaskResponse {
        self.counters.action_jobs.fetch_add(1, Ordering::Relaxed);
        let started = Instant::now();
        let receipt = Stamp::now();
        let mut emit = |stage: FeedbackStage| {
            feedback(ActionFeedback {
                stage,
                elapsed: started.elapsed().as_secs_f64(),
            })
        };

        emit(FeedbackStage::Received);
        if cancel.is_requested() {
            self.counters.canceled_goals.fetch_add(1, Ordering::Relaxed);
            return ExecuteTaskResponse::canceled(0.0);
        }

        emit(FeedbackStage::Preprocessing);
        let prepared = match self.prepare(&goal, receipt) {
            Ok(p) => p,
            Err(resp) => return resp,
        };
        if cancel.is_requested() {
            self.counters.canceled_goals.fetch_add(1, Ordering::Relaxed);
            return ExecuteTaskResponse::canceled(0.0);
        }

        emit(FeedbackStage::InferenceRunning);
        let result = match self.execute(&prepared) {
            Ok(r) => r,
            Err(resp) => return resp,
        };
        if cancel.is_requested() {
            // The blocking generation already completed; discard its output
            // without publishing.
            self.counters.canceled_goals.fetch_add(1, Ordering::Relaxed);
            return ExecuteTaskResponse::canceled(result.inference_time);
        }

        emit(FeedbackStage::Postprocessing);
        self.finish(&prepared, &result, true)
    }

    pub fn stats(&self) -> StatsSnapshot {
        StatsSnapshot {
            frames_received: self.counters.frames_received.load(Ordering::Relaxed),
            frames_dropped: self.counters.frames_dropped.load(Ordering::Relaxed),
            malformed_frames: self.counters.malformed_frames.load(Ordering::Relaxed),
            continuous_jobs: self.counters.continuous_jobs.load(Ordering::Relaxed),
            continuous_failures: self.counters.continuous_failures.load(Ordering::Relaxed),
            service_jobs: self.counters.service_jobs.load(Ordering::Relaxed),
            action_jobs: self.counters.action_jobs.load(Ordering::Relaxed),
            canceled_goals: self.counters.canceled_goals.load(Ordering::Relaxed),
            busy_rejections: self.counters.busy_rejections.load(Ordering::Relaxed),
        }
    }

    fn prepare(
        &self,
        req: &ExecuteTaskRequest,
        receipt: Stamp,
    ) -> Result<Prepared, ExecuteTaskResponse> {
        if !self.started.load(Ordering::SeqCst) {
            return Err(ExecuteTaskResponse::failure("ENGINE_NOT_STARTED"));
        }
        let cached: Option<(Arc<RasterImage>, u64)> = self
            .cache
            .read()
            .unwrap()
            .as_ref()
            .map(|e| (Arc::clone(&e.image), e.seq));
        if let Err(reason) = validate_request(req, self.registry.as_ref(), cached.is_some()) {
            return Err(ExecuteTaskResponse::failure(reason.as_str()));
        }
        let spec = self
            .registry
            .lookup(&req.task_token)
            .expect("validated against registry")
            .clone();
        let image = match &req.image {
            Some(img) => Arc::new(img.clone()),
            None => {
                let (image, seq) = cached.expect("validated cache fallback");
                debug!(seq, "resolved request image from latest-image cache");
                image
            }
        };
        let prompt = match build_prompt(&spec, &req.text_input) {
            Ok(p) => p,
            Err(e) => return Err(ExecuteTaskResponse::failure(e.to_string())),
        };
        let doc_stamp = if image.stamp().is_zero() {
            receipt
        } else {
            image.stamp()
        };
        Ok(Prepared {
            spec,
            prompt,
            image,
            doc_stamp,
        })
    }

    fn execute(&self, prepared: &Prepared) -> Result<BackendResult, ExecuteTaskResponse> {
        let (tx, rx) = mpsc::sync_channel(1);
        let job = OnDemandJob {
            prompt: prepared.prompt.clone(),
            image: Arc::clone(&prepared.image),
            spec: prepared.spec.clone(),
            reply: tx,
        };
        match self.lane.submit(job) {
            Ok(()) => {}
            Err(SubmitError::Full) => {
                self.counters.busy_rejections.fetch_add(1, Ordering::Relaxed);
                return Err(ExecuteTaskResponse::failure("BUSY"));
            }
            Err(SubmitError::Stopped) => {
                return Err(ExecuteTaskResponse::failure("ENGINE_STOPPED"));
            }
        }
        match rx.recv() {
            Ok(Ok(result)) => Ok(result),
            Ok(Err(backend_err)) => Err(ExecuteTaskResponse::failure(backend_err.to_string())),
            Err(_) => Err(ExecuteTaskResponse::failure("ENGINE_STOPPED")),
        }
    }

    /// Maps a finished backend result onto the hybrid output surface and
    /// (optionally) publishes it exactly as continuous mode would.
    fn finish(
        &self,
        prepared: &Prepared,
        result: &BackendResult,
        publish: bool,
    ) -> ExecuteTaskResponse {
        let doc = match to_result_document(
            &prepared.spec,
            result,
            prepared.doc_stamp,
            self.backend.model_label(),
        ) {
            Ok(doc) => doc,
            Err(e) => return ExecuteTaskResponse::failure(e.to_string()),
        };
        let json = serialize_result(&doc);
        let detections = if prepared.spec.output_kind == OutputKind::BoxesLabels {
            match to_detections(&doc) {
                Ok(d) => Some(d),
                Err(e) => return ExecuteTaskResponse::failure(e.to_string()),
            }
        } else {
            None
        };
        let annotated = detections.as_ref().and_then(|dets| {
            self.config.publish_annotated.then(|| {
                render_annotations(&prepared.image, dets, &self.config.annotation_style)
            })
        });
        if publish {
            self.sink.publish_result_json(&json);
            if let Some(dets) = &detections {
                self.sink.publish_detections(dets);
            }
            if let Some(img) = &annotated {
                self.sink.publish_annotated(img);
            }
        }
        ExecuteTaskResponse {
            success: true,
            error_message: String::new(),
            results_json: json,
            detections,
            inference_time: result.inference_time,
        }
    }

    fn run_continuous(&self, image: Arc<RasterImage>) {
        let Some(cont) = &self.continuous else {
            return;
        };
        let receipt = Stamp::now();
        let doc_stamp = if image.stamp().is_zero() {
            receipt
        } else {
            image.stamp()
        };
        match self.backend.infer(&cont.prompt, &image, &cont.spec) {
            Ok(result) => {
                let prepared = Prepared {
                    spec: cont.spec.clone(),
                    prompt: cont.prompt.clone(),
                    image,
                    doc_stamp,
                };
                let resp = self.finish(&prepared, &result, true);
                if resp.success {
                    self.counters.continuous_jobs.fetch_add(1, Ordering::Relaxed);
                } else {
                    // Mapping failure on a frame: publish nothing, count it.
                    self.counters.continuous_failures.fetch_add(1, Ordering::Relaxed);
                    warn!(error = %resp.error_message, "continuous frame failed in mapping");
                }
            }
            Err(e) => {
                self.counters.continuous_failures.fetch_add(1, Ordering::Relaxed);
                warn!(error = %e, "continuous inference failed; frame not published");
            }
        }
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        self.lane.stop();
        if let Some(handle) = self.worker.lock().unwrap().take() {
            let _ = handle.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use florence2_interfaces::OutputKind;

    fn job(tag: u32) -> (OnDemandJob, mpsc::Receiver<Result<BackendResult, BackendError>>) {
        let (tx, rx) = mpsc::sync_channel(1);
        let image = Arc::new(
            RasterImage::rgb8(tag, 1, vec![0; tag as usize * 3], Stamp::zero()).unwrap(),
        );
        let spec = TaskSpec {
            token: "<OD>".to_string(),
            requires_text_input: false,
            output_kind: OutputKind::BoxesLabels,
            description: String::new(),
        };
        (
            OnDemandJob {
                prompt: format!("job{tag}"),
                image,
                spec,
                reply: tx,
            },
            rx,
        )
    }

    #[test]
    fn on_demand_dequeues_before_a_pending_tick() {
        let lane = Lane::new(8);
        let tick_image =
            Arc::new(RasterImage::rgb8(2, 2, vec![0; 12], Stamp::zero()).unwrap());
        assert!(lane.offer_tick(tick_image), "idle lane accepts the tick");
        let (service, _rx) = job(1);
        lane.submit(service).ok().unwrap();

        match lane.next_job() {
            Some(LaneJob::OnDemand(j)) => assert_eq!(j.prompt, "job1"),
            other => panic!("service must run before the pending tick: {:?}", kind_of(&other)),
        }
        lane.job_done();
        match lane.next_job() {
            Some(LaneJob::ContinuousTick(_)) => {}
            other => panic!("pending tick runs after on-demand work: {:?}", kind_of(&other)),
        }
    }

    #[test]
    fn on_demand_jobs_are_fifo() {
        let lane = Lane::new(8);
        for tag in [1u32, 2, 3] {
            let (j, _rx) = job(tag);
            lane.submit(j).ok().unwrap();
        }
        for expected in ["job1", "job2", "job3"] {
            match lane.next_job() {
                Some(LaneJob::OnDemand(j)) => assert_eq!(j.prompt, expected),
                other => panic!("expected {expected}: {:?}", kind_of(&other)),
            }
            lane.job_done();
        }
    }

    #[test]
    fn tick_offers_are_rejected_unless_fully_idle() {
        let lane = Lane::new(8);
        let image = Arc::new(RasterImage::rgb8(2, 2, vec![0; 12], Stamp::zero()).unwrap());
        let (j, _rx) = job(1);
        lane.submit(j).ok().unwrap();
        assert!(!lane.offer_tick(image.clone()), "queued on-demand work blocks ticks");
        assert!(matches!(lane.next_job(), Some(LaneJob::OnDemand(_))));
        assert!(!lane.offer_tick(image.clone()), "executing lane blocks ticks");
        lane.job_done();
        assert!(lane.offer_tick(image.clone()), "idle lane accepts again");
        assert!(!lane.offer_tick(image), "occupied slot never queues a second tick");
    }

    fn kind_of(job: &Option<LaneJob>) -> &'static str {
        match job {
            None => "none",
            Some(LaneJob::OnDemand(_)) => "on-demand",
            Some(LaneJob::ContinuousTick(_)) => "tick",
        }
    }
}
