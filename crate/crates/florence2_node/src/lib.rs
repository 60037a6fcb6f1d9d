//! Florence-2 inference node for a robot software graph.
//!
//! One node serves the whole Florence-2 task family (detection, captioning,
//! OCR, grounding, ...) through three interaction modes: continuous
//! processing of an image topic, a synchronous `execute_task` service, and
//! an `execute_task_action` action with staged feedback and cancellation.
//! Outputs are hybrid: a canonical JSON document for every task, plus typed
//! detections and an annotated image for box-producing tasks.
//!
//! Module map:
//! - [`registry`] — prompt-token task table (data-driven)
//! - [`backend`] — pluggable inference backends (real Florence-2 via a
//!   Python worker, deterministic mock for CI and benchmarks)
//! - [`mapping`] — backend output → JSON document / detections / overlay
//! - [`engine`] — middleware-independent mode logic and the inference lane
//! - [`adapter`] — binding onto the graph middleware (topics/service/action)
//! - [`client`] — example service/action client
//! - [`bench`] — continuous-mode throughput harness
//! - [`deploy`] — deployment profiles and the smoke test

pub mod adapter;
pub mod backend;
pub mod bench;
pub mod client;
pub mod config;
pub mod deploy;
pub mod engine;
pub mod mapping;
pub mod registry;
