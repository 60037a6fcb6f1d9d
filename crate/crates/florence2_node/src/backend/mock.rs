use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use florence2_interfaces::{OutputKind, RasterImage, TaskOutput};

use super::{BackendError, BackendResult, InferenceBackend, ResolvedDevice, ResolvedPrecision};
use crate::registry::TaskSpec;

/// Deterministic stand-in backend.
///
/// Output is a pure function of (output kind, image width, image height,
/// image checksum); latency is injected, not sampled, and the reported
/// inference time equals the configured latency so repeated calls are
/// byte-identical. A call log and a concurrency high-water mark are kept for
/// test assertions.
pub struct MockBackend {
    latency: Duration,
    active: AtomicUsize,
    max_active: AtomicUsize,
    calls: Mutex<Vec<MockCall>>,
}

/// One recorded `infer` invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct MockCall {
    pub prompt: String,
    pub width: u32,
    pub height: u32,
}

impl MockBackend {
    pub fn with_latency_ms(latency_ms: u64) -> Self {
        Self {
            latency: Duration::from_millis(latency_ms.max(1)),
            active: AtomicUsize::new(0),
            max_active: AtomicUsize::new(0),
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn latency(&self) -> Duration {
        self.latency
    }

    pub fn call_log(&self) -> Vec<MockCall> {
        self.calls.lock().unwrap().clone()
    }

    /// Highest number of overlapping `infer` calls observed. The single-lane
    /// discipline keeps this at 1.
    pub fn max_concurrency(&self) -> usize {
        self.max_active.load(Ordering::SeqCst)
    }

    fn fixed_box(width: u32, height: u32) -> [f64; 4] {
        let w = width as f64;
        let h = height as f64;
        [0.25 * w, 0.25 * h, 0.75 * w, 0.75 * h]
    }

    fn output_for(kind: OutputKind, image: &RasterImage) -> TaskOutput {
        let rect = Self::fixed_box(image.width(), image.height());
        match kind {
            OutputKind::Text => TaskOutput::Text {
                text: format!("mock caption {}", &image.checksum_hex()[..8]),
            },
            OutputKind::BoxesLabels => TaskOutput::BoxesLabels {
                bboxes: vec![rect],
                labels: vec!["mock".to_string()],
            },
            OutputKind::QuadBoxesText => TaskOutput::QuadBoxesText {
                quad_boxes: vec![[
                    rect[0], rect[1], rect[2], rect[1], rect[2], rect[3], rect[0], rect[3],
                ]],
                labels: vec!["mock".to_string()],
            },
            OutputKind::PolygonsLabels => TaskOutput::PolygonsLabels {
                polygons: vec![vec![
                    rect[0], rect[1], rect[2], rect[1], rect[2], rect[3], rect[0], rect[3],
                ]],
                labels: vec!["mock".to_string()],
            },
            OutputKind::RegionTextPairs => TaskOutput::RegionTextPairs {
                bboxes: vec![rect],
                texts: vec!["mock".to_string()],
            },
        }
    }
}

impl InferenceBackend for MockBackend {
    fn model_label(&self) -> &str {
        "mock"
    }

    fn device(&self) -> ResolvedDevice {
        ResolvedDevice::Cpu
    }

    fn precision(&self) -> ResolvedPrecision {
        ResolvedPrecision::Full
    }

    fn runtime_info(&self) -> Vec<(String, String)> {
        vec![(
            "mock_latency_ms".to_string(),
            self.latency.as_millis().to_string(),
        )]
    }

    fn infer(
        &self,
        prompt: &str,
        image: &RasterImage,
        spec: &TaskSpec,
    ) -> Result<BackendResult, BackendError> {
        let now_active = self.active.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_active.fetch_max(now_active, Ordering::SeqCst);
        assert_eq!(now_active, 1, "backend invoked reentrantly; the inference lane must serialize");

        self.calls.lock().unwrap().push(MockCall {
            prompt: prompt.to_string(),
            width: image.width(),
            height: image.height(),
        });

        std::thread::sleep(self.latency);
        let parsed_output = Self::output_for(spec.output_kind, image);
        let raw_text = match &parsed_output {
            TaskOutput::Text { text } => text.clone(),
            _ => prompt.to_string(),
        };

        self.active.fetch_sub(1, Ordering::SeqCst);
        Ok(BackendResult {
            raw_text,
            parsed_output,
            inference_time: self.latency.as_secs_f64(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use florence2_interfaces::Stamp;

    fn spec(kind: OutputKind) -> TaskSpec {
        TaskSpec {
            token: "<OD>".to_string(),
            requires_text_input: false,
            output_kind: kind,
            description: String::new(),
        }
    }

    fn image(width: u32, height: u32) -> RasterImage {
        let data = vec![7u8; (width * height * 3) as usize];
        RasterImage::rgb8(width, height, data, Stamp::zero()).unwrap()
    }

    #[test]
    fn od_box_is_quarter_inset() {
        let backend = MockBackend::with_latency_ms(1);
        let result = backend.infer("<OD>", &image(640, 480), &spec(OutputKind::BoxesLabels)).unwrap();
        match result.parsed_output {
            TaskOutput::BoxesLabels { bboxes, labels } => {
                assert_eq!(bboxes, vec![[160.0, 120.0, 480.0, 360.0]]);
                assert_eq!(labels, vec!["mock"]);
            }
            other => panic!("wrong kind: {other:?}"),
        }
    }

    #[test]
    fn caption_embeds_checksum_prefix() {
        let backend = MockBackend::with_latency_ms(1);
        let img = image(8, 8);
        let expected = format!("mock caption {}", &img.checksum_hex()[..8]);
        let result = backend.infer("<CAPTION>", &img, &spec(OutputKind::Text)).unwrap();
        assert_eq!(result.parsed_output, TaskOutput::Text { text: expected });
    }

    #[test]
    fn repeated_calls_are_identical() {
        let backend = MockBackend::with_latency_ms(1);
        let img = image(32, 16);
        for kind in [
            OutputKind::Text,
            OutputKind::BoxesLabels,
            OutputKind::QuadBoxesText,
            OutputKind::PolygonsLabels,
            OutputKind::RegionTextPairs,
        ] {
            let a = backend.infer("<X>", &img, &spec(kind)).unwrap();
            let b = backend.infer("<X>", &img, &spec(kind)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn reported_time_is_configured_latency() {
        let backend = MockBackend::with_latency_ms(25);
        let result = backend.infer("<OD>", &image(4, 4), &spec(OutputKind::BoxesLabels)).unwrap();
        assert_eq!(result.inference_time, 0.025);
        assert!(result.inference_time > 0.0);
    }

    #[test]
    fn call_log_records_requests() {
        let backend = MockBackend::with_latency_ms(1);
        backend.infer("<OD>", &image(4, 2), &spec(OutputKind::BoxesLabels)).unwrap();
        let log = backend.call_log();
        assert_eq!(log, vec![MockCall { prompt: "<OD>".into(), width: 4, height: 2 }]);
    }
}
