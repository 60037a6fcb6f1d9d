//! Backend output → hybrid output surface.
//!
//! Every task gets a canonical JSON [`ResultDocument`]; box-producing tasks
//! additionally get a typed [`DetectionSet`] and an annotated copy of the
//! input image. Quad-box and polygon tasks stay JSON-only.

mod font;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use florence2_interfaces::{
    Detection2D, DetectionSet, OutputKind, PixelFormat, RasterImage, ResultDocument, Stamp,
    TaskOutput, SCHEMA_VERSION,
};

use crate::backend::BackendResult;
use crate::registry::TaskSpec;

/// Florence-2 emits no confidence scores; the detection wire format requires
/// one, so every detection carries this synthetic value.
pub const SYNTHETIC_SCORE: f64 = 1.0;

#[derive(Debug, Error)]
pub enum MappingError {
    #[error("SCHEMA_MISMATCH: {0}")]
    SchemaMismatch(String),
    #[error("WRONG_OUTPUT_KIND: detections need boxes_labels output, document holds {0}")]
    WrongOutputKind(OutputKind),
}

/// Builds the canonical result document for one inference.
///
/// The stamp argument should be the input image time when the frame carries
/// one, else the request receipt time (sensor-time propagation for fusion).
pub fn to_result_document(
    task: &TaskSpec,
    backend_result: &BackendResult,
    stamp: Stamp,
    model: &str,
) -> Result<ResultDocument, MappingError> {
    let got = backend_result.parsed_output.kind();
    if got != task.output_kind {
        return Err(MappingError::SchemaMismatch(format!(
            "backend produced {got} but task `{}` yields {}",
            task.token, task.output_kind
        )));
    }
    let doc = ResultDocument {
        schema_version: SCHEMA_VERSION.to_string(),
        task: task.token.clone(),
        model: model.to_string(),
        stamp,
        inference_time_s: backend_result.inference_time,
        output: backend_result.parsed_output.clone(),
    };
    doc.validate()
        .map_err(|e| MappingError::SchemaMismatch(e.to_string()))?;
    Ok(doc)
}

/// Maps a boxes+labels document onto the typed detection format: corner box
/// `[x1,y1,x2,y2]` becomes center `((x1+x2)/2, (y1+y2)/2)` and size
/// `(x2-x1, y2-y1)`; labels are carried verbatim; the score is synthetic.
pub fn to_detections(doc: &ResultDocument) -> Result<DetectionSet, MappingError> {
    let (bboxes, labels) = match &doc.output {
        TaskOutput::BoxesLabels { bboxes, labels } => (bboxes, labels),
        other => return Err(MappingError::WrongOutputKind(other.kind())),
    };
    if bboxes.len() != labels.len() {
        return Err(MappingError::SchemaMismatch(format!(
            "bboxes has {} entries but labels has {}",
            bboxes.len(),
            labels.len()
        )));
    }
    let detections = bboxes
        .iter()
        .zip(labels)
        .map(|(b, label)| Detection2D {
            center_x: (b[0] + b[2]) / 2.0,
            center_y: (b[1] + b[3]) / 2.0,
            size_x: b[2] - b[0],
            size_y: b[3] - b[1],
            label: label.clone(),
            score: SYNTHETIC_SCORE,
        })
        .collect();
    Ok(DetectionSet {
        source_stamp: doc.stamp,
        detections,
    })
}

/// Recovers the corner box a detection was built from. Exact for detections
/// produced by [`to_detections`] on integer-valued inputs.
pub fn detection_to_corner_box(det: &Detection2D) -> [f64; 4] {
    [
        det.center_x - det.size_x / 2.0,
        det.center_y - det.size_y / 2.0,
        det.center_x + det.size_x / 2.0,
        det.center_y + det.size_y / 2.0,
    ]
}

/// Overlay styling for annotated images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotationStyle {
    pub line_width: u32,
    pub font_scale: u32,
    pub draw_labels: bool,
    pub color_cycle: Vec<[u8; 3]>,
}

impl Default for AnnotationStyle {
    fn default() -> Self {
        Self {
            line_width: 2,
            font_scale: 1,
            draw_labels: true,
            color_cycle: vec![
                [230, 57, 70],
                [42, 157, 143],
                [233, 196, 106],
                [69, 123, 157],
                [244, 162, 97],
                [106, 76, 147],
            ],
        }
    }
}

/// Renders box perimeters and labels over a copy of the input image.
/// Deterministic for a given (image, detections, style); boxes reaching
/// outside the frame are clamped, never an error. The output keeps the input
/// dimensions and encoding family.
pub fn render_annotations(
    image: &RasterImage,
    dets: &DetectionSet,
    style: &AnnotationStyle,
) -> RasterImage {
    let mut canvas = Canvas {
        data: image.data().to_vec(),
        width: image.width(),
        height: image.height(),
        format: image.format(),
    };
    for (i, det) in dets.detections.iter().enumerate() {
        let color = style.color_cycle[i % style.color_cycle.len().max(1)];
        let corner = detection_to_corner_box(det);
        let Some((x1, y1, x2, y2)) = canvas.clamp_box(&corner) else {
            continue;
        };
        canvas.draw_rect_perimeter(x1, y1, x2, y2, style.line_width.max(1), color);
        if style.draw_labels && !det.label.is_empty() && style.font_scale > 0 {
            let tx = x1 + style.line_width.max(1) + 1;
            let ty = y1 + style.line_width.max(1) + 1;
            canvas.draw_label(tx, ty, &det.label, style.font_scale, color);
        }
    }
    image
        .with_data(canvas.data)
        .expect("canvas preserves buffer dimensions")
}

struct Canvas {
    data: Vec<u8>,
    width: u32,
    height: u32,
    format: PixelFormat,
}

impl Canvas {
    /// Integer pixel bounds of a corner box clamped into the frame; `None`
    /// for boxes that degenerate entirely outside it.
    fn clamp_box(&self, b: &[f64; 4]) -> Option<(u32, u32, u32, u32)> {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let x1 = b[0].clamp(0.0, max_x).round() as u32;
        let y1 = b[1].clamp(0.0, max_y).round() as u32;
        let x2 = b[2].clamp(0.0, max_x).round() as u32;
        let y2 = b[3].clamp(0.0, max_y).round() as u32;
        (x1 <= x2 && y1 <= y2).then_some((x1, y1, x2, y2))
    }

    fn put(&mut self, x: u32, y: u32, color: [u8; 3]) {
        if x >= self.width || y >= self.height {
            return;
        }
        let idx = (y * self.width + x) as usize * self.format.channels() as usize;
        match self.format {
            PixelFormat::Rgb8 => {
                self.data[idx] = color[0];
                self.data[idx + 1] = color[1];
                self.data[idx + 2] = color[2];
            }
            PixelFormat::Mono8 => {
                let luma = (0.299 * color[0] as f64
                    + 0.587 * color[1] as f64
                    + 0.114 * color[2] as f64)
                    .round() as u8;
                self.data[idx] = luma;
            }
        }
    }

    /// Perimeter band of `width` pixels drawn inward from the box edges.
    fn draw_rect_perimeter(&mut self, x1: u32, y1: u32, x2: u32, y2: u32, width: u32, color: [u8; 3]) {
        for y in y1..=y2 {
            for x in x1..=x2 {
                let on_horizontal_band = y - y1 < width || y2 - y < width;
                let on_vertical_band = x - x1 < width || x2 - x < width;
                if on_horizontal_band || on_vertical_band {
                    self.put(x, y, color);
                }
            }
        }
    }

    fn draw_label(&mut self, x: u32, y: u32, label: &str, scale: u32, color: [u8; 3]) {
        let bg = [255, 255, 255];
        let mut cursor = x;
        for c in label.chars() {
            let columns = font::glyph(c);
            for (cx, col) in columns.iter().enumerate() {
                for cy in 0..font::GLYPH_H {
                    let lit = (col >> cy) & 1 == 1;
                    for sx in 0..scale {
                        for sy in 0..scale {
                            let px = cursor + cx as u32 * scale + sx;
                            let py = y + cy * scale + sy;
                            self.put(px, py, if lit { color } else { bg });
                        }
                    }
                }
            }
            // One blank column between glyphs, painted background.
            for cy in 0..font::GLYPH_H * scale {
                for sx in 0..scale {
                    self.put(cursor + font::GLYPH_W * scale + sx, y + cy, bg);
                }
            }
            cursor += (font::GLYPH_W + 1) * scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{InferenceBackend, MockBackend};
    use crate::registry::TaskRegistry;
    use std::collections::HashSet;

    fn image(width: u32, height: u32) -> RasterImage {
        let data: Vec<u8> = (0..width * height * 3).map(|i| (i % 251) as u8).collect();
        RasterImage::rgb8(width, height, data, Stamp::new(9, 9)).unwrap()
    }

    fn boxes_doc(bboxes: Vec<[f64; 4]>, labels: Vec<&str>) -> ResultDocument {
        ResultDocument {
            schema_version: SCHEMA_VERSION.to_string(),
            task: "<OD>".to_string(),
            model: "mock".to_string(),
            stamp: Stamp::new(1, 0),
            inference_time_s: 0.1,
            output: TaskOutput::BoxesLabels {
                bboxes,
                labels: labels.into_iter().map(str::to_string).collect(),
            },
        }
    }

    #[test]
    fn text_output_is_embedded_directly() {
        let registry = TaskRegistry::builtin();
        let spec = registry.lookup("<CAPTION>").unwrap();
        let backend_result = crate::backend::BackendResult {
            raw_text: "a cat".into(),
            parsed_output: TaskOutput::Text { text: "a cat".into() },
            inference_time: 0.05,
        };
        let doc = to_result_document(spec, &backend_result, Stamp::new(2, 3), "mock").unwrap();
        assert_eq!(doc.output, TaskOutput::Text { text: "a cat".into() });
        assert_eq!(doc.task, "<CAPTION>");
        let json = florence2_interfaces::serialize_result(&doc);
        assert!(json.contains(r#""output":{"text":"a cat"}"#));
    }

    #[test]
    fn kind_mismatch_is_schema_mismatch() {
        let registry = TaskRegistry::builtin();
        let spec = registry.lookup("<CAPTION>").unwrap();
        let backend_result = crate::backend::BackendResult {
            raw_text: String::new(),
            parsed_output: TaskOutput::BoxesLabels { bboxes: vec![], labels: vec![] },
            inference_time: 0.05,
        };
        let err = to_result_document(spec, &backend_result, Stamp::zero(), "mock").unwrap_err();
        assert!(matches!(err, MappingError::SchemaMismatch(_)));
    }

    #[test]
    fn mock_od_on_vga_matches_fractions() {
        let registry = TaskRegistry::builtin();
        let spec = registry.lookup("<OD>").unwrap();
        let backend = MockBackend::with_latency_ms(1);
        let img = image(640, 480);
        let result = backend.infer("<OD>", &img, spec).unwrap();
        let doc = to_result_document(spec, &result, img.stamp(), "mock").unwrap();
        let json = florence2_interfaces::serialize_result(&doc);
        assert!(
            json.contains(r#""bboxes":[[160.0,120.0,480.0,360.0]],"labels":["mock"]"#),
            "{json}"
        );
    }

    #[test]
    fn detections_are_center_size_of_corners() {
        let doc = boxes_doc(vec![[10.0, 20.0, 110.0, 220.0]], vec!["cat"]);
        let dets = to_detections(&doc).unwrap();
        assert_eq!(dets.len(), 1);
        let d = &dets.detections[0];
        assert_eq!((d.center_x, d.center_y), (60.0, 120.0));
        assert_eq!((d.size_x, d.size_y), (100.0, 200.0));
        assert_eq!(d.label, "cat");
        assert_eq!(d.score, 1.0);
        assert_eq!(dets.source_stamp, doc.stamp);
        assert_eq!(detection_to_corner_box(d), [10.0, 20.0, 110.0, 220.0]);
    }

    #[test]
    fn empty_document_maps_to_empty_set() {
        let doc = boxes_doc(vec![], vec![]);
        assert!(to_detections(&doc).unwrap().is_empty());
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let doc = boxes_doc(vec![[0.0, 0.0, 1.0, 1.0], [1.0, 1.0, 2.0, 2.0]], vec!["one"]);
        assert!(matches!(to_detections(&doc), Err(MappingError::SchemaMismatch(_))));
    }

    #[test]
    fn non_box_document_is_wrong_kind() {
        let mut doc = boxes_doc(vec![], vec![]);
        doc.output = TaskOutput::Text { text: "x".into() };
        assert!(matches!(
            to_detections(&doc),
            Err(MappingError::WrongOutputKind(OutputKind::Text))
        ));
    }

    #[test]
    fn empty_detections_render_identity() {
        let img = image(32, 24);
        let out = render_annotations(&img, &DetectionSet::empty(Stamp::zero()), &AnnotationStyle::default());
        assert_eq!(out.data(), img.data());
        assert_eq!(out.stamp(), img.stamp());
    }

    #[test]
    fn inner_box_recolors_exactly_its_perimeter() {
        let img = image(40, 30);
        let doc = boxes_doc(vec![[8.0, 6.0, 20.0, 18.0]], vec![""]);
        let dets = to_detections(&doc).unwrap();
        let style = AnnotationStyle {
            line_width: 1,
            draw_labels: false,
            ..AnnotationStyle::default()
        };
        let out = render_annotations(&img, &dets, &style);

        // Independent oracle: the set of pixels on the rectangle outline.
        let mut expected = HashSet::new();
        for x in 8..=20u32 {
            expected.insert((x, 6u32));
            expected.insert((x, 18u32));
        }
        for y in 6..=18u32 {
            expected.insert((8u32, y));
            expected.insert((20u32, y));
        }

        let mut changed = HashSet::new();
        for y in 0..30u32 {
            for x in 0..40u32 {
                let idx = ((y * 40 + x) * 3) as usize;
                if out.data()[idx..idx + 3] != img.data()[idx..idx + 3] {
                    changed.insert((x, y));
                }
            }
        }
        assert_eq!(changed, expected);
    }

    #[test]
    fn out_of_bounds_box_is_clamped_not_fatal() {
        let img = image(16, 16);
        let doc = boxes_doc(vec![[-50.0, -50.0, 500.0, 500.0]], vec!["big"]);
        let dets = to_detections(&doc).unwrap();
        let out = render_annotations(&img, &dets, &AnnotationStyle::default());
        assert_eq!(out.width(), 16);
        assert_ne!(out.data(), img.data());
    }

    #[test]
    fn rendering_is_deterministic() {
        let img = image(64, 48);
        let doc = boxes_doc(
            vec![[4.0, 4.0, 30.0, 20.0], [10.0, 22.0, 60.0, 44.0]],
            vec!["cat", "dog"],
        );
        let dets = to_detections(&doc).unwrap();
        let style = AnnotationStyle::default();
        let a = render_annotations(&img, &dets, &style);
        let b = render_annotations(&img, &dets, &style);
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn mono_images_render_in_luma() {
        let data: Vec<u8> = (0..24 * 18).map(|i| (i % 200) as u8).collect();
        let img = RasterImage::mono8(24, 18, data, Stamp::zero()).unwrap();
        let doc = boxes_doc(vec![[2.0, 2.0, 20.0, 14.0]], vec!["m"]);
        let dets = to_detections(&doc).unwrap();
        let out = render_annotations(&img, &dets, &AnnotationStyle::default());
        assert_eq!(out.format(), PixelFormat::Mono8);
        assert_ne!(out.data(), img.data());
    }
}
