//! Properties of the detection mapping: exact center/size round-trip on
//! integer inputs, length preservation, synthetic score, and centers inside
//! their source boxes.

use proptest::prelude::*;

use florence2_interfaces::{ResultDocument, Stamp, TaskOutput, SCHEMA_VERSION};
use florence2_node::mapping::{detection_to_corner_box, to_detections, SYNTHETIC_SCORE};

fn arb_int_box() -> impl Strategy<Value = [f64; 4]> {
    (0u32..4096, 0u32..4096, 0u32..4096, 0u32..4096).prop_map(|(a, b, c, d)| {
        let (x1, x2) = (a.min(c) as f64, a.max(c) as f64);
        let (y1, y2) = (b.min(d) as f64, b.max(d) as f64);
        [x1, y1, x2, y2]
    })
}

fn arb_boxes_doc() -> impl Strategy<Value = ResultDocument> {
    proptest::collection::vec((arb_int_box(), "[a-z ]{0,12}"), 0..12).prop_map(|entries| {
        let (bboxes, labels) = entries.into_iter().unzip();
        ResultDocument {
            schema_version: SCHEMA_VERSION.to_string(),
            task: "<OD>".to_string(),
            model: "mock".to_string(),
            stamp: Stamp::new(3, 14),
            inference_time_s: 0.5,
            output: TaskOutput::BoxesLabels { bboxes, labels },
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn corner_reconstruction_is_exact(doc in arb_boxes_doc()) {
        let bboxes = match &doc.output {
            TaskOutput::BoxesLabels { bboxes, .. } => bboxes.clone(),
            _ => unreachable!(),
        };
        let dets = to_detections(&doc).unwrap();
        prop_assert_eq!(dets.len(), bboxes.len());
        prop_assert_eq!(dets.source_stamp, doc.stamp);
        for (det, original) in dets.detections.iter().zip(&bboxes) {
            prop_assert_eq!(det.score, SYNTHETIC_SCORE);
            // Exact reconstruction (integer inputs stay dyadic).
            prop_assert_eq!(&detection_to_corner_box(det), original);
            // Center lies inside the source box.
            prop_assert!(det.center_x >= original[0] && det.center_x <= original[2]);
            prop_assert!(det.center_y >= original[1] && det.center_y <= original[3]);
            prop_assert!(det.size_x >= 0.0 && det.size_y >= 0.0);
        }
    }
}
