//! Property: for every output kind and any conforming document,
//! serialize → parse is the identity.

use proptest::prelude::*;

use florence2_interfaces::{
    parse_result, serialize_result, ResultDocument, Stamp, TaskOutput, SCHEMA_VERSION,
};

fn arb_coord() -> impl Strategy<Value = f64> {
    // Quarter-pixel grid inside a 4096px frame: dyadic, so exact in JSON.
    (0u32..16384).prop_map(|v| v as f64 / 4.0)
}

fn arb_label() -> impl Strategy<Value = String> {
    prop_oneof![
        Just(String::new()),
        "[a-z]{1,10}",
        Just("person with hat".to_string()),
        Just("späti sign ☃".to_string()),
    ]
}

fn arb_corner_box() -> impl Strategy<Value = [f64; 4]> {
    (arb_coord(), arb_coord(), arb_coord(), arb_coord()).prop_map(|(a, b, c, d)| {
        [a.min(c), b.min(d), a.max(c), b.max(d)]
    })
}

fn arb_quad() -> impl Strategy<Value = [f64; 8]> {
    proptest::array::uniform8(arb_coord())
}

fn arb_polygon() -> impl Strategy<Value = Vec<f64>> {
    (3usize..8).prop_flat_map(|points| proptest::collection::vec(arb_coord(), points * 2))
}

fn arb_output() -> impl Strategy<Value = TaskOutput> {
    let text = arb_label().prop_map(|text| TaskOutput::Text { text });
    let boxes = proptest::collection::vec((arb_corner_box(), arb_label()), 0..6).prop_map(|v| {
        let (bboxes, labels) = v.into_iter().unzip();
        TaskOutput::BoxesLabels { bboxes, labels }
    });
    let quads = proptest::collection::vec((arb_quad(), arb_label()), 0..6).prop_map(|v| {
        let (quad_boxes, labels) = v.into_iter().unzip();
        TaskOutput::QuadBoxesText { quad_boxes, labels }
    });
    let polys = proptest::collection::vec((arb_polygon(), arb_label()), 0..4).prop_map(|v| {
        let (polygons, labels) = v.into_iter().unzip();
        TaskOutput::PolygonsLabels { polygons, labels }
    });
    let pairs = proptest::collection::vec((arb_corner_box(), arb_label()), 0..6).prop_map(|v| {
        let (bboxes, texts) = v.into_iter().unzip();
        TaskOutput::RegionTextPairs { bboxes, texts }
    });
    prop_oneof![text, boxes, quads, polys, pairs]
}

fn arb_document() -> impl Strategy<Value = ResultDocument> {
    (
        prop_oneof![
            Just("<OD>"),
            Just("<CAPTION>"),
            Just("<OCR_WITH_REGION>"),
            Just("<REFERRING_EXPRESSION_SEGMENTATION>"),
            Just("<DENSE_REGION_CAPTION>"),
        ],
        0i32..2_000_000_000,
        0u32..1_000_000_000,
        prop_oneof![Just(0.0f64), (1u32..10_000_000).prop_map(|v| v as f64 / 1000.0)],
    )
        .prop_flat_map(|(task, sec, nanosec, time)| {
            arb_output().prop_map(move |output| ResultDocument {
                schema_version: SCHEMA_VERSION.to_string(),
                task: task.to_string(),
                model: "mock".to_string(),
                stamp: Stamp::new(sec, nanosec),
                inference_time_s: time,
                output,
            })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn serialize_then_parse_is_identity(doc in arb_document()) {
        doc.validate().expect("generator yields conforming documents");
        let s = serialize_result(&doc);
        let parsed = parse_result(&s).expect("serialized documents parse");
        prop_assert_eq!(parsed, doc);
    }

    #[test]
    fn serialization_is_stable(doc in arb_document()) {
        prop_assert_eq!(serialize_result(&doc), serialize_result(&doc.clone()));
    }
}
