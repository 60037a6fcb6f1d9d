use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::time::Stamp;

/// Version of the result JSON layout. Bumped on any breaking change to the
/// document shape; parsers reject documents from another major line.
pub const SCHEMA_VERSION: &str = "1.0";

/// The published JSON Schema for [`ResultDocument`], shipped verbatim in the
/// repository at `schema/result_document.schema.json`.
pub const RESULT_DOCUMENT_SCHEMA_JSON: &str = include_str!("../schema/result_document.schema.json");

/// Shape family of a task's output subtree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Text,
    BoxesLabels,
    QuadBoxesText,
    PolygonsLabels,
    RegionTextPairs,
}

impl OutputKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OutputKind::Text => "text",
            OutputKind::BoxesLabels => "boxes_labels",
            OutputKind::QuadBoxesText => "quad_boxes_text",
            OutputKind::PolygonsLabels => "polygons_labels",
            OutputKind::RegionTextPairs => "region_text_pairs",
        }
    }
}

impl std::fmt::Display for OutputKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Task-specific output subtree. Serialization is shape-based (no tag):
/// each kind owns a distinct key set.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum TaskOutput {
    Text {
        text: String,
    },
    BoxesLabels {
        bboxes: Vec<[f64; 4]>,
        labels: Vec<String>,
    },
    QuadBoxesText {
        quad_boxes: Vec<[f64; 8]>,
        labels: Vec<String>,
    },
    PolygonsLabels {
        polygons: Vec<Vec<f64>>,
        labels: Vec<String>,
    },
    RegionTextPairs {
        bboxes: Vec<[f64; 4]>,
        texts: Vec<String>,
    },
}

impl TaskOutput {
    pub fn kind(&self) -> OutputKind {
        match self {
            TaskOutput::Text { .. } => OutputKind::Text,
            TaskOutput::BoxesLabels { .. } => OutputKind::BoxesLabels,
            TaskOutput::QuadBoxesText { .. } => OutputKind::QuadBoxesText,
            TaskOutput::PolygonsLabels { .. } => OutputKind::PolygonsLabels,
            TaskOutput::RegionTextPairs { .. } => OutputKind::RegionTextPairs,
        }
    }

    pub fn empty(kind: OutputKind) -> Self {
        match kind {
            OutputKind::Text => TaskOutput::Text { text: String::new() },
            OutputKind::BoxesLabels => TaskOutput::BoxesLabels {
                bboxes: vec![],
                labels: vec![],
            },
            OutputKind::QuadBoxesText => TaskOutput::QuadBoxesText {
                quad_boxes: vec![],
                labels: vec![],
            },
            OutputKind::PolygonsLabels => TaskOutput::PolygonsLabels {
                polygons: vec![],
                labels: vec![],
            },
            OutputKind::RegionTextPairs => TaskOutput::RegionTextPairs {
                bboxes: vec![],
                texts: vec![],
            },
        }
    }

    /// Structural validation: paired list lengths, box corner ordering,
    /// finite coordinates, even polygon arity.
    pub fn validate(&self) -> Result<(), SchemaError> {
        self.validate_at("$.output")
    }

    fn validate_at(&self, base: &str) -> Result<(), SchemaError> {
        match self {
            TaskOutput::Text { .. } => Ok(()),
            TaskOutput::BoxesLabels { bboxes, labels } => {
                check_paired_len(base, "bboxes", bboxes.len(), "labels", labels.len())?;
                for (i, b) in bboxes.iter().enumerate() {
                    check_corner_box(&format!("{base}.bboxes[{i}]"), b)?;
                }
                Ok(())
            }
            TaskOutput::QuadBoxesText { quad_boxes, labels } => {
                check_paired_len(base, "quad_boxes", quad_boxes.len(), "labels", labels.len())?;
                for (i, q) in quad_boxes.iter().enumerate() {
                    check_finite(&format!("{base}.quad_boxes[{i}]"), q)?;
                }
                Ok(())
            }
            TaskOutput::PolygonsLabels { polygons, labels } => {
                check_paired_len(base, "polygons", polygons.len(), "labels", labels.len())?;
                for (i, p) in polygons.iter().enumerate() {
                    let path = format!("{base}.polygons[{i}]");
                    if p.len() < 6 || p.len() % 2 != 0 {
                        return Err(SchemaError::violation(
                            path,
                            format!("polygon needs an even count of at least 6 coordinates, got {}", p.len()),
                        ));
                    }
                    check_finite(&path, p)?;
                }
                Ok(())
            }
            TaskOutput::RegionTextPairs { bboxes, texts } => {
                check_paired_len(base, "bboxes", bboxes.len(), "texts", texts.len())?;
                for (i, b) in bboxes.iter().enumerate() {
                    check_corner_box(&format!("{base}.bboxes[{i}]"), b)?;
                }
                Ok(())
            }
        }
    }
}

fn check_paired_len(
    base: &str,
    a_name: &str,
    a_len: usize,
    b_name: &str,
    b_len: usize,
) -> Result<(), SchemaError> {
    if a_len != b_len {
        return Err(SchemaError::violation(
            base.to_string(),
            format!("{a_name} has {a_len} entries but {b_name} has {b_len}"),
        ));
    }
    Ok(())
}

fn check_finite(path: &str, values: &[f64]) -> Result<(), SchemaError> {
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(SchemaError::violation(
                format!("{path}[{i}]"),
                "coordinate is not finite".to_string(),
            ));
        }
    }
    Ok(())
}

fn check_corner_box(path: &str, b: &[f64; 4]) -> Result<(), SchemaError> {
    check_finite(path, b)?;
    if b[0] > b[2] || b[1] > b[3] {
        return Err(SchemaError::violation(
            path.to_string(),
            format!("corner box must satisfy x1<=x2 and y1<=y2, got [{}, {}, {}, {}]", b[0], b[1], b[2], b[3]),
        ));
    }
    Ok(())
}

/// Canonical JSON-serializable result for any task. One document is produced
/// per inference regardless of the task family; box-producing tasks get an
/// additional typed detection mapping elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultDocument {
    pub schema_version: String,
    pub task: String,
    pub model: String,
    pub stamp: Stamp,
    pub inference_time_s: f64,
    pub output: TaskOutput,
}

impl ResultDocument {
    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(SchemaError::violation(
                "$.schema_version",
                format!("unsupported schema_version `{}`, expected `{SCHEMA_VERSION}`", self.schema_version),
            ));
        }
        if self.task.is_empty() {
            return Err(SchemaError::violation("$.task", "task token must not be empty"));
        }
        if !(self.inference_time_s.is_finite() && self.inference_time_s >= 0.0) {
            return Err(SchemaError::violation(
                "$.inference_time_s",
                format!("must be a finite value >= 0, got {}", self.inference_time_s),
            ));
        }
        if self.stamp.nanosec >= 1_000_000_000 {
            return Err(SchemaError::violation(
                "$.stamp.nanosec",
                format!("must be below 1e9, got {}", self.stamp.nanosec),
            ));
        }
        self.output.validate()
    }
}

/// Parse or validation failure, carrying the JSON path of the offending
/// field where one is known.
#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema violation at {path}: {message}")]
    Violation { path: String, message: String },
}

impl SchemaError {
    fn violation(path: impl Into<String>, message: impl Into<String>) -> Self {
        SchemaError::Violation {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Serializes a document to its canonical string form: compact JSON with the
/// fixed field order `schema_version, task, model, stamp, inference_time_s,
/// output`. Deterministic for golden-file comparison.
pub fn serialize_result(doc: &ResultDocument) -> String {
    serde_json::to_string(doc).expect("result documents always serialize")
}

/// Parses and fully validates a serialized [`ResultDocument`]. Rejections
/// name the schema path of the first offending field.
pub fn parse_result(s: &str) -> Result<ResultDocument, SchemaError> {
    let value: Value = serde_json::from_str(s)?;
    let root = as_object(&value, "$")?;
    deny_unknown(
        root,
        "$",
        &["schema_version", "task", "model", "stamp", "inference_time_s", "output"],
    )?;
    let schema_version = get_string(root, "$", "schema_version")?;
    let task = get_string(root, "$", "task")?;
    let model = get_string(root, "$", "model")?;
    let stamp_value = get_field(root, "$", "stamp")?;
    let stamp_obj = as_object(stamp_value, "$.stamp")?;
    deny_unknown(stamp_obj, "$.stamp", &["sec", "nanosec"])?;
    let sec = get_i64(stamp_obj, "$.stamp", "sec")?;
    let nanosec = get_i64(stamp_obj, "$.stamp", "nanosec")?;
    if sec < i32::MIN as i64 || sec > i32::MAX as i64 {
        return Err(SchemaError::violation("$.stamp.sec", "out of 32-bit range"));
    }
    if !(0..1_000_000_000).contains(&nanosec) {
        return Err(SchemaError::violation("$.stamp.nanosec", "must be in [0, 1e9)"));
    }
    let inference_time_s = get_f64(root, "$", "inference_time_s")?;
    let output_value = get_field(root, "$", "output")?;
    let output = parse_output(output_value)?;

    let doc = ResultDocument {
        schema_version,
        task,
        model,
        stamp: Stamp::new(sec as i32, nanosec as u32),
        inference_time_s,
        output,
    };
    doc.validate()?;
    Ok(doc)
}

fn parse_output(value: &Value) -> Result<TaskOutput, SchemaError> {
    let obj = as_object(value, "$.output")?;
    let mut keys: Vec<&str> = obj.keys().map(|k| k.as_str()).collect();
    keys.sort_unstable();
    let output = match keys.as_slice() {
        ["text"] => TaskOutput::Text {
            text: get_string(obj, "$.output", "text")?,
        },
        ["bboxes", "labels"] => TaskOutput::BoxesLabels {
            bboxes: parse_box_list(obj, "bboxes")?,
            labels: parse_string_list(obj, "labels")?,
        },
        ["labels", "quad_boxes"] => TaskOutput::QuadBoxesText {
            quad_boxes: parse_quad_list(obj, "quad_boxes")?,
            labels: parse_string_list(obj, "labels")?,
        },
        ["labels", "polygons"] => TaskOutput::PolygonsLabels {
            polygons: parse_polygon_list(obj, "polygons")?,
            labels: parse_string_list(obj, "labels")?,
        },
        ["bboxes", "texts"] => TaskOutput::RegionTextPairs {
            bboxes: parse_box_list(obj, "bboxes")?,
            texts: parse_string_list(obj, "texts")?,
        },
        _ => {
            return Err(SchemaError::violation(
                "$.output",
                format!("key set {keys:?} matches no output kind"),
            ))
        }
    };
    Ok(output)
}

fn parse_box_list(obj: &Map<String, Value>, key: &str) -> Result<Vec<[f64; 4]>, SchemaError> {
    parse_fixed_arrays::<4>(obj, key)
}

fn parse_quad_list(obj: &Map<String, Value>, key: &str) -> Result<Vec<[f64; 8]>, SchemaError> {
    parse_fixed_arrays::<8>(obj, key)
}

fn parse_fixed_arrays<const N: usize>(
    obj: &Map<String, Value>,
    key: &str,
) -> Result<Vec<[f64; N]>, SchemaError> {
    let path = format!("$.output.{key}");
    let list = as_array(get_field(obj, "$.output", key)?, &path)?;
    let mut out = Vec::with_capacity(list.len());
    for (i, entry) in list.iter().enumerate() {
        let entry_path = format!("{path}[{i}]");
        let coords = as_array(entry, &entry_path)?;
        if coords.len() != N {
            return Err(SchemaError::violation(
                entry_path,
                format!("expected {N} numbers, got {}", coords.len()),
            ));
        }
        let mut arr = [0.0; N];
        for (j, c) in coords.iter().enumerate() {
            arr[j] = as_number(c, &format!("{entry_path}[{j}]"))?;
        }
        out.push(arr);
    }
    Ok(out)
}

fn parse_polygon_list(obj: &Map<String, Value>, key: &str) -> Result<Vec<Vec<f64>>, SchemaError> {
    let path = format!("$.output.{key}");
    let list = as_array(get_field(obj, "$.output", key)?, &path)?;
    let mut out = Vec::with_capacity(list.len());
    for (i, entry) in list.iter().enumerate() {
        let entry_path = format!("{path}[{i}]");
        let coords = as_array(entry, &entry_path)?;
        let mut poly = Vec::with_capacity(coords.len());
        for (j, c) in coords.iter().enumerate() {
            poly.push(as_number(c, &format!("{entry_path}[{j}]"))?);
        }
        out.push(poly);
    }
    Ok(out)
}

fn parse_string_list(obj: &Map<String, Value>, key: &str) -> Result<Vec<String>, SchemaError> {
    let path = format!("$.output.{key}");
    let list = as_array(get_field(obj, "$.output", key)?, &path)?;
    let mut out = Vec::with_capacity(list.len());
    for (i, entry) in list.iter().enumerate() {
        match entry.as_str() {
            Some(s) => out.push(s.to_string()),
            None => {
                return Err(SchemaError::violation(
                    format!("{path}[{i}]"),
                    "expected a string",
                ))
            }
        }
    }
    Ok(out)
}

fn as_object<'v>(value: &'v Value, path: &str) -> Result<&'v Map<String, Value>, SchemaError> {
    value
        .as_object()
        .ok_or_else(|| SchemaError::violation(path, "expected an object"))
}

fn as_array<'v>(value: &'v Value, path: &str) -> Result<&'v Vec<Value>, SchemaError> {
    value
        .as_array()
        .ok_or_else(|| SchemaError::violation(path, "expected an array"))
}

fn as_number(value: &Value, path: &str) -> Result<f64, SchemaError> {
    value
        .as_f64()
        .ok_or_else(|| SchemaError::violation(path, "expected a number"))
}

fn get_field<'v>(
    obj: &'v Map<String, Value>,
    base: &str,
    key: &str,
) -> Result<&'v Value, SchemaError> {
    obj.get(key)
        .ok_or_else(|| SchemaError::violation(format!("{base}.{key}"), "missing required field"))
}

fn get_string(obj: &Map<String, Value>, base: &str, key: &str) -> Result<String, SchemaError> {
    get_field(obj, base, key)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| SchemaError::violation(format!("{base}.{key}"), "expected a string"))
}

fn get_i64(obj: &Map<String, Value>, base: &str, key: &str) -> Result<i64, SchemaError> {
    get_field(obj, base, key)?
        .as_i64()
        .ok_or_else(|| SchemaError::violation(format!("{base}.{key}"), "expected an integer"))
}

fn get_f64(obj: &Map<String, Value>, base: &str, key: &str) -> Result<f64, SchemaError> {
    get_field(obj, base, key)?
        .as_f64()
        .ok_or_else(|| SchemaError::violation(format!("{base}.{key}"), "expected a number"))
}

fn deny_unknown(
    obj: &Map<String, Value>,
    base: &str,
    allowed: &[&str],
) -> Result<(), SchemaError> {
    for key in obj.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(SchemaError::violation(
                format!("{base}.{key}"),
                "unknown field",
            ));
        }
    }
    Ok(())
}
