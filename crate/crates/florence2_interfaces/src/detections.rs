use serde::{Deserialize, Serialize};

use crate::time::Stamp;

/// One 2-D detection: center/size box, open-vocabulary label, score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection2D {
    pub center_x: f64,
    pub center_y: f64,
    pub size_x: f64,
    pub size_y: f64,
    pub label: String,
    pub score: f64,
}

/// Typed detection output for box-producing tasks, mirroring the standard
/// 2-D detection array wire format. The stamp is the source image time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub source_stamp: Stamp,
    pub detections: Vec<Detection2D>,
}

impl DetectionSet {
    pub fn empty(source_stamp: Stamp) -> Self {
        Self {
            source_stamp,
            detections: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }
}

impl rograph::Message for DetectionSet {
    fn type_name() -> &'static str {
        "vision_msgs/msg/Detection2DArray"
    }
}
