/// Delivery guarantee for a topic endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reliability {
    /// Every published message is queued up to `depth`, oldest dropped first.
    Reliable,
    /// Only the newest message is kept; stale ones are overwritten.
    BestEffort,
}

/// Quality-of-service profile attached to publishers and subscriptions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QosProfile {
    pub reliability: Reliability,
    pub depth: usize,
}

impl QosProfile {
    pub const fn reliable(depth: usize) -> Self {
        Self {
            reliability: Reliability::Reliable,
            depth,
        }
    }

    pub const fn best_effort(depth: usize) -> Self {
        Self {
            reliability: Reliability::BestEffort,
            depth,
        }
    }

    /// Sensor pipeline profile: best-effort, keep only the latest sample.
    pub const fn sensor_data() -> Self {
        Self::best_effort(1)
    }
}

impl Default for QosProfile {
    /// Reliable, depth 10 — the conventional default for state topics.
    fn default() -> Self {
        Self::reliable(10)
    }
}
