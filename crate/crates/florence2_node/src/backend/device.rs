use std::process::Command;

use serde::{Deserialize, Serialize};
use tracing::info;

use super::BackendError;

/// Requested execution device.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DevicePolicy {
    /// First available GPU, else CPU.
    Auto,
    Cpu,
    Gpu(u32),
}

impl DevicePolicy {
    /// Parses `auto`, `cpu`, `gpu`, `gpu:<index>` (and the `cuda` aliases).
    pub fn parse(s: &str) -> Result<Self, BackendError> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "auto" => return Ok(DevicePolicy::Auto),
            "cpu" => return Ok(DevicePolicy::Cpu),
            "gpu" | "cuda" => return Ok(DevicePolicy::Gpu(0)),
            _ => {}
        }
        for prefix in ["gpu:", "cuda:"] {
            if let Some(idx) = lower.strip_prefix(prefix) {
                return idx
                    .parse()
                    .map(DevicePolicy::Gpu)
                    .map_err(|_| BackendError::InvalidConfig(format!("bad device `{s}`")));
            }
        }
        Err(BackendError::InvalidConfig(format!("bad device `{s}`")))
    }
}

/// Device a policy resolved to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResolvedDevice {
    Cpu,
    Gpu(u32),
}

impl std::fmt::Display for ResolvedDevice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ResolvedDevice::Cpu => f.write_str("cpu"),
            ResolvedDevice::Gpu(i) => write!(f, "cuda:{i}"),
        }
    }
}

/// Requested numeric precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecisionPolicy {
    /// Reduced on GPU, full on CPU.
    Auto,
    Full,
    Reduced,
}

impl PrecisionPolicy {
    pub fn parse(s: &str) -> Result<Self, BackendError> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(PrecisionPolicy::Auto),
            "full" => Ok(PrecisionPolicy::Full),
            "reduced" => Ok(PrecisionPolicy::Reduced),
            _ => Err(BackendError::InvalidConfig(format!("bad precision `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResolvedPrecision {
    Full,
    Reduced,
}

impl std::fmt::Display for ResolvedPrecision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ResolvedPrecision::Full => f.write_str("full"),
            ResolvedPrecision::Reduced => f.write_str("reduced"),
        }
    }
}

/// One visible accelerator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GpuInfo {
    pub index: u32,
    pub name: String,
}

/// Source of truth about what accelerators exist.
pub trait HardwareProbe {
    fn gpus(&self) -> Vec<GpuInfo>;
}

/// Probes NVIDIA devices through `nvidia-smi`; absent tooling means no GPUs.
#[derive(Debug, Default)]
pub struct NvidiaSmiProbe;

impl HardwareProbe for NvidiaSmiProbe {
    fn gpus(&self) -> Vec<GpuInfo> {
        let output = Command::new("nvidia-smi")
            .args(["--query-gpu=index,name", "--format=csv,noheader"])
            .output();
        let Ok(output) = output else {
            return Vec::new();
        };
        if !output.status.success() {
            return Vec::new();
        }
        String::from_utf8_lossy(&output.stdout)
            .lines()
            .filter_map(|line| {
                let (idx, name) = line.split_once(',')?;
                Some(GpuInfo {
                    index: idx.trim().parse().ok()?,
                    name: name.trim().to_string(),
                })
            })
            .collect()
    }
}

/// Fixed probe for tests and configuration dry-runs.
#[derive(Debug, Clone)]
pub struct StaticProbe(pub Vec<GpuInfo>);

impl StaticProbe {
    pub fn none() -> Self {
        Self(Vec::new())
    }

    pub fn single(name: &str) -> Self {
        Self(vec![GpuInfo {
            index: 0,
            name: name.to_string(),
        }])
    }
}

impl HardwareProbe for StaticProbe {
    fn gpus(&self) -> Vec<GpuInfo> {
        self.0.clone()
    }
}

/// Resolves the device policy against the probed hardware and logs the
/// outcome. `Auto` prefers the first GPU; explicit requests are honored or
/// fail with `GPU_UNAVAILABLE`.
pub fn select_device(
    policy: DevicePolicy,
    probe: &dyn HardwareProbe,
) -> Result<ResolvedDevice, BackendError> {
    let gpus = probe.gpus();
    let resolved = match policy {
        DevicePolicy::Cpu => ResolvedDevice::Cpu,
        DevicePolicy::Auto => match gpus.first() {
            Some(gpu) => ResolvedDevice::Gpu(gpu.index),
            None => ResolvedDevice::Cpu,
        },
        DevicePolicy::Gpu(index) => {
            if gpus.iter().any(|g| g.index == index) {
                ResolvedDevice::Gpu(index)
            } else {
                return Err(BackendError::GpuUnavailable {
                    requested: index,
                    available: gpus.len(),
                });
            }
        }
    };
    info!(?policy, %resolved, gpus = gpus.len(), "resolved execution device");
    Ok(resolved)
}

/// `Auto` resolves to reduced precision on GPU, full precision on CPU.
pub fn resolve_precision(policy: PrecisionPolicy, device: ResolvedDevice) -> ResolvedPrecision {
    match policy {
        PrecisionPolicy::Full => ResolvedPrecision::Full,
        PrecisionPolicy::Reduced => ResolvedPrecision::Reduced,
        PrecisionPolicy::Auto => match device {
            ResolvedDevice::Cpu => ResolvedPrecision::Full,
            ResolvedDevice::Gpu(_) => ResolvedPrecision::Reduced,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auto_prefers_first_gpu() {
        let probe = StaticProbe::single("RTX 3080 Ti");
        assert_eq!(select_device(DevicePolicy::Auto, &probe).unwrap(), ResolvedDevice::Gpu(0));
    }

    #[test]
    fn auto_falls_back_to_cpu() {
        assert_eq!(
            select_device(DevicePolicy::Auto, &StaticProbe::none()).unwrap(),
            ResolvedDevice::Cpu
        );
    }

    #[test]
    fn explicit_missing_gpu_fails() {
        let probe = StaticProbe::single("GTX 1060 Mobile");
        let err = select_device(DevicePolicy::Gpu(3), &probe).unwrap_err();
        assert!(matches!(
            err,
            BackendError::GpuUnavailable { requested: 3, available: 1 }
        ));
    }

    #[test]
    fn precision_auto_tracks_device() {
        assert_eq!(
            resolve_precision(PrecisionPolicy::Auto, ResolvedDevice::Cpu),
            ResolvedPrecision::Full
        );
        assert_eq!(
            resolve_precision(PrecisionPolicy::Auto, ResolvedDevice::Gpu(0)),
            ResolvedPrecision::Reduced
        );
        assert_eq!(
            resolve_precision(PrecisionPolicy::Full, ResolvedDevice::Gpu(0)),
            ResolvedPrecision::Full
        );
    }

    #[test]
    fn device_strings_parse() {
        assert_eq!(DevicePolicy::parse("auto").unwrap(), DevicePolicy::Auto);
        assert_eq!(DevicePolicy::parse("CPU").unwrap(), DevicePolicy::Cpu);
        assert_eq!(DevicePolicy::parse("gpu:2").unwrap(), DevicePolicy::Gpu(2));
        assert_eq!(DevicePolicy::parse("cuda").unwrap(), DevicePolicy::Gpu(0));
        assert!(DevicePolicy::parse("tpu").is_err());
    }
}
