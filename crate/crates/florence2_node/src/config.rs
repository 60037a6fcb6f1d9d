//! Launch configuration: one TOML file wires the topic remap, model
//! selection, device/precision, continuous task, and output options.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::backend::{BackendConfig, DevicePolicy, GenerationParams, PrecisionPolicy};
use crate::engine::NodeConfig;
use crate::mapping::AnnotationStyle;
use crate::registry::{RegistryError, TaskRegistry};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read launch file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse launch file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Backend(#[from] crate::backend::BackendError),
    #[error("registry load failed: {0}")]
    Registry(#[from] RegistryError),
}

/// On-disk launch configuration. Every field has a default, so `{}` is a
/// valid file (mock backend, no continuous task).
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct LaunchConfig {
    pub node_name: Option<String>,
    pub image_topic: Option<String>,
    pub model: Option<String>,
    pub model_revision: Option<String>,
    pub device: Option<String>,
    pub precision: Option<String>,
    pub continuous_task: Option<String>,
    pub continuous_text_input: Option<String>,
    pub publish_annotated: Option<bool>,
    pub on_demand_queue_depth: Option<usize>,
    pub cache_root: Option<PathBuf>,
    pub allow_network_fetch: Option<bool>,
    /// Path to a replacement task registry (defaults to the built-in table).
    pub registry_file: Option<PathBuf>,
    pub generation: Option<GenerationParams>,
    pub annotation: Option<AnnotationStyle>,
}

impl LaunchConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(s)?)
    }

    /// Resolves the launch file into an engine configuration plus registry.
    pub fn resolve(&self) -> Result<(NodeConfig, TaskRegistry), ConfigError> {
        let mut backend = BackendConfig::new(self.model.clone().unwrap_or_else(|| "mock".into()));
        if let Some(rev) = &self.model_revision {
            backend.revision = rev.clone();
        }
        if let Some(device) = &self.device {
            backend.device_policy = DevicePolicy::parse(device)?;
        }
        if let Some(precision) = &self.precision {
            backend.precision_policy = PrecisionPolicy::parse(precision)?;
        }
        if let Some(generation) = &self.generation {
            backend.generation = generation.clone();
        }
        if let Some(cache_root) = &self.cache_root {
            backend.cache_root = Some(cache_root.clone());
        }
        if let Some(allow) = self.allow_network_fetch {
            backend.allow_network_fetch = allow;
        }

        let mut config = NodeConfig::with_backend(backend);
        if let Some(name) = &self.node_name {
            config.node_name = name.clone();
        }
        if let Some(topic) = &self.image_topic {
            config.image_topic = topic.clone();
        }
        config.continuous_task = self.continuous_task.clone().filter(|t| !t.is_empty());
        if let Some(text) = &self.continuous_text_input {
            config.continuous_text_input = text.clone();
        }
        if let Some(publish) = self.publish_annotated {
            config.publish_annotated = publish;
        }
        if let Some(depth) = self.on_demand_queue_depth {
            config.on_demand_queue_depth = depth;
        }
        if let Some(style) = &self.annotation {
            config.annotation_style = style.clone();
        }

        let registry = match &self.registry_file {
            Some(path) => TaskRegistry::from_path(path)?,
            None => TaskRegistry::builtin(),
        };
        Ok((config, registry))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_mock_defaults() {
        let (config, registry) = LaunchConfig::from_toml_str("").unwrap().resolve().unwrap();
        assert_eq!(config.node_name, "florence2");
        assert_eq!(config.image_topic, "/camera/image_raw");
        assert!(config.backend.is_mock());
        assert!(config.continuous_task.is_none());
        assert!(config.publish_annotated);
        assert_eq!(config.on_demand_queue_depth, 8);
        assert!(!registry.is_empty());
    }

    #[test]
    fn full_config_round_trips() {
        let cfg = LaunchConfig::from_toml_str(
            r#"
            node_name = "perception"
            image_topic = "/front_cam/image"
            model = "mock:250"
            device = "cpu"
            precision = "full"
            continuous_task = "<OD>"
            publish_annotated = false
            on_demand_queue_depth = 4

            [generation]
            max_new_tokens = 512
            num_beams = 1

            [annotation]
            line_width = 3
            draw_labels = false
            "#,
        )
        .unwrap();
        let (config, _) = cfg.resolve().unwrap();
        assert_eq!(config.node_name, "perception");
        assert_eq!(config.image_topic, "/front_cam/image");
        assert_eq!(config.backend.model_id, "mock:250");
        assert_eq!(config.continuous_task.as_deref(), Some("<OD>"));
        assert!(!config.publish_annotated);
        assert_eq!(config.backend.generation.max_new_tokens, 512);
        assert_eq!(config.backend.generation.num_beams, 1);
        assert_eq!(config.annotation_style.line_width, 3);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(LaunchConfig::from_toml_str("imge_topic = \"/typo\"").is_err());
    }

    #[test]
    fn bad_device_string_fails_resolution() {
        let cfg = LaunchConfig::from_toml_str("device = \"quantum\"").unwrap();
        assert!(cfg.resolve().is_err());
    }
}
