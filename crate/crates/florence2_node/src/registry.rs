//! Prompt-token task registry.
//!
//! One node serves many task families; which capability runs is selected by
//! the prompt token in the request. The registry is data-driven: the default
//! table ships as `data/tasks.toml` and deployments can load a replacement
//! file without code changes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;
use tracing::warn;

use florence2_interfaces::{OutputKind, TaskDirectory, TaskRequirements};

const BUILTIN_TASKS_TOML: &str = include_str!("../data/tasks.toml");

/// One registered task: its prompt token, whether the prompt carries caller
/// text, and the shape family of its output.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TaskSpec {
    pub token: String,
    pub requires_text_input: bool,
    pub output_kind: OutputKind,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("failed to read registry file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse registry file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("duplicate task token `{0}`")]
    DuplicateToken(String),
    #[error("task token must not be empty")]
    EmptyToken,
}

#[derive(Debug, Error)]
#[error("MISSING_TEXT_INPUT: task `{token}` requires a text input")]
pub struct MissingTextInput {
    pub token: String,
}

/// Immutable after load; safe for unrestricted concurrent reads.
#[derive(Debug, Clone)]
pub struct TaskRegistry {
    tasks: BTreeMap<String, TaskSpec>,
}

#[derive(Deserialize)]
struct RegistryFile {
    #[serde(rename = "task", default)]
    tasks: Vec<TaskSpec>,
}

impl TaskRegistry {
    /// The default Florence-2 token set.
    pub fn builtin() -> Self {
        Self::from_toml_str(BUILTIN_TASKS_TOML).expect("builtin registry is well-formed")
    }

    pub fn from_toml_str(s: &str) -> Result<Self, RegistryError> {
        let file: RegistryFile = toml::from_str(s)?;
        let mut tasks = BTreeMap::new();
        for spec in file.tasks {
            if spec.token.is_empty() {
                return Err(RegistryError::EmptyToken);
            }
            if tasks.insert(spec.token.clone(), spec.clone()).is_some() {
                return Err(RegistryError::DuplicateToken(spec.token));
            }
        }
        Ok(Self { tasks })
    }

    pub fn from_path(path: &Path) -> Result<Self, RegistryError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn lookup(&self, token: &str) -> Option<&TaskSpec> {
        self.tasks.get(token)
    }

    /// All tasks in lexicographic token order.
    pub fn list_tasks(&self) -> Vec<&TaskSpec> {
        self.tasks.values().collect()
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// JSON catalog of the registry, served through the node's read-only
    /// `task_catalog` parameter for client introspection.
    pub fn catalog_json(&self) -> String {
        let entries: Vec<serde_json::Value> = self
            .list_tasks()
            .iter()
            .map(|t| {
                serde_json::json!({
                    "token": t.token,
                    "requires_text_input": t.requires_text_input,
                    "output_kind": t.output_kind.as_str(),
                    "description": t.description,
                })
            })
            .collect();
        serde_json::to_string(&entries).expect("catalog serializes")
    }
}

impl TaskDirectory for TaskRegistry {
    fn requirements(&self, token: &str) -> Option<TaskRequirements> {
        self.lookup(token).map(|spec| TaskRequirements {
            requires_text_input: spec.requires_text_input,
        })
    }
}

/// Assembles the model prompt for a task: the bare token, or the token with
/// the caller text appended (upstream processor convention: plain
/// concatenation, no separator). Text supplied to a task that takes none is
/// discarded with a warning.
pub fn build_prompt(spec: &TaskSpec, text_input: &str) -> Result<String, MissingTextInput> {
    if spec.requires_text_input {
        if text_input.is_empty() {
            return Err(MissingTextInput {
                token: spec.token.clone(),
            });
        }
        Ok(format!("{}{}", spec.token, text_input))
    } else {
        if !text_input.is_empty() {
            warn!(token = %spec.token, "task takes no text input; discarding provided text");
        }
        Ok(spec.token.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_covers_core_task_families() {
        let reg = TaskRegistry::builtin();
        // Detection, captioning, OCR, detailed captioning at minimum.
        for token in ["<OD>", "<CAPTION>", "<OCR>", "<DETAILED_CAPTION>"] {
            assert!(reg.lookup(token).is_some(), "missing {token}");
        }
        let od = reg.lookup("<OD>").unwrap();
        assert!(!od.requires_text_input);
        assert_eq!(od.output_kind, OutputKind::BoxesLabels);
        let caption = reg.lookup("<CAPTION>").unwrap();
        assert!(!caption.requires_text_input);
        assert_eq!(caption.output_kind, OutputKind::Text);
        let ocr_region = reg.lookup("<OCR_WITH_REGION>").unwrap();
        assert!(!ocr_region.requires_text_input);
        assert_eq!(ocr_region.output_kind, OutputKind::QuadBoxesText);
    }

    #[test]
    fn lookup_miss_returns_none() {
        let reg = TaskRegistry::builtin();
        assert!(reg.lookup("<UNKNOWN>").is_none());
        assert!(reg.lookup("").is_none());
    }

    #[test]
    fn tokens_are_unique_and_listed_in_order() {
        let reg = TaskRegistry::builtin();
        let tokens: Vec<&str> = reg.list_tasks().iter().map(|t| t.token.as_str()).collect();
        let mut sorted = tokens.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(tokens, sorted, "list_tasks must be lexicographic and duplicate-free");
        for t in reg.list_tasks() {
            assert_eq!(reg.lookup(&t.token).unwrap().token, t.token);
        }
    }

    #[test]
    fn small_registry_sorts_lexicographically() {
        let reg = TaskRegistry::from_toml_str(
            r#"
            [[task]]
            token = "<OD>"
            requires_text_input = false
            output_kind = "boxes_labels"

            [[task]]
            token = "<CAPTION>"
            requires_text_input = false
            output_kind = "text"
            "#,
        )
        .unwrap();
        let tokens: Vec<&str> = reg.list_tasks().iter().map(|t| t.token.as_str()).collect();
        assert_eq!(tokens, vec!["<CAPTION>", "<OD>"]);
    }

    #[test]
    fn empty_registry_lists_nothing() {
        let reg = TaskRegistry::from_toml_str("").unwrap();
        assert!(reg.is_empty());
        assert!(reg.list_tasks().is_empty());
    }

    #[test]
    fn duplicate_tokens_rejected_at_load() {
        let err = TaskRegistry::from_toml_str(
            r#"
            [[task]]
            token = "<OD>"
            requires_text_input = false
            output_kind = "boxes_labels"

            [[task]]
            token = "<OD>"
            requires_text_input = false
            output_kind = "text"
            "#,
        )
        .unwrap_err();
        assert!(matches!(err, RegistryError::DuplicateToken(t) if t == "<OD>"));
    }

    #[test]
    fn prompt_is_token_for_textless_tasks() {
        let reg = TaskRegistry::builtin();
        let od = reg.lookup("<OD>").unwrap();
        assert_eq!(build_prompt(od, "").unwrap(), "<OD>");
        // Supplied text is discarded (with a warning), not appended.
        assert_eq!(build_prompt(od, "ignored").unwrap(), "<OD>");
        for spec in reg.list_tasks() {
            if !spec.requires_text_input {
                assert_eq!(build_prompt(spec, "").unwrap(), spec.token);
            }
        }
    }

    #[test]
    fn prompt_concatenates_required_text() {
        let reg = TaskRegistry::builtin();
        let grounding = reg.lookup("<CAPTION_TO_PHRASE_GROUNDING>").unwrap();
        assert_eq!(
            build_prompt(grounding, "a red mug").unwrap(),
            "<CAPTION_TO_PHRASE_GROUNDING>a red mug"
        );
        let err = build_prompt(grounding, "").unwrap_err();
        assert_eq!(err.token, "<CAPTION_TO_PHRASE_GROUNDING>");
    }
}
