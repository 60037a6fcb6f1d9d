use crate::error::GraphError;

/// Expands a graph name relative to a node.
///
/// `~/x` expands to `/<node>/x`, `/x` stays absolute, and a bare `x`
/// resolves at the root as `/x`.
pub fn resolve(node_name: &str, name: &str) -> Result<String, GraphError> {
    let expanded = if let Some(rest) = name.strip_prefix("~/") {
        format!("/{node_name}/{rest}")
    } else if name == "~" {
        format!("/{node_name}")
    } else if name.starts_with('/') {
        name.to_string()
    } else {
        format!("/{name}")
    };
    validate(&expanded)?;
    Ok(expanded)
}

pub fn validate_node_name(name: &str) -> Result<(), GraphError> {
    if name.is_empty() {
        return Err(invalid(name, "node name must not be empty"));
    }
    if !name
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || c == '_')
    {
        return Err(invalid(name, "node names use [A-Za-z0-9_]"));
    }
    Ok(())
}

fn validate(name: &str) -> Result<(), GraphError> {
    if name.len() < 2 || !name.starts_with('/') {
        return Err(invalid(name, "expanded names start with '/'"));
    }
    if name.ends_with('/') || name.contains("//") {
        return Err(invalid(name, "empty path segment"));
    }
    if !name[1..]
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '/')
    {
        return Err(invalid(name, "name segments use [A-Za-z0-9_]"));
    }
    Ok(())
}

fn invalid(name: &str, reason: &str) -> GraphError {
    GraphError::InvalidName {
        name: name.to_string(),
        reason: reason.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expands_private_names() {
        assert_eq!(resolve("florence2", "~/results_json").unwrap(), "/florence2/results_json");
        assert_eq!(resolve("n", "/camera/image_raw").unwrap(), "/camera/image_raw");
        assert_eq!(resolve("n", "detections").unwrap(), "/detections");
    }

    #[test]
    fn rejects_malformed() {
        assert!(resolve("n", "").is_err());
        assert!(resolve("n", "/a//b").is_err());
        assert!(resolve("n", "/a b").is_err());
        assert!(validate_node_name("bad name").is_err());
    }
}
