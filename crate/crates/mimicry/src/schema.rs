//! Validation of results documents against the shipped schema.

use anyhow::{anyhow, bail, Result};
use serde_json::Value;

pub const RESULTS_SCHEMA: &str = include_str!("../schema/results.schema.json");

pub fn validate_results(doc: &Value) -> Result<()> {
    let schema: Value = serde_json::from_str(RESULTS_SCHEMA)?;
    let validator = jsonschema::validator_for(&schema).map_err(|e| anyhow!("results schema: {e}"))?;
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    if !errors.is_empty() {
        bail!("results do not match the schema:\n  {}", errors.join("\n  "));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_rejects_garbage() {
        assert!(validate_results(&serde_json::json!({ "format_version": 1 })).is_err());
    }
}
