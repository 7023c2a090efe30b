//! Versioned on-disk model format.
//!
//! Models are stored as self-describing UTF-8 JSON with type-tagged nodes;
//! field names are frozen per `format_version`. Serialization is
//! deterministic (struct field order, shortest-roundtrip floats), so equal
//! models produce byte-identical files.

use crate::error::{FspnError, Result};
use crate::model::FspnModel;

pub const FORMAT_VERSION: u64 = 1;

/// Render a model to its on-disk text form.
pub fn serialize(model: &FspnModel) -> String {
    let mut text = serde_json::to_string_pretty(model).expect("model serialization cannot fail");
    text.push('\n');
    text
}

/// Parse, prepare and validate a model file; rejects unknown versions,
/// unknown node tags, and any invariant violation.
pub fn deserialize(text: &str) -> Result<FspnModel> {
    let (model, report) = deserialize_lenient(text)?;
    if report.is_valid() {
        Ok(model)
    } else {
        Err(FspnError::Invalid(report))
    }
}

/// Parse and prepare a model but keep it even when invalid, together with the
/// validation report. Leaf-preparation failures are folded into the report.
pub fn deserialize_lenient(text: &str) -> Result<(FspnModel, super::validate::ValidationReport)> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| FspnError::parse("model file", e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| FspnError::parse("model file", "missing format_version"))?;
    if version != FORMAT_VERSION {
        return Err(FspnError::UnsupportedVersion(version));
    }
    let mut model: FspnModel = serde_json::from_value(value)
        .map_err(|e| FspnError::parse("model file", e.to_string()))?;
    let prepare_errors = model.prepare_leaves();
    let mut report = model.validate();
    for msg in prepare_errors {
        report.push("leaves", msg);
    }
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leaf::{Histogram, LeafDistribution};
    use crate::model::{FspnNode, FspnModel, VariableMeta};

    fn tiny_model() -> FspnModel {
        FspnModel::new(
            vec![VariableMeta::discrete("a", 3)],
            FspnNode::UniLeaf {
                variable: 0,
                dist: LeafDistribution::Histogram(Histogram::new(vec![0.2, 0.3, 0.5])),
            },
            None,
        )
        .unwrap()
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let text = serialize(&tiny_model());
        let model = deserialize(&text).unwrap();
        assert_eq!(serialize(&model), text);
    }

    #[test]
    fn unknown_version_rejected() {
        let mut value: serde_json::Value = serde_json::from_str(&serialize(&tiny_model())).unwrap();
        value["format_version"] = 999.into();
        let err = deserialize(&value.to_string()).unwrap_err();
        assert!(matches!(err, FspnError::UnsupportedVersion(999)));
    }

    #[test]
    fn unknown_node_tag_rejected() {
        let text = serialize(&tiny_model()).replace("uni_leaf", "mystery_leaf");
        let err = deserialize(&text).unwrap_err();
        assert!(err.to_string().contains("mystery_leaf"), "{err}");
    }

    #[test]
    fn invalid_weights_carry_validation_report() {
        let vars = vec![VariableMeta::discrete("a", 2)];
        let child = |m: f64| FspnNode::UniLeaf {
            variable: 0,
            dist: LeafDistribution::Histogram(Histogram::new(vec![m, 1.0 - m])),
        };
        let root = FspnNode::Sum {
            weights: vec![0.3, 0.6],
            children: vec![child(0.2), child(0.9)],
        };
        let text = serialize(&FspnModel::new_unchecked(vars, root, None));
        match deserialize(&text) {
            Err(FspnError::Invalid(report)) => {
                assert!(report.violations.iter().any(|v| v.message.contains("0.9")));
            }
            other => panic!("expected validation failure, got {other:?}"),
        }
    }
}
