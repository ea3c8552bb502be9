//! JSON scenario files with a strict schema.
//!
//! Loading happens in three stages with distinct failure classes: reading and
//! JSON syntax (exit 1, with line and column), schema conformance such as
//! unknown keys or wrong types (exit 2, with a path locator), and model
//! validation including worker eligibility (exit 2, one diagnostic each).

use std::fs;
use std::path::Path;

use serde_json::Value;

use super::CliError;
use crate::model::{validate_scenario, Diagnostic, Scenario, ScenarioSpec};
use crate::routing::eligible_sets;
use crate::scheduling::Policy;

/// Reads `path` and parses it as JSON.
pub fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Deserializes a JSON value into the scenario schema, rejecting unknown keys.
pub fn spec_from_value(value: Value) -> Result<ScenarioSpec, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let locator = if path == "." { "<root>".to_string() } else { path };
        CliError::Invalid(vec![Diagnostic::new(locator, e.into_inner().to_string())])
    })
}

/// Validates a parsed scenario and checks that every app has enough eligible workers.
pub fn validate_spec(spec: &ScenarioSpec) -> Result<Scenario, CliError> {
    let scenario = validate_scenario(spec).map_err(CliError::Invalid)?;
    eligible_sets(&scenario).map_err(CliError::Invalid)?;
    Ok(scenario)
}

/// Command-line overrides of the simulation section.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub slots: Option<u64>,
    pub policy: Option<Policy>,
}

impl Overrides {
    pub fn apply(&self, spec: &mut ScenarioSpec) {
        if let Some(seed) = self.seed {
            spec.sim.seed = seed;
        }
        if let Some(slots) = self.slots {
            spec.sim.slots = slots;
        }
        if let Some(policy) = self.policy {
            spec.sim.policy = policy;
        }
    }
}

/// Loads, applies overrides, and validates.
pub fn load_scenario(path: &Path, overrides: &Overrides) -> Result<Scenario, CliError> {
    let mut spec = spec_from_value(read_json(path)?)?;
    overrides.apply(&mut spec);
    validate_spec(&spec)
}

/// Maps sweep shorthands onto dotted scenario paths.
pub fn resolve_parameter(param: &str) -> String {
    match param {
        "policy" | "seed" | "quantum_base" => format!("sim.{param}"),
        other => other.to_string(),
    }
}

/// Returns a copy of `spec` with the field at the dotted `path` replaced by
/// `raw`, parsed to the type of the current value. Only numeric fields and
/// `sim.policy` may be swept.
pub fn set_parameter(spec: &ScenarioSpec, path: &str, raw: &str) -> Result<ScenarioSpec, CliError> {
    let usage = |msg: String| CliError::Usage(msg);
    let mut root = serde_json::to_value(spec).expect("scenario serializes");
    let mut cur = &mut root;
    for seg in path.split('.') {
        cur = match cur {
            Value::Object(map) => map.get_mut(seg),
            Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| usage(format!("unknown parameter path `{path}`")))?;
    }
    let new = if path == "sim.policy" {
        let p: Policy = raw.parse().map_err(usage)?;
        serde_json::to_value(p).expect("policy serializes")
    } else {
        match cur {
            Value::Number(n) if n.is_u64() => raw
                .parse::<u64>()
                .map(Value::from)
                .map_err(|_| usage(format!("`{raw}` is not a non-negative integer for `{path}`")))?,
            Value::Number(_) => raw
                .parse::<f64>()
                .ok()
                .and_then(serde_json::Number::from_f64)
                .map(Value::Number)
                .ok_or_else(|| usage(format!("`{raw}` is not a number for `{path}`")))?,
            _ => return Err(usage(format!("parameter `{path}` is not a numeric field"))),
        }
    };
    *cur = new;
    spec_from_value(root)
}
