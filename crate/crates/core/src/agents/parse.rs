use serde_json::Value;
use thiserror::Error;

use super::{AgentOutput, ControlPlan, Decision, Observation, PlanStep, Reasoning};
use crate::twin::{FunctionCall, FunctionRegistry};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{0}")]
pub struct SchemaError(pub String);

/// Expected shape of an agent reply.
#[derive(Debug, Clone, Copy)]
pub enum OutputSchema<'a> {
    Observation,
    Reasoning,
    Decision(&'a FunctionRegistry),
    /// Steps must reproduce `expected_calls` in order.
    Summary {
        expected_calls: &'a [FunctionCall],
        registry: &'a FunctionRegistry,
    },
}

/// Returns the first balanced `{...}` span that parses as a JSON object.
/// Surrounding prose and code fences are ignored.
pub fn extract_json(text: &str) -> Result<Value, SchemaError> {
    let bytes = text.as_bytes();
    let mut start = 0;
    while let Some(rel) = text[start..].find('{') {
        let open = start + rel;
        if let Some(close) = balanced_end(bytes, open) {
            if let Ok(value @ Value::Object(_)) = serde_json::from_str::<Value>(&text[open..=close]) {
                return Ok(value);
            }
        }
        start = open + 1;
    }
    Err(SchemaError("no JSON object found in the reply".into()))
}

fn balanced_end(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn field<'v>(obj: &'v serde_json::Map<String, Value>, name: &str) -> Result<&'v Value, SchemaError> {
    obj.get(name)
        .ok_or_else(|| SchemaError(format!("missing required field \"{name}\"")))
}

fn string_field(obj: &serde_json::Map<String, Value>, name: &str) -> Result<String, SchemaError> {
    field(obj, name)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| SchemaError(format!("field \"{name}\" must be a string")))
}

fn string_list(obj: &serde_json::Map<String, Value>, name: &str) -> Result<Vec<String>, SchemaError> {
    let arr = field(obj, name)?
        .as_array()
        .ok_or_else(|| SchemaError(format!("field \"{name}\" must be an array of strings")))?;
    arr.iter()
        .enumerate()
        .map(|(i, v)| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| SchemaError(format!("\"{name}\"[{i}] must be a string")))
        })
        .collect()
}

fn normalize(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_end_matches('.')
        .to_lowercase()
}

pub fn parse_and_validate(text: &str, schema: OutputSchema<'_>) -> Result<AgentOutput, SchemaError> {
    let value = extract_json(text)?;
    let obj = value.as_object().expect("extract_json yields objects");
    match schema {
        OutputSchema::Observation => {
            let metric_value = field(obj, "metric_value")?
                .as_f64()
                .ok_or_else(|| SchemaError("field \"metric_value\" must be a number".into()))?;
            Ok(AgentOutput::Observation(Observation {
                key_observations: string_list(obj, "key_observations")?,
                metric_value,
                notable_patterns: string_list(obj, "notable_patterns")?,
            }))
        }
        OutputSchema::Reasoning => {
            let analysis = string_field(obj, "analysis")?;
            let candidate_strategies = string_list(obj, "candidate_strategies")?;
            if candidate_strategies.is_empty() {
                return Err(SchemaError("\"candidate_strategies\" must not be empty".into()));
            }
            let recommended = string_field(obj, "recommended")?;
            let wanted = normalize(&recommended);
            if !candidate_strategies.iter().any(|c| normalize(c) == wanted) {
                return Err(SchemaError(format!(
                    "\"recommended\" ({recommended:?}) must be one of \"candidate_strategies\""
                )));
            }
            Ok(AgentOutput::Reasoning(Reasoning {
                analysis,
                candidate_strategies,
                recommended,
            }))
        }
        OutputSchema::Decision(registry) => {
            let call = registry.validate(&value).map_err(|e| SchemaError(e.to_string()))?;
            let rationale = match obj.get("rationale") {
                None | Some(Value::Null) => String::new(),
                Some(Value::String(s)) => s.clone(),
                Some(_) => return Err(SchemaError("field \"rationale\" must be a string".into())),
            };
            Ok(AgentOutput::Decision(Decision { call, rationale }))
        }
        OutputSchema::Summary {
            expected_calls,
            registry,
        } => {
            let narrative = string_field(obj, "narrative")?;
            let steps_value = field(obj, "steps")?
                .as_array()
                .ok_or_else(|| SchemaError("field \"steps\" must be an array".into()))?;
            let mut steps = Vec::with_capacity(steps_value.len());
            for (i, step) in steps_value.iter().enumerate() {
                let step = step
                    .as_object()
                    .ok_or_else(|| SchemaError(format!("\"steps\"[{i}] must be an object")))?;
                let action = string_field(step, "action")
                    .map_err(|e| SchemaError(format!("\"steps\"[{i}]: {e}")))?;
                let call = registry
                    .validate(field(step, "call")?)
                    .map_err(|e| SchemaError(format!("\"steps\"[{i}].call: {e}")))?;
                steps.push(PlanStep { action, call });
            }
            if steps.len() != expected_calls.len() {
                return Err(SchemaError(format!(
                    "\"steps\" lists {} calls but the run executed {}",
                    steps.len(),
                    expected_calls.len()
                )));
            }
            if let Some(i) = steps.iter().zip(expected_calls).position(|(s, e)| s.call != *e) {
                return Err(SchemaError(format!(
                    "\"steps\"[{i}].call is {} but the executed call was {}",
                    steps[i].call, expected_calls[i]
                )));
            }
            Ok(AgentOutput::Summary(ControlPlan {
                steps,
                final_metric: 0.0,
                narrative,
            }))
        }
    }
}
