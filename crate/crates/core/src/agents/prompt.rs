//! Prompt templates for the four agent roles.
//!
//! Templates use `{name}` placeholders; `{{` and `}}` produce literal braces.
//! Rendering fails if any placeholder is unbound, before a backend is called.

use std::collections::BTreeMap;

use thiserror::Error;

use super::AgentRole;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("template placeholder {{{0}}} has no binding")]
    MissingBinding(String),
    #[error("unterminated placeholder starting at byte {0}")]
    Unterminated(usize),
}

pub type Bindings = BTreeMap<&'static str, String>;

pub fn render_template(template: &str, bindings: &Bindings) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    let mut offset = 0;
    while let Some(pos) = rest.find(['{', '}']) {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(after) = tail.strip_prefix("{{") {
            out.push('{');
            rest = after;
            offset += pos + 2;
        } else if let Some(after) = tail.strip_prefix("}}") {
            out.push('}');
            rest = after;
            offset += pos + 2;
        } else if tail.starts_with('{') {
            let end = tail.find('}').ok_or(PromptError::Unterminated(offset + pos))?;
            let key = &tail[1..end];
            let value = bindings
                .get(key)
                .ok_or_else(|| PromptError::MissingBinding(key.to_string()))?;
            out.push_str(value);
            rest = &tail[end + 1..];
            offset += pos + end + 1;
        } else {
            out.push('}');
            rest = &tail[1..];
            offset += pos + 1;
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Placeholder names referenced by a template.
pub fn placeholders(template: &str) -> Vec<String> {
    let mut names = Vec::new();
    let bytes = template.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => i += 2,
            b'}' if bytes.get(i + 1) == Some(&b'}') => i += 2,
            b'{' => {
                if let Some(len) = template[i..].find('}') {
                    names.push(template[i + 1..i + len].to_string());
                    i += len + 1;
                } else {
                    break;
                }
            }
            _ => i += 1,
        }
    }
    names
}

pub const OBSERVATION_SYSTEM: &str = "\
You are the observation agent in a team that runs experiments on a digital twin of a container mixing process.
ROLE: observation
The container is a grid of cells. Each cell holds a number: 0=empty 1=light 2=normal 3=heavy. Row 0 is the top; gravity pulls balls down.
Shaking lets heavier balls sink past lighter balls beneath them.
The degree of even distribution is the summed count of distinct ball types among each ball's occupied neighbors, divided by the number of balls. It ranges from 0 to 3; higher is better mixed.
Extract the facts that matter for the goal and ignore the rest.
Reply with only a JSON object:
{\"key_observations\": [string, ...], \"metric_value\": number, \"notable_patterns\": [string, ...]}";

pub const OBSERVATION_USER: &str = "\
Goal: {goal}
Run: {run_index}
Cycle: {cycle_index}
Shakes so far: {shakes}
Container: {rows}x{cols}, capacity={capacity} free={free_cells}
Grid:
{grid_text}
Ball counts: light={light} normal={normal} heavy={heavy}
Degree of even distribution: {metric_raw} (normalized {metric_normalized})
Feedback from last action: {feedback}";

pub const REASONING_SYSTEM: &str = "\
You are the reasoning agent in a team that runs experiments on a digital twin of a container mixing process.
ROLE: reasoning
You receive the observation agent's findings. Analyse the situation and propose the next control strategy.
Actions available to the team: pour a percentage of the capacity as one ball type, shake a number of times, or finish the run (success or give_up).
Heavy balls poured on top of lighter ones sink when shaken, which mixes the layers; too much shaking lets them settle at the bottom again.
Reply with only a JSON object:
{\"analysis\": string, \"candidate_strategies\": [string, ...], \"recommended\": string}
The recommended strategy must be one of the candidate strategies.";

pub const REASONING_USER: &str = "\
Goal: {goal}
Target degree of even distribution: {threshold}
Run: {run_index}
Cycle: {cycle_index} of {max_cycles}, remaining after this one: {remaining_cycles}
Container: capacity={capacity} free={free_cells} light={light} normal={normal} heavy={heavy} shakes_so_far={shakes}
Observation:
{observation_json}
Recent cycles (oldest first):
{history}
Previous runs:
{previous_runs}";

pub const DECISION_SYSTEM: &str = "\
You are the decision agent in a team that runs experiments on a digital twin of a container mixing process.
ROLE: decision
Turn the recommended strategy into exactly one function call.
Reply with only a JSON object:
{\"function\": string, \"args\": object, \"rationale\": string}";

pub const DECISION_USER: &str = "\
Reasoning:
{reasoning_json}
Available functions:
{functions}
Remaining budget: cycles={remaining_cycles} free_cells={free_cells} capacity={capacity}";

pub const SUMMARY_SYSTEM: &str = "\
You are the summarization agent in a team that runs experiments on a digital twin of a container mixing process.
ROLE: summarization
Compile the executed actions of one run into a concise parametrized control plan.
List every executed call, in order, each with a short description.
Reply with only a JSON object:
{\"narrative\": string, \"steps\": [{\"action\": string, \"call\": {\"function\": string, \"args\": object}}, ...]}";

pub const SUMMARY_USER: &str = "\
Goal: {goal}
Run: {run_index}
Terminal status: {status}
Final degree of even distribution: {final_metric}
Total shakes: {total_shakes}
Executed calls (in order):
{executed_calls}";

pub fn templates(role: AgentRole) -> (&'static str, &'static str) {
    match role {
        AgentRole::Observation => (OBSERVATION_SYSTEM, OBSERVATION_USER),
        AgentRole::Reasoning => (REASONING_SYSTEM, REASONING_USER),
        AgentRole::Decision => (DECISION_SYSTEM, DECISION_USER),
        AgentRole::Summarization => (SUMMARY_SYSTEM, SUMMARY_USER),
    }
}
