use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::sim::{BallType, Container, RandomSource, ShakeConfig, SimError};

pub const DEFAULT_MAX_SHAKE_PER_CALL: u32 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishStatus {
    Success,
    GiveUp,
}

impl FinishStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FinishStatus::Success => "success",
            FinishStatus::GiveUp => "give_up",
        }
    }
}

/// A validated action for the control interface.
///
/// Wire shape is `{"function": <name>, "args": {...}}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FunctionCall {
    AddBalls { ball: BallType, percent: u32 },
    Shake { times: u32 },
    FinishRun { status: FinishStatus },
}

impl FunctionCall {
    pub fn name(&self) -> &'static str {
        match self {
            FunctionCall::AddBalls { .. } => "add_balls",
            FunctionCall::Shake { .. } => "shake",
            FunctionCall::FinishRun { .. } => "finish_run",
        }
    }

    pub fn to_json(&self) -> Value {
        let args = match *self {
            FunctionCall::AddBalls { ball, percent } => json!({"type": ball.symbol(), "percent": percent}),
            FunctionCall::Shake { times } => json!({ "times": times }),
            FunctionCall::FinishRun { status } => json!({"status": status.as_str()}),
        };
        json!({"function": self.name(), "args": args})
    }

    /// Compact label such as `40% L` or `shake x5`.
    pub fn label(&self) -> String {
        match *self {
            FunctionCall::AddBalls { ball, percent } => format!("{percent}% {}", ball.symbol()),
            FunctionCall::Shake { times } => format!("shake x{times}"),
            FunctionCall::FinishRun { status } => format!("finish ({})", status.as_str()),
        }
    }
}

impl fmt::Display for FunctionCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

impl Serialize for FunctionCall {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FunctionCall {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        FunctionRegistry::with_max_shake(u32::MAX)
            .validate(&value)
            .map_err(D::Error::custom)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CallError {
    #[error("malformed function call: {0}")]
    Malformed(String),
    #[error("unknown function {0:?}; available: add_balls, shake, finish_run")]
    UnknownFunction(String),
    #[error("invalid argument {arg:?} for {function}: {reason}")]
    Argument {
        function: String,
        arg: String,
        reason: String,
    },
    #[error("{0}")]
    Capacity(SimError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ArgKind {
    Integer { min: u32, max: u32 },
    Choice(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArgSchema {
    pub name: String,
    pub kind: ArgKind,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FunctionSchema {
    pub name: String,
    pub description: String,
    pub args: Vec<ArgSchema>,
}

impl FunctionSchema {
    /// One-line signature plus description, as shown to the decision agent.
    pub fn render(&self) -> String {
        let args: Vec<String> = self
            .args
            .iter()
            .map(|a| {
                let ty = match &a.kind {
                    ArgKind::Integer { min, max } => format!("integer {min}..{max}"),
                    ArgKind::Choice(options) => format!("one of {}", options.join("|")),
                };
                format!("{}: {ty}", a.name)
            })
            .collect();
        format!("{}({}): {}", self.name, args.join(", "), self.description)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutionOutcome {
    Added { balls: usize },
    Shaken { times: u32 },
    Finished(FinishStatus),
}

/// The closed set of functions the decision agent may call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionRegistry {
    schemas: Vec<FunctionSchema>,
    max_shake_per_call: u32,
}

impl Default for FunctionRegistry {
    fn default() -> Self {
        Self::with_max_shake(DEFAULT_MAX_SHAKE_PER_CALL)
    }
}

fn arg(name: &str, kind: ArgKind, description: &str) -> ArgSchema {
    ArgSchema {
        name: name.into(),
        kind,
        description: description.into(),
    }
}

impl FunctionRegistry {
    pub fn with_max_shake(max_shake_per_call: u32) -> Self {
        let choice = |v: &[&str]| ArgKind::Choice(v.iter().map(|s| s.to_string()).collect());
        let schemas = vec![
            FunctionSchema {
                name: "add_balls".into(),
                description: "pour a percentage of the container capacity as balls of one type".into(),
                args: vec![
                    arg("type", choice(&["L", "N", "H"]), "L=light, N=normal, H=heavy"),
                    arg("percent", ArgKind::Integer { min: 1, max: 100 }, "share of capacity"),
                ],
            },
            FunctionSchema {
                name: "shake".into(),
                description: "shake the container the given number of times".into(),
                args: vec![arg(
                    "times",
                    ArgKind::Integer {
                        min: 1,
                        max: max_shake_per_call,
                    },
                    "number of shakes",
                )],
            },
            FunctionSchema {
                name: "finish_run".into(),
                description: "end this simulation run".into(),
                args: vec![arg(
                    "status",
                    choice(&["success", "give_up"]),
                    "success when the goal is met, give_up to abandon the run",
                )],
            },
        ];
        Self {
            schemas,
            max_shake_per_call,
        }
    }

    pub fn schemas(&self) -> &[FunctionSchema] {
        &self.schemas
    }

    pub fn max_shake_per_call(&self) -> u32 {
        self.max_shake_per_call
    }

    pub fn schema(&self, name: &str) -> Option<&FunctionSchema> {
        self.schemas.iter().find(|s| s.name == name)
    }

    /// Multi-line listing for the decision prompt.
    pub fn render(&self) -> String {
        self.schemas
            .iter()
            .map(|s| format!("- {}", s.render()))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Validates a wire-shaped call against its schema.
    pub fn validate(&self, value: &Value) -> Result<FunctionCall, CallError> {
        let obj = value
            .as_object()
            .ok_or_else(|| CallError::Malformed("expected a JSON object".into()))?;
        let name = obj
            .get("function")
            .ok_or_else(|| CallError::Malformed("missing field \"function\"".into()))?
            .as_str()
            .ok_or_else(|| CallError::Malformed("field \"function\" must be a string".into()))?;
        let args = obj
            .get("args")
            .ok_or_else(|| CallError::Malformed("missing field \"args\"".into()))?
            .as_object()
            .ok_or_else(|| CallError::Malformed("field \"args\" must be an object".into()))?;
        let schema = self
            .schema(name)
            .ok_or_else(|| CallError::UnknownFunction(name.to_string()))?;
        check_args(schema, args)?;

        let call = match name {
            "add_balls" => FunctionCall::AddBalls {
                ball: BallType::from_symbol(args["type"].as_str().unwrap_or_default())
                    .expect("checked by schema"),
                percent: args["percent"].as_u64().expect("checked by schema") as u32,
            },
            "shake" => FunctionCall::Shake {
                times: args["times"].as_u64().expect("checked by schema") as u32,
            },
            "finish_run" => FunctionCall::FinishRun {
                status: match args["status"].as_str() {
                    Some("success") => FinishStatus::Success,
                    _ => FinishStatus::GiveUp,
                },
            },
            other => unreachable!("schema exists for {other}"),
        };
        Ok(call)
    }

    /// Re-checks a typed call against this registry's bounds.
    pub fn check(&self, call: &FunctionCall) -> Result<(), CallError> {
        self.validate(&call.to_json()).map(|_| ())
    }

    /// Applies a call. On any error the container is left untouched.
    pub fn execute(
        &self,
        call: &FunctionCall,
        container: &mut Container,
        config: &ShakeConfig,
        rng: &mut RandomSource,
    ) -> Result<ExecutionOutcome, CallError> {
        self.check(call)?;
        match *call {
            FunctionCall::AddBalls { ball, percent } => container
                .add_balls(ball, percent, rng)
                .map(|balls| ExecutionOutcome::Added { balls })
                .map_err(CallError::Capacity),
            FunctionCall::Shake { times } => {
                container.shake(times, config, rng);
                Ok(ExecutionOutcome::Shaken { times })
            }
            FunctionCall::FinishRun { status } => Ok(ExecutionOutcome::Finished(status)),
        }
    }

    /// Validates then executes a wire-shaped call.
    pub fn execute_value(
        &self,
        value: &Value,
        container: &mut Container,
        config: &ShakeConfig,
        rng: &mut RandomSource,
    ) -> Result<(FunctionCall, ExecutionOutcome), CallError> {
        let call = self.validate(value)?;
        let outcome = self.execute(&call, container, config, rng)?;
        Ok((call, outcome))
    }
}

fn check_args(schema: &FunctionSchema, args: &Map<String, Value>) -> Result<(), CallError> {
    let err = |arg: &str, reason: String| CallError::Argument {
        function: schema.name.clone(),
        arg: arg.to_string(),
        reason,
    };
    for key in args.keys() {
        if !schema.args.iter().any(|a| &a.name == key) {
            return Err(err(key, "unexpected argument".into()));
        }
    }
    for a in &schema.args {
        let v = args
            .get(&a.name)
            .ok_or_else(|| err(&a.name, "required argument missing".into()))?;
        match &a.kind {
            ArgKind::Integer { min, max } => {
                let n = v
                    .as_u64()
                    .ok_or_else(|| err(&a.name, format!("expected an integer, got {v}")))?;
                if n < *min as u64 || n > *max as u64 {
                    return Err(err(&a.name, format!("{n} outside {min}..{max}")));
                }
            }
            ArgKind::Choice(options) => {
                let s = v
                    .as_str()
                    .ok_or_else(|| err(&a.name, format!("expected a string, got {v}")))?;
                if !options.iter().any(|o| o == s) {
                    return Err(err(&a.name, format!("{s:?} is not one of {}", options.join("|"))));
                }
            }
        }
    }
    Ok(())
}
