//! Versioned line-delimited episode traces: one header, one record per
//! step, one footer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::action::HighLevelAction;
use crate::backend::ModuleRole;
use crate::orchestrator::{ControllerMode, SubtaskLedger};
use crate::world::AgentOutcome;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema_version: u32,
    pub scene_id: String,
    pub seed: u64,
    pub mode: ControllerMode,
    pub horizon: u32,
    pub model: String,
    pub instruction: String,
    pub agents: Vec<String>,
    /// Scoring targets: every fire and every person in the scene.
    pub fires: Vec<String>,
    pub persons: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Stage of a step, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Planner,
    Actor,
    EnvStep,
    Corrector,
    Verifier,
    Baseline,
}

impl Phase {
    pub fn role(self) -> Option<ModuleRole> {
        match self {
            Phase::Planner => Some(ModuleRole::Planner),
            Phase::Actor => Some(ModuleRole::Actor),
            Phase::Corrector => Some(ModuleRole::Corrector),
            Phase::Verifier => Some(ModuleRole::Verifier),
            Phase::Baseline => Some(ModuleRole::Baseline),
            Phase::EnvStep => None,
        }
    }
}

/// Phase sequence every step of a `mode` episode must follow.
pub fn expected_phases(mode: ControllerMode) -> &'static [Phase] {
    match mode {
        ControllerMode::Llamar => &[Phase::Planner, Phase::Actor, Phase::EnvStep, Phase::Corrector, Phase::Verifier],
        _ => &[Phase::Baseline, Phase::EnvStep],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeAttempt {
    pub request_hash: String,
    pub prompt: String,
    pub response: String,
}

/// One module call. A re-ask after a parse failure is a second attempt of
/// the same exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleExchange {
    pub role: ModuleRole,
    pub attempts: Vec<ExchangeAttempt>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parsed: Option<Map<String, Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedAction {
    pub agent: String,
    pub text: String,
    pub action: HighLevelAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    /// Set when the text could not be grounded and StayIdle was executed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u32,
    pub phases: Vec<Phase>,
    pub exchanges: Vec<ModuleExchange>,
    pub actions: Vec<GroundedAction>,
    /// Execution outcomes; `success` is the flag d_i.
    pub outcomes: Vec<AgentOutcome>,
    pub corrective: Vec<Option<HighLevelAction>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ignored_completions: Vec<String>,
    pub ledger: SubtaskLedger,
    pub memory_words: usize,
}

impl StepRecord {
    pub fn flags(&self) -> Vec<bool> {
        self.outcomes.iter().map(|o| o.success).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// The open-subtask list was empty after verification.
    LedgerEmpty,
    AllDone,
    DoneWithOpenSubtasks,
    Horizon,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFooter {
    pub steps: u32,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
    /// Simulator-side subtask status at the end of the episode.
    pub ground_truth: BTreeMap<String, bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Header(TraceHeader),
    Step(Box<StepRecord>),
    Footer(TraceFooter),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub header: TraceHeader,
    pub steps: Vec<StepRecord>,
    pub footer: TraceFooter,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("trace schema version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("trace is truncated: {0}")]
    Truncated(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("step {t}: {message}")]
pub struct LintError {
    pub t: u32,
    pub message: String,
}

impl EpisodeTrace {
    pub fn is_aborted(&self) -> bool {
        self.footer.termination == Termination::Aborted
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |l: Line| {
            out.push_str(&serde_json::to_string(&l).expect("trace records serialize"));
            out.push('\n');
        };
        push(Line::Header(self.header.clone()));
        for s in &self.steps {
            push(Line::Step(Box::new(s.clone())));
        }
        push(Line::Footer(self.footer.clone()));
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TraceError> {
        let mut header = None;
        let mut steps = Vec::new();
        let mut footer = None;
        for (n, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            if footer.is_some() {
                return Err(TraceError::Malformed { line: n + 1, message: "content after footer".into() });
            }
            if n == 0 {
                // Check the version before the full schema so that newer
                // traces get a clear message.
                let v: Value = serde_json::from_str(raw)
                    .map_err(|e| TraceError::Malformed { line: 1, message: e.to_string() })?;
                let found = v.get("schema_version").and_then(Value::as_u64).unwrap_or(0) as u32;
                if found != TRACE_SCHEMA_VERSION {
                    return Err(TraceError::Version { found, expected: TRACE_SCHEMA_VERSION });
                }
            }
            let line: Line = serde_json::from_str(raw)
                .map_err(|e| TraceError::Malformed { line: n + 1, message: e.to_string() })?;
            match line {
                Line::Header(h) if header.is_none() && n == 0 => header = Some(h),
                Line::Header(_) => {
                    return Err(TraceError::Malformed { line: n + 1, message: "unexpected header".into() })
                }
                Line::Step(s) if header.is_some() => steps.push(*s),
                Line::Step(_) => return Err(TraceError::Malformed { line: n + 1, message: "step before header".into() }),
                Line::Footer(f) => footer = Some(f),
            }
        }
        let header = header.ok_or_else(|| TraceError::Truncated("missing header".into()))?;
        let footer = footer.ok_or_else(|| TraceError::Truncated("missing footer".into()))?;
        if footer.steps as usize != steps.len() {
            return Err(TraceError::Truncated(format!("footer counts {} steps, found {}", footer.steps, steps.len())));
        }
        Ok(Self { header, steps, footer })
    }

    /// Checks that every step ran its modules in the required order with
    /// exactly one exchange per module call.
    pub fn lint(&self) -> Result<(), LintError> {
        let expected = expected_phases(self.header.mode);
        let n = self.header.agents.len();
        for (i, s) in self.steps.iter().enumerate() {
            let fail = |message: String| Err(LintError { t: s.t, message });
            if s.t as usize != i {
                return fail(format!("step index {i} recorded as t={}", s.t));
            }
            if s.phases != expected {
                return fail(format!("phase order {:?}, expected {:?}", s.phases, expected));
            }
            let roles: Vec<ModuleRole> = expected.iter().filter_map(|p| p.role()).collect();
            let got: Vec<ModuleRole> = s.exchanges.iter().map(|e| e.role).collect();
            if got != roles {
                return fail(format!("exchanges {got:?}, expected {roles:?}"));
            }
            if let Some(e) = s.exchanges.iter().find(|e| e.attempts.is_empty() || e.attempts.len() > 2) {
                return fail(format!("{} exchange has {} attempts", e.role, e.attempts.len()));
            }
            if s.actions.len() != n || s.outcomes.len() != n || s.corrective.len() != n {
                return fail("per-agent lists do not match the agent count".into());
            }
            if s.ledger.open.iter().any(|o| s.ledger.completed.contains(o)) {
                return fail("a subtask is both open and completed".into());
            }
            if let Some(prev) = i.checked_sub(1).map(|j| &self.steps[j]) {
                if !prev.ledger.completed.iter().all(|c| s.ledger.completed.contains(c)) {
                    return fail("completed subtasks shrank".into());
                }
            }
        }
        if self.footer.steps as usize != self.steps.len() || self.steps.len() > self.header.horizon as usize {
            return Err(LintError { t: self.footer.steps, message: "step count inconsistent with footer or horizon".into() });
        }
        Ok(())
    }
}
