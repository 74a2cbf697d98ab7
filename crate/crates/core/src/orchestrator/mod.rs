//! The centralized plan/act/correct/verify loop and the single-call
//! baseline controllers.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::action::HighLevelAction;
use crate::backend::{BackendError, ChatRequest, LanguageModel, ModuleRole, PromptContext, RequestTag};
use crate::grounding::{admissible_actions, provider_by_name, Grounder, DEFAULT_THRESHOLD};
use crate::world::{AgentOutcome, ObservationBundle, SceneConfig, WorldError, WorldState};

mod parse;
pub mod prompts;
pub mod trace;

pub use parse::{parse_response_dict, value_list, value_text, ParseFailure};
pub use prompts::{PromptSet, Template};
pub use trace::{
    EpisodeTrace, ExchangeAttempt, GroundedAction, LintError, ModuleExchange, Phase, StepRecord, Termination,
    TraceError, TraceFooter, TraceHeader, TRACE_SCHEMA_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerMode {
    Llamar,
    Act,
    Cot,
    React,
}

impl ControllerMode {
    pub const ALL: [ControllerMode; 4] =
        [ControllerMode::Llamar, ControllerMode::Act, ControllerMode::Cot, ControllerMode::React];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerMode::Llamar => "llamar",
            ControllerMode::Act => "act",
            ControllerMode::Cot => "cot",
            ControllerMode::React => "react",
        }
    }
}

impl fmt::Display for ControllerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "llamar" => Ok(ControllerMode::Llamar),
            "act" => Ok(ControllerMode::Act),
            "cot" => Ok(ControllerMode::Cot),
            "react" => Ok(ControllerMode::React),
            other => Err(format!("unknown controller mode `{other}`")),
        }
    }
}

fn subtask_key(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").trim_end_matches('.').to_lowercase()
}

/// Open and completed subtasks. Items only ever move from open to completed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskLedger {
    pub open: Vec<String>,
    pub completed: Vec<String>,
}

impl SubtaskLedger {
    fn position(list: &[String], s: &str) -> Option<usize> {
        let key = subtask_key(s);
        list.iter().position(|x| subtask_key(x) == key)
    }

    /// Adds `s` unless it is blank or already listed (case and spacing
    /// insensitive). Returns whether it was added.
    pub fn add_open(&mut self, s: &str) -> bool {
        let s = s.trim();
        if s.is_empty() || Self::position(&self.open, s).is_some() || Self::position(&self.completed, s).is_some() {
            return false;
        }
        self.open.push(s.to_string());
        true
    }

    /// Moves `s` from open to completed. Returns false if it was not open.
    pub fn complete(&mut self, s: &str) -> bool {
        match Self::position(&self.open, s) {
            Some(i) => {
                let item = self.open.remove(i);
                self.completed.push(item);
                true
            }
            None => false,
        }
    }
}

/// Joint memory kept as lines; the oldest lines are evicted once the word
/// count exceeds the cap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryLog {
    lines: VecDeque<String>,
    cap_words: usize,
}

impl MemoryLog {
    pub fn new(cap_words: usize) -> Self {
        Self { lines: VecDeque::new(), cap_words }
    }

    pub fn append(&mut self, text: &str) {
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            self.lines.push_back(line.to_string());
        }
        while self.word_count() > self.cap_words && self.lines.len() > 1 {
            self.lines.pop_front();
        }
        if self.word_count() > self.cap_words {
            // A single oversized line keeps its last `cap_words` words.
            if let Some(only) = self.lines.pop_front() {
                let words: Vec<&str> = only.split_whitespace().collect();
                self.lines.push_back(words[words.len() - self.cap_words..].join(" "));
            }
        }
    }

    pub fn word_count(&self) -> usize {
        self.lines.iter().map(|l| l.split_whitespace().count()).sum()
    }

    pub fn text(&self) -> String {
        self.lines.iter().cloned().collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeConfig {
    pub scene: SceneConfig,
    pub mode: ControllerMode,
    pub horizon: u32,
    pub model: String,
    pub max_tokens: u32,
    pub memory_cap_words: usize,
    pub prompts: PromptSet,
    /// Similarity provider used for grounding, by name.
    pub grounding: String,
    pub grounding_threshold: f64,
    /// Steps of history shown to baseline controllers.
    pub history_window: usize,
}

impl EpisodeConfig {
    pub fn new(scene: SceneConfig, mode: ControllerMode) -> Self {
        Self {
            scene,
            mode,
            horizon: 30,
            model: "gpt-4o".to_string(),
            max_tokens: 1024,
            memory_cap_words: 2000,
            prompts: PromptSet::default(),
            grounding: "lexical".to_string(),
            grounding_threshold: DEFAULT_THRESHOLD,
            history_window: 10,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EpisodeError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("unknown grounding provider `{0}`")]
    Grounding(String),
}

/// Runs one episode to termination. Backend failures do not return an
/// error: the trace is closed early and flagged aborted.
pub fn run_episode(config: &EpisodeConfig, backend: &dyn LanguageModel) -> Result<EpisodeTrace, EpisodeError> {
    let provider =
        provider_by_name(&config.grounding).ok_or_else(|| EpisodeError::Grounding(config.grounding.clone()))?;
    let (world, obs) = WorldState::reset(&config.scene)?;
    let agents: Vec<String> = world.agents.iter().map(|a| a.id.clone()).collect();
    let header = TraceHeader {
        schema_version: TRACE_SCHEMA_VERSION,
        scene_id: config.scene.scene_id.clone(),
        seed: config.scene.seed,
        mode: config.mode,
        horizon: config.horizon,
        model: config.model.clone(),
        instruction: config.scene.instruction(),
        agents: agents.clone(),
        fires: world.fires.iter().map(|f| f.id.clone()).collect(),
        persons: world.persons.iter().map(|p| p.id.clone()).collect(),
        warnings: config.scene.warnings.clone(),
    };
    let mut ep = Episode {
        config,
        backend,
        grounder: Grounder::new(provider, config.grounding_threshold),
        world,
        obs,
        ledger: SubtaskLedger::default(),
        memory: MemoryLog::new(config.memory_cap_words),
        corrective_text: vec![None; agents.len()],
        previous: Vec::new(),
        history: Vec::new(),
        agents,
    };
    let mut steps = Vec::new();
    let mut termination = Termination::Horizon;
    let mut aborted = None;
    for t in 0..config.horizon {
        let result = match config.mode {
            ControllerMode::Llamar => ep.llamar_step(t),
            _ => ep.baseline_step(t),
        };
        match result {
            Ok((record, stop)) => {
                steps.push(record);
                if let Some(reason) = stop {
                    termination = reason;
                    break;
                }
            }
            Err(e) => {
                log::error!("episode {} aborted at step {t}: {e}", config.scene.scene_id);
                termination = Termination::Aborted;
                aborted = Some(e.to_string());
                break;
            }
        }
    }
    let footer = TraceFooter {
        steps: steps.len() as u32,
        termination,
        aborted,
        ground_truth: ep.world.ground_truth_subtasks(),
    };
    Ok(EpisodeTrace { header, steps, footer })
}

struct Episode<'a> {
    config: &'a EpisodeConfig,
    backend: &'a dyn LanguageModel,
    grounder: Grounder,
    world: WorldState,
    obs: Vec<ObservationBundle>,
    ledger: SubtaskLedger,
    memory: MemoryLog,
    agents: Vec<String>,
    /// Corrections from the previous step, consumed by the next actor call.
    corrective_text: Vec<Option<String>>,
    previous: Vec<AgentOutcome>,
    /// One line per executed step, for baseline prompts.
    history: Vec<String>,
}

type Validator<'v> = &'v dyn Fn(&Map<String, Value>) -> Result<(), String>;

fn describe_outcomes(outcomes: &[AgentOutcome]) -> String {
    if outcomes.is_empty() {
        return "none".to_string();
    }
    outcomes
        .iter()
        .map(|o| {
            let status = if o.success { "succeeded" } else { "failed" };
            format!("{}: {} ({status})", o.agent, o.action.describe())
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn describe_failures(outcomes: &[AgentOutcome]) -> String {
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.success)
        .map(|o| format!("{}: {} failed: {}", o.agent, o.action.describe(), o.failure.as_deref().unwrap_or("unknown")))
        .collect();
    if failed.is_empty() {
        "none".to_string()
    } else {
        failed.join("; ")
    }
}

fn json_list(items: &[String]) -> String {
    serde_json::to_string(items).expect("string lists serialize")
}

fn require_keys(map: &Map<String, Value>, keys: &[String]) -> Result<(), String> {
    let missing: Vec<&str> = keys.iter().filter(|k| !map.contains_key(k.as_str())).map(String::as_str).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(format!("missing key(s): {}", missing.join(", ")))
    }
}

/// Looks up `"<agent><suffix>"`, falling back to the bare agent name.
fn agent_entry<'m>(map: &'m Map<String, Value>, agent: &str, suffix: &str) -> Option<&'m Value> {
    map.get(&format!("{agent}{suffix}")).or_else(|| map.get(agent))
}

impl Episode<'_> {
    fn context(&self) -> PromptContext {
        PromptContext {
            mode: self.config.mode,
            instruction: self.config.scene.instruction(),
            agents: self.agents.clone(),
            observations: self.obs.clone(),
            open_subtasks: self.ledger.open.clone(),
            completed_subtasks: self.ledger.completed.clone(),
            memory: self.memory.text(),
            previous: self.previous.clone(),
            corrective: self.corrective_text.clone(),
        }
    }

    fn vars(&self, role: ModuleRole) -> BTreeMap<&'static str, String> {
        let observations = self
            .obs
            .iter()
            .map(|o| format!("{}:\n{}", o.agent, o.render()))
            .collect::<Vec<_>>()
            .join("\n\n");
        let corrective: Vec<String> = self
            .agents
            .iter()
            .zip(&self.corrective_text)
            .filter_map(|(a, c)| c.as_ref().map(|c| format!("{a}: {c}")))
            .collect();
        let memory = self.memory.text();
        let previous = if role == ModuleRole::Baseline {
            let start = self.history.len().saturating_sub(self.config.history_window);
            if self.history.is_empty() {
                "none".to_string()
            } else {
                self.history[start..].join("\n")
            }
        } else {
            describe_outcomes(&self.previous)
        };
        BTreeMap::from([
            ("task", self.config.scene.instruction()),
            ("agent_observations", observations),
            ("open_subtasks", json_list(&self.ledger.open)),
            ("completed_subtasks", json_list(&self.ledger.completed)),
            ("memory", if memory.is_empty() { "none".to_string() } else { memory }),
            ("previous_actions", previous),
            ("failures", describe_failures(&self.previous)),
            ("corrective_actions", if corrective.is_empty() { "none".to_string() } else { corrective.join("; ") }),
            ("action_list", prompts::action_list()),
            ("agent_names", self.agents.join(", ")),
            ("n_agents", self.agents.len().to_string()),
            ("response_format", prompts::response_format(role, self.config.mode, &self.agents)),
        ])
    }

    /// One module exchange with at most one re-ask.
    fn call(&self, role: ModuleRole, t: u32, validate: Validator<'_>) -> Result<ModuleExchange, BackendError> {
        let template = self.config.prompts.for_role(role, self.config.mode);
        let (system, user) = template.render(&self.vars(role));
        let tag = RequestTag { role, step: t };
        let context = self.context();
        let mut exchange = ModuleExchange { role, attempts: Vec::new(), parsed: None, error: None };
        let mut prompt = user.clone();
        for attempt in 0..2 {
            let mut request = ChatRequest::new(&self.config.model, &system, &prompt, tag).with_context(context.clone());
            request.max_tokens = self.config.max_tokens;
            let record = self.backend.complete(&request)?;
            exchange.attempts.push(ExchangeAttempt {
                request_hash: record.hash.clone(),
                prompt: prompt.clone(),
                response: record.response.clone(),
            });
            let checked = parse_response_dict(&record.response)
                .map_err(|e| e.to_string())
                .and_then(|m| validate(&m).map(|()| m));
            match checked {
                Ok(map) => {
                    exchange.parsed = Some(map);
                    exchange.error = None;
                    break;
                }
                Err(e) => {
                    log::warn!("{role} reply at step {t} rejected (attempt {}): {e}", attempt + 1);
                    exchange.error = Some(e.clone());
                    prompt = format!(
                        "{user}\n\nYour previous reply could not be used ({e}). Reply with only a Python dictionary in \
                         exactly this form:\n{}",
                        prompts::response_format(role, self.config.mode, &self.agents)
                    );
                }
            }
        }
        Ok(exchange)
    }

    /// Grounds one text per agent; failures become StayIdle with an error.
    fn ground_all(&self, texts: Vec<Option<String>>) -> Vec<GroundedAction> {
        self.agents
            .iter()
            .zip(texts)
            .zip(&self.obs)
            .map(|((agent, text), obs)| {
                let Some(text) = text else {
                    return GroundedAction {
                        agent: agent.clone(),
                        text: String::new(),
                        action: HighLevelAction::StayIdle,
                        score: None,
                        error: Some("no action given".into()),
                    };
                };
                match self.grounder.ground(&text, &admissible_actions(obs)) {
                    Ok(m) => GroundedAction { agent: agent.clone(), text, action: m.action, score: Some(m.score), error: None },
                    Err(e) => GroundedAction {
                        agent: agent.clone(),
                        text,
                        action: HighLevelAction::StayIdle,
                        score: None,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect()
    }

    /// Steps the world and marks ungrounded agents as failed.
    fn execute(&mut self, actions: &[GroundedAction]) -> Vec<AgentOutcome> {
        let joint: Vec<HighLevelAction> = actions.iter().map(|a| a.action.clone()).collect();
        let (outcome, obs) = self.world.step_joint(&joint).expect("one action per agent");
        self.obs = obs;
        let mut outcomes = outcome.agents;
        for (o, a) in outcomes.iter_mut().zip(actions) {
            if let Some(err) = &a.error {
                o.success = false;
                o.failure = Some(format!("no admissible match: {err}"));
            }
        }
        outcomes
    }

    fn llamar_step(&mut self, t: u32) -> Result<(StepRecord, Option<Termination>), BackendError> {
        let mut phases = Vec::new();
        let mut exchanges = Vec::new();

        // Planner
        let planner = self.call(ModuleRole::Planner, t, &|m| require_keys(m, &["plan".to_string()]))?;
        if let Some(plan) = planner.parsed.as_ref().and_then(|m| m.get("plan")) {
            for item in value_list(plan) {
                self.ledger.add_open(&item);
            }
        } else {
            log::warn!("planner reply unusable at step {t}; open subtasks unchanged");
        }
        phases.push(Phase::Planner);
        exchanges.push(planner);

        // Actor
        let keys: Vec<String> = self.agents.iter().map(|a| format!("{a}'s action")).collect();
        let agents = self.agents.clone();
        let actor = self.call(ModuleRole::Actor, t, &|m| {
            let missing: Vec<&String> =
                agents.iter().filter(|a| agent_entry(m, a, "'s action").is_none()).collect();
            if missing.is_empty() {
                Ok(())
            } else {
                require_keys(m, &keys)
            }
        })?;
        let texts: Vec<Option<String>> = match &actor.parsed {
            Some(m) => {
                if let Some(mem) = m.get("memory").map(value_text).filter(|s| !s.trim().is_empty()) {
                    self.memory.append(&mem);
                }
                self.agents.iter().map(|a| agent_entry(m, a, "'s action").map(value_text)).collect()
            }
            None => vec![None; self.agents.len()],
        };
        let actions = self.ground_all(texts);
        phases.push(Phase::Actor);
        exchanges.push(actor);

        // Environment
        let outcomes = self.execute(&actions);
        self.previous = outcomes.clone();
        phases.push(Phase::EnvStep);

        // Corrector
        let corrector = self.call(ModuleRole::Corrector, t, &|_| Ok(()))?;
        let all_ok = outcomes.iter().all(|o| o.success);
        let mut corrective = vec![None; self.agents.len()];
        let mut corrective_text = vec![None; self.agents.len()];
        if let (Some(m), false) = (&corrector.parsed, all_ok) {
            for (i, agent) in self.agents.iter().enumerate() {
                if outcomes[i].success {
                    continue;
                }
                let Some(text) = agent_entry(m, agent, "'s corrective action").map(value_text) else {
                    continue;
                };
                if text.trim().is_empty() {
                    continue;
                }
                match self.grounder.ground(&text, &admissible_actions(&self.obs[i])) {
                    Ok(g) => {
                        corrective_text[i] = Some(g.action.describe());
                        corrective[i] = Some(g.action);
                    }
                    Err(e) => log::warn!("corrective action for {agent} at step {t} dropped: {e}"),
                }
            }
        }
        self.corrective_text = corrective_text;
        phases.push(Phase::Corrector);
        exchanges.push(corrector);

        // Verifier
        let verifier = self.call(ModuleRole::Verifier, t, &|m| require_keys(m, &["completed subtasks".to_string()]))?;
        let mut ignored = Vec::new();
        if let Some(done) = verifier.parsed.as_ref().and_then(|m| m.get("completed subtasks")) {
            for item in value_list(done) {
                if !self.ledger.complete(&item) {
                    log::info!("verifier named `{item}` which is not an open subtask; ignored");
                    ignored.push(item);
                }
            }
        }
        phases.push(Phase::Verifier);
        exchanges.push(verifier);

        let all_done = actions.iter().all(|a| a.action == HighLevelAction::Done);
        let stop = if self.ledger.open.is_empty() {
            Some(Termination::LedgerEmpty)
        } else if all_done {
            log::info!("all agents done with {} open subtask(s)", self.ledger.open.len());
            Some(Termination::DoneWithOpenSubtasks)
        } else {
            None
        };
        let record = StepRecord {
            t,
            phases,
            exchanges,
            actions,
            outcomes,
            corrective,
            ignored_completions: ignored,
            ledger: self.ledger.clone(),
            memory_words: self.memory.word_count(),
        };
        Ok((record, stop))
    }

    fn baseline_step(&mut self, t: u32) -> Result<(StepRecord, Option<Termination>), BackendError> {
        let mode = self.config.mode;
        let agents = self.agents.clone();
        let validate = |m: &Map<String, Value>| -> Result<(), String> {
            let actions = match mode {
                ControllerMode::React => {
                    require_keys(m, &["Think".to_string(), "Action".to_string()])?;
                    match &m["Action"] {
                        Value::Object(inner) => inner.clone(),
                        Value::String(_) if agents.len() == 1 => {
                            Map::from_iter([(agents[0].clone(), m["Action"].clone())])
                        }
                        _ => return Err("\"Action\" must map each robot to an action".into()),
                    }
                }
                ControllerMode::Cot => {
                    require_keys(m, &["reason".to_string()])?;
                    let mut rest = m.clone();
                    rest.remove("reason");
                    rest
                }
                _ => m.clone(),
            };
            require_keys(&actions, &agents)?;
            if mode == ControllerMode::React {
                return Ok(());
            }
            match actions.keys().find(|k| !agents.contains(k)) {
                Some(extra) => Err(format!("unexpected key \"{extra}\"; use exactly one key per robot")),
                None => Ok(()),
            }
        };
        let exchange = self.call(ModuleRole::Baseline, t, &validate)?;
        let texts: Vec<Option<String>> = match &exchange.parsed {
            Some(m) => {
                let source = match (mode, m.get("Action")) {
                    (ControllerMode::React, Some(Value::Object(inner))) => inner.clone(),
                    (ControllerMode::React, Some(v)) => Map::from_iter([(self.agents[0].clone(), v.clone())]),
                    _ => m.clone(),
                };
                self.agents.iter().map(|a| source.get(a).map(value_text)).collect()
            }
            None => vec![None; self.agents.len()],
        };
        let actions = self.ground_all(texts);
        let outcomes = self.execute(&actions);
        self.history.push(format!("step {t}: {}", describe_outcomes(&outcomes)));
        self.previous = outcomes.clone();
        let stop = actions.iter().all(|a| a.action == HighLevelAction::Done).then_some(Termination::AllDone);
        let record = StepRecord {
            t,
            phases: vec![Phase::Baseline, Phase::EnvStep],
            exchanges: vec![exchange],
            actions,
            corrective: vec![None; self.agents.len()],
            outcomes,
            ignored_completions: Vec::new(),
            ledger: SubtaskLedger::default(),
            memory_words: 0,
        };
        Ok((record, stop))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_dedups_and_moves() {
        let mut l = SubtaskLedger::default();
        assert!(l.add_open("extinguish Fire_1"));
        assert!(!l.add_open("Extinguish  fire_1."));
        assert!(l.add_open("rescue Person_1"));
        assert!(!l.complete("rescue Person_2"));
        assert!(l.complete("extinguish fire_1"));
        assert_eq!(l.open, vec!["rescue Person_1"]);
        assert_eq!(l.completed, vec!["extinguish Fire_1"]);
        assert!(!l.add_open("extinguish Fire_1"));
    }

    #[test]
    fn memory_evicts_oldest_lines() {
        let mut m = MemoryLog::new(5);
        m.append("a b c\nd e");
        m.append("f g");
        assert_eq!(m.text(), "d e\nf g");
        m.append("one two three four five six seven");
        assert_eq!(m.text(), "three four five six seven");
        assert_eq!(m.word_count(), 5);
    }

    #[test]
    fn modes_round_trip() {
        for m in ControllerMode::ALL {
            assert_eq!(m.as_str().parse::<ControllerMode>().unwrap(), m);
        }
        assert!("tot".parse::<ControllerMode>().is_err());
    }
}
