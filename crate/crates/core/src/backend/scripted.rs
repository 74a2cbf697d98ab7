//! Deterministic hand-written controller that answers every module the way a
//! competent language model would, using the structured [`PromptContext`]
//! attached to each request instead of reading the prompt text.
//!
//! The fire-fighting policy: fetch the supply matching the fire's class from
//! a reservoir until full, walk to the fire, spend it, repeat. With two or
//! more robots the first two rescue known persons before fighting fires.
//! Anything not yet seen is found by exploring.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Map, Value};

use super::{BackendError, ChatRequest, CompletionRecord, LanguageModel, ModuleRole, PromptContext};
use crate::action::Supply;
use crate::orchestrator::ControllerMode;
use crate::world::{FireClass, IntensityLevel, ObjectKind, ObservationBundle};

/// Replacement answer for one module.
pub type Policy = Box<dyn Fn(&PromptContext) -> String + Send + Sync>;

/// Carriers a person needs; the scripted team assumes the default.
const RESCUE_TEAM: usize = 2;

pub const EXPLORE_SUBTASK: &str = "explore to find every fire and lost person";

#[derive(Default)]
pub struct ScriptedBackend {
    overrides: BTreeMap<ModuleRole, Policy>,
}

impl std::fmt::Debug for ScriptedBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScriptedBackend").field("overrides", &self.overrides.keys().collect::<Vec<_>>()).finish()
    }
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replaces the default answer for `role`.
    pub fn with_policy(mut self, role: ModuleRole, policy: Policy) -> Self {
        self.overrides.insert(role, policy);
        self
    }
}

impl LanguageModel for ScriptedBackend {
    fn id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, request: &ChatRequest) -> Result<CompletionRecord, BackendError> {
        let ctx = request
            .context
            .as_deref()
            .ok_or_else(|| BackendError::Scripted("request carries no prompt context".into()))?;
        let response = match self.overrides.get(&request.tag.role) {
            Some(policy) => policy(ctx),
            None => respond(request.tag.role, ctx),
        };
        Ok(CompletionRecord { hash: request.hash(), response, latency_ms: 0, backend: self.id().to_string() })
    }
}

/// Default answer of the scripted controller for `role`.
pub fn respond(role: ModuleRole, ctx: &PromptContext) -> String {
    let team = Team::new(ctx);
    let value = match role {
        ModuleRole::Planner => planner(&team),
        ModuleRole::Actor => actor(&team),
        ModuleRole::Corrector => corrector(&team),
        ModuleRole::Verifier => verifier(&team),
        ModuleRole::Baseline => baseline(&team),
    };
    serde_json::to_string_pretty(&value).expect("json values serialize")
}

/// Target counts stated in the task instruction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TaskCounts {
    pub fires: usize,
    pub persons: usize,
}

impl TaskCounts {
    /// Reads "`N` fire(s)" and "`M` lost person(s)"; absent counts are 0.
    pub fn from_instruction(text: &str) -> Self {
        let words: Vec<&str> = text.split_whitespace().collect();
        let mut counts = Self::default();
        for (i, w) in words.iter().enumerate() {
            let Ok(n) = w.parse::<usize>() else { continue };
            match (words.get(i + 1), words.get(i + 2)) {
                (Some(next), _) if next.starts_with("fire") => counts.fires = n,
                (Some(&"lost"), Some(p)) if p.starts_with("person") => counts.persons = n,
                _ => {}
            }
        }
        counts
    }
}

/// What the whole team knows, pooled over every agent's observation.
struct Team<'c> {
    ctx: &'c PromptContext,
    counts: TaskCounts,
    fires: BTreeMap<String, FireClass>,
    fires_out: BTreeSet<String>,
    persons: BTreeSet<String>,
    rescued: BTreeSet<String>,
}

impl<'c> Team<'c> {
    fn new(ctx: &'c PromptContext) -> Self {
        let mut fires = BTreeMap::new();
        let mut fires_out = BTreeSet::new();
        let mut persons = BTreeSet::new();
        let mut rescued = BTreeSet::new();
        for o in &ctx.observations {
            for (id, kind) in &o.known {
                match kind {
                    ObjectKind::Fire { class } => {
                        fires.insert(id.clone(), *class);
                    }
                    ObjectKind::Person => {
                        persons.insert(id.clone());
                    }
                    _ => {}
                }
            }
            for f in &o.fires {
                fires.insert(f.name.clone(), f.class);
                if f.intensity == IntensityLevel::Extinguished {
                    fires_out.insert(f.name.clone());
                }
            }
            for p in &o.persons {
                persons.insert(p.name.clone());
                if p.dropped_off {
                    rescued.insert(p.name.clone());
                }
            }
            for d in &o.deposits {
                rescued.extend(d.persons.iter().cloned());
            }
        }
        Self { ctx, counts: TaskCounts::from_instruction(&ctx.instruction), fires, fires_out, persons, rescued }
    }

    fn n(&self) -> usize {
        self.ctx.agents.len()
    }

    /// Every discovered target already has a subtask in the ledger.
    fn targets_tracked(&self) -> bool {
        let listed: BTreeSet<String> = self
            .ctx
            .open_subtasks
            .iter()
            .chain(&self.ctx.completed_subtasks)
            .map(|s| s.to_lowercase())
            .collect();
        target_subtasks(self).iter().all(|s| listed.contains(&s.to_lowercase()))
    }

    fn open_fires(&self) -> Vec<&String> {
        self.fires.keys().filter(|f| !self.fires_out.contains(*f)).collect()
    }

    fn open_persons(&self) -> Vec<&String> {
        self.persons.iter().filter(|p| !self.rescued.contains(*p)).collect()
    }

    fn all_found(&self) -> bool {
        self.fires.len() >= self.counts.fires && self.persons.len() >= self.counts.persons
    }

    fn finished(&self) -> bool {
        self.all_found() && self.open_fires().is_empty() && self.open_persons().is_empty()
    }

    fn can_rescue(&self) -> bool {
        self.n() >= RESCUE_TEAM
    }

    fn rescuing(&self, agent: usize) -> bool {
        self.can_rescue()
            && agent < RESCUE_TEAM
            && (!self.open_persons().is_empty() || self.persons.len() < self.counts.persons)
    }

    /// Free-text action for one agent.
    fn choose(&self, i: usize, follow_corrections: bool) -> String {
        let obs = &self.ctx.observations[i];
        if follow_corrections {
            if let Some(Some(c)) = self.ctx.corrective.get(i) {
                return c.clone();
            }
        }
        if let Some(p) = &obs.inventory.carrying {
            let lifted = obs.persons.iter().any(|v| &v.name == p && v.carried);
            if !lifted {
                return "stay idle".into();
            }
            return match deposit_of(obs) {
                Some(d) if obs.names.contains(&d) => format!("drop off {p} at {d}"),
                Some(d) => format!("navigate to {d}"),
                None => "explore".into(),
            };
        }
        if self.finished() {
            return "Done".into();
        }
        if self.rescuing(i) {
            let Some(&p) = self.open_persons().first() else {
                return "explore".into();
            };
            return if obs.names.contains(p) {
                format!("carry {p}")
            } else if obs.known.contains_key(p) {
                format!("navigate to {p}")
            } else {
                self.rendezvous(i, p).map_or_else(|| "explore".into(), |x| format!("navigate to {x}"))
            };
        }
        let open = self.open_fires();
        if !open.is_empty() {
            let fighters: Vec<usize> = (0..self.n()).filter(|&j| !self.rescuing(j)).collect();
            let rank = fighters.iter().position(|&j| j == i).unwrap_or(0);
            let fire = open[rank % open.len()];
            return self.fight(obs, fire, self.fires[fire].extinguisher());
        }
        if !self.all_found() {
            "explore".into()
        } else {
            "stay idle".into()
        }
    }

    /// A landmark agent `i` knows that a teammate currently sees near
    /// `target`, unless `i` already has one of them in view.
    fn rendezvous(&self, i: usize, target: &str) -> Option<String> {
        let obs = &self.ctx.observations[i];
        let spotter = self.ctx.observations.iter().find(|o| o.persons.iter().any(|v| v.name == target))?;
        let landmarks: Vec<&String> = spotter
            .reservoirs
            .iter()
            .map(|r| &r.name)
            .chain(spotter.fires.iter().map(|f| &f.name))
            .filter(|x| obs.known.contains_key(*x))
            .collect();
        let in_view = obs.reservoirs.iter().map(|r| &r.name).chain(obs.fires.iter().map(|f| &f.name));
        if in_view.into_iter().any(|x| landmarks.contains(&x)) {
            return None;
        }
        landmarks.first().map(|x| (*x).clone())
    }

    fn fight(&self, obs: &ObservationBundle, fire: &str, need: Supply) -> String {
        let inv = &obs.inventory;
        let have = match need {
            Supply::Water => inv.water,
            Supply::Sand => inv.sand,
        };
        let free = inv.capacity.saturating_sub(inv.water + inv.sand);
        let reservoir = obs
            .known
            .iter()
            .find(|(_, k)| matches!(k, ObjectKind::Reservoir { supply } if *supply == need))
            .map(|(id, _)| id.clone());
        if have > 0 && obs.names.iter().any(|n| n == fire) {
            return format!("use {need} on {fire}");
        }
        if let Some(r) = reservoir.as_ref().filter(|r| free > 0 && obs.names.contains(r)) {
            return format!("get supply from {r}");
        }
        if have > 0 {
            return if obs.known.contains_key(fire) { format!("navigate to {fire}") } else { "explore".into() };
        }
        if free == 0 {
            return match deposit_of(obs) {
                Some(d) if obs.names.contains(&d) => format!("store supply in {d}"),
                Some(d) => format!("navigate to {d}"),
                None => "explore".into(),
            };
        }
        match reservoir {
            Some(r) => format!("navigate to {r}"),
            None => "explore".into(),
        }
    }

    /// Corrective text for a failed action, from the environment's reason.
    fn correction(&self, i: usize) -> String {
        let Some(o) = self.ctx.previous.get(i) else { return String::new() };
        if o.success {
            return String::new();
        }
        let reason = o.failure.as_deref().unwrap_or("");
        let obs = &self.ctx.observations[i];
        if let Some(rest) = reason.strip_prefix("not interactable: ") {
            let id = rest.split(" is too far").next().unwrap_or(rest);
            return format!("navigate to {id}");
        }
        if reason.starts_with("object not yet observed") || reason.starts_with("no path") || reason.starts_with("blocked")
        {
            return "explore".into();
        }
        if reason.starts_with("wrong supply class") {
            let ids = o.action.object_ids();
            let need = ids.first().and_then(|f| match obs.known.get(*f) {
                Some(ObjectKind::Fire { class }) => Some(class.extinguisher()),
                _ => None,
            });
            let reservoir = need.and_then(|s| {
                obs.known.iter().find(|(_, k)| matches!(k, ObjectKind::Reservoir { supply } if *supply == s))
            });
            return match reservoir {
                Some((r, _)) => format!("navigate to {r}"),
                None => "explore".into(),
            };
        }
        if reason == "inventory full" {
            return match deposit_of(obs) {
                Some(d) => format!("navigate to {d}"),
                None => "stay idle".into(),
            };
        }
        if reason.starts_with("not all carriers") {
            return o.action.describe();
        }
        if reason.contains("not group-carried") {
            return "stay idle".into();
        }
        String::new()
    }
}

fn deposit_of(obs: &ObservationBundle) -> Option<String> {
    obs.known
        .iter()
        .find(|(_, k)| matches!(k, ObjectKind::Deposit))
        .map(|(id, _)| id.clone())
        .or_else(|| obs.deposits.first().map(|d| d.name.clone()))
}

fn target_subtasks(team: &Team<'_>) -> Vec<String> {
    let mut out: Vec<String> = team.fires.keys().map(|f| format!("extinguish {f}")).collect();
    if team.can_rescue() {
        out.extend(team.persons.iter().map(|p| format!("rescue {p}")));
    }
    out
}

fn planner(team: &Team<'_>) -> Value {
    let mut plan = Vec::new();
    if !team.all_found() {
        plan.push(EXPLORE_SUBTASK.to_string());
    }
    plan.extend(target_subtasks(team));
    json!({
        "reason": format!(
            "{} fire(s) and {} person(s) known out of {} and {}",
            team.fires.len(),
            team.persons.len(),
            team.counts.fires,
            team.counts.persons
        ),
        "plan": plan,
    })
}

fn actor(team: &Team<'_>) -> Value {
    let ctx = team.ctx;
    let failures: Vec<String> = ctx
        .previous
        .iter()
        .filter(|o| !o.success)
        .map(|o| format!("{}: {}", o.agent, o.failure.as_deref().unwrap_or("unknown")))
        .collect();
    let known: BTreeSet<&String> = ctx.observations.iter().flat_map(|o| o.known.keys()).collect();
    let note = format!("known objects: {}", known.into_iter().cloned().collect::<Vec<_>>().join(", "));
    let memory = if ctx.memory.lines().any(|l| l == note) { String::new() } else { note };
    let mut map = Map::new();
    map.insert("failure reason".into(), json!(failures.join("; ")));
    map.insert("memory".into(), json!(memory));
    map.insert("reason".into(), json!("follow the fire-fighting and rescue routine"));
    let subtasks: Vec<String> = ctx
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| format!("{a}: {}", if team.rescuing(i) { "rescue" } else { "fires" }))
        .collect();
    map.insert("subtask".into(), json!(subtasks.join("; ")));
    for (i, a) in ctx.agents.iter().enumerate() {
        map.insert(format!("{a}'s action"), json!(team.choose(i, true)));
    }
    Value::Object(map)
}

fn corrector(team: &Team<'_>) -> Value {
    let ctx = team.ctx;
    let mut map = Map::new();
    let failed: Vec<String> = ctx
        .previous
        .iter()
        .filter(|o| !o.success)
        .map(|o| format!("{}: {}", o.agent, o.failure.as_deref().unwrap_or("unknown")))
        .collect();
    map.insert("failure reason".into(), json!(failed.join("; ")));
    map.insert("reason".into(), json!("remove the cause reported by the environment"));
    for (i, a) in ctx.agents.iter().enumerate() {
        map.insert(format!("{a}'s corrective action"), json!(team.correction(i)));
    }
    Value::Object(map)
}

fn verifier(team: &Team<'_>) -> Value {
    let done: Vec<&String> = team
        .ctx
        .open_subtasks
        .iter()
        .filter(|s| {
            if s.as_str() == EXPLORE_SUBTASK {
                return team.all_found() && team.targets_tracked();
            }
            match s.split_once(' ') {
                Some(("extinguish", f)) => team.fires_out.contains(f),
                Some(("rescue", p)) => team.rescued.contains(p),
                _ => false,
            }
        })
        .collect();
    json!({"reason": "checked against the latest observations", "completed subtasks": done})
}

fn baseline(team: &Team<'_>) -> Value {
    let ctx = team.ctx;
    let actions: Map<String, Value> =
        ctx.agents.iter().enumerate().map(|(i, a)| (a.clone(), json!(team.choose(i, false)))).collect();
    match ctx.mode {
        ControllerMode::React => json!({"Think": "continue the routine", "Action": actions}),
        ControllerMode::Cot => {
            let mut m = Map::new();
            m.insert("reason".into(), json!("continue the routine"));
            m.extend(actions);
            Value::Object(m)
        }
        _ => Value::Object(actions),
    }
}
