//! Prompt templates with `{name}` placeholders.
//!
//! A template file holds the system text, a line containing only `%%`, then
//! the user text. Braces that do not enclose a known placeholder name are
//! left alone, so example dictionaries can appear verbatim.

use std::collections::BTreeMap;
use std::path::Path;

use crate::backend::ModuleRole;
use crate::orchestrator::ControllerMode;

pub const PLACEHOLDERS: &[&str] = &[
    "task",
    "agent_observations",
    "open_subtasks",
    "completed_subtasks",
    "memory",
    "previous_actions",
    "failures",
    "corrective_actions",
    "action_list",
    "agent_names",
    "n_agents",
    "response_format",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub system: String,
    pub user: String,
}

impl Template {
    pub fn parse(text: &str) -> Self {
        let mut system = String::new();
        let mut user = String::new();
        let mut in_user = false;
        for line in text.lines() {
            if !in_user && line.trim_end() == "%%" {
                in_user = true;
                continue;
            }
            let buf = if in_user { &mut user } else { &mut system };
            buf.push_str(line);
            buf.push('\n');
        }
        Self { system: system.trim_end().to_string(), user: user.trim_end().to_string() }
    }

    pub fn render(&self, vars: &BTreeMap<&str, String>) -> (String, String) {
        (substitute(&self.system, vars), substitute(&self.user, vars))
    }
}

/// Replaces `{name}` for every `name` in `vars`.
pub fn substitute(text: &str, vars: &BTreeMap<&str, String>) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name_len = after.bytes().take_while(|b| b.is_ascii_alphanumeric() || *b == b'_').count();
        if name_len > 0 && after.as_bytes().get(name_len) == Some(&b'}') {
            if let Some(v) = vars.get(&after[..name_len]) {
                out.push_str(v);
                rest = &after[name_len + 1..];
                continue;
            }
        }
        out.push('{');
        rest = after;
    }
    out.push_str(rest);
    out
}

/// Templates for every module and baseline mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub planner: Template,
    pub actor: Template,
    pub corrector: Template,
    pub verifier: Template,
    pub act: Template,
    pub cot: Template,
    pub react: Template,
}

const FILES: [&str; 7] = ["planner", "actor", "corrector", "verifier", "act", "cot", "react"];

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            planner: Template::parse(include_str!("../../prompts/planner.txt")),
            actor: Template::parse(include_str!("../../prompts/actor.txt")),
            corrector: Template::parse(include_str!("../../prompts/corrector.txt")),
            verifier: Template::parse(include_str!("../../prompts/verifier.txt")),
            act: Template::parse(include_str!("../../prompts/act.txt")),
            cot: Template::parse(include_str!("../../prompts/cot.txt")),
            react: Template::parse(include_str!("../../prompts/react.txt")),
        }
    }
}

impl PromptSet {
    /// Loads `<name>.txt` files from `dir`; missing files keep the default.
    pub fn load(dir: &Path) -> std::io::Result<Self> {
        let mut set = Self::default();
        for name in FILES {
            let path = dir.join(format!("{name}.txt"));
            if !path.exists() {
                continue;
            }
            let t = Template::parse(&std::fs::read_to_string(&path)?);
            match name {
                "planner" => set.planner = t,
                "actor" => set.actor = t,
                "corrector" => set.corrector = t,
                "verifier" => set.verifier = t,
                "act" => set.act = t,
                "cot" => set.cot = t,
                _ => set.react = t,
            }
        }
        Ok(set)
    }

    pub fn for_role(&self, role: ModuleRole, mode: ControllerMode) -> &Template {
        match (role, mode) {
            (ModuleRole::Planner, _) => &self.planner,
            (ModuleRole::Actor, _) => &self.actor,
            (ModuleRole::Corrector, _) => &self.corrector,
            (ModuleRole::Verifier, _) => &self.verifier,
            (ModuleRole::Baseline, ControllerMode::Cot) => &self.cot,
            (ModuleRole::Baseline, ControllerMode::React) => &self.react,
            (ModuleRole::Baseline, _) => &self.act,
        }
    }
}

/// The dictionary layout a module must answer with.
pub fn response_format(role: ModuleRole, mode: ControllerMode, agents: &[String]) -> String {
    let per_agent = |suffix: &str, hint: &str| -> Vec<String> {
        agents.iter().map(|a| format!("\"{a}{suffix}\": \"{hint} {a}\"")).collect()
    };
    let fields: Vec<String> = match (role, mode) {
        (ModuleRole::Planner, _) => vec![
            "\"reason\": \"why these subtasks are needed\"".into(),
            "\"plan\": [\"subtask\", \"subtask\"]".into(),
        ],
        (ModuleRole::Actor, _) => {
            let mut f = vec![
                "\"failure reason\": \"why any previous action failed, or an empty string\"".to_string(),
                "\"memory\": \"facts to remember for later steps\"".to_string(),
                "\"reason\": \"why these actions were chosen\"".to_string(),
                "\"subtask\": \"which subtask each robot is working on\"".to_string(),
            ];
            f.extend(per_agent("'s action", "action for"));
            f
        }
        (ModuleRole::Corrector, _) => {
            let mut f = vec![
                "\"failure reason\": \"why the failed actions failed\"".to_string(),
                "\"reason\": \"why the suggested corrections help\"".to_string(),
            ];
            f.extend(per_agent("'s corrective action", "corrective action for"));
            f
        }
        (ModuleRole::Verifier, _) => vec![
            "\"reason\": \"evidence for each finished subtask\"".into(),
            "\"completed subtasks\": [\"subtask\"]".into(),
        ],
        (ModuleRole::Baseline, ControllerMode::React) => {
            let inner = per_agent("", "action for").join(", ");
            vec!["\"Think\": \"your thoughts\"".into(), format!("\"Action\": {{{inner}}}")]
        }
        (ModuleRole::Baseline, ControllerMode::Cot) => {
            let mut f = vec!["\"reason\": \"all of your reasoning\"".to_string()];
            f.extend(per_agent("", "action for"));
            f
        }
        (ModuleRole::Baseline, _) => per_agent("", "action for"),
    };
    format!("{{{}}}", fields.join(", "))
}

/// The action vocabulary, one phrase per line.
pub fn action_list() -> String {
    [
        "navigate to <object>: walk to a cell next to an object the robot has seen",
        "move <up|down|left|right>: step one cell",
        "explore: walk a few cells in a new direction to discover objects",
        "get supply from <reservoir>: take one unit of that reservoir's supply",
        "get <water|sand> from <deposit>: take one stored unit",
        "store supply in <deposit>: put all carried supplies into the deposit",
        "use <water|sand> on <fire>: spend carried units on adjacent burning cells",
        "carry <person>: take hold of an adjacent person",
        "drop off <person> at <deposit>: release a carried person at an adjacent deposit",
        "stay idle",
        "Done: the whole task is finished",
    ]
    .iter()
    .map(|l| format!("- {l}"))
    .collect::<Vec<_>>()
    .join("\n")
}
