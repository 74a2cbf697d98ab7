use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use sar_core::action::HighLevelAction;
use sar_core::backend::scripted::{self, ScriptedBackend};
use sar_core::backend::{
    BackendError, ChatRequest, CompletionRecord, LanguageModel, ModuleRole, PromptContext, RecordingBackend,
    ReplayBackend, ReplayStore,
};
use sar_core::metrics::EpisodeResult;
use sar_core::orchestrator::{run_episode, ControllerMode, EpisodeConfig, EpisodeTrace, Termination};
use sar_core::world::{build_scene, SceneConfig};

fn carry_scene() -> SceneConfig {
    SceneConfig::from_toml_str(include_str!("fixtures/carry_scene.toml")).unwrap()
}

fn run(scene: SceneConfig, mode: ControllerMode, backend: &dyn LanguageModel) -> EpisodeTrace {
    let trace = run_episode(&EpisodeConfig::new(scene, mode), backend).unwrap();
    trace.lint().unwrap();
    trace
}

fn json(v: serde_json::Value) -> String {
    serde_json::to_string_pretty(&v).unwrap()
}

/// Passes requests through and keeps them for inspection.
struct Spy<M> {
    inner: M,
    seen: Mutex<Vec<ChatRequest>>,
}

impl<M: LanguageModel> Spy<M> {
    fn new(inner: M) -> Self {
        Self { inner, seen: Mutex::new(Vec::new()) }
    }

    fn requests(&self, role: ModuleRole) -> Vec<ChatRequest> {
        self.seen.lock().unwrap().iter().filter(|r| r.tag.role == role).cloned().collect()
    }
}

impl<M: LanguageModel> LanguageModel for Spy<M> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, request: &ChatRequest) -> Result<CompletionRecord, BackendError> {
        self.seen.lock().unwrap().push(request.clone());
        self.inner.complete(request)
    }
}

/// Both agents try to carry Person_1 from out of range on the first step.
fn premature_carry() -> ScriptedBackend {
    ScriptedBackend::new().with_policy(
        ModuleRole::Actor,
        Box::new(|ctx: &PromptContext| {
            if ctx.previous.is_empty() {
                json(serde_json::json!({
                    "reason": "grab the person right away",
                    "subtask": "rescue Person_1",
                    "Alice's action": "carry Person_1",
                    "Bob's action": "carry Person_1",
                }))
            } else {
                scripted::respond(ModuleRole::Actor, ctx)
            }
        }),
    )
}

#[test]
fn scripted_team_clears_fire_only_scene() {
    for seed in 0..5 {
        let trace = run(build_scene(4, 2, seed).unwrap(), ControllerMode::Llamar, &ScriptedBackend::new());
        let result = EpisodeResult::from_trace(&trace);
        assert!(result.success, "seed {seed}: {:?}", trace.footer);
        assert!(result.steps <= 30);
        assert_eq!(result.transport_rate().unwrap(), 1.0);
    }
}

#[test]
fn zero_horizon_gives_empty_trace() {
    let mut config = EpisodeConfig::new(build_scene(4, 2, 0).unwrap(), ControllerMode::Llamar);
    config.horizon = 0;
    let trace = run_episode(&config, &ScriptedBackend::new()).unwrap();
    assert!(trace.steps.is_empty());
    assert_eq!(trace.footer.termination, Termination::Horizon);
    let result = EpisodeResult::from_trace(&trace);
    assert!(!result.success);
    assert_eq!(result.length(), 0);
}

#[test]
fn scripted_episode_is_a_pure_function_of_config() {
    let a = run(build_scene(1, 3, 11).unwrap(), ControllerMode::Llamar, &ScriptedBackend::new());
    let b = run(build_scene(1, 3, 11).unwrap(), ControllerMode::Llamar, &ScriptedBackend::new());
    assert_eq!(a.to_jsonl(), b.to_jsonl());
}

#[test]
fn replay_reproduces_trace_bytes() {
    let store = Arc::new(ReplayStore::in_memory());
    let recorder = RecordingBackend::new(ScriptedBackend::new(), store.clone());
    let recorded = run(build_scene(1, 2, 3).unwrap(), ControllerMode::Llamar, &recorder);
    assert!(!store.is_empty());
    let replayed = run(build_scene(1, 2, 3).unwrap(), ControllerMode::Llamar, &ReplayBackend::new(store));
    assert_eq!(recorded.to_jsonl(), replayed.to_jsonl());
}

#[test]
fn replay_miss_aborts_the_episode() {
    let backend = ReplayBackend::new(Arc::new(ReplayStore::in_memory()));
    let trace = run(build_scene(4, 2, 0).unwrap(), ControllerMode::Llamar, &backend);
    assert!(trace.is_aborted());
    assert!(trace.steps.is_empty());
    assert!(trace.footer.aborted.as_deref().unwrap().contains("planner"), "{:?}", trace.footer.aborted);
}

#[test]
fn trace_survives_jsonl_round_trip() {
    let trace = run(build_scene(5, 2, 1).unwrap(), ControllerMode::Llamar, &ScriptedBackend::new());
    let text = trace.to_jsonl();
    assert_eq!(text.lines().count(), trace.steps.len() + 2);
    assert_eq!(EpisodeTrace::from_jsonl(&text).unwrap(), trace);
}

#[test]
fn planner_opens_subtask_for_visible_fire() {
    let trace = run(carry_scene(), ControllerMode::Llamar, &ScriptedBackend::new());
    let first = &trace.steps[0];
    assert!(first.ledger.open.iter().chain(&first.ledger.completed).any(|s| s == "extinguish FireA_1"));
}

#[test]
fn malformed_plan_is_asked_again() {
    let calls = Arc::new(AtomicUsize::new(0));
    let counter = calls.clone();
    let backend = ScriptedBackend::new().with_policy(
        ModuleRole::Planner,
        Box::new(move |ctx: &PromptContext| {
            if counter.fetch_add(1, Ordering::SeqCst) == 0 {
                "I would start by looking around.".to_string()
            } else {
                scripted::respond(ModuleRole::Planner, ctx)
            }
        }),
    );
    let trace = run(build_scene(4, 2, 0).unwrap(), ControllerMode::Llamar, &backend);
    let planner = &trace.steps[0].exchanges[0];
    assert_eq!(planner.role, ModuleRole::Planner);
    assert_eq!(planner.attempts.len(), 2);
    assert!(planner.parsed.is_some());
    assert!(trace.steps[1].exchanges[0].attempts.len() == 1);
}

#[test]
fn duplicate_subtasks_are_merged() {
    let backend = ScriptedBackend::new().with_policy(
        ModuleRole::Planner,
        Box::new(|_: &PromptContext| {
            json(serde_json::json!({
                "reason": "one fire",
                "plan": ["extinguish FireA_1", "Extinguish  FireA_1.", "extinguish FireA_1"],
            }))
        }),
    );
    let trace = run(carry_scene(), ControllerMode::Llamar, &backend);
    let ledger = &trace.steps[0].ledger;
    assert_eq!(ledger.open.len() + ledger.completed.len(), 1);
}

#[test]
fn actor_text_is_grounded() {
    let backend = ScriptedBackend::new().with_policy(
        ModuleRole::Actor,
        Box::new(|_: &PromptContext| {
            json(serde_json::json!({
                "reason": "stock up",
                "Alice's action": "get supply from WaterReservoir_1",
                "Bob's action": "stay idle",
            }))
        }),
    );
    let trace = run(carry_scene(), ControllerMode::Llamar, &backend);
    let first = &trace.steps[0];
    assert_eq!(first.actions[0].action, HighLevelAction::GetSupplyFromReservoir { reservoir: "WaterReservoir_1".into() });
    assert_eq!(first.actions[1].action, HighLevelAction::StayIdle);
}

#[test]
fn unanimous_done_ends_the_episode() {
    let backend = ScriptedBackend::new().with_policy(
        ModuleRole::Actor,
        Box::new(|_: &PromptContext| json(serde_json::json!({"Alice's action": "Done", "Bob's action": "Done"}))),
    );
    let trace = run(carry_scene(), ControllerMode::Llamar, &backend);
    assert_eq!(trace.steps.len(), 1);
    assert_eq!(trace.footer.termination, Termination::DoneWithOpenSubtasks);

    let empty_plan = ScriptedBackend::new()
        .with_policy(
            ModuleRole::Planner,
            Box::new(|_: &PromptContext| json(serde_json::json!({"reason": "nothing", "plan": []}))),
        )
        .with_policy(
            ModuleRole::Actor,
            Box::new(|_: &PromptContext| json(serde_json::json!({"Alice's action": "Done", "Bob's action": "Done"}))),
        );
    let trace = run(carry_scene(), ControllerMode::Llamar, &empty_plan);
    assert_eq!(trace.steps.len(), 1);
    assert_eq!(trace.footer.termination, Termination::LedgerEmpty);
}

#[test]
fn corrector_sends_carriers_to_the_person() {
    let spy = Spy::new(premature_carry());
    let trace = run(carry_scene(), ControllerMode::Llamar, &spy);
    let first = &trace.steps[0];
    assert_eq!(first.flags(), vec![false, false]);
    assert!(first.outcomes[0].failure.as_deref().unwrap().contains("not interactable"));
    let nav = HighLevelAction::NavigateTo { target: "Person_1".into() };
    assert_eq!(first.corrective, vec![Some(nav.clone()), Some(nav.clone())]);

    // The correction reaches the next actor prompt and is followed.
    let actor_prompts = spy.requests(ModuleRole::Actor);
    assert!(actor_prompts[1].user.contains(&nav.describe()), "{}", actor_prompts[1].user);
    assert_eq!(trace.steps[1].actions[0].action, nav);
    let carried = trace.steps[2].outcomes.iter().all(|o| {
        o.success && o.action == HighLevelAction::Carry { person: "Person_1".into() }
    });
    assert!(carried, "{:?}", trace.steps[2].outcomes);
}

#[test]
fn successful_steps_carry_no_corrections() {
    let trace = run(carry_scene(), ControllerMode::Llamar, &ScriptedBackend::new());
    for step in trace.steps.iter().filter(|s| s.flags().iter().all(|f| *f)) {
        assert!(step.corrective.iter().all(Option::is_none), "t={}", step.t);
    }
}

#[test]
fn ungroundable_correction_is_dropped() {
    let backend = premature_carry().with_policy(
        ModuleRole::Corrector,
        Box::new(|_: &PromptContext| {
            json(serde_json::json!({
                "reason": "??",
                "Alice's corrective action": "pick up the apple",
                "Bob's corrective action": "navigate to Person_1",
            }))
        }),
    );
    let trace = run(carry_scene(), ControllerMode::Llamar, &backend);
    let nav = HighLevelAction::NavigateTo { target: "Person_1".into() };
    assert_eq!(trace.steps[0].corrective, vec![None, Some(nav)]);
}

#[test]
fn verifier_cannot_close_unknown_subtasks() {
    let backend = ScriptedBackend::new().with_policy(
        ModuleRole::Verifier,
        Box::new(|_: &PromptContext| {
            json(serde_json::json!({"reason": "all good", "completed subtasks": ["rescue Person_9"]}))
        }),
    );
    let trace = run(carry_scene(), ControllerMode::Llamar, &backend);
    let first = &trace.steps[0];
    assert_eq!(first.ignored_completions, vec!["rescue Person_9".to_string()]);
    assert!(first.ledger.completed.is_empty());
}

#[test]
fn empty_verification_leaves_ledger_alone() {
    let backend = ScriptedBackend::new().with_policy(
        ModuleRole::Verifier,
        Box::new(|_: &PromptContext| json(serde_json::json!({"reason": "nothing yet", "completed subtasks": []}))),
    );
    let trace = run(build_scene(4, 2, 0).unwrap(), ControllerMode::Llamar, &backend);
    for step in &trace.steps {
        assert!(step.ledger.completed.is_empty());
    }
    // Scoring ignores the verifier: the fire still goes out.
    assert!(EpisodeResult::from_trace(&trace).success);
    assert_eq!(trace.footer.termination, Termination::DoneWithOpenSubtasks);
}

#[test]
fn baselines_follow_their_response_formats() {
    for mode in [ControllerMode::Act, ControllerMode::Cot, ControllerMode::React] {
        let trace = run(build_scene(4, 2, 0).unwrap(), mode, &ScriptedBackend::new());
        assert!(EpisodeResult::from_trace(&trace).success, "{mode}");
        let parsed = trace.steps[0].exchanges[0].parsed.as_ref().unwrap();
        match mode {
            ControllerMode::Act => assert_eq!(parsed.len(), 2),
            ControllerMode::Cot => assert!(parsed.contains_key("reason")),
            _ => assert!(parsed.contains_key("Think")),
        }
    }
}

#[test]
fn react_without_think_is_asked_again() {
    let calls = Arc::new(AtomicUsize::new(0));
    let counter = calls.clone();
    let backend = ScriptedBackend::new().with_policy(
        ModuleRole::Baseline,
        Box::new(move |ctx: &PromptContext| {
            if counter.fetch_add(1, Ordering::SeqCst) == 0 {
                json(serde_json::json!({"Action": {"Alice": "explore", "Bob": "explore"}}))
            } else {
                scripted::respond(ModuleRole::Baseline, ctx)
            }
        }),
    );
    let trace = run(build_scene(4, 2, 0).unwrap(), ControllerMode::React, &backend);
    assert_eq!(trace.steps[0].exchanges[0].attempts.len(), 2);
    assert!(trace.steps[0].exchanges[0].parsed.as_ref().unwrap().contains_key("Think"));
}

#[test]
fn act_with_extra_keys_is_asked_again() {
    let calls = Arc::new(AtomicUsize::new(0));
    let counter = calls.clone();
    let backend = ScriptedBackend::new().with_policy(
        ModuleRole::Baseline,
        Box::new(move |ctx: &PromptContext| {
            if counter.fetch_add(1, Ordering::SeqCst) == 0 {
                json(serde_json::json!({"reason": "thinking aloud", "Alice": "explore", "Bob": "explore"}))
            } else {
                scripted::respond(ModuleRole::Baseline, ctx)
            }
        }),
    );
    let trace = run(build_scene(4, 2, 0).unwrap(), ControllerMode::Act, &backend);
    assert_eq!(trace.steps[0].exchanges[0].attempts.len(), 2);
}

#[test]
fn lone_agent_cannot_rescue_but_fights_fires() {
    let trace = run(build_scene(5, 1, 0).unwrap(), ControllerMode::Llamar, &ScriptedBackend::new());
    let gt = &trace.footer.ground_truth;
    assert!(gt.iter().filter(|(k, _)| k.starts_with("rescue")).all(|(_, done)| !done));
    let fires_done = gt.iter().filter(|(k, d)| k.starts_with("extinguish") && **d).count();
    let result = EpisodeResult::from_trace(&trace);
    assert_eq!(result.transport_rate().unwrap(), fires_done as f64 / gt.len() as f64);
    assert!(!trace.header.warnings.is_empty());
}
