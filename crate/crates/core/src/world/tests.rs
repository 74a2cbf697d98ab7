use super::scene::{DepositSpec, FireSpec, GridSpec, PersonSpec, ReservoirSpec};
use super::*;
use crate::action::HighLevelAction as A;

/// Empty 9x9 field: water reservoir at (4,1), sand reservoir at (0,8),
/// deposit at (8,8), one class-A fire region (rows 2-4, cols 5-7) burning at
/// its centre (3,6), a person at (7,1).
fn fixture(agent_starts: Vec<Pos>) -> SceneConfig {
    let region: Vec<Pos> = (2..=4).flat_map(|r| (5..=7).map(move |c| Pos::new(r, c))).collect();
    SceneConfig {
        scene_id: "fixture".into(),
        n_agents: agent_starts.len(),
        seed: 1,
        warnings: vec![],
        agent_starts,
        constants: Constants::default(),
        grid: GridSpec { rows: 9, cols: 9, obstacles: vec![] },
        fires: vec![FireSpec {
            name: "Fire_1".into(),
            class: FireClass::A,
            sources: vec![Pos::new(3, 6)],
            region,
        }],
        persons: vec![PersonSpec { name: "Person_1".into(), position: Pos::new(7, 1) }],
        reservoirs: vec![
            ReservoirSpec { name: "WaterReservoir_1".into(), supply: Supply::Water, position: Pos::new(4, 1) },
            ReservoirSpec { name: "SandReservoir_1".into(), supply: Supply::Sand, position: Pos::new(0, 8) },
        ],
        deposits: vec![DepositSpec { name: "Deposit_1".into(), position: Pos::new(8, 8), water: 0, sand: 0 }],
    }
}

fn set_burning(state: &mut WorldState, cells: &[(i32, i32)]) {
    for &(r, c) in cells {
        state.grid.set(Pos::new(r, c), CellKind::Flammable { fire: 0, burning: true, intensity: 1 });
    }
}

fn nav(id: &str) -> A {
    A::NavigateTo { target: id.into() }
}

#[test]
fn scene_four_starts_with_three_sources_at_intensity_one() {
    let (state, obs) = WorldState::reset(&build_scene(4, 2, 0).unwrap()).unwrap();
    assert_eq!(state.t, 0);
    assert_eq!(obs.len(), 2);
    let burning: Vec<_> = state
        .grid
        .positions()
        .filter_map(|p| match state.grid.get(p) {
            Some(CellKind::Flammable { burning: true, intensity, .. }) => Some(intensity),
            _ => None,
        })
        .collect();
    assert_eq!(burning, vec![1, 1, 1]);
    assert_eq!(state.ground_truth_subtasks().len(), 1);
}

#[test]
fn scene_five_has_two_lost_persons() {
    let (state, _) = WorldState::reset(&build_scene(5, 2, 3).unwrap()).unwrap();
    assert_eq!(state.persons.len(), 2);
    assert!(state.persons.iter().all(|p| p.status == PersonStatus::Lost));
}

#[test]
fn reset_is_deterministic() {
    let c = build_scene(1, 3, 42).unwrap();
    let a = WorldState::reset(&c).unwrap();
    let b = WorldState::reset(&c).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
}

#[test]
fn fresh_scene_one_has_three_open_subtasks() {
    let (state, _) = WorldState::reset(&build_scene(1, 2, 7).unwrap()).unwrap();
    let gt = state.ground_truth_subtasks();
    assert_eq!(gt.len(), 3);
    assert!(gt.values().all(|done| !done));
    assert!(gt.contains_key("rescue Person_1"));
}

#[test]
fn idle_step_only_advances_fire() {
    let (mut state, _) = WorldState::reset(&fixture(vec![Pos::new(8, 0), Pos::new(0, 0)])).unwrap();
    let before = state.agents.clone();
    let (out, obs) = state.step_joint(&[A::StayIdle, A::Done]).unwrap();
    assert_eq!(state.t, 1);
    assert_eq!(out.agents.len(), 2);
    assert!(out.all_succeeded());
    assert_eq!(obs.len(), 2);
    for (a, b) in before.iter().zip(&state.agents) {
        assert_eq!(a.position, b.position);
        assert_eq!(a.inventory, b.inventory);
    }
}

#[test]
fn wrong_action_count_is_rejected() {
    let (mut state, _) = WorldState::reset(&fixture(vec![Pos::new(8, 0)])).unwrap();
    assert!(matches!(
        state.step_joint(&[A::StayIdle, A::StayIdle]),
        Err(WorldError::ActionCount { expected: 1, got: 2 })
    ));
}

#[test]
fn reservoir_dispenses_one_unit_when_adjacent() {
    let (mut state, _) = WorldState::reset(&fixture(vec![Pos::new(4, 2), Pos::new(8, 0)])).unwrap();
    let get = A::GetSupplyFromReservoir { reservoir: "WaterReservoir_1".into() };
    let (out, _) = state.step_joint(&[get.clone(), get]).unwrap();
    assert!(out.agents[0].success);
    assert_eq!(state.agents[0].inventory.water, 1);
    // (8,0) is Chebyshev 4 away from (4,1).
    assert!(!out.agents[1].success);
    assert!(out.agents[1].failure.as_deref().unwrap().starts_with("not interactable"));
    assert_eq!(state.agents[1].inventory.total(), 0);
}

#[test]
fn inventory_never_exceeds_capacity() {
    let (mut state, _) = WorldState::reset(&fixture(vec![Pos::new(4, 2)])).unwrap();
    let get = A::GetSupplyFromReservoir { reservoir: "WaterReservoir_1".into() };
    for i in 0..5 {
        let (out, _) = state.step_joint(std::slice::from_ref(&get)).unwrap();
        assert_eq!(out.agents[0].success, i < 3);
    }
    assert_eq!(state.agents[0].inventory.water, 3);
}

#[test]
fn spread_with_no_burning_cells_is_a_noop() {
    let (mut state, _) = WorldState::reset(&fixture(vec![Pos::new(8, 0)])).unwrap();
    state.grid.set(Pos::new(3, 6), CellKind::Extinguished);
    let before = state.clone();
    state.spread_fires();
    assert_eq!(state, before);
}

#[test]
fn observation_respects_visibility_radius() {
    let mut c = fixture(vec![Pos::new(0, 0)]);
    c.constants.visibility_radius = 3;
    let (state, obs) = WorldState::reset(&c).unwrap();
    let o = &obs[0];
    // Person at (7,1) is 7 away; deposit at (8,8) is always listed.
    assert!(o.persons.is_empty());
    assert!(!o.known.contains_key("Person_1"));
    assert_eq!(o.deposits.len(), 1);
    for id in o.mentioned_ids() {
        let obj = state.lookup(id).unwrap();
        assert!(state.is_visible(0, obj));
    }
}

#[test]
fn local_view_reports_adjacent_flames() {
    let (_, obs) = WorldState::reset(&fixture(vec![Pos::new(3, 4)])).unwrap();
    let local: BTreeMap<_, _> = obs[0].local.iter().cloned().collect();
    assert_eq!(local[&Direction::Right], LocalCell::Flammable { fire: "Fire_1".into(), intensity: 0 });
    assert_eq!(local[&Direction::Center], LocalCell::Empty);
    let (mut state, _) = WorldState::reset(&fixture(vec![Pos::new(3, 4)])).unwrap();
    set_burning(&mut state, &[(3, 5)]);
    let o = state.observe(0);
    let local: BTreeMap<_, _> = o.local.iter().cloned().collect();
    assert_eq!(local[&Direction::Right], LocalCell::Flammable { fire: "Fire_1".into(), intensity: 1 });
    assert!(o.names.contains(&"Fire_1".to_string()));
}

#[test]
fn navigate_requires_prior_observation() {
    let mut c = fixture(vec![Pos::new(0, 0)]);
    c.constants.visibility_radius = 2;
    let (mut state, _) = WorldState::reset(&c).unwrap();
    let (out, _) = state.step_joint(&[nav("WaterReservoir_1")]).unwrap();
    assert!(out.agents[0].failure.as_deref().unwrap().starts_with("object not yet observed"));
    assert_eq!(state.agents[0].position, Pos::new(0, 0));
}

#[test]
fn navigate_when_adjacent_does_not_move() {
    let (mut state, _) = WorldState::reset(&fixture(vec![Pos::new(5, 1)])).unwrap();
    let (out, _) = state.step_joint(&[nav("WaterReservoir_1")]).unwrap();
    assert!(out.agents[0].success);
    assert_eq!(state.agents[0].position, Pos::new(5, 1));
}

#[test]
fn navigate_moves_next_to_target() {
    let (mut state, _) = WorldState::reset(&fixture(vec![Pos::new(2, 0)])).unwrap();
    let (out, _) = state.step_joint(&[nav("Person_1")]).unwrap();
    assert!(out.agents[0].success, "{:?}", out.agents[0]);
    assert_eq!(state.agents[0].position.chebyshev(Pos::new(7, 1)), 1);
}

#[test]
fn person_ringed_by_fire_has_no_path() {
    // 5x5 field, person in the middle, its eight neighbours all burning.
    let ring: Vec<Pos> = (1..=3)
        .flat_map(|r| (1..=3).map(move |c| Pos::new(r, c)))
        .filter(|&p| p != Pos::new(2, 2))
        .collect();
    let c = SceneConfig {
        scene_id: "ring".into(),
        n_agents: 1,
        seed: 0,
        warnings: vec![],
        agent_starts: vec![Pos::new(0, 0)],
        constants: Constants { p_spread: 0.0, p_grow: 0.0, ..Constants::default() },
        grid: GridSpec { rows: 5, cols: 5, obstacles: vec![] },
        fires: vec![FireSpec { name: "Fire_1".into(), class: FireClass::A, sources: ring.clone(), region: ring }],
        persons: vec![PersonSpec { name: "Person_1".into(), position: Pos::new(2, 2) }],
        reservoirs: vec![],
        deposits: vec![DepositSpec { name: "Deposit_1".into(), position: Pos::new(4, 4), water: 0, sand: 0 }],
    };
    let (mut state, _) = WorldState::reset(&c).unwrap();
    // Path oracle: no passable cell adjacent to the person is reachable.
    let reach = nav::shortest_path(&state.grid, Pos::new(0, 0), |p| p.chebyshev(Pos::new(2, 2)) == 1);
    assert!(reach.is_none());
    let (out, _) = state.step_joint(&[nav("Person_1")]).unwrap();
    assert_eq!(out.agents[0].failure.as_deref(), Some("no path to Person_1"));
}

#[test]
fn navigation_path_avoids_burning_cells() {
    let (state, _) = WorldState::reset(&fixture(vec![Pos::new(3, 3)])).unwrap();
    let path = nav::shortest_path(&state.grid, Pos::new(3, 3), |p| p == Pos::new(3, 8)).unwrap();
    assert!(!path.contains(&Pos::new(3, 6)));
    assert_eq!(path.len(), 8);
}

#[test]
fn lone_carrier_attaches_without_lifting() {
    let (mut state, _) = WorldState::reset(&fixture(vec![Pos::new(6, 1), Pos::new(0, 0)])).unwrap();
    state.agents[0].inventory.water = 2;
    let (out, _) = state.step_joint(&[A::Carry { person: "Person_1".into() }, A::StayIdle]).unwrap();
    assert!(out.agents[0].success);
    assert_eq!(state.persons[0].status, PersonStatus::Lost);
    assert_eq!(state.persons[0].carriers, vec![0]);
    assert_eq!(state.agents[0].inventory.total(), 0);
}

#[test]
fn two_carriers_lift_and_deliver() {
    let (mut state, _) = WorldState::reset(&fixture(vec![Pos::new(6, 1), Pos::new(7, 2)])).unwrap();
    let carry = A::Carry { person: "Person_1".into() };
    let (out, _) = state.step_joint(&[carry.clone(), carry]).unwrap();
    assert!(out.all_succeeded());
    assert_eq!(state.persons[0].status, PersonStatus::GroupCarried);
    assert!(state.agents.iter().all(|a| a.position == Pos::new(7, 1)));

    // Only the lead carrier's navigation moves the unit.
    let (out, _) = state.step_joint(&[nav("Deposit_1"), A::Move { direction: Direction::Up }]).unwrap();
    assert!(out.all_succeeded());
    let at = state.persons[0].position;
    assert_eq!(at.chebyshev(Pos::new(8, 8)), 1);
    assert!(state.agents.iter().all(|a| a.position == at));

    let drop = A::DropOff { person: "Person_1".into(), deposit: "Deposit_1".into() };
    let (out, _) = state.step_joint(&[drop.clone(), A::StayIdle]).unwrap();
    assert!(!out.agents[0].success);
    assert_eq!(state.persons[0].status, PersonStatus::GroupCarried);

    let (out, _) = state.step_joint(&[drop.clone(), drop]).unwrap();
    assert!(out.all_succeeded(), "{out:?}");
    assert_eq!(state.persons[0].status, PersonStatus::DroppedOff);
    assert!(state.deposits[0].rescued.contains("Person_1"));
    assert!(state.agents.iter().all(|a| a.carrying.is_none()));
    assert_eq!(state.ground_truth_subtasks()["rescue Person_1"], true);
}

#[test]
fn moving_away_releases_a_lone_attachment() {
    let (mut state, _) = WorldState::reset(&fixture(vec![Pos::new(6, 1)])).unwrap();
    state.step_joint(&[A::Carry { person: "Person_1".into() }]).unwrap();
    state.step_joint(&[A::Move { direction: Direction::Right }]).unwrap();
    assert!(state.persons[0].carriers.is_empty());
    assert!(state.agents[0].carrying.is_none());
}

#[test]
fn water_extinguishes_one_cell_per_unit() {
    let mut c = fixture(vec![Pos::new(3, 4)]);
    c.constants.p_spread = 0.0;
    c.constants.p_grow = 0.0;
    let (mut state, _) = WorldState::reset(&c).unwrap();
    // Three burning cells within reach of (3,4): (2,5), (3,5), (4,5).
    set_burning(&mut state, &[(2, 5), (3, 5), (4, 5)]);
    state.grid.set(Pos::new(3, 6), CellKind::Flammable { fire: 0, burning: false, intensity: 0 });
    state.agents[0].inventory.water = 2;
    let (out, _) = state.step_joint(&[A::UseSupply { fire: "Fire_1".into(), supply: Supply::Water }]).unwrap();
    assert!(out.agents[0].success);
    assert_eq!(state.agents[0].inventory.total(), 0);
    assert_eq!(state.burning_cells(0).len(), 1);
    // Order: Right (3,5) before the diagonal (2,5).
    assert_eq!(state.grid.get(Pos::new(3, 5)), Some(CellKind::Extinguished));
    assert_eq!(state.grid.get(Pos::new(2, 5)), Some(CellKind::Extinguished));
    assert!(state.grid.get(Pos::new(4, 5)).unwrap().is_burning());
}

#[test]
fn sand_does_not_work_on_class_a() {
    let (mut state, _) = WorldState::reset(&fixture(vec![Pos::new(3, 4)])).unwrap();
    set_burning(&mut state, &[(3, 5)]);
    state.agents[0].inventory.sand = 2;
    let (out, _) = state.step_joint(&[A::UseSupply { fire: "Fire_1".into(), supply: Supply::Sand }]).unwrap();
    assert!(out.agents[0].failure.as_deref().unwrap().starts_with("wrong supply class"));
    assert_eq!(state.agents[0].inventory.sand, 2);
}

#[test]
fn deposit_stock_round_trip() {
    let (mut state, _) = WorldState::reset(&fixture(vec![Pos::new(7, 7)])).unwrap();
    state.agents[0].inventory = SupplyCounts { water: 2, sand: 1 };
    let (out, _) = state.step_joint(&[A::StoreSupply { deposit: "Deposit_1".into() }]).unwrap();
    assert!(out.all_succeeded());
    assert_eq!(state.deposits[0].stock, SupplyCounts { water: 2, sand: 1 });
    let get = A::GetSupplyFromDeposit { deposit: "Deposit_1".into(), supply: Supply::Water };
    let (out, _) = state.step_joint(std::slice::from_ref(&get)).unwrap();
    assert!(out.all_succeeded());
    assert_eq!(state.agents[0].inventory.water, 2);
    assert_eq!(state.deposits[0].stock.water, 0);
    let (out, _) = state.step_joint(&[get]).unwrap();
    assert!(out.agents[0].failure.as_deref().unwrap().contains("no water in stock"));
}

#[test]
fn extinguishing_every_cell_completes_the_subtask() {
    let (mut state, _) = WorldState::reset(&fixture(vec![Pos::new(0, 0)])).unwrap();
    for p in state.fires[0].region.clone() {
        state.grid.set(p, CellKind::Extinguished);
    }
    assert_eq!(state.ground_truth_subtasks()["extinguish Fire_1"], true);
}

#[test]
fn snapshot_lists_every_entity() {
    let (state, _) = WorldState::reset(&fixture(vec![Pos::new(0, 0), Pos::new(0, 1)])).unwrap();
    let lines: Vec<serde_json::Value> =
        state.snapshot_lines().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    // meta + 2 agents + 1 fire + 2 reservoirs + 1 deposit + 1 person
    assert_eq!(lines.len(), 8);
    assert_eq!(lines[0]["record"], "meta");
    assert_eq!(lines[3]["burning"][0], serde_json::json!([3, 6, 1]));
}
