//! Seeded grid-world simulator for the search & rescue scenario.
//!
//! A [`WorldState`] owns the terrain grid, every entity and the episode RNG.
//! All randomness (fire dynamics, exploration) is drawn from that RNG so a
//! fixed config plus a fixed joint-action sequence always reproduces the same
//! trajectory.

mod fire;
mod interact;
pub mod nav;
mod observe;
pub mod scene;
pub mod snapshot;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{Direction, HighLevelAction, Supply};
use crate::exploration::{self, Heading};

pub use observe::{
    DepositView, FireView, IntensityLevel, InventoryView, LocalCell, ObjectKind, ObservationBundle,
    PersonView, ReservoirView,
};
pub use scene::{build_scene, Constants, SceneConfig, SceneError};

/// Grid coordinate. Row 0 is the top edge, so `Up` decreases the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(i32, i32)", into = "(i32, i32)")]
pub struct Pos {
    pub row: i32,
    pub col: i32,
}

impl Pos {
    pub const fn new(row: i32, col: i32) -> Self {
        Self { row, col }
    }

    pub fn offset(self, dr: i32, dc: i32) -> Self {
        Self::new(self.row + dr, self.col + dc)
    }

    pub fn step(self, dir: Direction) -> Self {
        let (dr, dc) = dir.offset();
        self.offset(dr, dc)
    }

    pub fn chebyshev(self, other: Pos) -> i32 {
        (self.row - other.row).abs().max((self.col - other.col).abs())
    }
}

impl From<(i32, i32)> for Pos {
    fn from((row, col): (i32, i32)) -> Self {
        Self::new(row, col)
    }
}

impl From<Pos> for (i32, i32) {
    fn from(p: Pos) -> Self {
        (p.row, p.col)
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FireClass {
    A,
    B,
}

impl FireClass {
    /// The only supply that extinguishes this class.
    pub fn extinguisher(self) -> Supply {
        match self {
            FireClass::A => Supply::Water,
            FireClass::B => Supply::Sand,
        }
    }
}

impl fmt::Display for FireClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FireClass::A => "A",
            FireClass::B => "B",
        })
    }
}

/// Terrain layer of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellKind {
    Empty,
    Obstacle,
    /// Part of a fire region. `intensity` is 0 iff `burning` is false.
    Flammable { fire: usize, burning: bool, intensity: u8 },
    Extinguished,
    Reservoir(usize),
    Deposit(usize),
}

impl CellKind {
    pub fn is_burning(self) -> bool {
        matches!(self, CellKind::Flammable { burning: true, .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub rows: i32,
    pub cols: i32,
    cells: Vec<CellKind>,
}

impl Grid {
    pub fn new(rows: i32, cols: i32) -> Self {
        Self { rows, cols, cells: vec![CellKind::Empty; (rows * cols) as usize] }
    }

    pub fn in_bounds(&self, p: Pos) -> bool {
        p.row >= 0 && p.col >= 0 && p.row < self.rows && p.col < self.cols
    }

    fn index(&self, p: Pos) -> usize {
        (p.row * self.cols + p.col) as usize
    }

    /// Cell kind, or `None` outside the grid.
    pub fn get(&self, p: Pos) -> Option<CellKind> {
        self.in_bounds(p).then(|| self.cells[self.index(p)])
    }

    pub fn set(&mut self, p: Pos, kind: CellKind) {
        let i = self.index(p);
        self.cells[i] = kind;
    }

    /// Walkable: inside the grid and neither an obstacle, an object, nor on fire.
    pub fn passable(&self, p: Pos) -> bool {
        matches!(
            self.get(p),
            Some(CellKind::Empty)
                | Some(CellKind::Extinguished)
                | Some(CellKind::Flammable { burning: false, .. })
        )
    }

    /// All positions in row-major order.
    pub fn positions(&self) -> impl Iterator<Item = Pos> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| Pos::new(r, c)))
    }

    pub fn burning_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_burning()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FireInstance {
    pub id: String,
    pub class: FireClass,
    pub sources: BTreeSet<Pos>,
    pub region: BTreeSet<Pos>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reservoir {
    pub id: String,
    pub supply: Supply,
    pub position: Pos,
}

/// Per-type supply counts; the multiset of units an agent or deposit holds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupplyCounts {
    pub water: u32,
    pub sand: u32,
}

impl SupplyCounts {
    pub fn get(&self, s: Supply) -> u32 {
        match s {
            Supply::Water => self.water,
            Supply::Sand => self.sand,
        }
    }

    pub fn get_mut(&mut self, s: Supply) -> &mut u32 {
        match s {
            Supply::Water => &mut self.water,
            Supply::Sand => &mut self.sand,
        }
    }

    pub fn total(&self) -> u32 {
        self.water + self.sand
    }

    pub fn add(&mut self, other: SupplyCounts) {
        self.water += other.water;
        self.sand += other.sand;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deposit {
    pub id: String,
    pub position: Pos,
    pub stock: SupplyCounts,
    pub rescued: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PersonStatus {
    Lost,
    GroupCarried,
    DroppedOff,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Person {
    pub id: String,
    pub position: Pos,
    pub status: PersonStatus,
    /// Attached carriers as ascending agent indices.
    pub carriers: Vec<usize>,
    pub required_carriers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentBody {
    pub id: String,
    pub position: Pos,
    pub inventory: SupplyCounts,
    pub capacity: u32,
    /// Index of the person this agent is attached to.
    pub carrying: Option<usize>,
    pub seen: BTreeSet<String>,
    pub last_explore_direction: Option<Heading>,
}

/// Object id resolution into entity tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectRef {
    Fire(usize),
    Reservoir(usize),
    Deposit(usize),
    Person(usize),
}

/// Why an agent's action did not execute. The `Display` text is what the
/// planning loop shows to the corrector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Failure {
    UnknownObject(String),
    NotObserved(String),
    NoPath(String),
    NotInteractable(String),
    WrongKind { id: String, expected: &'static str },
    WrongSupplyClass { fire: String, class: FireClass, supply: Supply },
    NoSupply(Supply),
    InventoryFull,
    InventoryEmpty,
    DepositEmpty { deposit: String, supply: Supply },
    AlreadyCarrying(String),
    HandsBusy(String),
    PersonRescued(String),
    PersonAlreadyCarried(String),
    NotCarrier(String),
    NotGroupCarried(String),
    CarriersNotDropping(String),
    Blocked(Direction),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::UnknownObject(id) => write!(f, "unknown object {id}"),
            Failure::NotObserved(id) => write!(f, "object not yet observed; explore to find {id}"),
            Failure::NoPath(id) => write!(f, "no path to {id}"),
            Failure::NotInteractable(id) => write!(f, "not interactable: {id} is too far away"),
            Failure::WrongKind { id, expected } => write!(f, "{id} is not a {expected}"),
            Failure::WrongSupplyClass { fire, class, supply } => {
                write!(f, "wrong supply class: {fire} is class {class} and cannot be extinguished with {supply}")
            }
            Failure::NoSupply(s) => write!(f, "no {s} in inventory"),
            Failure::InventoryFull => f.write_str("inventory full"),
            Failure::InventoryEmpty => f.write_str("inventory empty"),
            Failure::DepositEmpty { deposit, supply } => write!(f, "{deposit} has no {supply} in stock"),
            Failure::AlreadyCarrying(p) => write!(f, "already carrying {p}"),
            Failure::HandsBusy(p) => write!(f, "hands busy carrying {p}"),
            Failure::PersonRescued(p) => write!(f, "{p} has already been rescued"),
            Failure::PersonAlreadyCarried(p) => write!(f, "{p} is already group-carried"),
            Failure::NotCarrier(p) => write!(f, "not carrying {p}"),
            Failure::NotGroupCarried(p) => write!(f, "{p} is not group-carried yet; more carriers needed"),
            Failure::CarriersNotDropping(p) => {
                write!(f, "not all carriers of {p} issued the same drop off this step")
            }
            Failure::Blocked(d) => write!(f, "blocked: cannot move {}", d.as_str().to_lowercase()),
        }
    }
}

/// Execution result of one agent's action in one joint step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentOutcome {
    pub agent: String,
    pub action: HighLevelAction,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Exactly one [`AgentOutcome`] per agent, in agent-index order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub t: u32,
    pub agents: Vec<AgentOutcome>,
}

impl StepOutcome {
    pub fn all_succeeded(&self) -> bool {
        self.agents.iter().all(|a| a.success)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error(transparent)]
    Scene(#[from] SceneError),
}

pub(crate) type ActionResult = Result<Option<String>, Failure>;

/// Complete simulator state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub scene_id: String,
    pub grid: Grid,
    pub fires: Vec<FireInstance>,
    pub reservoirs: Vec<Reservoir>,
    pub deposits: Vec<Deposit>,
    pub persons: Vec<Person>,
    pub agents: Vec<AgentBody>,
    pub t: u32,
    pub constants: Constants,
    objects: BTreeMap<String, ObjectRef>,
    rng: ChaCha8Rng,
}

/// Generated agent names: Alice, Bob, Charlie, ...
pub fn agent_name(index: usize) -> String {
    const NAMES: [&str; 10] =
        ["Alice", "Bob", "Charlie", "David", "Emma", "Frank", "Grace", "Henry", "Isla", "Jack"];
    NAMES.get(index).map(|s| s.to_string()).unwrap_or_else(|| format!("Agent_{}", index + 1))
}

impl WorldState {
    /// Builds the initial state (t = 0, sources burning at intensity 1) and
    /// renders the first observation of every agent.
    pub fn reset(config: &SceneConfig) -> Result<(Self, Vec<ObservationBundle>), WorldError> {
        config.validate()?;
        let c = &config.constants;
        let mut grid = Grid::new(config.grid.rows, config.grid.cols);
        for &p in &config.grid.obstacles {
            grid.set(p, CellKind::Obstacle);
        }
        let mut objects = BTreeMap::new();
        let mut fires = Vec::new();
        for (i, spec) in config.fires.iter().enumerate() {
            for &p in &spec.region {
                let burning = spec.sources.contains(&p);
                grid.set(p, CellKind::Flammable { fire: i, burning, intensity: u8::from(burning) });
            }
            objects.insert(spec.name.clone(), ObjectRef::Fire(i));
            fires.push(FireInstance {
                id: spec.name.clone(),
                class: spec.class,
                sources: spec.sources.iter().copied().collect(),
                region: spec.region.iter().copied().collect(),
            });
        }
        let mut reservoirs = Vec::new();
        for (i, spec) in config.reservoirs.iter().enumerate() {
            grid.set(spec.position, CellKind::Reservoir(i));
            objects.insert(spec.name.clone(), ObjectRef::Reservoir(i));
            reservoirs.push(Reservoir { id: spec.name.clone(), supply: spec.supply, position: spec.position });
        }
        let mut deposits = Vec::new();
        for (i, spec) in config.deposits.iter().enumerate() {
            grid.set(spec.position, CellKind::Deposit(i));
            objects.insert(spec.name.clone(), ObjectRef::Deposit(i));
            deposits.push(Deposit {
                id: spec.name.clone(),
                position: spec.position,
                stock: SupplyCounts { water: spec.water, sand: spec.sand },
                rescued: BTreeSet::new(),
            });
        }
        let persons = config
            .persons
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                objects.insert(spec.name.clone(), ObjectRef::Person(i));
                Person {
                    id: spec.name.clone(),
                    position: spec.position,
                    status: PersonStatus::Lost,
                    carriers: Vec::new(),
                    required_carriers: c.required_carriers,
                }
            })
            .collect();
        let agents = config
            .resolved_agent_starts()?
            .into_iter()
            .enumerate()
            .map(|(i, position)| AgentBody {
                id: agent_name(i),
                position,
                inventory: SupplyCounts::default(),
                capacity: c.capacity,
                carrying: None,
                seen: BTreeSet::new(),
                last_explore_direction: None,
            })
            .collect();
        let mut state = WorldState {
            scene_id: config.scene_id.clone(),
            grid,
            fires,
            reservoirs,
            deposits,
            persons,
            agents,
            t: 0,
            constants: c.clone(),
            objects,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        };
        let obs = state.observe_all();
        Ok((state, obs))
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agent_index(&self, name: &str) -> Option<usize> {
        self.agents.iter().position(|a| a.id == name)
    }

    pub fn lookup(&self, id: &str) -> Option<ObjectRef> {
        self.objects.get(id).copied()
    }

    /// Object ids in id order.
    pub fn object_ids(&self) -> impl Iterator<Item = &str> {
        self.objects.keys().map(String::as_str)
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn grid_and_rng(&mut self) -> (&Grid, &mut ChaCha8Rng) {
        (&self.grid, &mut self.rng)
    }

    /// Burning cells of one fire in row-major order.
    pub fn burning_cells(&self, fire: usize) -> Vec<Pos> {
        self.fires[fire]
            .region
            .iter()
            .copied()
            .filter(|&p| self.grid.get(p).is_some_and(CellKind::is_burning))
            .collect()
    }

    /// Advances one synchronous step: agent actions in ascending agent index,
    /// then fire dynamics once, then `t += 1`, then fresh observations.
    pub fn step_joint(
        &mut self,
        actions: &[HighLevelAction],
    ) -> Result<(StepOutcome, Vec<ObservationBundle>), WorldError> {
        if actions.len() != self.agents.len() {
            return Err(WorldError::ActionCount { expected: self.agents.len(), got: actions.len() });
        }
        let mut drops_this_step: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut outcomes = Vec::with_capacity(actions.len());
        for (i, action) in actions.iter().enumerate() {
            let result = self.apply_action(i, action, actions, &mut drops_this_step);
            let (success, failure, note) = match result {
                Ok(note) => (true, None, note),
                Err(f) => (false, Some(f.to_string()), None),
            };
            outcomes.push(AgentOutcome {
                agent: self.agents[i].id.clone(),
                action: action.clone(),
                success,
                failure,
                note,
            });
        }
        self.spread_fires();
        self.t += 1;
        let step = StepOutcome { t: self.t, agents: outcomes };
        let obs = self.observe_all();
        Ok((step, obs))
    }

    fn apply_action(
        &mut self,
        agent: usize,
        action: &HighLevelAction,
        joint: &[HighLevelAction],
        drops: &mut BTreeMap<usize, Vec<usize>>,
    ) -> ActionResult {
        match action {
            HighLevelAction::StayIdle | HighLevelAction::Done => Ok(None),
            HighLevelAction::Move { direction } => self.move_agent(agent, *direction),
            HighLevelAction::NavigateTo { target } => self.navigate_to(agent, target),
            HighLevelAction::Explore => self.explore_agent(agent),
            HighLevelAction::Carry { person } => self.carry(agent, person),
            HighLevelAction::DropOff { person, deposit } => self.drop_off(agent, person, deposit, joint, drops),
            HighLevelAction::StoreSupply { deposit } => self.store_supply(agent, deposit),
            HighLevelAction::UseSupply { fire, supply } => self.use_supply(agent, fire, *supply),
            HighLevelAction::GetSupplyFromDeposit { deposit, supply } => {
                self.get_from_deposit(agent, deposit, *supply)
            }
            HighLevelAction::GetSupplyFromReservoir { reservoir } => self.get_from_reservoir(agent, reservoir),
        }
    }

    /// How a movement request by `agent` is resolved with respect to carrying.
    fn movement_role(&mut self, agent: usize) -> MovementRole {
        let Some(p) = self.agents[agent].carrying else {
            return MovementRole::Solo;
        };
        let person = &self.persons[p];
        if person.status == PersonStatus::GroupCarried {
            if person.carriers.first() == Some(&agent) {
                MovementRole::LeadCarrier(p)
            } else {
                MovementRole::FollowCarrier
            }
        } else {
            // Walking away from a person who is not yet lifted releases them.
            self.persons[p].carriers.retain(|&c| c != agent);
            self.agents[agent].carrying = None;
            MovementRole::Solo
        }
    }

    /// Moves an agent, or the whole carry unit it leads, to `to`.
    fn relocate(&mut self, agent: usize, to: Pos, role: MovementRole) {
        match role {
            MovementRole::LeadCarrier(p) => {
                self.persons[p].position = to;
                for c in self.persons[p].carriers.clone() {
                    self.agents[c].position = to;
                }
            }
            _ => self.agents[agent].position = to,
        }
    }

    fn move_agent(&mut self, agent: usize, dir: Direction) -> ActionResult {
        if dir == Direction::Center {
            return Ok(None);
        }
        let role = self.movement_role(agent);
        if role == MovementRole::FollowCarrier {
            return Ok(Some(FOLLOW_NOTE.to_string()));
        }
        let to = self.agents[agent].position.step(dir);
        if !self.grid.passable(to) {
            return Err(Failure::Blocked(dir));
        }
        self.relocate(agent, to, role);
        Ok(None)
    }

    fn navigate_to(&mut self, agent: usize, target: &str) -> ActionResult {
        let obj = self.lookup(target).ok_or_else(|| Failure::UnknownObject(target.to_string()))?;
        if !self.agents[agent].seen.contains(target) {
            return Err(Failure::NotObserved(target.to_string()));
        }
        let role = self.movement_role(agent);
        if role == MovementRole::FollowCarrier {
            return Ok(Some(FOLLOW_NOTE.to_string()));
        }
        let from = self.agents[agent].position;
        if self.is_interactable(from, obj) {
            return Ok(Some("already next to target".to_string()));
        }
        let dest = nav::choose_destination(self, from, obj).ok_or_else(|| Failure::NoPath(target.to_string()))?;
        self.relocate(agent, dest, role);
        Ok(None)
    }

    fn explore_agent(&mut self, agent: usize) -> ActionResult {
        let role = self.movement_role(agent);
        if role == MovementRole::FollowCarrier {
            return Ok(Some(FOLLOW_NOTE.to_string()));
        }
        let plan = exploration::explore(self, agent);
        let moved = plan.cells.len();
        if let Some(&last) = plan.cells.last() {
            self.relocate(agent, last, role);
        }
        self.agents[agent].last_explore_direction = Some(plan.heading);
        if moved == 0 {
            Ok(Some("blocked on every side; moved 0 cells".to_string()))
        } else {
            Ok(Some(format!("explored {moved} cells heading {}", plan.heading)))
        }
    }

    /// Interactability predicate: Chebyshev distance at most one to the
    /// object (for fires: to any burning cell).
    pub fn is_interactable(&self, from: Pos, obj: ObjectRef) -> bool {
        match obj {
            ObjectRef::Fire(f) => self.burning_cells(f).iter().any(|&p| from.chebyshev(p) <= 1),
            ObjectRef::Reservoir(r) => from.chebyshev(self.reservoirs[r].position) <= 1,
            ObjectRef::Deposit(d) => from.chebyshev(self.deposits[d].position) <= 1,
            ObjectRef::Person(p) => {
                self.persons[p].status != PersonStatus::DroppedOff
                    && from.chebyshev(self.persons[p].position) <= 1
            }
        }
    }

    /// Evaluation oracle: one subtask per fire and per person, keyed
    /// `extinguish <fire>` / `rescue <person>`.
    pub fn ground_truth_subtasks(&self) -> BTreeMap<String, bool> {
        let mut out = BTreeMap::new();
        for (i, f) in self.fires.iter().enumerate() {
            out.insert(format!("extinguish {}", f.id), self.burning_cells(i).is_empty());
        }
        for p in &self.persons {
            out.insert(format!("rescue {}", p.id), p.status == PersonStatus::DroppedOff);
        }
        out
    }
}

const FOLLOW_NOTE: &str = "carry unit is moved by its lead carrier";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MovementRole {
    Solo,
    LeadCarrier(usize),
    FollowCarrier,
}

#[cfg(test)]
mod tests;
