//! Scene registry and config file format.
//!
//! Built-in scenes 1 to 5 are generated from a seed; custom scenes are read
//! from TOML files with the same schema that [`SceneConfig`] serializes to.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{nav, FireClass, Grid, Pos};
use crate::action::Supply;

/// Simulation constants. Every field has a default so config files only list
/// what they override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Constants {
    pub p_spread: f64,
    pub p_grow: f64,
    pub capacity: u32,
    #[serde(rename = "R")]
    pub visibility_radius: i32,
    pub required_carriers: usize,
    pub explore_steps: u32,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            p_spread: 0.25,
            p_grow: 0.10,
            capacity: 3,
            visibility_radius: 6,
            required_carriers: 2,
            explore_steps: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: i32,
    pub cols: i32,
    #[serde(default)]
    pub obstacles: Vec<Pos>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FireSpec {
    pub name: String,
    pub class: FireClass,
    pub sources: Vec<Pos>,
    pub region: Vec<Pos>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonSpec {
    pub name: String,
    pub position: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReservoirSpec {
    pub name: String,
    pub supply: Supply,
    pub position: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepositSpec {
    pub name: String,
    pub position: Pos,
    #[serde(default)]
    pub water: u32,
    #[serde(default)]
    pub sand: u32,
}

/// Fully resolved scene: every placement is explicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub scene_id: String,
    pub n_agents: usize,
    pub seed: u64,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Explicit agent start cells; when empty agents start around the first
    /// deposit.
    #[serde(default)]
    pub agent_starts: Vec<Pos>,
    #[serde(default)]
    pub constants: Constants,
    pub grid: GridSpec,
    #[serde(default)]
    pub fires: Vec<FireSpec>,
    #[serde(default)]
    pub persons: Vec<PersonSpec>,
    #[serde(default)]
    pub reservoirs: Vec<ReservoirSpec>,
    #[serde(default)]
    pub deposits: Vec<DepositSpec>,
}

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("unknown scene id `{0}` (built-in scenes are 1-5)")]
    UnknownScene(String),
    #[error("at least one agent is required")]
    NoAgents,
    #[error("placement conflict at {pos}: {what}")]
    Conflict { pos: Pos, what: String },
    #[error("{0} lies outside the grid")]
    OutOfBounds(String),
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("could not lay out scene {scene} with seed {seed}")]
    Layout { scene: String, seed: u64 },
    #[error("failed to read scene file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse scene file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("failed to serialize scene: {0}")]
    Serialize(#[from] toml::ser::Error),
}

/// Fire classes and source counts, plus lost persons, of a built-in scene.
struct SceneRecipe {
    fires: &'static [(FireClass, usize)],
    persons: usize,
}

fn recipe(scene_id: u32) -> Option<SceneRecipe> {
    use FireClass::{A, B};
    let r = match scene_id {
        1 => SceneRecipe { fires: &[(A, 2), (B, 1)], persons: 1 },
        2 => SceneRecipe { fires: &[(A, 1), (B, 2)], persons: 1 },
        3 => SceneRecipe { fires: &[(A, 1), (A, 1), (B, 1)], persons: 1 },
        4 => SceneRecipe { fires: &[(A, 3)], persons: 0 },
        5 => SceneRecipe { fires: &[(A, 1), (B, 1)], persons: 2 },
        _ => return None,
    };
    Some(r)
}

pub const DEFAULT_GRID: i32 = 16;
/// Fire regions are square blocks of this side length.
pub const REGION_SIDE: i32 = 3;
const LAYOUT_SALT: u64 = 0x5eed_1a70_u64;

/// Builds the resolved config of a built-in scene. All placements are drawn
/// from `seed`, so equal arguments always give equal configs.
pub fn build_scene(scene_id: u32, n_agents: usize, seed: u64) -> Result<SceneConfig, SceneError> {
    let recipe = recipe(scene_id).ok_or_else(|| SceneError::UnknownScene(scene_id.to_string()))?;
    if n_agents == 0 {
        return Err(SceneError::NoAgents);
    }
    let constants = Constants::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ LAYOUT_SALT);
    let mut layout = Layout::new(DEFAULT_GRID, DEFAULT_GRID);

    let deposit = layout
        .place(&mut rng, 1, |p| p.row >= 4 && p.row < DEFAULT_GRID - 4 && p.col >= 4 && p.col < DEFAULT_GRID - 4)
        .ok_or_else(|| layout_err(scene_id, seed))?;

    let mut fires = Vec::new();
    let mut a_count = 0;
    let mut b_count = 0;
    for &(class, n_sources) in recipe.fires {
        let region = layout.place_region(&mut rng, deposit).ok_or_else(|| layout_err(scene_id, seed))?;
        let mut pool = region.clone();
        let mut sources = Vec::new();
        for _ in 0..n_sources {
            let i = rng.random_range(0..pool.len());
            sources.push(pool.swap_remove(i));
        }
        sources.sort();
        let name = match class {
            FireClass::A => {
                a_count += 1;
                format!("FireA_{a_count}")
            }
            FireClass::B => {
                b_count += 1;
                format!("FireB_{b_count}")
            }
        };
        fires.push(FireSpec { name, class, sources, region });
    }

    let mut reservoirs = Vec::new();
    for supply in Supply::ALL {
        let position = layout.place(&mut rng, 1, |_| true).ok_or_else(|| layout_err(scene_id, seed))?;
        let name = match supply {
            Supply::Water => "WaterReservoir_1",
            Supply::Sand => "SandReservoir_1",
        };
        reservoirs.push(ReservoirSpec { name: name.to_string(), supply, position });
    }

    let mut persons = Vec::new();
    for i in 0..recipe.persons {
        let position = layout.place(&mut rng, 1, |_| true).ok_or_else(|| layout_err(scene_id, seed))?;
        layout.free_standing.insert(position);
        persons.push(PersonSpec { name: format!("Person_{}", i + 1), position });
    }

    let agent_starts = layout.agent_starts(deposit, n_agents).ok_or_else(|| layout_err(scene_id, seed))?;
    let obstacles = layout.scatter_obstacles(&mut rng, (DEFAULT_GRID * DEFAULT_GRID / 20) as usize);

    let mut warnings = Vec::new();
    if recipe.persons > 0 && n_agents < constants.required_carriers {
        warnings.push(format!(
            "n_agents = {n_agents} is below required_carriers = {}; rescue subtasks are unreachable",
            constants.required_carriers
        ));
    }
    let config = SceneConfig {
        scene_id: scene_id.to_string(),
        n_agents,
        seed,
        warnings,
        agent_starts,
        constants,
        grid: GridSpec { rows: DEFAULT_GRID, cols: DEFAULT_GRID, obstacles },
        fires,
        persons,
        reservoirs,
        deposits: vec![DepositSpec { name: "Deposit_1".to_string(), position: deposit, water: 0, sand: 0 }],
    };
    config.validate()?;
    Ok(config)
}

fn layout_err(scene: u32, seed: u64) -> SceneError {
    SceneError::Layout { scene: scene.to_string(), seed }
}

/// Occupancy bookkeeping for procedural placement.
struct Layout {
    rows: i32,
    cols: i32,
    /// Cells holding an object, region cell or obstacle.
    taken: BTreeSet<Pos>,
    /// Occupied cells agents can still stand on (lost persons).
    free_standing: BTreeSet<Pos>,
    regions: BTreeSet<Pos>,
    agents: BTreeSet<Pos>,
}

impl Layout {
    fn new(rows: i32, cols: i32) -> Self {
        Self {
            rows,
            cols,
            taken: BTreeSet::new(),
            free_standing: BTreeSet::new(),
            regions: BTreeSet::new(),
            agents: BTreeSet::new(),
        }
    }

    fn in_bounds(&self, p: Pos) -> bool {
        p.row >= 0 && p.col >= 0 && p.row < self.rows && p.col < self.cols
    }

    fn clear_around(&self, p: Pos, margin: i32) -> bool {
        self.taken.iter().all(|&q| q.chebyshev(p) > margin)
    }

    /// Draws a free cell at Chebyshev distance > `margin` from everything
    /// already placed.
    fn place(&mut self, rng: &mut ChaCha8Rng, margin: i32, accept: impl Fn(Pos) -> bool) -> Option<Pos> {
        for _ in 0..500 {
            let p = Pos::new(rng.random_range(0..self.rows), rng.random_range(0..self.cols));
            if accept(p) && self.clear_around(p, margin) {
                self.taken.insert(p);
                return Some(p);
            }
        }
        None
    }

    /// A square block kept away from the grid edge, other objects and the
    /// deposit's surroundings.
    fn place_region(&mut self, rng: &mut ChaCha8Rng, deposit: Pos) -> Option<Vec<Pos>> {
        for _ in 0..500 {
            let top = rng.random_range(1..self.rows - REGION_SIDE);
            let left = rng.random_range(1..self.cols - REGION_SIDE);
            let cells: Vec<Pos> = (0..REGION_SIDE)
                .flat_map(|r| (0..REGION_SIDE).map(move |c| Pos::new(top + r, left + c)))
                .collect();
            if cells.iter().all(|&p| self.clear_around(p, 1) && p.chebyshev(deposit) > 3) {
                self.taken.extend(cells.iter().copied());
                self.regions.extend(cells.iter().copied());
                return Some(cells);
            }
        }
        None
    }

    fn walkable(&self, p: Pos) -> bool {
        self.in_bounds(p) && (!self.taken.contains(&p) || self.free_standing.contains(&p))
    }

    /// Walkable cells closest to the deposit, ring by ring, row-major within
    /// a ring.
    fn agent_starts(&mut self, deposit: Pos, n: usize) -> Option<Vec<Pos>> {
        let mut out = Vec::new();
        for ring in 1..self.rows.max(self.cols) {
            for dr in -ring..=ring {
                for dc in -ring..=ring {
                    let p = deposit.offset(dr, dc);
                    if p.chebyshev(deposit) == ring
                        && self.walkable(p)
                        && !self.free_standing.contains(&p)
                        && !self.agents.contains(&p)
                    {
                        out.push(p);
                        self.agents.insert(p);
                        if out.len() == n {
                            return Some(out);
                        }
                    }
                }
            }
        }
        None
    }

    /// Places obstacles one at a time, skipping any draw that would cut a
    /// walkable cell off from the agents or wall in an object.
    fn scatter_obstacles(&mut self, rng: &mut ChaCha8Rng, count: usize) -> Vec<Pos> {
        let mut obstacles = Vec::new();
        let mut attempts = 0;
        while obstacles.len() < count && attempts < count * 20 {
            attempts += 1;
            let p = Pos::new(rng.random_range(0..self.rows), rng.random_range(0..self.cols));
            if !self.walkable(p) || self.free_standing.contains(&p) || self.agents.contains(&p) {
                continue;
            }
            self.taken.insert(p);
            if self.connected() {
                obstacles.push(p);
            } else {
                self.taken.remove(&p);
            }
        }
        obstacles.sort();
        obstacles
    }

    /// Every walkable cell is reachable from every other, and every placed
    /// object keeps at least one walkable orthogonal neighbour.
    fn connected(&self) -> bool {
        let mut grid = Grid::new(self.rows, self.cols);
        for &p in &self.taken {
            if !self.free_standing.contains(&p) {
                grid.set(p, super::CellKind::Obstacle);
            }
        }
        let Some(start) = grid.positions().find(|&p| grid.passable(p)) else {
            return false;
        };
        let dist = nav::distances(&grid, start);
        let reachable = |p: Pos| grid.in_bounds(p) && dist[(p.row * self.cols + p.col) as usize].is_some();
        if grid.positions().any(|p| grid.passable(p) && !reachable(p)) {
            return false;
        }
        self.taken.iter().all(|&p| {
            crate::action::Direction::CARDINAL.iter().any(|&d| reachable(p.step(d)))
        })
    }
}

impl SceneConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SceneError> {
        let config: SceneConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, SceneError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String, SceneError> {
        Ok(toml::to_string(self)?)
    }

    /// Resolves a scene argument: a built-in id (`1`..`5`) or a config path.
    /// A config file takes `seed`, and `n_agents` unless it pins agent
    /// starts, in which case the counts must agree.
    pub fn resolve(spec: &str, n_agents: usize, seed: u64) -> Result<Self, SceneError> {
        match spec.parse::<u32>() {
            Ok(id) => build_scene(id, n_agents, seed),
            Err(_) => {
                let path = Path::new(spec);
                if !path.exists() {
                    return Err(SceneError::UnknownScene(spec.to_string()));
                }
                let mut config = Self::load(path)?;
                config.seed = seed;
                if config.agent_starts.is_empty() {
                    config.n_agents = n_agents;
                } else if config.agent_starts.len() != n_agents {
                    return Err(SceneError::Invalid(format!(
                        "{spec} pins {} agent starts, {n_agents} agents requested",
                        config.agent_starts.len()
                    )));
                }
                config.validate()?;
                Ok(config)
            }
        }
    }

    /// Agent start cells: explicit ones, or walkable cells around the first
    /// deposit.
    pub fn resolved_agent_starts(&self) -> Result<Vec<Pos>, SceneError> {
        if !self.agent_starts.is_empty() {
            return Ok(self.agent_starts.clone());
        }
        let mut layout = Layout::new(self.grid.rows, self.grid.cols);
        for p in self.occupied_cells().into_iter().map(|(p, _)| p) {
            layout.taken.insert(p);
        }
        for person in &self.persons {
            layout.free_standing.insert(person.position);
        }
        let deposit = self
            .deposits
            .first()
            .map(|d| d.position)
            .ok_or_else(|| SceneError::Invalid("agent_starts is empty and there is no deposit".into()))?;
        layout
            .agent_starts(deposit, self.n_agents)
            .ok_or_else(|| SceneError::Invalid("not enough free cells for agents".into()))
    }

    fn occupied_cells(&self) -> Vec<(Pos, String)> {
        let mut cells = Vec::new();
        cells.extend(self.grid.obstacles.iter().map(|&p| (p, "obstacle".to_string())));
        for f in &self.fires {
            cells.extend(f.region.iter().map(|&p| (p, format!("region of {}", f.name))));
        }
        cells.extend(self.reservoirs.iter().map(|r| (r.position, r.name.clone())));
        cells.extend(self.deposits.iter().map(|d| (d.position, d.name.clone())));
        cells.extend(self.persons.iter().map(|p| (p.position, p.name.clone())));
        cells
    }

    /// Structural checks: bounds, unique names, one entity per cell,
    /// sources inside regions.
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.n_agents == 0 {
            return Err(SceneError::NoAgents);
        }
        if self.grid.rows <= 0 || self.grid.cols <= 0 {
            return Err(SceneError::Invalid("grid dimensions must be positive".into()));
        }
        let c = &self.constants;
        if !(0.0..=1.0).contains(&c.p_spread) || !(0.0..=1.0).contains(&c.p_grow) {
            return Err(SceneError::Invalid("probabilities must lie in [0, 1]".into()));
        }
        if c.required_carriers == 0 || c.capacity == 0 || c.visibility_radius < 1 {
            return Err(SceneError::Invalid(
                "required_carriers, capacity and R must be positive".into(),
            ));
        }
        if c.explore_steps < 2 {
            return Err(SceneError::Invalid("explore_steps must be at least 2".into()));
        }
        let grid = Grid::new(self.grid.rows, self.grid.cols);
        let mut seen: std::collections::BTreeMap<Pos, String> = Default::default();
        for (p, what) in self.occupied_cells() {
            if !grid.in_bounds(p) {
                return Err(SceneError::OutOfBounds(format!("{what} at {p}")));
            }
            if let Some(prev) = seen.insert(p, what.clone()) {
                return Err(SceneError::Conflict { pos: p, what: format!("{prev} and {what}") });
            }
        }
        let mut names = BTreeSet::new();
        let all_names = self
            .fires
            .iter()
            .map(|f| &f.name)
            .chain(self.reservoirs.iter().map(|r| &r.name))
            .chain(self.deposits.iter().map(|d| &d.name))
            .chain(self.persons.iter().map(|p| &p.name));
        for n in all_names {
            if n.trim().is_empty() || !names.insert(n.clone()) {
                return Err(SceneError::Invalid(format!("object name `{n}` is empty or duplicated")));
            }
        }
        for f in &self.fires {
            if f.sources.is_empty() {
                return Err(SceneError::Invalid(format!("{} has no sources", f.name)));
            }
            if let Some(s) = f.sources.iter().find(|s| !f.region.contains(s)) {
                return Err(SceneError::Invalid(format!("source {s} of {} is outside its region", f.name)));
            }
        }
        if !self.agent_starts.is_empty() {
            if self.agent_starts.len() != self.n_agents {
                return Err(SceneError::Invalid(format!(
                    "{} agent starts for {} agents",
                    self.agent_starts.len(),
                    self.n_agents
                )));
            }
            let mut starts = BTreeSet::new();
            for &p in &self.agent_starts {
                if !grid.in_bounds(p) {
                    return Err(SceneError::OutOfBounds(format!("agent start {p}")));
                }
                if !starts.insert(p) {
                    return Err(SceneError::Conflict { pos: p, what: "two agents".into() });
                }
                if let Some(what) = seen.get(&p) {
                    return Err(SceneError::Conflict { pos: p, what: format!("agent and {what}") });
                }
            }
        }
        Ok(())
    }

    /// Task text given to the language model.
    pub fn instruction(&self) -> String {
        let a = self.fires.iter().filter(|f| f.class == FireClass::A).count();
        let b = self.fires.len() - a;
        let deposit = self.deposits.first().map(|d| d.name.as_str()).unwrap_or("a deposit");
        let mut text = format!(
            "There are {} fire(s) ({a} of class A, {b} of class B) and {} lost person(s) in the area. \
             Extinguish every fire",
            self.fires.len(),
            self.persons.len()
        );
        if self.persons.is_empty() {
            text.push('.');
        } else {
            text.push_str(&format!(" and rescue every lost person by carrying them to {deposit}."));
        }
        text
    }
}
