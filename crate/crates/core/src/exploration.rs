//! Exploration heuristic: pick a random compass heading (multiples of π/4)
//! that neither repeats nor reverses the previous one and has open space
//! ahead, then walk up to `M` cells along it.

use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::world::{Grid, Pos, WorldState};

/// Draw budget before falling back to the most open heading.
pub const MAX_DRAWS: usize = 64;

/// Heading `k · π/4`, counter-clockwise from east: 0 = Right, 2 = Up,
/// 4 = Left, 6 = Down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Heading(u8);

impl Heading {
    pub const ALL: [Heading; 8] =
        [Heading(0), Heading(1), Heading(2), Heading(3), Heading(4), Heading(5), Heading(6), Heading(7)];

    /// Heading for `k · π/4`; `k` is taken mod 8.
    pub fn new(k: u8) -> Self {
        Heading(k % 8)
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn radians(self) -> f64 {
        f64::from(self.0) * std::f64::consts::FRAC_PI_4
    }

    pub fn opposite(self) -> Self {
        Heading((self.0 + 4) % 8)
    }

    /// (row, col) components of the heading, each in {-1, 0, 1}.
    fn components(self) -> (i32, i32) {
        match self.0 {
            0 => (0, 1),
            1 => (-1, 1),
            2 => (-1, 0),
            3 => (-1, -1),
            4 => (0, -1),
            5 => (1, -1),
            6 => (1, 0),
            _ => (1, 1),
        }
    }

    /// The `i`-th (0-based) unit move along this heading. Diagonals alternate
    /// a horizontal move and a vertical move, horizontal first.
    pub fn unit_move(self, i: u32) -> (i32, i32) {
        let (dr, dc) = self.components();
        if dr != 0 && dc != 0 {
            if i % 2 == 0 {
                (0, dc)
            } else {
                (dr, 0)
            }
        } else {
            (dr, dc)
        }
    }
}

impl fmt::Display for Heading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}deg", u32::from(self.0) * 45)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationConfig {
    pub explore_steps: u32,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self { explore_steps: 5 }
    }
}

impl ExplorationConfig {
    /// ⌈3M/4⌉: the clear distance a heading needs to be accepted.
    pub fn lookahead(&self) -> u32 {
        (3 * self.explore_steps).div_ceil(4)
    }
}

/// Number of unit moves possible from `from` along `heading` before a
/// barrier (impassable cell or grid edge), capped at `limit`.
pub fn clearance(grid: &Grid, from: Pos, heading: Heading, limit: u32) -> u32 {
    let mut at = from;
    for i in 0..limit {
        let (dr, dc) = heading.unit_move(i);
        let next = at.offset(dr, dc);
        if !grid.passable(next) {
            return i;
        }
        at = next;
    }
    limit
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectionChoice {
    pub heading: Heading,
    /// True when no heading was admissible and the most open one was taken.
    pub fallback: bool,
}

/// Rejection-samples a heading from `rng`.
///
/// A candidate is rejected if it equals `prev`, reverses `prev`, or meets a
/// barrier within ⌈3M/4⌉ moves. After [`MAX_DRAWS`] draws (or once all eight
/// headings were rejected) any never-drawn heading is checked in ascending
/// order; if none is admissible the heading with the farthest barrier wins,
/// ties going to the smaller angle.
pub fn choose_direction(
    grid: &Grid,
    from: Pos,
    prev: Option<Heading>,
    config: &ExplorationConfig,
    rng: &mut impl RngCore,
) -> DirectionChoice {
    let reach = config.lookahead();
    let admissible = |h: Heading| {
        Some(h) != prev && Some(h) != prev.map(Heading::opposite) && clearance(grid, from, h, reach) >= reach
    };
    let mut drawn = [false; 8];
    for _ in 0..MAX_DRAWS {
        let h = Heading::new((rng.next_u32() % 8) as u8);
        if admissible(h) {
            return DirectionChoice { heading: h, fallback: false };
        }
        drawn[h.0 as usize] = true;
        if drawn.iter().all(|&d| d) {
            break;
        }
    }
    if let Some(h) = Heading::ALL.into_iter().find(|h| !drawn[h.0 as usize] && admissible(*h)) {
        return DirectionChoice { heading: h, fallback: false };
    }
    let far = (grid.rows + grid.cols) as u32;
    let heading = Heading::ALL
        .into_iter()
        .max_by(|a, b| {
            clearance(grid, from, *a, far)
                .cmp(&clearance(grid, from, *b, far))
                .then(b.cmp(a))
        })
        .expect("eight headings");
    DirectionChoice { heading, fallback: true }
}

/// Cells an explore action walks through, in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplorePlan {
    pub heading: Heading,
    pub cells: Vec<Pos>,
    pub fallback: bool,
}

/// Chooses a heading for `agent` from the episode RNG and walks at most
/// `explore_steps` cells along it, stopping before the first barrier.
pub fn explore(state: &mut WorldState, agent: usize) -> ExplorePlan {
    let config = ExplorationConfig { explore_steps: state.constants.explore_steps };
    let from = state.agents[agent].position;
    let prev = state.agents[agent].last_explore_direction;
    let (grid, rng) = state.grid_and_rng();
    let choice = choose_direction(grid, from, prev, &config, rng);
    let mut cells = Vec::new();
    let mut at = from;
    for i in 0..config.explore_steps {
        let (dr, dc) = choice.heading.unit_move(i);
        let next = at.offset(dr, dc);
        if !grid.passable(next) {
            break;
        }
        cells.push(next);
        at = next;
    }
    ExplorePlan { heading: choice.heading, cells, fallback: choice.fallback }
}
