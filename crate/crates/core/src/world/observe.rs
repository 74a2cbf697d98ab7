use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{CellKind, FireClass, ObjectRef, PersonStatus, WorldState};
use crate::action::{Direction, Supply};

/// Average burning intensity of a fire, bucketed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntensityLevel {
    Extinguished,
    Low,
    Medium,
    High,
}

impl IntensityLevel {
    /// Buckets `sum / count` at 1.5 and 2.5 using integer arithmetic.
    pub fn from_sum(sum: u32, count: u32) -> Self {
        if count == 0 {
            IntensityLevel::Extinguished
        } else if 2 * sum < 3 * count {
            IntensityLevel::Low
        } else if 2 * sum < 5 * count {
            IntensityLevel::Medium
        } else {
            IntensityLevel::High
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            IntensityLevel::Extinguished => "extinguished",
            IntensityLevel::Low => "low",
            IntensityLevel::Medium => "medium",
            IntensityLevel::High => "high",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FireView {
    pub name: String,
    pub class: FireClass,
    pub intensity: IntensityLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReservoirView {
    pub name: String,
    pub supply: Supply,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepositView {
    pub name: String,
    pub water: u32,
    pub sand: u32,
    pub persons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonView {
    pub name: String,
    pub carried: bool,
    pub dropped_off: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InventoryView {
    pub water: u32,
    pub sand: u32,
    pub capacity: u32,
    pub carrying: Option<String>,
}

/// What an agent sees in one of the five local cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocalCell {
    Empty,
    Flammable { fire: String, intensity: u8 },
    Obstacle,
}

impl LocalCell {
    fn render(&self) -> String {
        match self {
            LocalCell::Empty => "Empty".to_string(),
            LocalCell::Flammable { fire, intensity } => format!("Flammable({fire}, intensity {intensity})"),
            LocalCell::Obstacle => "Obstacle".to_string(),
        }
    }
}

/// Object category as remembered in an agent's seen set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ObjectKind {
    Fire { class: FireClass },
    Reservoir { supply: Supply },
    Deposit,
    Person,
}

/// Per-agent textual observation: global view, five-cell neighborhood,
/// interactable names, plus every object the agent has ever seen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationBundle {
    pub agent: String,
    pub fires: Vec<FireView>,
    pub reservoirs: Vec<ReservoirView>,
    pub deposits: Vec<DepositView>,
    pub persons: Vec<PersonView>,
    pub inventory: InventoryView,
    pub local: Vec<(Direction, LocalCell)>,
    pub names: Vec<String>,
    pub known: BTreeMap<String, ObjectKind>,
}

impl ObservationBundle {
    /// Every object id mentioned in the global or names sections.
    pub fn mentioned_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self
            .fires
            .iter()
            .map(|f| f.name.as_str())
            .chain(self.reservoirs.iter().map(|r| r.name.as_str()))
            .chain(self.deposits.iter().map(|d| d.name.as_str()))
            .chain(self.persons.iter().map(|p| p.name.as_str()))
            .chain(self.names.iter().map(String::as_str))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Prompt text for this observation.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let list = |items: Vec<String>| if items.is_empty() { "none".to_string() } else { items.join(", ") };
        let _ = writeln!(
            s,
            "  Fires: {}",
            list(self
                .fires
                .iter()
                .map(|f| format!("{} (class {}, average intensity {})", f.name, f.class, f.intensity.as_str()))
                .collect())
        );
        let _ = writeln!(
            s,
            "  Reservoirs: {}",
            list(self.reservoirs.iter().map(|r| format!("{} ({})", r.name, r.supply)).collect())
        );
        let _ = writeln!(
            s,
            "  Deposits: {}",
            list(self
                .deposits
                .iter()
                .map(|d| {
                    format!(
                        "{} (water: {}, sand: {}, persons: {})",
                        d.name,
                        d.water,
                        d.sand,
                        if d.persons.is_empty() { "none".to_string() } else { d.persons.join(", ") }
                    )
                })
                .collect())
        );
        let _ = writeln!(
            s,
            "  Persons: {}",
            list(self
                .persons
                .iter()
                .map(|p| {
                    let status = if p.dropped_off {
                        "dropped off"
                    } else if p.carried {
                        "carried"
                    } else {
                        "not carried"
                    };
                    format!("{} ({status})", p.name)
                })
                .collect())
        );
        let inv = &self.inventory;
        let _ = writeln!(
            s,
            "  Inventory: water {}, sand {} (capacity {}); carrying: {}",
            inv.water,
            inv.sand,
            inv.capacity,
            inv.carrying.as_deref().unwrap_or("nobody")
        );
        let _ = writeln!(
            s,
            "  Local: {}",
            self.local.iter().map(|(d, c)| format!("{d}={}", c.render())).collect::<Vec<_>>().join(", ")
        );
        let _ = writeln!(s, "  Interactable: {}", list(self.names.clone()));
        let _ = write!(s, "  Known objects: {}", list(self.known.keys().cloned().collect()));
        s
    }
}

impl WorldState {
    fn object_kind(&self, obj: ObjectRef) -> ObjectKind {
        match obj {
            ObjectRef::Fire(f) => ObjectKind::Fire { class: self.fires[f].class },
            ObjectRef::Reservoir(r) => ObjectKind::Reservoir { supply: self.reservoirs[r].supply },
            ObjectRef::Deposit(_) => ObjectKind::Deposit,
            ObjectRef::Person(_) => ObjectKind::Person,
        }
    }

    /// Whether `agent` currently sees the object (Chebyshev radius R; deposits
    /// are always visible).
    pub fn is_visible(&self, agent: usize, obj: ObjectRef) -> bool {
        let at = self.agents[agent].position;
        let r = self.constants.visibility_radius;
        match obj {
            ObjectRef::Fire(f) => self.fires[f].region.iter().any(|&p| at.chebyshev(p) <= r),
            ObjectRef::Reservoir(i) => at.chebyshev(self.reservoirs[i].position) <= r,
            ObjectRef::Deposit(_) => true,
            ObjectRef::Person(p) => at.chebyshev(self.persons[p].position) <= r,
        }
    }

    /// Renders the observation of one agent and adds everything it sees to
    /// its seen set.
    pub fn observe(&mut self, agent: usize) -> ObservationBundle {
        let at = self.agents[agent].position;
        let mut fires = Vec::new();
        let mut reservoirs = Vec::new();
        let mut deposits = Vec::new();
        let mut persons = Vec::new();
        let mut names = Vec::new();
        let mut newly_seen = Vec::new();
        for (id, &obj) in &self.objects {
            if !self.is_visible(agent, obj) {
                continue;
            }
            newly_seen.push(id.clone());
            if self.is_interactable(at, obj) {
                names.push(id.clone());
            }
            match obj {
                ObjectRef::Fire(f) => {
                    let burning = self.burning_cells(f);
                    let sum: u32 = burning
                        .iter()
                        .map(|&p| match self.grid.get(p) {
                            Some(CellKind::Flammable { intensity, .. }) => u32::from(intensity),
                            _ => 0,
                        })
                        .sum();
                    fires.push(FireView {
                        name: id.clone(),
                        class: self.fires[f].class,
                        intensity: IntensityLevel::from_sum(sum, burning.len() as u32),
                    });
                }
                ObjectRef::Reservoir(r) => {
                    reservoirs.push(ReservoirView { name: id.clone(), supply: self.reservoirs[r].supply })
                }
                ObjectRef::Deposit(d) => {
                    let dep = &self.deposits[d];
                    deposits.push(DepositView {
                        name: id.clone(),
                        water: dep.stock.water,
                        sand: dep.stock.sand,
                        persons: dep.rescued.iter().cloned().collect(),
                    });
                }
                ObjectRef::Person(p) => {
                    let person = &self.persons[p];
                    persons.push(PersonView {
                        name: id.clone(),
                        carried: person.status == PersonStatus::GroupCarried,
                        dropped_off: person.status == PersonStatus::DroppedOff,
                    });
                }
            }
        }
        let local = Direction::LOCAL_ORDER
            .iter()
            .map(|&d| {
                let cell = match self.grid.get(at.step(d)) {
                    Some(CellKind::Empty) | Some(CellKind::Extinguished) => LocalCell::Empty,
                    Some(CellKind::Flammable { fire, intensity, .. }) => {
                        LocalCell::Flammable { fire: self.fires[fire].id.clone(), intensity }
                    }
                    _ => LocalCell::Obstacle,
                };
                (d, cell)
            })
            .collect();
        let body = &mut self.agents[agent];
        body.seen.extend(newly_seen);
        let inventory = InventoryView {
            water: body.inventory.water,
            sand: body.inventory.sand,
            capacity: body.capacity,
            carrying: body.carrying.map(|p| self.persons[p].id.clone()),
        };
        let known = body
            .seen
            .iter()
            .filter_map(|id| self.objects.get(id).map(|&o| (id.clone(), o)))
            .collect::<Vec<_>>()
            .into_iter()
            .map(|(id, o)| (id, self.object_kind(o)))
            .collect();
        ObservationBundle {
            agent: self.agents[agent].id.clone(),
            fires,
            reservoirs,
            deposits,
            persons,
            inventory,
            local,
            names,
            known,
        }
    }

    pub fn observe_all(&mut self) -> Vec<ObservationBundle> {
        (0..self.agents.len()).map(|i| self.observe(i)).collect()
    }
}
