use std::collections::BTreeMap;

use super::{ActionResult, CellKind, Failure, ObjectRef, PersonStatus, Pos, SupplyCounts, WorldState};
use crate::action::{HighLevelAction, Supply};

/// Order in which supply units are spent on burning cells around the agent.
const USE_ORDER: [(i32, i32); 9] = [
    (0, 0),
    (-1, 0),
    (1, 0),
    (0, -1),
    (0, 1),
    (-1, -1),
    (-1, 1),
    (1, -1),
    (1, 1),
];

impl WorldState {
    fn resolve(&self, id: &str, expected: &'static str) -> Result<ObjectRef, Failure> {
        let obj = self.lookup(id).ok_or_else(|| Failure::UnknownObject(id.to_string()))?;
        let ok = matches!(
            (obj, expected),
            (ObjectRef::Fire(_), "fire")
                | (ObjectRef::Person(_), "person")
                | (ObjectRef::Deposit(_), "deposit")
                | (ObjectRef::Reservoir(_), "reservoir")
        );
        if ok {
            Ok(obj)
        } else {
            Err(Failure::WrongKind { id: id.to_string(), expected })
        }
    }

    fn require_interactable(&self, agent: usize, obj: ObjectRef, id: &str) -> Result<(), Failure> {
        if self.is_interactable(self.agents[agent].position, obj) {
            Ok(())
        } else {
            Err(Failure::NotInteractable(id.to_string()))
        }
    }

    fn require_free_hands(&self, agent: usize) -> Result<(), Failure> {
        match self.agents[agent].carrying {
            Some(p) => Err(Failure::HandsBusy(self.persons[p].id.clone())),
            None => Ok(()),
        }
    }

    /// Attaches the agent to a person. Once enough carriers are attached the
    /// person is lifted and every carrier moves onto the person's cell.
    pub(super) fn carry(&mut self, agent: usize, person: &str) -> ActionResult {
        let ObjectRef::Person(p) = self.resolve(person, "person")? else { unreachable!() };
        if self.persons[p].status == PersonStatus::DroppedOff {
            return Err(Failure::PersonRescued(person.to_string()));
        }
        if let Some(held) = self.agents[agent].carrying {
            return Err(Failure::AlreadyCarrying(self.persons[held].id.clone()));
        }
        if self.persons[p].status == PersonStatus::GroupCarried {
            return Err(Failure::PersonAlreadyCarried(person.to_string()));
        }
        self.require_interactable(agent, ObjectRef::Person(p), person)?;

        let body = &mut self.agents[agent];
        let dropped = body.inventory.total();
        body.inventory = SupplyCounts::default();
        body.carrying = Some(p);
        let target = &mut self.persons[p];
        target.carriers.push(agent);
        target.carriers.sort_unstable();
        let attached = target.carriers.len();
        let mut note = if attached >= target.required_carriers {
            target.status = PersonStatus::GroupCarried;
            let at = target.position;
            for c in target.carriers.clone() {
                self.agents[c].position = at;
            }
            format!("{person} is now group-carried")
        } else {
            format!("attached to {person} ({attached}/{} carriers)", target.required_carriers)
        };
        if dropped > 0 {
            note.push_str(&format!("; dropped {dropped} supply unit(s)"));
        }
        Ok(Some(note))
    }

    /// Succeeds only when every carrier of the person issues the same
    /// `DropOff` in this joint step and the carry unit is next to the deposit.
    pub(super) fn drop_off(
        &mut self,
        agent: usize,
        person: &str,
        deposit: &str,
        joint: &[HighLevelAction],
        drops: &mut BTreeMap<usize, Vec<usize>>,
    ) -> ActionResult {
        let ObjectRef::Person(p) = self.resolve(person, "person")? else { unreachable!() };
        let ObjectRef::Deposit(d) = self.resolve(deposit, "deposit")? else { unreachable!() };
        if self.persons[p].status == PersonStatus::DroppedOff {
            return match drops.get(&p) {
                Some(carriers) if carriers.contains(&agent) => Ok(None),
                _ => Err(Failure::PersonRescued(person.to_string())),
            };
        }
        if self.agents[agent].carrying != Some(p) {
            return Err(Failure::NotCarrier(person.to_string()));
        }
        if self.persons[p].status != PersonStatus::GroupCarried {
            return Err(Failure::NotGroupCarried(person.to_string()));
        }
        self.require_interactable(agent, ObjectRef::Deposit(d), deposit)?;
        let expected = HighLevelAction::DropOff { person: person.to_string(), deposit: deposit.to_string() };
        let carriers = self.persons[p].carriers.clone();
        if !carriers.iter().all(|&c| joint.get(c) == Some(&expected)) {
            return Err(Failure::CarriersNotDropping(person.to_string()));
        }
        for &c in &carriers {
            self.agents[c].carrying = None;
        }
        let target = &mut self.persons[p];
        target.status = PersonStatus::DroppedOff;
        target.carriers.clear();
        target.position = self.deposits[d].position;
        self.deposits[d].rescued.insert(person.to_string());
        drops.insert(p, carriers);
        Ok(Some(format!("{person} dropped off at {deposit}")))
    }

    pub(super) fn store_supply(&mut self, agent: usize, deposit: &str) -> ActionResult {
        let obj = self.resolve(deposit, "deposit")?;
        let ObjectRef::Deposit(d) = obj else { unreachable!() };
        self.require_interactable(agent, obj, deposit)?;
        let inv = self.agents[agent].inventory;
        if inv.total() == 0 {
            return Err(Failure::InventoryEmpty);
        }
        self.deposits[d].stock.add(inv);
        self.agents[agent].inventory = SupplyCounts::default();
        Ok(Some(format!("stored {} unit(s)", inv.total())))
    }

    /// Spends one unit per burning cell of `fire` within reach, in the order
    /// Center, Up, Down, Left, Right, then the diagonals. Leftover units stay
    /// in the inventory.
    pub(super) fn use_supply(&mut self, agent: usize, fire: &str, supply: Supply) -> ActionResult {
        let obj = self.resolve(fire, "fire")?;
        let ObjectRef::Fire(f) = obj else { unreachable!() };
        self.require_interactable(agent, obj, fire)?;
        let class = self.fires[f].class;
        if class.extinguisher() != supply {
            return Err(Failure::WrongSupplyClass { fire: fire.to_string(), class, supply });
        }
        let units = self.agents[agent].inventory.get(supply);
        if units == 0 {
            return Err(Failure::NoSupply(supply));
        }
        let at = self.agents[agent].position;
        let targets: Vec<Pos> = USE_ORDER
            .iter()
            .map(|&(dr, dc)| at.offset(dr, dc))
            .filter(|&p| matches!(self.grid.get(p), Some(CellKind::Flammable { fire: id, burning: true, .. }) if id == f))
            .take(units as usize)
            .collect();
        for &p in &targets {
            self.grid.set(p, CellKind::Extinguished);
        }
        *self.agents[agent].inventory.get_mut(supply) -= targets.len() as u32;
        Ok(Some(format!("extinguished {} cell(s) of {fire}", targets.len())))
    }

    pub(super) fn get_from_deposit(&mut self, agent: usize, deposit: &str, supply: Supply) -> ActionResult {
        let obj = self.resolve(deposit, "deposit")?;
        let ObjectRef::Deposit(d) = obj else { unreachable!() };
        self.require_free_hands(agent)?;
        self.require_interactable(agent, obj, deposit)?;
        let body = &self.agents[agent];
        let space = body.capacity.saturating_sub(body.inventory.total());
        if space == 0 {
            return Err(Failure::InventoryFull);
        }
        let stock = self.deposits[d].stock.get(supply);
        if stock == 0 {
            return Err(Failure::DepositEmpty { deposit: deposit.to_string(), supply });
        }
        let taken = space.min(stock);
        *self.deposits[d].stock.get_mut(supply) -= taken;
        *self.agents[agent].inventory.get_mut(supply) += taken;
        Ok(Some(format!("took {taken} {supply}")))
    }

    pub(super) fn get_from_reservoir(&mut self, agent: usize, reservoir: &str) -> ActionResult {
        let obj = self.resolve(reservoir, "reservoir")?;
        let ObjectRef::Reservoir(r) = obj else { unreachable!() };
        self.require_free_hands(agent)?;
        self.require_interactable(agent, obj, reservoir)?;
        let body = &self.agents[agent];
        if body.inventory.total() >= body.capacity {
            return Err(Failure::InventoryFull);
        }
        let supply = self.reservoirs[r].supply;
        *self.agents[agent].inventory.get_mut(supply) += 1;
        Ok(Some(format!("collected 1 {supply}")))
    }
}
