//! Line-delimited state snapshots for debugging and golden tests.

use serde::Serialize;

use super::{CellKind, PersonStatus, Pos, SupplyCounts, WorldState};

#[derive(Debug, Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum SnapshotRecord<'a> {
    Meta { scene_id: &'a str, t: u32, rows: i32, cols: i32 },
    Agent {
        id: &'a str,
        position: Pos,
        inventory: SupplyCounts,
        carrying: Option<&'a str>,
        seen: Vec<&'a str>,
    },
    Fire { id: &'a str, class: String, burning: Vec<(i32, i32, u8)>, extinguished: Vec<Pos> },
    Reservoir { id: &'a str, supply: String, position: Pos },
    Deposit { id: &'a str, position: Pos, stock: SupplyCounts, rescued: Vec<&'a str> },
    Person { id: &'a str, position: Pos, status: PersonStatus, carriers: Vec<&'a str> },
}

impl WorldState {
    /// One JSON object per line: meta, agents, fires, reservoirs, deposits,
    /// persons. The RNG state is not included.
    pub fn snapshot_lines(&self) -> String {
        let mut records = vec![SnapshotRecord::Meta {
            scene_id: &self.scene_id,
            t: self.t,
            rows: self.grid.rows,
            cols: self.grid.cols,
        }];
        for a in &self.agents {
            records.push(SnapshotRecord::Agent {
                id: &a.id,
                position: a.position,
                inventory: a.inventory,
                carrying: a.carrying.map(|p| self.persons[p].id.as_str()),
                seen: a.seen.iter().map(String::as_str).collect(),
            });
        }
        for f in &self.fires {
            let mut burning = Vec::new();
            let mut extinguished = Vec::new();
            for &p in &f.region {
                match self.grid.get(p) {
                    Some(CellKind::Flammable { burning: true, intensity, .. }) => {
                        burning.push((p.row, p.col, intensity))
                    }
                    Some(CellKind::Extinguished) => extinguished.push(p),
                    _ => {}
                }
            }
            records.push(SnapshotRecord::Fire { id: &f.id, class: f.class.to_string(), burning, extinguished });
        }
        for r in &self.reservoirs {
            records.push(SnapshotRecord::Reservoir { id: &r.id, supply: r.supply.to_string(), position: r.position });
        }
        for d in &self.deposits {
            records.push(SnapshotRecord::Deposit {
                id: &d.id,
                position: d.position,
                stock: d.stock,
                rescued: d.rescued.iter().map(String::as_str).collect(),
            });
        }
        for p in &self.persons {
            records.push(SnapshotRecord::Person {
                id: &p.id,
                position: p.position,
                status: p.status,
                carriers: p.carriers.iter().map(|&c| self.agents[c].id.as_str()).collect(),
            });
        }
        let mut out = String::new();
        for r in records {
            out.push_str(&serde_json::to_string(&r).expect("snapshot records serialize"));
            out.push('\n');
        }
        out
    }
}
