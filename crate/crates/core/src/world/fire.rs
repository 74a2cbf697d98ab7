use rand::RngCore;

use super::{CellKind, Pos, WorldState};
use crate::action::Direction;

/// Threshold on a uniform `u32` draw that succeeds with probability `p`.
/// Computed once per draw site so the comparison itself is integer-only.
pub(crate) fn probability_threshold(p: f64) -> u64 {
    (p.clamp(0.0, 1.0) * 4_294_967_296.0).round() as u64
}

pub(crate) fn bernoulli(rng: &mut impl RngCore, threshold: u64) -> bool {
    u64::from(rng.next_u32()) < threshold
}

impl WorldState {
    /// One round of fire dynamics.
    ///
    /// Burning cells (snapshot taken before the round, row-major) first try to
    /// ignite each orthogonal, unburnt cell of their own region with
    /// probability `p_spread * intensity / 3`; then each snapshot cell below
    /// intensity 3 grows by one with probability `p_grow`. Cells ignited this
    /// round start at intensity 1 and neither spread nor grow until the next.
    pub fn spread_fires(&mut self) {
        let burning: Vec<(Pos, usize, u8)> = self
            .grid
            .positions()
            .filter_map(|p| match self.grid.get(p) {
                Some(CellKind::Flammable { fire, burning: true, intensity }) => Some((p, fire, intensity)),
                _ => None,
            })
            .collect();
        if burning.is_empty() {
            return;
        }
        let p_spread = self.constants.p_spread;
        for &(pos, fire, intensity) in &burning {
            let threshold = probability_threshold(p_spread * f64::from(intensity) / 3.0);
            for dir in Direction::CARDINAL {
                let n = pos.step(dir);
                if let Some(CellKind::Flammable { fire: nf, burning: false, .. }) = self.grid.get(n) {
                    if nf == fire && bernoulli(&mut self.rng, threshold) {
                        self.grid.set(n, CellKind::Flammable { fire, burning: true, intensity: 1 });
                    }
                }
            }
        }
        let grow = probability_threshold(self.constants.p_grow);
        for &(pos, fire, _) in &burning {
            if let Some(CellKind::Flammable { burning: true, intensity, .. }) = self.grid.get(pos) {
                if intensity < 3 && bernoulli(&mut self.rng, grow) {
                    self.grid.set(pos, CellKind::Flammable { fire, burning: true, intensity: intensity + 1 });
                }
            }
        }
    }
}
