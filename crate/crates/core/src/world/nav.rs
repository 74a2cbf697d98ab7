//! Breadth-first shortest paths on the 4-connected grid.

use std::collections::VecDeque;

use super::{Grid, ObjectRef, Pos, WorldState};
use crate::action::Direction;

/// Path length from `from` to every cell reachable through passable cells.
/// The start cell is always expanded, even if it is no longer passable.
pub fn distances(grid: &Grid, from: Pos) -> Vec<Option<u32>> {
    let mut dist = vec![None; (grid.rows * grid.cols) as usize];
    if !grid.in_bounds(from) {
        return dist;
    }
    let idx = |p: Pos| (p.row * grid.cols + p.col) as usize;
    dist[idx(from)] = Some(0);
    let mut queue = VecDeque::from([from]);
    while let Some(p) = queue.pop_front() {
        let d = dist[idx(p)].unwrap_or(0);
        for dir in Direction::CARDINAL {
            let n = p.step(dir);
            if grid.passable(n) && dist[idx(n)].is_none() {
                dist[idx(n)] = Some(d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

/// A shortest 4-connected path from `from` to the first cell satisfying
/// `goal` (ties broken by BFS expansion order Up, Down, Left, Right).
/// The returned path includes both endpoints.
pub fn shortest_path(grid: &Grid, from: Pos, goal: impl Fn(Pos) -> bool) -> Option<Vec<Pos>> {
    if !grid.in_bounds(from) {
        return None;
    }
    let idx = |p: Pos| (p.row * grid.cols + p.col) as usize;
    let mut parent: Vec<Option<Pos>> = vec![None; (grid.rows * grid.cols) as usize];
    let mut visited = vec![false; parent.len()];
    visited[idx(from)] = true;
    let mut queue = VecDeque::from([from]);
    while let Some(p) = queue.pop_front() {
        if goal(p) {
            let mut path = vec![p];
            let mut cur = p;
            while let Some(prev) = parent[idx(cur)] {
                path.push(prev);
                cur = prev;
            }
            path.reverse();
            return Some(path);
        }
        for dir in Direction::CARDINAL {
            let n = p.step(dir);
            if grid.passable(n) && !visited[idx(n)] {
                visited[idx(n)] = true;
                parent[idx(n)] = Some(p);
                queue.push_back(n);
            }
        }
    }
    None
}

/// Destination cell for `NavigateTo(obj)` starting at `from`.
///
/// Candidates are reachable passable cells from which the object is
/// interactable. For fires the cell covering the most burning cells wins;
/// remaining ties go to the shorter path, then row-major order.
pub(crate) fn choose_destination(state: &WorldState, from: Pos, obj: ObjectRef) -> Option<Pos> {
    let dist = distances(&state.grid, from);
    let cols = state.grid.cols;
    let anchors: Vec<Pos> = match obj {
        ObjectRef::Fire(f) => {
            let burning = state.burning_cells(f);
            if burning.is_empty() {
                state.fires[f].region.iter().copied().collect()
            } else {
                burning
            }
        }
        ObjectRef::Reservoir(r) => vec![state.reservoirs[r].position],
        ObjectRef::Deposit(d) => vec![state.deposits[d].position],
        ObjectRef::Person(p) => vec![state.persons[p].position],
    };
    let coverage = |p: Pos| anchors.iter().filter(|&&a| a.chebyshev(p) <= 1).count();
    state
        .grid
        .positions()
        .filter_map(|p| {
            let d = dist[(p.row * cols + p.col) as usize]?;
            let cover = coverage(p);
            let on_object = anchors.contains(&p) && !matches!(obj, ObjectRef::Fire(_));
            (cover > 0 && !on_object).then_some((p, d, cover))
        })
        .min_by(|a, b| {
            let fire_rank = matches!(obj, ObjectRef::Fire(_));
            let ka = if fire_rank { a.2 } else { 0 };
            let kb = if fire_rank { b.2 } else { 0 };
            kb.cmp(&ka).then(a.1.cmp(&b.1)).then(a.0.cmp(&b.0))
        })
        .map(|(p, _, _)| p)
}
