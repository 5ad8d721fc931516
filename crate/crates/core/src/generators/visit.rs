//! Closed-form values for Visitall colour goals on states whose visited set
//! holds at most the robot's own cell.
//!
//! Visit-1 (`∃x: C(x) ∧ Visited(x)`) costs the grid distance to the nearest
//! cell of colour `C`. Visit-Many with a colour multiset and no inequalities
//! costs the shortest walk that meets every listed colour; colours act as a
//! queue, so the walk is the best over orderings of the distinct colours.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::oracle::Cost;
use crate::strips::{Atom, ObjectId, PredId, Problem, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum VisitError {
    #[error("state has no robot position")]
    NoRobot,
    #[error("not a visitall problem")]
    WrongDomain,
}

struct Grid {
    adj: Vec<Vec<usize>>,
    robot: usize,
}

fn grid(problem: &Problem, state: &State) -> Result<Grid, VisitError> {
    let d = problem.domain();
    let conn = d.pred_id("connected").ok_or(VisitError::WrongDomain)?;
    let at = d.pred_id("at-robot").ok_or(VisitError::WrongDomain)?;
    let n = problem.num_objects();
    let mut adj = vec![Vec::new(); n];
    for a in state.with_pred(conn) {
        adj[a.args()[0].index()].push(a.args()[1].index());
    }
    let robot = state
        .with_pred(at)
        .next()
        .ok_or(VisitError::NoRobot)?
        .args()[0]
        .index();
    Ok(Grid { adj, robot })
}

fn distances_from(adj: &[Vec<usize>], src: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; adj.len()];
    dist[src] = Some(0);
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        let du = dist[u].unwrap_or(0);
        for &v in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                q.push_back(v);
            }
        }
    }
    dist
}

fn cells_of(problem: &Problem, state: &State, color: PredId) -> Vec<usize> {
    problem
        .object_ids()
        .filter(|&o: &ObjectId| state.contains(&Atom::new(color, &[o])))
        .map(ObjectId::index)
        .collect()
}

/// Distance from the robot to the nearest cell of `color`.
pub fn visit1_value(problem: &Problem, state: &State, color: PredId) -> Result<Cost, VisitError> {
    let g = grid(problem, state)?;
    let dist = distances_from(&g.adj, g.robot);
    Ok(cells_of(problem, state, color)
        .into_iter()
        .filter_map(|c| dist[c])
        .min()
        .map_or(Cost::DeadEnd, Cost::Finite))
}

/// Shortest walk from the robot meeting a cell of every colour in `colors`.
/// Minimizes over orderings of the distinct colours with exact dynamic
/// programming over stop positions.
pub fn visit_many_value(
    problem: &Problem,
    state: &State,
    colors: &[PredId],
) -> Result<Cost, VisitError> {
    let g = grid(problem, state)?;
    let mut distinct: Vec<PredId> = colors.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let stops: Vec<Vec<usize>> = distinct
        .iter()
        .map(|&c| cells_of(problem, state, c))
        .collect();
    if stops.iter().any(Vec::is_empty) {
        return Ok(Cost::DeadEnd);
    }
    let n = problem.num_objects();
    let all: Vec<Vec<Option<u32>>> = (0..n).map(|s| distances_from(&g.adj, s)).collect();
    let mut best: Option<u32> = None;
    let mut order: Vec<usize> = (0..distinct.len()).collect();
    permutations(&mut order, 0, &mut |perm| {
        // layer[c] = shortest walk ending at cell c having met colours perm[..i]
        let mut layer: Vec<(usize, u32)> = vec![(g.robot, 0)];
        for &ci in perm {
            let mut next = Vec::with_capacity(stops[ci].len());
            for &cell in &stops[ci] {
                let reach = layer
                    .iter()
                    .filter_map(|&(from, cost)| all[from][cell].map(|d| cost + d))
                    .min();
                if let Some(c) = reach {
                    next.push((cell, c));
                }
            }
            layer = next;
        }
        if let Some(c) = layer.iter().map(|&(_, c)| c).min() {
            best = Some(best.map_or(c, |b| b.min(c)));
        }
    });
    Ok(best.map_or(Cost::DeadEnd, Cost::Finite))
}

fn permutations(items: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, visit);
        items.swap(k, i);
    }
}
