//! Exact optimal costs `V*(s, G)` by breadth-first search.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::goal::{enumerate_valid_bindings, satisfies, QuantifiedGoal};
use crate::search::{bfs, NodeLimit, Outcome};
use crate::strips::{State, Task};
use crate::FxMap;

/// Default exploration cap in states.
pub const DEFAULT_EXPLORE_CAP: usize = 100_000;

/// Optimal cost, or a dead end (no goal state reachable).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cost {
    Finite(u32),
    DeadEnd,
}

impl Cost {
    pub fn finite(self) -> Option<u32> {
        match self {
            Cost::Finite(c) => Some(c),
            Cost::DeadEnd => None,
        }
    }

    pub fn is_dead_end(self) -> bool {
        self == Cost::DeadEnd
    }

    /// Numeric target, with dead ends mapped to `n_dead`.
    pub fn value(self, n_dead: u32) -> u32 {
        self.finite().unwrap_or(n_dead)
    }
}

/// `N_dead = max(2 · max finite, 1)`.
pub fn dead_end_cost(costs: impl IntoIterator<Item = Cost>) -> u32 {
    let max = costs
        .into_iter()
        .filter_map(Cost::finite)
        .max()
        .unwrap_or(0);
    (2 * max).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("state space truncated before the answer was settled")]
    Truncated,
    #[error("state not in the explored space")]
    UnknownState,
}

/// Explicit state graph reached from the initial state.
#[derive(Clone, Debug)]
pub struct ReachableSpace {
    states: Vec<State>,
    index: FxMap<State, u32>,
    /// `(action, target)` pairs per state.
    edges: Vec<Vec<(u32, u32)>>,
    reverse: Vec<Vec<u32>>,
    truncated: bool,
}

/// BFS from the task's initial state, stopping after `cap` states.
pub fn explore(task: &Task, cap: usize) -> ReachableSpace {
    let cap = cap.max(1);
    let init = task.problem.init().clone();
    let mut index = FxMap::default();
    index.insert(init.clone(), 0u32);
    let mut states = vec![init];
    let mut edges: Vec<Vec<(u32, u32)>> = Vec::new();
    let mut truncated = false;
    let mut next = 0usize;
    while next < states.len() {
        let state = states[next].clone();
        let mut out = Vec::new();
        for (a, succ) in task.successors(&state) {
            let id = match index.get(&succ) {
                Some(&id) => id,
                None if states.len() < cap => {
                    let id = states.len() as u32;
                    index.insert(succ.clone(), id);
                    states.push(succ);
                    id
                }
                None => {
                    truncated = true;
                    continue;
                }
            };
            out.push((a as u32, id));
        }
        edges.push(out);
        next += 1;
    }
    let mut reverse = vec![Vec::new(); states.len()];
    for (from, out) in edges.iter().enumerate() {
        for &(_, to) in out {
            reverse[to as usize].push(from as u32);
        }
    }
    ReachableSpace {
        states,
        index,
        edges,
        reverse,
        truncated,
    }
}

impl ReachableSpace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn index_of(&self, state: &State) -> Option<usize> {
        self.index.get(state).map(|&i| i as usize)
    }

    /// `(action index, successor index)` pairs.
    pub fn successors(&self, i: usize) -> &[(u32, u32)] {
        &self.edges[i]
    }

    pub fn num_transitions(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    /// Marks goal states once, then runs one reverse multi-source BFS; the
    /// result holds `V*` for every state (`None` for dead ends).
    pub fn goal_distances(&self, goal: &QuantifiedGoal, num_objects: usize) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.states.len()];
        let mut queue = VecDeque::new();
        for (i, s) in self.states.iter().enumerate() {
            if satisfies(s, goal, num_objects).is_some() {
                dist[i] = Some(0);
                queue.push_back(i as u32);
            }
        }
        while let Some(i) = queue.pop_front() {
            let d = dist[i as usize].unwrap_or(0) + 1;
            for &p in &self.reverse[i as usize] {
                if dist[p as usize].is_none() {
                    dist[p as usize] = Some(d);
                    queue.push_back(p);
                }
            }
        }
        dist
    }
}

/// `V*(state, goal)` over an untruncated explored space.
pub fn optimal_cost(
    space: &ReachableSpace,
    state: &State,
    goal: &QuantifiedGoal,
    num_objects: usize,
) -> Result<Cost, OracleError> {
    if space.truncated {
        return Err(OracleError::Truncated);
    }
    let i = space.index_of(state).ok_or(OracleError::UnknownState)?;
    Ok(match space.goal_distances(goal, num_objects)[i] {
        Some(d) => Cost::Finite(d),
        None => Cost::DeadEnd,
    })
}

/// `V*(state, goal)` by forward BFS from `state`, expanding at most `cap`
/// states. Goals without any statically valid binding are dead ends
/// without search.
pub fn forward_cost(
    task: &Task,
    state: &State,
    goal: &QuantifiedGoal,
    cap: usize,
) -> Result<Cost, OracleError> {
    let problem = &task.problem;
    if goal.has_violated_neq()
        || enumerate_valid_bindings(problem, state, goal)
            .next()
            .is_none()
    {
        return Ok(Cost::DeadEnd);
    }
    let n = problem.num_objects();
    let r = bfs(
        task,
        state,
        |s| satisfies(s, goal, n).is_some(),
        &mut NodeLimit(cap),
    );
    match r.outcome {
        Outcome::Plan(p) => Ok(Cost::Finite(p.len() as u32)),
        Outcome::Unsolvable => Ok(Cost::DeadEnd),
        Outcome::Exhausted => Err(OracleError::Truncated),
    }
}

/// Exhaustive Bellman check: `V* = 0` exactly on goal states, otherwise one
/// more than the best successor. Returns the first violating state index.
pub fn check_bellman(
    space: &ReachableSpace,
    dist: &[Option<u32>],
    goal: &QuantifiedGoal,
    num_objects: usize,
) -> Option<usize> {
    (0..space.len()).find(|&i| {
        let is_goal = satisfies(&space.states[i], goal, num_objects).is_some();
        let best = space.edges[i]
            .iter()
            .filter_map(|&(_, t)| dist[t as usize])
            .min();
        match dist[i] {
            Some(0) => !is_goal,
            Some(d) => is_goal || best.map(|b| b + 1) != Some(d),
            None => is_goal || best.is_some(),
        }
    })
}
