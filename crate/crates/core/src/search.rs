//! Forward state-space planners: breadth-first search (optimal for unit
//! costs) and greedy best-first search on the goal-count heuristic.

use alloc::collections::{BinaryHeap, VecDeque};
use alloc::vec::Vec;
use core::cmp::Reverse;

use thiserror::Error;

use crate::goal::{satisfies, QuantifiedGoal};
use crate::strips::{GroundAtom, State, Task};
use crate::FxMap;

/// Decides when a search must give up. Called once per expansion.
pub trait Budget {
    fn exhausted(&mut self, expanded: usize) -> bool;
}

/// Never gives up.
pub struct Unlimited;

impl Budget for Unlimited {
    fn exhausted(&mut self, _: usize) -> bool {
        false
    }
}

/// Gives up after a fixed number of expansions.
pub struct NodeLimit(pub usize);

impl Budget for NodeLimit {
    fn exhausted(&mut self, expanded: usize) -> bool {
        expanded >= self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    OptimalBfs,
    GbfsGoalCount,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::OptimalBfs => "optimal-bfs",
            Mode::GbfsGoalCount => "gbfs-goalcount",
        }
    }

    pub fn from_name(s: &str) -> Option<Mode> {
        match s {
            "optimal-bfs" => Some(Mode::OptimalBfs),
            "gbfs-goalcount" => Some(Mode::GbfsGoalCount),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// Indices into the task's ground actions.
    Plan(Vec<usize>),
    Unsolvable,
    /// The budget ran out first.
    Exhausted,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SearchResult {
    pub outcome: Outcome,
    pub expanded: usize,
}

impl SearchResult {
    pub fn plan(&self) -> Option<&[usize]> {
        match &self.outcome {
            Outcome::Plan(p) => Some(p),
            _ => None,
        }
    }

    pub fn cost(&self) -> Option<usize> {
        self.plan().map(|p| p.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("greedy search needs a ground goal")]
    NotGround,
}

/// Plans from the task's initial state. BFS accepts quantified goals (the
/// goal test is [`satisfies`]); goal-count GBFS needs a ground goal.
pub fn plan(task: &Task, mode: Mode, budget: &mut dyn Budget) -> Result<SearchResult, SearchError> {
    plan_for_goal(task, task.problem.init(), task.problem.goal(), mode, budget)
}

/// [`plan`] from an arbitrary state towards an arbitrary goal, reusing the
/// task's ground actions.
pub fn plan_for_goal(
    task: &Task,
    start: &State,
    goal: &QuantifiedGoal,
    mode: Mode,
    budget: &mut dyn Budget,
) -> Result<SearchResult, SearchError> {
    let problem = &task.problem;
    if goal.has_violated_neq() {
        return Ok(SearchResult {
            outcome: Outcome::Unsolvable,
            expanded: 0,
        });
    }
    if let Some(atoms) = goal.ground_atoms() {
        let d = problem.domain();
        // static goal atoms never change
        if atoms
            .iter()
            .any(|a| d.is_static(a.pred) && !start.contains(a))
        {
            return Ok(SearchResult {
                outcome: Outcome::Unsolvable,
                expanded: 0,
            });
        }
        return Ok(match mode {
            Mode::OptimalBfs => bfs(task, start, |s| atoms.iter().all(|a| s.contains(a)), budget),
            Mode::GbfsGoalCount => gbfs(task, start, &atoms, budget),
        });
    }
    match mode {
        Mode::OptimalBfs => {
            let n = problem.num_objects();
            Ok(bfs(
                task,
                start,
                |s| satisfies(s, goal, n).is_some(),
                budget,
            ))
        }
        Mode::GbfsGoalCount => Err(SearchError::NotGround),
    }
}

struct Graph {
    states: Vec<State>,
    index: FxMap<State, u32>,
    parent: Vec<(u32, u32)>,
}

impl Graph {
    fn new(start: &State) -> Self {
        let mut index = FxMap::default();
        index.insert(start.clone(), 0);
        Graph {
            states: alloc::vec![start.clone()],
            index,
            parent: alloc::vec![(u32::MAX, u32::MAX)],
        }
    }

    /// Inserts a state if new; returns its id.
    fn insert(&mut self, s: State, parent: u32, action: u32) -> Option<u32> {
        if self.index.contains_key(&s) {
            return None;
        }
        let id = self.states.len() as u32;
        self.index.insert(s.clone(), id);
        self.states.push(s);
        self.parent.push((parent, action));
        Some(id)
    }

    fn trace(&self, mut id: u32) -> Vec<usize> {
        let mut plan = Vec::new();
        while self.parent[id as usize].0 != u32::MAX {
            let (p, a) = self.parent[id as usize];
            plan.push(a as usize);
            id = p;
        }
        plan.reverse();
        plan
    }
}

/// Breadth-first search from `start` until `is_goal` holds.
pub fn bfs(
    task: &Task,
    start: &State,
    mut is_goal: impl FnMut(&State) -> bool,
    budget: &mut dyn Budget,
) -> SearchResult {
    if is_goal(start) {
        return SearchResult {
            outcome: Outcome::Plan(Vec::new()),
            expanded: 0,
        };
    }
    let mut g = Graph::new(start);
    let mut queue = VecDeque::from([0u32]);
    let mut expanded = 0;
    while let Some(id) = queue.pop_front() {
        if budget.exhausted(expanded) {
            return SearchResult {
                outcome: Outcome::Exhausted,
                expanded,
            };
        }
        expanded += 1;
        let state = g.states[id as usize].clone();
        for (a, next) in task.successors(&state) {
            let goal = is_goal(&next);
            if let Some(nid) = g.insert(next, id, a as u32) {
                if goal {
                    return SearchResult {
                        outcome: Outcome::Plan(g.trace(nid)),
                        expanded,
                    };
                }
                queue.push_back(nid);
            }
        }
    }
    SearchResult {
        outcome: Outcome::Unsolvable,
        expanded,
    }
}

fn goal_count(state: &State, goal: &[GroundAtom]) -> usize {
    goal.iter().filter(|a| !state.contains(a)).count()
}

/// Greedy best-first search on the number of unsatisfied goal atoms, with
/// duplicate detection and FIFO tie-breaking.
pub fn gbfs(
    task: &Task,
    start: &State,
    goal: &[GroundAtom],
    budget: &mut dyn Budget,
) -> SearchResult {
    let h0 = goal_count(start, goal);
    if h0 == 0 {
        return SearchResult {
            outcome: Outcome::Plan(Vec::new()),
            expanded: 0,
        };
    }
    let mut g = Graph::new(start);
    let mut open = BinaryHeap::from([Reverse((h0, 0u32))]);
    let mut expanded = 0;
    while let Some(Reverse((_, id))) = open.pop() {
        if budget.exhausted(expanded) {
            return SearchResult {
                outcome: Outcome::Exhausted,
                expanded,
            };
        }
        expanded += 1;
        let state = g.states[id as usize].clone();
        for (a, next) in task.successors(&state) {
            let h = goal_count(&next, goal);
            if let Some(nid) = g.insert(next, id, a as u32) {
                if h == 0 {
                    return SearchResult {
                        outcome: Outcome::Plan(g.trace(nid)),
                        expanded,
                    };
                }
                open.push(Reverse((h, nid)));
            }
        }
    }
    SearchResult {
        outcome: Outcome::Unsolvable,
        expanded,
    }
}
