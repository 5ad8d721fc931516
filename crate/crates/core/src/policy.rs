//! Greedy goal grounding: repeatedly bind the single (variable, object) pair
//! whose resulting goal has the lowest value until no variable is left.

use alloc::vec::Vec;

use thiserror::Error;

use crate::goal::{enumerate_valid_bindings, Binding, QuantifiedGoal};
use crate::math::Real;
use crate::oracle::{forward_cost, optimal_cost, Cost, ReachableSpace};
use crate::rgnn::{encode, prepare, value, Model, ModelError, PredMap};
use crate::strips::{Domain, ObjectId, Problem, State, Task, VarId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("no variables to bind")]
    NoVariables,
    #[error("value function failed: {0}")]
    Value(String),
}

use alloc::string::{String, ToString};

/// Something that scores a (state, goal) pair; lower is better.
pub trait GoalValue {
    fn value(&self, state: &State, goal: &QuantifiedGoal) -> Result<Real, PolicyError>;
}

/// Single-variable bindings `(x, c, ground(G, {x ↦ c}))` in (variable, object)
/// order. With `prune`, candidates whose goal has no statically valid
/// binding left are dropped.
pub fn successors(
    problem: &Problem,
    state: &State,
    goal: &QuantifiedGoal,
    prune: bool,
) -> Result<Vec<(VarId, ObjectId, QuantifiedGoal)>, PolicyError> {
    if goal.is_ground() {
        return Err(PolicyError::NoVariables);
    }
    let mut out = Vec::with_capacity(goal.num_vars() * problem.num_objects());
    for &x in goal.variables() {
        for c in problem.object_ids() {
            let g = goal
                .bind(&Binding::single(x, c))
                .map_err(|e| PolicyError::Value(e.to_string()))?;
            if prune
                && (g.has_violated_neq()
                    || enumerate_valid_bindings(problem, state, &g)
                        .next()
                        .is_none())
            {
                continue;
            }
            out.push((x, c, g));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub var: VarId,
    pub object: ObjectId,
    pub value: Real,
    pub candidates: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundingTrace {
    pub steps: Vec<Step>,
    pub goal: QuantifiedGoal,
}

impl GroundingTrace {
    pub fn binding(&self) -> Binding {
        self.steps.iter().map(|s| (s.var, s.object)).collect()
    }
}

/// Greedy policy. Ties go to the first candidate in (variable, object) order.
pub fn ground_goal(
    problem: &Problem,
    state: &State,
    goal: &QuantifiedGoal,
    values: &dyn GoalValue,
    prune: bool,
) -> Result<GroundingTrace, PolicyError> {
    let mut current = goal.clone();
    let mut steps = Vec::with_capacity(goal.num_vars());
    while !current.is_ground() {
        let cands = successors(problem, state, &current, prune)?;
        if cands.is_empty() {
            // every candidate was pruned; fall back to the unpruned set
            return ground_goal_from(problem, state, current, values, steps);
        }
        let n = cands.len();
        let mut best: Option<(Real, usize)> = None;
        for (i, (_, _, g)) in cands.iter().enumerate() {
            let v = values.value(state, g)?;
            if best.map_or(true, |(b, _)| v < b) {
                best = Some((v, i));
            }
        }
        let (v, i) = best.expect("nonempty candidates");
        let (var, object, g) = cands.into_iter().nth(i).expect("index in range");
        steps.push(Step {
            var,
            object,
            value: v,
            candidates: n,
        });
        current = g;
    }
    Ok(GroundingTrace {
        steps,
        goal: current,
    })
}

fn ground_goal_from(
    problem: &Problem,
    state: &State,
    goal: QuantifiedGoal,
    values: &dyn GoalValue,
    mut steps: Vec<Step>,
) -> Result<GroundingTrace, PolicyError> {
    let rest = ground_goal(problem, state, &goal, values, false)?;
    steps.extend(rest.steps);
    Ok(GroundingTrace {
        steps,
        goal: rest.goal,
    })
}

/// The learned value function of a model bound to one domain.
pub struct ModelValue<'a> {
    pub model: &'a Model,
    pub map: PredMap,
    pub domain: &'a Domain,
    pub num_objects: usize,
}

impl<'a> ModelValue<'a> {
    pub fn new(model: &'a Model, problem: &'a Problem) -> Result<Self, ModelError> {
        Ok(ModelValue {
            model,
            map: model.bind(problem.domain())?,
            domain: problem.domain(),
            num_objects: problem.num_objects(),
        })
    }
}

impl GoalValue for ModelValue<'_> {
    fn value(&self, state: &State, goal: &QuantifiedGoal) -> Result<Real, PolicyError> {
        let input = encode(self.domain, state, goal, self.num_objects);
        let prepared = prepare(self.model, &self.map, &input)
            .map_err(|e| PolicyError::Value(e.to_string()))?;
        value(self.model, &prepared).map_err(|e| PolicyError::Value(e.to_string()))
    }
}

/// Exact `V*` in place of a learned model: from an explored space when one
/// is available, otherwise by forward search. Dead ends score `n_dead`.
pub struct ExactValue<'a> {
    pub task: &'a Task,
    pub space: Option<&'a ReachableSpace>,
    pub n_dead: u32,
    pub cap: usize,
}

impl ExactValue<'_> {
    pub fn cost(&self, state: &State, goal: &QuantifiedGoal) -> Result<Cost, PolicyError> {
        let n = self.task.problem.num_objects();
        let r = match self.space {
            Some(space) if !space.truncated() && space.index_of(state).is_some() => {
                optimal_cost(space, state, goal, n)
            }
            _ => forward_cost(self.task, state, goal, self.cap),
        };
        r.map_err(|e| PolicyError::Value(e.to_string()))
    }
}

impl GoalValue for ExactValue<'_> {
    fn value(&self, state: &State, goal: &QuantifiedGoal) -> Result<Real, PolicyError> {
        Ok(self.cost(state, goal)?.value(self.n_dead) as Real)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{generate_instance, DomainKind, GeneratorConfig};
    use crate::oracle::explore;
    use crate::seed;

    #[test]
    fn successor_counts() {
        let mut cfg = GeneratorConfig::desk(DomainKind::Blocks);
        cfg.objects = (3, 3);
        cfg.vars = (2, 2);
        let p = generate_instance(&cfg, &mut seed::rng(1, "p", 0), "p").unwrap();
        let s = successors(&p, p.init(), p.goal(), false).unwrap();
        assert_eq!(s.len(), 6);
        assert!(s.iter().all(|(_, _, g)| g.num_vars() == 1));
        let ground = p
            .goal()
            .bind(&Binding::single(VarId(0), ObjectId(0)))
            .unwrap();
        let ground = ground
            .bind(&Binding::single(VarId(1), ObjectId(1)))
            .unwrap();
        assert_eq!(
            successors(&p, p.init(), &ground, false),
            Err(PolicyError::NoVariables)
        );
    }

    #[test]
    fn ground_goal_is_returned_unchanged() {
        let p = generate_instance(
            &GeneratorConfig::desk(DomainKind::Gripper),
            &mut seed::rng(2, "p", 0),
            "p",
        )
        .unwrap();
        let task = Task::new(p.clone());
        let exact = ExactValue {
            task: &task,
            space: None,
            n_dead: 100,
            cap: 100_000,
        };
        let g = QuantifiedGoal::conjunction(Vec::new());
        let t = ground_goal(&p, p.init(), &g, &exact, false).unwrap();
        assert!(t.steps.is_empty());
        assert_eq!(t.goal, g);
    }

    #[test]
    fn exact_values_give_optimal_grounding() {
        for i in 0..15 {
            let kind = DomainKind::ALL[i as usize % 5];
            let p = generate_instance(&GeneratorConfig::desk(kind), &mut seed::rng(3, "p", i), "p")
                .unwrap();
            let task = Task::new(p.clone());
            let space = explore(&task, 20_000);
            if space.truncated() {
                continue;
            }
            let exact = ExactValue {
                task: &task,
                space: Some(&space),
                n_dead: 1000,
                cap: 1_000_000,
            };
            let trace = ground_goal(&p, p.init(), p.goal(), &exact, false).unwrap();
            assert_eq!(trace.steps.len(), p.goal().num_vars());
            for st in &trace.steps {
                assert!(st.candidates > 0);
            }
            let before = exact.cost(p.init(), p.goal()).unwrap();
            let after = exact.cost(p.init(), &trace.goal).unwrap();
            assert_eq!(before, after);
        }
    }
}
