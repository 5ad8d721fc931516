//! Labelled (state, goal, cost) samples over small generated instances.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::{IteratorRandom, SliceRandom};
use rand::Rng;
use thiserror::Error;

use crate::generators::{generate_instance, sample_goal, DomainKind, GenError, GeneratorConfig};
use crate::goal::{Binding, QuantifiedGoal};
use crate::math::Real;
use crate::oracle::{dead_end_cost, explore, forward_cost, Cost, DEFAULT_EXPLORE_CAP};
use crate::seed;
use crate::strips::{Atom, ObjectId, Problem, State, Task};

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub generator: GeneratorConfig,
    pub samples: usize,
    pub samples_per_instance: usize,
    pub explore_cap: usize,
    /// Probability that a sample's goal has some of its variables bound.
    pub partial_fraction: Real,
    pub max_retries: usize,
}

impl DatasetConfig {
    pub fn desk(kind: DomainKind) -> Self {
        DatasetConfig {
            generator: GeneratorConfig::desk(kind),
            samples: 2000,
            samples_per_instance: 10,
            explore_cap: DEFAULT_EXPLORE_CAP,
            partial_fraction: 0.5,
            max_retries: 50,
        }
    }

    pub fn instances_needed(&self) -> usize {
        if self.samples == 0 {
            0
        } else {
            self.samples.div_ceil(self.samples_per_instance.max(1))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    /// Index into [`Dataset::problems`].
    pub instance: u32,
    pub state: State,
    pub goal: QuantifiedGoal,
    pub cost: Cost,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub seed: u64,
    pub config: DatasetConfig,
    pub problems: Vec<Problem>,
    pub samples: Vec<Sample>,
    pub n_dead: u32,
}

impl Dataset {
    pub fn target(&self, sample: &Sample) -> u32 {
        sample.cost.value(self.n_dead)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Generator(#[from] GenError),
    #[error("instance {0}: no explorable instance after {1} attempts")]
    Exhausted(usize, usize),
}

/// Samples for instance `index`, drawn from streams derived from `seed` so
/// that instances can be produced in any order or in parallel.
pub fn generate_instance_samples(
    config: &DatasetConfig,
    seed_value: u64,
    index: usize,
) -> Result<(Problem, Vec<Sample>), DatasetError> {
    let kind = config.generator.kind;
    let per = config.samples_per_instance.max(1);
    let mut rng = seed::rng(seed_value, "instance", index as u64);
    for _ in 0..config.max_retries.max(1) {
        let problem = generate_instance(
            &config.generator,
            &mut rng,
            &format!("{}-{index}", kind.name()),
        )?;
        let task = Task::new(problem.clone());
        let samples = if kind == DomainKind::Visitall {
            visitall_samples(config, &task, index as u32, per, &mut rng)
        } else {
            explored_samples(config, &task, index as u32, per, &mut rng)
        };
        if let Some(s) = samples {
            return Ok((problem, s));
        }
    }
    Err(DatasetError::Exhausted(index, config.max_retries.max(1)))
}

fn draw_goal<R: Rng>(
    config: &DatasetConfig,
    problem: &Problem,
    state: &State,
    rng: &mut R,
) -> Option<QuantifiedGoal> {
    let g = &config.generator;
    let k = rng.gen_range(g.vars.0..=g.vars.1);
    let goal = sample_goal(g.kind, problem, k, g.neq, rng)?;
    if rng.gen::<Real>() >= config.partial_fraction {
        return Some(goal);
    }
    let m = rng.gen_range(1..=goal.num_vars());
    let vars: Vec<_> = goal.variables().choose_multiple(rng, m).copied().collect();
    let valid = if rng.gen::<bool>() {
        crate::goal::enumerate_valid_bindings(problem, state, &goal)
            .take(4096)
            .choose(rng)
    } else {
        None
    };
    let n = problem.num_objects() as u32;
    let binding: Binding = vars
        .iter()
        .map(|&x| {
            let o = valid
                .as_ref()
                .and_then(|b| b.get(x))
                .unwrap_or_else(|| ObjectId(rng.gen_range(0..n)));
            (x, o)
        })
        .collect();
    goal.bind(&binding).ok()
}

fn explored_samples<R: Rng>(
    config: &DatasetConfig,
    task: &Task,
    instance: u32,
    per: usize,
    rng: &mut R,
) -> Option<Vec<Sample>> {
    let space = explore(task, config.explore_cap);
    if space.truncated() {
        return None;
    }
    let problem = &task.problem;
    let mut out = Vec::with_capacity(per);
    let mut misses = 0;
    while out.len() < per {
        let i = rng.gen_range(0..space.len());
        let state = &space.states()[i];
        let Some(goal) = draw_goal(config, problem, state, rng) else {
            misses += 1;
            if misses > 10 * per {
                return None;
            }
            continue;
        };
        let dist = space.goal_distances(&goal, problem.num_objects());
        let cost = dist[i].map_or(Cost::DeadEnd, Cost::Finite);
        out.push(Sample {
            instance,
            state: state.clone(),
            goal,
            cost,
        });
    }
    Some(out)
}

/// Visitall states are a robot cell with the visited set reset to that
/// cell, labelled by forward search.
fn visitall_samples<R: Rng>(
    config: &DatasetConfig,
    task: &Task,
    instance: u32,
    per: usize,
    rng: &mut R,
) -> Option<Vec<Sample>> {
    let problem = &task.problem;
    let d = problem.domain();
    let (at, visited) = (d.pred_id("at-robot")?, d.pred_id("visited")?);
    let cells: Vec<ObjectId> = problem
        .object_ids()
        .filter(|&o| problem.init().statics().iter().any(|a| a.args()[0] == o))
        .collect();
    let mut out = Vec::with_capacity(per);
    let mut misses = 0;
    while out.len() < per {
        let c = *cells.choose(rng)?;
        let state =
            problem.state_from_fluents(alloc::vec![Atom::new(at, &[c]), Atom::new(visited, &[c])]);
        let goal = draw_goal(config, problem, &state, rng);
        let cost = goal
            .as_ref()
            .map(|g| forward_cost(task, &state, g, config.explore_cap));
        match (goal, cost) {
            (Some(goal), Some(Ok(cost))) => out.push(Sample {
                instance,
                state,
                goal,
                cost,
            }),
            _ => {
                misses += 1;
                if misses > 10 * per {
                    return None;
                }
            }
        }
    }
    Some(out)
}

/// Merges per-instance results in index order, truncates to the requested
/// size and fixes `N_dead`.
pub fn assemble(
    config: &DatasetConfig,
    seed_value: u64,
    parts: Vec<(Problem, Vec<Sample>)>,
) -> Dataset {
    let mut problems = Vec::with_capacity(parts.len());
    let mut samples = Vec::with_capacity(config.samples);
    for (p, s) in parts {
        problems.push(p);
        samples.extend(s);
    }
    samples.truncate(config.samples);
    let n_dead = dead_end_cost(samples.iter().map(|s| s.cost));
    Dataset {
        seed: seed_value,
        config: config.clone(),
        problems,
        samples,
        n_dead,
    }
}

pub fn generate_dataset(config: &DatasetConfig, seed_value: u64) -> Result<Dataset, DatasetError> {
    let parts = (0..config.instances_needed())
        .map(|i| generate_instance_samples(config, seed_value, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble(config, seed_value, parts))
}

/// Human-readable one-line description of a sample.
pub fn describe(dataset: &Dataset, sample: &Sample) -> String {
    let p = &dataset.problems[sample.instance as usize];
    format!(
        "{} vars={} cost={:?}",
        p.name(),
        sample.goal.num_vars(),
        sample.cost
    )
}
