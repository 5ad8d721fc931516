//! Parallel drivers for dataset generation and training.

use rayon::prelude::*;

use qground_core::dataset::{
    assemble, generate_instance_samples, Dataset, DatasetConfig, DatasetError,
};
use qground_core::generators::{generate_instance, GenError, GeneratorConfig};
use qground_core::oracle::{forward_cost, Cost};
use qground_core::rgnn::{encode, prepare, signature_of, Model, ModelConfig, ModelError};
use qground_core::train::{
    train, EpochLog, Example, Executor, GradResult, TrainConfig, TrainError, TrainReport,
};
use qground_core::{seed, Domain, Problem, QuantifiedGoal, Real, State, Task};

use crate::io::LoadedDataset;

/// Runs per-example jobs on the rayon pool; output order is the index order.
pub struct Rayon;

impl Executor for Rayon {
    fn run(&self, n: usize, job: &(dyn Fn(usize) -> GradResult + Sync)) -> Vec<GradResult> {
        (0..n).into_par_iter().map(job).collect()
    }
}

/// Same output as the sequential generator; instances are produced in
/// parallel and merged by index.
pub fn generate_dataset_parallel(
    config: &DatasetConfig,
    seed_value: u64,
) -> Result<Dataset, DatasetError> {
    let parts = (0..config.instances_needed())
        .into_par_iter()
        .map(|i| generate_instance_samples(config, seed_value, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble(config, seed_value, parts))
}

/// One regression target before encoding.
pub struct TrainItem<'a> {
    pub domain: &'a Domain,
    pub state: &'a State,
    pub goal: &'a QuantifiedGoal,
    pub num_objects: usize,
    pub target: u32,
}

pub fn items_from_dataset(ds: &Dataset) -> Vec<TrainItem<'_>> {
    ds.samples
        .iter()
        .map(|s| {
            let p = &ds.problems[s.instance as usize];
            TrainItem {
                domain: p.domain(),
                state: &s.state,
                goal: &s.goal,
                num_objects: p.num_objects(),
                target: ds.target(s),
            }
        })
        .collect()
}

pub fn items_from_loaded(ds: &LoadedDataset) -> Vec<TrainItem<'_>> {
    ds.samples
        .iter()
        .map(|s| TrainItem {
            domain: s.problem.domain(),
            state: s.problem.init(),
            goal: s.problem.goal(),
            num_objects: s.problem.num_objects(),
            target: s.target(ds.meta.n_dead),
        })
        .collect()
}

pub fn build_examples(model: &Model, items: &[TrainItem<'_>]) -> Result<Vec<Example>, ModelError> {
    let Some(first) = items.first() else {
        return Ok(Vec::new());
    };
    let map = model.bind(first.domain)?;
    items
        .par_iter()
        .map(|it| {
            let input = encode(it.domain, it.state, it.goal, it.num_objects);
            Ok(Example {
                input: prepare(model, &map, &input)?,
                target: it.target as Real,
            })
        })
        .collect()
}

/// Fresh model for `domain`, trained on `items`.
pub fn train_model(
    domain: &Domain,
    items: &[TrainItem<'_>],
    n_dead: u32,
    model_config: ModelConfig,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<(Model, TrainReport), TrainError> {
    let mut model = Model::new(
        signature_of(domain),
        model_config,
        n_dead,
        &mut seed::rng(config.seed, "init", 0),
    )?;
    let examples = build_examples(&model, items)?;
    let report = train(&mut model, &examples, config, &Rayon, on_epoch)?;
    Ok((model, report))
}

/// Held-out instances without a solvability check, for sizes where the exact
/// oracle is out of reach.
pub fn generate_unfiltered(
    config: &GeneratorConfig,
    count: usize,
    seed_value: u64,
) -> Result<Vec<Problem>, GenError> {
    let kind = config.kind;
    (0..count)
        .into_par_iter()
        .map(|i| {
            generate_instance(
                config,
                &mut seed::rng(seed_value, "test", i as u64),
                &format!("{}-test-{i}", kind.name()),
            )
        })
        .collect()
}

/// Held-out instances whose quantified goal is reachable from init.
pub fn generate_testset(
    config: &GeneratorConfig,
    count: usize,
    seed_value: u64,
    oracle_cap: usize,
) -> Result<Vec<Problem>, GenError> {
    let kind = config.kind;
    let limit = count * 20;
    let mut out = Vec::with_capacity(count);
    let mut start = 0;
    while out.len() < count && start < limit {
        let end = (start + count.max(8)).min(limit);
        let batch: Vec<Option<Problem>> = (start..end)
            .into_par_iter()
            .map(|i| {
                let name = format!("{}-test-{i}", kind.name());
                let p =
                    generate_instance(config, &mut seed::rng(seed_value, "test", i as u64), &name)
                        .ok()?;
                let task = Task::new(p.clone());
                match forward_cost(&task, p.init(), p.goal(), oracle_cap) {
                    Ok(Cost::Finite(_)) => Some(p),
                    _ => None,
                }
            })
            .collect();
        out.extend(batch.into_iter().flatten());
        start = end;
    }
    out.truncate(count);
    if out.len() < count {
        return Err(GenError::Unsatisfiable(limit));
    }
    Ok(out)
}
