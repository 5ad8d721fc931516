//! JSON Lines datasets and JSON model files.

use std::collections::BTreeMap;
use std::sync::Arc;

use qground_core::dataset::{Dataset, DatasetConfig};
use qground_core::generators::{domain_by_name, DomainKind, GeneratorConfig, NeqMode, RoomGraph};
use qground_core::rgnn::{Model, ModelConfig};
use qground_core::strips::PredicateKind;
use qground_core::tensor::Mat;
use qground_core::{
    Atom, Cost, Domain, GroundAtom, LiftedAtom, ObjectId, Problem, QuantifiedGoal, Real, State,
    Term, VarId,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_err(line: usize, message: impl Into<String>) -> IoError {
    IoError::Format {
        line,
        message: message.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRecord {
    pub domain: String,
    pub objects: (usize, usize),
    pub width: (usize, usize),
    pub height: (usize, usize),
    pub rooms: (usize, usize),
    pub colors: (usize, usize),
    pub vars: (usize, usize),
    pub neq: String,
    pub room_graph: String,
    pub max_attempts: usize,
}

impl From<&GeneratorConfig> for GeneratorRecord {
    fn from(c: &GeneratorConfig) -> Self {
        GeneratorRecord {
            domain: c.kind.name().into(),
            objects: c.objects,
            width: c.width,
            height: c.height,
            rooms: c.rooms,
            colors: c.colors,
            vars: c.vars,
            neq: c.neq.name().into(),
            room_graph: match c.room_graph {
                RoomGraph::Complete => "complete".into(),
                RoomGraph::RandomConnected => "random-connected".into(),
            },
            max_attempts: c.max_attempts,
        }
    }
}

impl GeneratorRecord {
    pub fn to_config(&self) -> Option<GeneratorConfig> {
        Some(GeneratorConfig {
            kind: DomainKind::from_name(&self.domain)?,
            objects: self.objects,
            width: self.width,
            height: self.height,
            rooms: self.rooms,
            colors: self.colors,
            vars: self.vars,
            neq: NeqMode::from_name(&self.neq)?,
            room_graph: match self.room_graph.as_str() {
                "complete" => RoomGraph::Complete,
                "random-connected" => RoomGraph::RandomConnected,
                _ => return None,
            },
            max_attempts: self.max_attempts,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub kind: String,
    pub seed: u64,
    pub n_dead: u32,
    pub domain: String,
    pub samples: usize,
    pub instances: usize,
    pub samples_per_instance: usize,
    pub explore_cap: usize,
    pub partial_fraction: Real,
    pub generator: GeneratorRecord,
    pub split: SplitSizes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalRecord {
    pub vars: Vec<String>,
    pub atoms: Vec<Vec<String>>,
    pub neq: Vec<[String; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub instance: String,
    pub objects: Vec<String>,
    pub state: Vec<Vec<String>>,
    pub goal: GoalRecord,
    pub cost: u32,
    pub dead_end: bool,
}

pub fn atom_record(problem: &Problem, atom: &GroundAtom) -> Vec<String> {
    let mut v = vec![problem.domain().predicate(atom.pred).name.clone()];
    v.extend(
        atom.args()
            .iter()
            .map(|&o| problem.object_name(o).to_string()),
    );
    v
}

fn term_name(problem: &Problem, goal: &QuantifiedGoal, t: Term) -> String {
    match t {
        Term::Var(v) => format!("?{}", goal.var_name(v)),
        Term::Obj(o) => problem.object_name(o).to_string(),
    }
}

pub fn goal_record(problem: &Problem, goal: &QuantifiedGoal) -> GoalRecord {
    let d = problem.domain();
    GoalRecord {
        vars: goal
            .variables()
            .iter()
            .map(|&v| goal.var_name(v).to_string())
            .collect(),
        atoms: goal
            .atoms()
            .iter()
            .map(|a| {
                let mut v = vec![d.predicate(a.pred).name.clone()];
                v.extend(a.args().iter().map(|&t| term_name(problem, goal, t)));
                v
            })
            .collect(),
        neq: goal
            .neq()
            .iter()
            .map(|&(a, b)| [term_name(problem, goal, a), term_name(problem, goal, b)])
            .collect(),
    }
}

pub fn sample_record(
    problem: &Problem,
    state: &State,
    goal: &QuantifiedGoal,
    cost: Cost,
    n_dead: u32,
) -> SampleRecord {
    SampleRecord {
        instance: problem.name().to_string(),
        objects: problem.objects().to_vec(),
        state: state.iter().map(|a| atom_record(problem, a)).collect(),
        goal: goal_record(problem, goal),
        cost: cost.value(n_dead),
        dead_end: cost.is_dead_end(),
    }
}

pub fn split_sizes(samples: usize, val_fraction: Real) -> SplitSizes {
    let (train, val) = qground_core::train::split(samples, val_fraction, 0);
    if samples < 2 {
        return SplitSizes {
            train: samples,
            val: 0,
        };
    }
    SplitSizes {
        train: train.len(),
        val: val.len(),
    }
}

pub fn dataset_meta(ds: &Dataset, val_fraction: Real) -> DatasetMeta {
    let c: &DatasetConfig = &ds.config;
    DatasetMeta {
        kind: "meta".into(),
        seed: ds.seed,
        n_dead: ds.n_dead,
        domain: c.generator.kind.domain_name().into(),
        samples: ds.samples.len(),
        instances: ds.problems.len(),
        samples_per_instance: c.samples_per_instance,
        explore_cap: c.explore_cap,
        partial_fraction: c.partial_fraction,
        generator: GeneratorRecord::from(&c.generator),
        split: split_sizes(ds.samples.len(), val_fraction),
    }
}

/// Header line followed by one line per sample.
pub fn write_dataset(
    ds: &Dataset,
    val_fraction: Real,
    out: &mut impl std::io::Write,
) -> Result<(), IoError> {
    serde_json::to_writer(&mut *out, &dataset_meta(ds, val_fraction))?;
    out.write_all(b"\n")?;
    for s in &ds.samples {
        let p = &ds.problems[s.instance as usize];
        serde_json::to_writer(
            &mut *out,
            &sample_record(p, &s.state, &s.goal, s.cost, ds.n_dead),
        )?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// One sample rebuilt as a problem whose initial state is the sample state.
#[derive(Clone, Debug)]
pub struct LoadedSample {
    pub problem: Problem,
    pub cost: Cost,
}

impl LoadedSample {
    pub fn target(&self, n_dead: u32) -> u32 {
        self.cost.value(n_dead)
    }
}

#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub meta: DatasetMeta,
    pub domain: Arc<Domain>,
    pub samples: Vec<LoadedSample>,
}

fn term_of(
    line: usize,
    name: &str,
    objects: &BTreeMap<&str, ObjectId>,
    vars: &[String],
) -> Result<Term, IoError> {
    match name.strip_prefix('?') {
        Some(v) => vars
            .iter()
            .position(|x| x == v)
            .map(|i| Term::Var(VarId(i as u32)))
            .ok_or_else(|| format_err(line, format!("unknown variable {name}"))),
        None => objects
            .get(name)
            .map(|&o| Term::Obj(o))
            .ok_or_else(|| format_err(line, format!("unknown object {name}"))),
    }
}

fn lifted(
    line: usize,
    d: &Domain,
    parts: &[String],
    objects: &BTreeMap<&str, ObjectId>,
    vars: &[String],
) -> Result<LiftedAtom, IoError> {
    let (name, args) = parts
        .split_first()
        .ok_or_else(|| format_err(line, "empty atom"))?;
    let pred = d
        .resolve(name, args.len())
        .map_err(|e| format_err(line, e.to_string()))?;
    let terms = args
        .iter()
        .map(|a| term_of(line, a, objects, vars))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Atom::new(pred, &terms))
}

pub fn problem_from_record(
    line: usize,
    domain: &Arc<Domain>,
    r: &SampleRecord,
) -> Result<Problem, IoError> {
    let objects: BTreeMap<&str, ObjectId> = r
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| (o.as_str(), ObjectId(i as u32)))
        .collect();
    let mut init = Vec::with_capacity(r.state.len());
    for a in &r.state {
        let atom = lifted(line, domain, a, &objects, &[])?;
        init.push(
            atom.to_ground()
                .ok_or_else(|| format_err(line, "variable in state"))?,
        );
    }
    let mut atoms = Vec::with_capacity(r.goal.atoms.len());
    for a in &r.goal.atoms {
        let atom = lifted(line, domain, a, &objects, &r.goal.vars)?;
        let base = match domain.predicate(atom.pred).kind {
            PredicateKind::GoalMarker => atom.with_pred(domain.base_of(atom.pred).expect("twin")),
            _ => atom,
        };
        atoms.push(base);
    }
    let neq = r
        .goal
        .neq
        .iter()
        .map(|[a, b]| {
            Ok((
                term_of(line, a, &objects, &r.goal.vars)?,
                term_of(line, b, &objects, &r.goal.vars)?,
            ))
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    let goal = QuantifiedGoal::new(r.goal.vars.clone(), atoms, neq)
        .map_err(|e| format_err(line, e.to_string()))?;
    let own = r.objects[domain.constants().len()..].to_vec();
    Problem::new(r.instance.clone(), domain.clone(), own, init, goal)
        .map_err(|e| format_err(line, e.to_string()))
}

pub fn read_dataset(text: &str) -> Result<LoadedDataset, IoError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or_else(|| format_err(1, "empty dataset"))?;
    let meta: DatasetMeta = serde_json::from_str(head)?;
    if meta.kind != "meta" {
        return Err(format_err(1, "first line must be the metadata record"));
    }
    let domain = domain_by_name(&meta.domain)
        .ok_or_else(|| format_err(1, format!("unknown domain {}", meta.domain)))?;
    let mut samples = Vec::new();
    for (i, l) in lines {
        let r: SampleRecord =
            serde_json::from_str(l).map_err(|e| format_err(i + 1, e.to_string()))?;
        let problem = problem_from_record(i + 1, &domain, &r)?;
        let cost = if r.dead_end {
            Cost::DeadEnd
        } else {
            Cost::Finite(r.cost)
        };
        samples.push(LoadedSample { problem, cost });
    }
    Ok(LoadedDataset {
        meta,
        domain,
        samples,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Real>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfigRecord {
    pub k: usize,
    pub layers: usize,
    pub alpha: Real,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub version: u32,
    pub domain: String,
    pub config: ModelConfigRecord,
    pub n_dead: u32,
    pub signature: Vec<(String, usize)>,
    pub params: BTreeMap<String, MatRecord>,
}

pub fn model_record(model: &Model, domain: &str) -> ModelRecord {
    ModelRecord {
        version: MODEL_VERSION,
        domain: domain.to_string(),
        config: ModelConfigRecord {
            k: model.config.k,
            layers: model.config.layers,
            alpha: model.config.alpha,
        },
        n_dead: model.n_dead,
        signature: model.signature().to_vec(),
        params: model
            .param_names()
            .iter()
            .zip(model.params())
            .map(|(n, m)| {
                (
                    n.clone(),
                    MatRecord {
                        rows: m.rows,
                        cols: m.cols,
                        data: m.data.clone(),
                    },
                )
            })
            .collect(),
    }
}

pub fn write_model(model: &Model, domain: &str) -> Result<String, IoError> {
    Ok(serde_json::to_string_pretty(&model_record(model, domain))? + "\n")
}

/// Model and the name of the domain it was trained on.
pub fn read_model(text: &str) -> Result<(Model, String), IoError> {
    let r: ModelRecord = serde_json::from_str(text)?;
    if r.version != MODEL_VERSION {
        return Err(format_err(
            1,
            format!("unsupported model version {}", r.version),
        ));
    }
    let mut named = BTreeMap::new();
    for (n, m) in r.params {
        let mat = Mat::from_vec(m.rows, m.cols, m.data)
            .map_err(|e| format_err(1, format!("{n}: {e}")))?;
        named.insert(n, mat);
    }
    let config = ModelConfig {
        k: r.config.k,
        layers: r.config.layers,
        alpha: r.config.alpha,
    };
    let model = Model::from_named(r.signature, config, r.n_dead, named)
        .map_err(|e| format_err(1, e.to_string()))?;
    Ok((model, r.domain))
}
