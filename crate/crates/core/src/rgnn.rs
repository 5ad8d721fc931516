//! Relational GNN value function over states and partially quantified goals.
//!
//! The input graph has one node per object followed by one node per free goal
//! variable. Atoms are the state atoms, the goal atoms under their `_g`
//! marker predicates (inequalities as `Neq_g`), `Constant(o)` for every
//! object, `Variable(x)` for every free variable, and `PossibleBinding(o, x)`
//! for every object/variable pair. Every layer reuses one parameter set.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::goal::QuantifiedGoal;
use crate::math::{sqrt, Real};
use crate::strips::{builtin, Domain, ObjectId, PredId, State, Term};
use crate::tensor::{Mat, NodeId, Pick, Segments, Tape, TensorError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    /// Embedding size.
    pub k: usize,
    /// Message-passing layers.
    pub layers: usize,
    /// Smooth-maximum sharpness.
    pub alpha: Real,
}

impl ModelConfig {
    pub const fn desk() -> Self {
        ModelConfig {
            k: 16,
            layers: 10,
            alpha: 12.0,
        }
    }

    pub const fn large() -> Self {
        ModelConfig {
            k: 32,
            layers: 30,
            alpha: 12.0,
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::desk()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("predicate {name}/{arity} is not in the model signature")]
    UnknownPredicate { name: String, arity: usize },
    #[error("missing parameter {0}")]
    MissingParam(String),
    #[error("parameter {name} has shape {got:?}, expected {expected:?}")]
    ParamShape {
        name: String,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Predicates that can label an encoded atom: non-nullary fluent, static and
/// goal-marker predicates, plus the builtins except plain `Neq`.
pub fn signature_of(domain: &Domain) -> Vec<(String, usize)> {
    domain
        .predicates()
        .iter()
        .enumerate()
        .filter(|(i, p)| p.arity > 0 && PredId(*i as u32) != builtin::NEQ)
        .map(|(_, p)| (p.name.clone(), p.arity))
        .collect()
}

/// Parameter indices of a two-layer perceptron `linear ∘ mish ∘ linear`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Mlp {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    /// Target cost used for dead ends during training.
    pub n_dead: u32,
    signature: Vec<(String, usize)>,
    messages: Vec<Mlp>,
    update: Mlp,
    readout: Mlp,
    names: Vec<String>,
    params: Vec<Mat>,
}

fn mlp_shapes(input: usize, hidden: usize, output: usize) -> [(usize, usize); 4] {
    [(hidden, input), (1, hidden), (output, hidden), (1, output)]
}

impl Model {
    /// Fresh parameters drawn uniformly from `±1/√fan_in`.
    pub fn new<R: Rng>(
        signature: Vec<(String, usize)>,
        config: ModelConfig,
        n_dead: u32,
        rng: &mut R,
    ) -> Result<Model, ModelError> {
        let mut model = Model::skeleton(signature, config, n_dead)?;
        // parameters come in (weight, bias) pairs; both use the weight's fan-in
        for pair in model.params.chunks_mut(2) {
            let bound = 1.0 / sqrt(pair[0].cols.max(1) as Real);
            for p in pair {
                for v in p.data.iter_mut() {
                    *v = rng.gen_range(-bound..bound);
                }
            }
        }
        Ok(model)
    }

    /// Zero-initialized parameters with the right names and shapes.
    fn skeleton(
        signature: Vec<(String, usize)>,
        config: ModelConfig,
        n_dead: u32,
    ) -> Result<Model, ModelError> {
        if config.k == 0 {
            return Err(ModelError::Config("embedding size must be positive".into()));
        }
        if !(config.alpha > 0.0) {
            return Err(ModelError::Config("alpha must be positive".into()));
        }
        let k = config.k;
        let mut names = Vec::new();
        let mut params = Vec::new();
        let mut add = |prefix: &str, input: usize, output: usize| -> Mlp {
            let base = params.len();
            for (suffix, (r, c)) in
                ["w1", "b1", "w2", "b2"]
                    .iter()
                    .zip(mlp_shapes(input, 2 * k, output))
            {
                names.push(format!("{prefix}/{suffix}"));
                params.push(Mat::zeros(r, c));
            }
            Mlp {
                w1: base,
                b1: base + 1,
                w2: base + 2,
                b2: base + 3,
            }
        };
        let messages = signature
            .iter()
            .map(|(name, arity)| add(&format!("msg/{name}"), arity * k, arity * k))
            .collect();
        let update = add("update", 2 * k, k);
        let readout = add("readout", k, 1);
        Ok(Model {
            config,
            n_dead,
            signature,
            messages,
            update,
            readout,
            names,
            params,
        })
    }

    /// Rebuilds a model from named parameters, checking every shape.
    pub fn from_named(
        signature: Vec<(String, usize)>,
        config: ModelConfig,
        n_dead: u32,
        mut named: BTreeMap<String, Mat>,
    ) -> Result<Model, ModelError> {
        let mut model = Model::skeleton(signature, config, n_dead)?;
        for (name, slot) in model.names.iter().zip(model.params.iter_mut()) {
            let m = named
                .remove(name)
                .ok_or_else(|| ModelError::MissingParam(name.clone()))?;
            if m.shape() != slot.shape() {
                return Err(ModelError::ParamShape {
                    name: name.clone(),
                    expected: slot.shape(),
                    got: m.shape(),
                });
            }
            *slot = m;
        }
        Ok(model)
    }

    pub fn signature(&self) -> &[(String, usize)] {
        &self.signature
    }

    pub fn params(&self) -> &[Mat] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Mat] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    /// Maps a domain's predicates onto the model's message functions.
    pub fn bind(&self, domain: &Domain) -> Result<PredMap, ModelError> {
        let mut map = vec![None; domain.predicates().len()];
        for (name, arity) in signature_of(domain) {
            let id = domain
                .pred_id(&name)
                .expect("signature comes from the domain");
            let idx = self
                .signature
                .iter()
                .position(|(n, a)| *n == name && *a == arity)
                .ok_or(ModelError::UnknownPredicate { name, arity })?;
            map[id.index()] = Some(idx as u32);
        }
        Ok(PredMap { map })
    }
}

/// Domain predicate id to model message-function index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredMap {
    map: Vec<Option<u32>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedAtom {
    pub pred: PredId,
    pub args: Vec<u32>,
}

/// The atom multigraph over objects and free goal variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedInput {
    pub num_objects: usize,
    pub num_vars: usize,
    pub atoms: Vec<EncodedAtom>,
}

impl EncodedInput {
    pub fn num_nodes(&self) -> usize {
        self.num_objects + self.num_vars
    }

    pub fn count(&self, pred: PredId) -> usize {
        self.atoms.iter().filter(|a| a.pred == pred).count()
    }
}

/// Builds the network input. Nullary atoms are left out: they connect no
/// nodes and so carry no messages.
pub fn encode(
    domain: &Domain,
    state: &State,
    goal: &QuantifiedGoal,
    num_objects: usize,
) -> EncodedInput {
    let vars = goal.variables();
    let mut node_of_var = vec![u32::MAX; goal.var_names().len()];
    for (i, v) in vars.iter().enumerate() {
        node_of_var[v.index()] = (num_objects + i) as u32;
    }
    let node = |t: Term| match t {
        Term::Obj(o) => o.0,
        Term::Var(v) => node_of_var[v.index()],
    };
    let mut atoms = Vec::new();
    for a in state.iter().filter(|a| a.arity() > 0) {
        atoms.push(EncodedAtom {
            pred: a.pred,
            args: a.args().iter().map(|o| o.0).collect(),
        });
    }
    for a in goal.atoms().iter().filter(|a| a.arity() > 0) {
        let marker = domain.marker_of(a.pred).unwrap_or(a.pred);
        atoms.push(EncodedAtom {
            pred: marker,
            args: a.args().iter().map(|&t| node(t)).collect(),
        });
    }
    for &(a, b) in goal.neq() {
        atoms.push(EncodedAtom {
            pred: builtin::NEQ_G,
            args: vec![node(a), node(b)],
        });
    }
    for o in 0..num_objects as u32 {
        atoms.push(EncodedAtom {
            pred: builtin::CONSTANT,
            args: vec![o],
        });
    }
    for i in 0..vars.len() {
        atoms.push(EncodedAtom {
            pred: builtin::VARIABLE,
            args: vec![(num_objects + i) as u32],
        });
    }
    for o in 0..num_objects as u32 {
        for i in 0..vars.len() {
            atoms.push(EncodedAtom {
                pred: builtin::POSSIBLE_BINDING,
                args: vec![o, (num_objects + i) as u32],
            });
        }
    }
    EncodedInput {
        num_objects,
        num_vars: vars.len(),
        atoms,
    }
}

/// Index structures for one input, reused by every layer.
#[derive(Clone, Debug)]
pub struct Prepared {
    num_nodes: usize,
    /// `(message function, arity, flattened node indices)` per predicate group.
    groups: Vec<(usize, usize, Arc<[u32]>)>,
    picks: Arc<[Pick]>,
    segments: Arc<Segments>,
}

pub fn prepare(model: &Model, map: &PredMap, input: &EncodedInput) -> Result<Prepared, ModelError> {
    let k = model.config.k;
    let mut by_fn: BTreeMap<usize, (usize, Vec<u32>)> = BTreeMap::new();
    for a in &input.atoms {
        let f = map
            .map
            .get(a.pred.index())
            .copied()
            .flatten()
            .ok_or_else(|| ModelError::UnknownPredicate {
                name: format!("#{}", a.pred.0),
                arity: a.args.len(),
            })? as usize;
        let entry = by_fn.entry(f).or_insert_with(|| (a.args.len(), Vec::new()));
        entry.1.extend_from_slice(&a.args);
    }
    let mut messages: Vec<(u32, Pick)> = Vec::new();
    let mut groups = Vec::with_capacity(by_fn.len());
    for (g, (f, (arity, idx))) in by_fn.into_iter().enumerate() {
        for (slot, &target) in idx.iter().enumerate() {
            messages.push((
                target,
                Pick {
                    source: g as u32,
                    row: (slot / arity) as u32,
                    col: ((slot % arity) * k) as u32,
                },
            ));
        }
        groups.push((f, arity, Arc::from(idx)));
    }
    messages.sort_by_key(|(t, p)| (*t, p.source, p.row, p.col));
    let n = input.num_nodes();
    let mut offsets = vec![0u32; n + 1];
    for (t, _) in &messages {
        offsets[*t as usize + 1] += 1;
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    Ok(Prepared {
        num_nodes: n,
        groups,
        picks: messages.into_iter().map(|(_, p)| p).collect(),
        segments: Arc::new(Segments { offsets }),
    })
}

fn apply_mlp(
    tape: &mut Tape,
    nodes: &[NodeId],
    mlp: Mlp,
    x: NodeId,
) -> Result<NodeId, TensorError> {
    let h = tape.linear(x, nodes[mlp.w1], nodes[mlp.b1])?;
    let h = tape.mish(h);
    tape.linear(h, nodes[mlp.w2], nodes[mlp.b2])
}

/// Records the forward pass; returns the `1 × 1` value node.
pub fn forward(tape: &mut Tape, model: &Model, prepared: &Prepared) -> Result<NodeId, ModelError> {
    let k = model.config.k;
    let params: Vec<NodeId> = model
        .params
        .iter()
        .enumerate()
        .map(|(i, p)| tape.param(i, p.clone()))
        .collect();
    let mut f = tape.input(Mat::zeros(prepared.num_nodes, k));
    for _ in 0..model.config.layers {
        let mut outs = Vec::with_capacity(prepared.groups.len());
        for (func, arity, idx) in &prepared.groups {
            let x = tape.gather_concat(f, idx.clone(), *arity)?;
            outs.push(apply_mlp(tape, &params, model.messages[*func], x)?);
        }
        let msgs = tape.pick(outs, prepared.picks.clone(), k)?;
        let agg = tape.smooth_max(msgs, prepared.segments.clone(), model.config.alpha)?;
        let both = tape.concat_cols(f, agg)?;
        f = apply_mlp(tape, &params, model.update, both)?;
    }
    let pooled = tape.sum_rows(f);
    Ok(apply_mlp(tape, &params, model.readout, pooled)?)
}

/// `V(s, G)` for an encoded input.
pub fn value(model: &Model, prepared: &Prepared) -> Result<Real, ModelError> {
    let mut tape = Tape::new();
    let out = forward(&mut tape, model, prepared)?;
    Ok(tape.value(out).data[0])
}

/// Squared error and its gradient for every parameter.
pub fn loss_and_grad(
    model: &Model,
    prepared: &Prepared,
    target: Real,
) -> Result<(Real, Vec<Option<Mat>>), ModelError> {
    let mut tape = Tape::new();
    let out = forward(&mut tape, model, prepared)?;
    let loss = tape.mse(out, target)?;
    let grads = tape.backward(loss);
    Ok((
        tape.value(loss).data[0],
        tape.param_grads(&grads, model.params.len()),
    ))
}

/// Convenience wrapper binding a model to one domain.
#[derive(Clone, Debug)]
pub struct BoundModel<'a> {
    pub model: &'a Model,
    pub map: PredMap,
}

impl<'a> BoundModel<'a> {
    pub fn new(model: &'a Model, domain: &Domain) -> Result<Self, ModelError> {
        Ok(BoundModel {
            model,
            map: model.bind(domain)?,
        })
    }

    pub fn evaluate(
        &self,
        domain: &Domain,
        state: &State,
        goal: &QuantifiedGoal,
        num_objects: usize,
    ) -> Result<Real, ModelError> {
        let input = encode(domain, state, goal, num_objects);
        value(self.model, &prepare(self.model, &self.map, &input)?)
    }
}

/// Applies a renaming of objects to a state (used in invariance checks).
pub fn rename_state(state: &State, obj_map: &[ObjectId]) -> State {
    let fluents = state
        .fluents()
        .iter()
        .map(|a| a.map(|o| obj_map[o.index()]))
        .collect();
    let statics: Vec<_> = {
        let mut s: Vec<_> = state
            .statics()
            .iter()
            .map(|a| a.map(|o| obj_map[o.index()]))
            .collect();
        s.sort_unstable();
        s
    };
    State::from_parts(statics.into(), fluents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{domain_for, generate_instance, DomainKind, GeneratorConfig};
    use crate::seed;
    use crate::strips::{Atom, VarId};
    use rand::seq::SliceRandom;

    fn small_model(kind: DomainKind, config: ModelConfig, s: u64) -> Model {
        let d = domain_for(kind);
        Model::new(signature_of(&d), config, 10, &mut seed::rng(s, "init", 0)).unwrap()
    }

    #[test]
    fn encoding_counts() {
        let d = domain_for(DomainKind::Blocks);
        let on = d.pred_id("on").unwrap();
        let goal = QuantifiedGoal::new(
            vec!["x".into(), "y".into()],
            vec![Atom::new(on, &[Term::Var(VarId(0)), Term::Var(VarId(1))])],
            vec![(Term::Var(VarId(0)), Term::Var(VarId(1)))],
        )
        .unwrap();
        let s = State::new(&d, vec![]).unwrap();
        let e = encode(&d, &s, &goal, 3);
        assert_eq!(e.count(builtin::POSSIBLE_BINDING), 6);
        assert_eq!(e.count(builtin::CONSTANT), 3);
        assert_eq!(e.count(builtin::VARIABLE), 2);
        assert_eq!(e.count(builtin::NEQ_G), 1);
        assert_eq!(e.count(d.marker_of(on).unwrap()), 1);
        assert_eq!(e.count(on), 0);
        let ground = QuantifiedGoal::conjunction(vec![]);
        let e = encode(&d, &s, &ground, 3);
        assert_eq!(e.count(builtin::POSSIBLE_BINDING), 0);
        assert_eq!(e.count(builtin::VARIABLE), 0);
    }

    #[test]
    fn zero_layers_value_is_input_independent() {
        let cfg = ModelConfig {
            k: 4,
            layers: 0,
            alpha: 12.0,
        };
        let m = small_model(DomainKind::Blocks, cfg, 1);
        let d = domain_for(DomainKind::Blocks);
        let bm = BoundModel::new(&m, &d).unwrap();
        let mut vals = Vec::new();
        for i in 0..4 {
            let p = generate_instance(
                &GeneratorConfig::desk(DomainKind::Blocks),
                &mut seed::rng(2, "z", i),
                "p",
            )
            .unwrap();
            vals.push(
                bm.evaluate(&d, p.init(), p.goal(), p.num_objects())
                    .unwrap(),
            );
        }
        assert!(vals.iter().all(|v| v.to_bits() == vals[0].to_bits()));
    }

    #[test]
    fn blocks_model_rejects_gripper_domain() {
        let m = small_model(
            DomainKind::Blocks,
            ModelConfig {
                k: 2,
                layers: 1,
                alpha: 12.0,
            },
            1,
        );
        assert!(matches!(
            m.bind(&domain_for(DomainKind::Gripper)),
            Err(ModelError::UnknownPredicate { .. })
        ));
    }

    #[test]
    fn renaming_objects_and_variables_preserves_value() {
        let cfg = ModelConfig {
            k: 8,
            layers: 3,
            alpha: 12.0,
        };
        let m = small_model(DomainKind::Blocks, cfg, 3);
        let mut gc = GeneratorConfig::desk(DomainKind::Blocks);
        gc.vars = (2, 3);
        let p = generate_instance(&gc, &mut seed::rng(4, "r", 0), "p").unwrap();
        let d = p.shared_domain();
        let bm = BoundModel::new(&m, &d).unwrap();
        let base = bm
            .evaluate(&d, p.init(), p.goal(), p.num_objects())
            .unwrap();
        let mut rng = seed::rng(4, "perm", 0);
        for _ in 0..10 {
            let mut objs: Vec<ObjectId> = p.object_ids().collect();
            objs.shuffle(&mut rng);
            let mut vars: Vec<VarId> = p.goal().variables().to_vec();
            vars.shuffle(&mut rng);
            let s = rename_state(p.init(), &objs);
            let g = p.goal().permuted(&vars, &objs);
            let v = bm.evaluate(&d, &s, &g, p.num_objects()).unwrap();
            assert_eq!(v.to_bits(), base.to_bits());
        }
    }
}
