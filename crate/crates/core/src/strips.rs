//! Positive STRIPS: predicates, atoms, states, action schemas and their
//! groundings.
//!
//! Objects, variables and predicates are interned to dense integer ids; the
//! printable names live in side tables on [`Domain`] and [`Problem`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::hash::{Hash, Hasher};

use thiserror::Error;

use crate::goal::QuantifiedGoal;

/// Largest predicate arity the engine stores inline.
pub const MAX_ARITY: usize = 4;

/// Suffix appended to a predicate name to obtain its goal-marker twin.
pub const GOAL_SUFFIX: &str = "_g";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectId(pub u32);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub u32);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PredId(pub u32);

impl ObjectId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl VarId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl PredId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Argument of a lifted atom. In action schemas `Var(i)` is the i-th schema
/// parameter; in goals it is a goal variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Obj(ObjectId),
    Var(VarId),
}

impl Default for Term {
    fn default() -> Self {
        Term::Obj(ObjectId(0))
    }
}

impl Term {
    pub fn as_var(self) -> Option<VarId> {
        match self {
            Term::Var(v) => Some(v),
            Term::Obj(_) => None,
        }
    }

    pub fn as_obj(self) -> Option<ObjectId> {
        match self {
            Term::Obj(o) => Some(o),
            Term::Var(_) => None,
        }
    }
}

/// A predicate applied to up to [`MAX_ARITY`] arguments. Unused slots hold
/// `T::default()` so the derived ordering and hashing stay canonical.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom<T> {
    pub pred: PredId,
    arity: u8,
    args: [T; MAX_ARITY],
}

pub type GroundAtom = Atom<ObjectId>;
pub type LiftedAtom = Atom<Term>;

impl<T: Copy + Default> Atom<T> {
    /// Panics if `args.len() > MAX_ARITY`; parsers check arity first.
    pub fn new(pred: PredId, args: &[T]) -> Self {
        assert!(
            args.len() <= MAX_ARITY,
            "atom arity {} exceeds {}",
            args.len(),
            MAX_ARITY
        );
        let mut slots = [T::default(); MAX_ARITY];
        slots[..args.len()].copy_from_slice(args);
        Atom {
            pred,
            arity: args.len() as u8,
            args: slots,
        }
    }

    #[inline]
    pub fn args(&self) -> &[T] {
        &self.args[..self.arity as usize]
    }

    #[inline]
    pub fn arity(&self) -> usize {
        self.arity as usize
    }

    pub fn map<U: Copy + Default>(&self, mut f: impl FnMut(T) -> U) -> Atom<U> {
        let mut slots = [U::default(); MAX_ARITY];
        for (dst, src) in slots.iter_mut().zip(self.args()) {
            *dst = f(*src);
        }
        Atom {
            pred: self.pred,
            arity: self.arity,
            args: slots,
        }
    }

    pub fn with_pred(&self, pred: PredId) -> Self {
        Atom { pred, ..*self }
    }
}

impl<T: fmt::Debug> fmt::Debug for Atom<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}{:?}", self.pred.0, &self.args[..self.arity as usize])
    }
}

impl LiftedAtom {
    pub fn is_ground(&self) -> bool {
        self.args().iter().all(|t| matches!(t, Term::Obj(_)))
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.args().iter().filter_map(|t| t.as_var())
    }

    /// The ground atom if no argument is a variable.
    pub fn to_ground(&self) -> Option<GroundAtom> {
        if !self.is_ground() {
            return None;
        }
        Some(self.map(|t| t.as_obj().unwrap_or_default()))
    }

    pub fn from_ground(atom: &GroundAtom) -> Self {
        atom.map(Term::Obj)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PredicateKind {
    Fluent,
    Static,
    GoalMarker,
    Builtin,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Predicate {
    pub name: String,
    pub arity: usize,
    pub kind: PredicateKind,
    /// Goal marker of a base predicate, or base predicate of a goal marker.
    pub twin: Option<PredId>,
}

/// Ids of the builtin predicates; every domain registers them first.
pub mod builtin {
    use super::PredId;
    pub const CONSTANT: PredId = PredId(0);
    pub const VARIABLE: PredId = PredId(1);
    pub const POSSIBLE_BINDING: PredId = PredId(2);
    pub const NEQ: PredId = PredId(3);
    /// Goal marker twin of `Neq`, used when inequality constraints are encoded.
    pub const NEQ_G: PredId = PredId(4);
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StripsError {
    #[error("undeclared predicate {0}")]
    UndeclaredPredicate(String),
    #[error("duplicate predicate {0}")]
    DuplicatePredicate(String),
    #[error("arity mismatch for {name}: expected {expected}, got {got}")]
    ArityMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("arity {0} exceeds the supported maximum")]
    ArityTooLarge(usize),
    #[error("static predicate {pred} appears in the effects of action {action}")]
    StaticInEffect { pred: String, action: String },
    #[error("predicate {pred} cannot be used in action {action}")]
    ReservedInAction { pred: String, action: String },
    #[error("action {action}: parameter index {index} out of range")]
    UnknownParameter { action: String, index: usize },
    #[error("duplicate action {0}")]
    DuplicateAction(String),
    #[error("unknown object {0}")]
    UnknownObject(String),
    #[error("duplicate object {0}")]
    DuplicateObject(String),
    #[error("predicate {0} may not appear in a state")]
    NotAStatePredicate(String),
    #[error("precondition of {0} violated")]
    PreconditionViolated(String),
    #[error("goal variable {0} shadows an object name")]
    VariableShadowsObject(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionSchema {
    pub name: String,
    /// Parameter names without the leading `?`.
    pub params: Vec<String>,
    pub pre: Vec<LiftedAtom>,
    pub add: Vec<LiftedAtom>,
    pub del: Vec<LiftedAtom>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Domain {
    name: String,
    predicates: Vec<Predicate>,
    by_name: BTreeMap<String, PredId>,
    constants: Vec<String>,
    schemas: Vec<ActionSchema>,
}

impl Domain {
    pub fn new(name: impl Into<String>) -> Self {
        let mut d = Domain {
            name: name.into(),
            predicates: Vec::new(),
            by_name: BTreeMap::new(),
            constants: Vec::new(),
            schemas: Vec::new(),
        };
        d.push_pred("Constant", 1, PredicateKind::Builtin, None);
        d.push_pred("Variable", 1, PredicateKind::Builtin, None);
        d.push_pred("PossibleBinding", 2, PredicateKind::Builtin, None);
        d.push_pred("Neq", 2, PredicateKind::Builtin, Some(builtin::NEQ_G));
        d.push_pred("Neq_g", 2, PredicateKind::GoalMarker, Some(builtin::NEQ));
        d
    }

    fn push_pred(
        &mut self,
        name: &str,
        arity: usize,
        kind: PredicateKind,
        twin: Option<PredId>,
    ) -> PredId {
        let id = PredId(self.predicates.len() as u32);
        self.predicates.push(Predicate {
            name: name.to_string(),
            arity,
            kind,
            twin,
        });
        self.by_name.insert(name.to_string(), id);
        id
    }

    /// Registers a fluent or static predicate together with its `_g` twin.
    pub fn add_predicate(
        &mut self,
        name: &str,
        arity: usize,
        is_static: bool,
    ) -> Result<PredId, StripsError> {
        if arity > MAX_ARITY {
            return Err(StripsError::ArityTooLarge(arity));
        }
        let marker = format!("{name}{GOAL_SUFFIX}");
        if self.by_name.contains_key(name) || self.by_name.contains_key(&marker) {
            return Err(StripsError::DuplicatePredicate(name.to_string()));
        }
        let base = PredId(self.predicates.len() as u32);
        let marker_id = PredId(base.0 + 1);
        let kind = if is_static {
            PredicateKind::Static
        } else {
            PredicateKind::Fluent
        };
        self.push_pred(name, arity, kind, Some(marker_id));
        self.push_pred(&marker, arity, PredicateKind::GoalMarker, Some(base));
        Ok(base)
    }

    pub fn add_constant(&mut self, name: &str) -> Result<ObjectId, StripsError> {
        if self.constants.iter().any(|c| c == name) {
            return Err(StripsError::DuplicateObject(name.to_string()));
        }
        self.constants.push(name.to_string());
        Ok(ObjectId(self.constants.len() as u32 - 1))
    }

    /// Adds a schema after checking predicate usage, arities and parameters.
    pub fn add_schema(&mut self, schema: ActionSchema) -> Result<(), StripsError> {
        if self.schemas.iter().any(|s| s.name == schema.name) {
            return Err(StripsError::DuplicateAction(schema.name));
        }
        for (list, is_effect) in [
            (&schema.pre, false),
            (&schema.add, true),
            (&schema.del, true),
        ] {
            for atom in list {
                let p = self
                    .predicates
                    .get(atom.pred.index())
                    .ok_or_else(|| StripsError::UndeclaredPredicate(format!("#{}", atom.pred.0)))?;
                match p.kind {
                    PredicateKind::Fluent => {}
                    PredicateKind::Static if !is_effect => {}
                    PredicateKind::Static => {
                        return Err(StripsError::StaticInEffect {
                            pred: p.name.clone(),
                            action: schema.name.clone(),
                        })
                    }
                    _ => {
                        return Err(StripsError::ReservedInAction {
                            pred: p.name.clone(),
                            action: schema.name.clone(),
                        })
                    }
                }
                if p.arity != atom.arity() {
                    return Err(StripsError::ArityMismatch {
                        name: p.name.clone(),
                        expected: p.arity,
                        got: atom.arity(),
                    });
                }
                for t in atom.args() {
                    match *t {
                        Term::Var(v) if v.index() >= schema.params.len() => {
                            return Err(StripsError::UnknownParameter {
                                action: schema.name.clone(),
                                index: v.index(),
                            })
                        }
                        Term::Obj(o) if o.index() >= self.constants.len() => {
                            return Err(StripsError::UnknownObject(format!("#{}", o.0)))
                        }
                        _ => {}
                    }
                }
            }
        }
        self.schemas.push(schema);
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn predicates(&self) -> &[Predicate] {
        &self.predicates
    }

    pub fn predicate(&self, id: PredId) -> &Predicate {
        &self.predicates[id.index()]
    }

    pub fn pred_id(&self, name: &str) -> Option<PredId> {
        self.by_name.get(name).copied()
    }

    /// Looks up a predicate and checks its arity.
    pub fn resolve(&self, name: &str, arity: usize) -> Result<PredId, StripsError> {
        let id = self
            .pred_id(name)
            .ok_or_else(|| StripsError::UndeclaredPredicate(name.to_string()))?;
        let p = self.predicate(id);
        if p.arity != arity {
            return Err(StripsError::ArityMismatch {
                name: name.to_string(),
                expected: p.arity,
                got: arity,
            });
        }
        Ok(id)
    }

    pub fn is_static(&self, id: PredId) -> bool {
        self.predicate(id).kind == PredicateKind::Static
    }

    /// Goal-marker twin of a base predicate (or `Neq_g` for `Neq`).
    pub fn marker_of(&self, id: PredId) -> Option<PredId> {
        let p = self.predicate(id);
        match p.kind {
            PredicateKind::Fluent | PredicateKind::Static => p.twin,
            PredicateKind::Builtin if id == builtin::NEQ => Some(builtin::NEQ_G),
            _ => None,
        }
    }

    /// Base predicate of a goal marker.
    pub fn base_of(&self, id: PredId) -> Option<PredId> {
        let p = self.predicate(id);
        if p.kind == PredicateKind::GoalMarker {
            p.twin
        } else {
            None
        }
    }

    pub fn constants(&self) -> &[String] {
        &self.constants
    }

    pub fn schemas(&self) -> &[ActionSchema] {
        &self.schemas
    }

    pub fn schema(&self, name: &str) -> Option<&ActionSchema> {
        self.schemas.iter().find(|s| s.name == name)
    }

    /// Fluent and static predicates in declaration order.
    pub fn base_predicates(&self) -> impl Iterator<Item = (PredId, &Predicate)> {
        self.predicates
            .iter()
            .enumerate()
            .filter(|(_, p)| matches!(p.kind, PredicateKind::Fluent | PredicateKind::Static))
            .map(|(i, p)| (PredId(i as u32), p))
    }
}

/// A set of ground atoms. Static atoms are shared between all states of a
/// problem; fluents are owned. Both halves are kept sorted and deduplicated.
#[derive(Clone, Debug)]
pub struct State {
    statics: Arc<[GroundAtom]>,
    fluents: Vec<GroundAtom>,
}

impl State {
    /// Builds a state, splitting atoms by predicate kind.
    pub fn new(
        domain: &Domain,
        atoms: impl IntoIterator<Item = GroundAtom>,
    ) -> Result<Self, StripsError> {
        let mut statics = Vec::new();
        let mut fluents = Vec::new();
        for a in atoms {
            let p = domain
                .predicates
                .get(a.pred.index())
                .ok_or_else(|| StripsError::UndeclaredPredicate(format!("#{}", a.pred.0)))?;
            if p.arity != a.arity() {
                return Err(StripsError::ArityMismatch {
                    name: p.name.clone(),
                    expected: p.arity,
                    got: a.arity(),
                });
            }
            match p.kind {
                PredicateKind::Static => statics.push(a),
                PredicateKind::Fluent => fluents.push(a),
                _ => return Err(StripsError::NotAStatePredicate(p.name.clone())),
            }
        }
        statics.sort_unstable();
        statics.dedup();
        Ok(State::from_parts(statics.into(), fluents))
    }

    pub fn from_parts(statics: Arc<[GroundAtom]>, mut fluents: Vec<GroundAtom>) -> Self {
        fluents.sort_unstable();
        fluents.dedup();
        State { statics, fluents }
    }

    /// A state with the same static part and the given fluents.
    pub fn with_fluents(&self, fluents: Vec<GroundAtom>) -> Self {
        State::from_parts(self.statics.clone(), fluents)
    }

    pub fn statics(&self) -> &[GroundAtom] {
        &self.statics
    }

    pub fn shared_statics(&self) -> Arc<[GroundAtom]> {
        self.statics.clone()
    }

    pub fn fluents(&self) -> &[GroundAtom] {
        &self.fluents
    }

    pub fn len(&self) -> usize {
        self.statics.len() + self.fluents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn contains(&self, atom: &GroundAtom) -> bool {
        self.fluents.binary_search(atom).is_ok() || self.statics.binary_search(atom).is_ok()
    }

    /// All atoms in canonical order.
    pub fn iter(&self) -> Merge<'_> {
        Merge {
            a: &self.statics,
            b: &self.fluents,
        }
    }

    /// Atoms of one predicate.
    pub fn with_pred(&self, pred: PredId) -> impl Iterator<Item = &GroundAtom> {
        pred_range(&self.fluents, pred)
            .iter()
            .chain(pred_range(&self.statics, pred).iter())
    }
}

fn pred_range(atoms: &[GroundAtom], pred: PredId) -> &[GroundAtom] {
    let lo = atoms.partition_point(|a| a.pred < pred);
    let hi = atoms.partition_point(|a| a.pred <= pred);
    &atoms[lo..hi]
}

impl PartialEq for State {
    fn eq(&self, other: &Self) -> bool {
        self.fluents == other.fluents
            && (Arc::ptr_eq(&self.statics, &other.statics) || self.statics == other.statics)
    }
}

impl Eq for State {}

impl Hash for State {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.fluents.hash(state);
        self.statics.len().hash(state);
    }
}

/// Two-way merge of sorted atom slices.
pub struct Merge<'a> {
    a: &'a [GroundAtom],
    b: &'a [GroundAtom],
}

impl<'a> Iterator for Merge<'a> {
    type Item = &'a GroundAtom;

    fn next(&mut self) -> Option<Self::Item> {
        let take_a = match (self.a.first(), self.b.first()) {
            (Some(x), Some(y)) => x <= y,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => return None,
        };
        let src = if take_a { &mut self.a } else { &mut self.b };
        let (head, rest) = src.split_first()?;
        *src = rest;
        Some(head)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundAction {
    pub schema: usize,
    pub args: Vec<ObjectId>,
    pub pre: Vec<GroundAtom>,
    pub add: Vec<GroundAtom>,
    pub del: Vec<GroundAtom>,
}

impl GroundAction {
    #[inline]
    pub fn is_applicable(&self, state: &State) -> bool {
        self.pre.iter().all(|a| state.contains(a))
    }

    /// Delete-then-add successor; the caller guarantees applicability.
    pub fn apply_unchecked(&self, state: &State) -> State {
        let mut fluents: Vec<GroundAtom> = state
            .fluents()
            .iter()
            .filter(|a| !self.del.contains(a))
            .copied()
            .collect();
        fluents.extend_from_slice(&self.add);
        state.with_fluents(fluents)
    }
}

/// `A(s)`: the actions whose preconditions hold in `state`.
pub fn applicable<'a>(state: &State, actions: &'a [GroundAction]) -> Vec<&'a GroundAction> {
    actions.iter().filter(|a| a.is_applicable(state)).collect()
}

/// `f(a, s)` with delete-then-add semantics.
pub fn apply(state: &State, action: &GroundAction) -> Result<State, StripsError> {
    if !action.is_applicable(state) {
        return Err(StripsError::PreconditionViolated(format!(
            "schema #{} {:?}",
            action.schema, action.args
        )));
    }
    Ok(action.apply_unchecked(state))
}

#[derive(Clone, Debug)]
pub struct Problem {
    name: String,
    domain: Arc<Domain>,
    objects: Vec<String>,
    object_ids: BTreeMap<String, ObjectId>,
    init: State,
    goal: QuantifiedGoal,
}

impl Problem {
    /// `objects` excludes domain constants; they are prepended so that domain
    /// constant `i` is object `i`.
    pub fn new(
        name: impl Into<String>,
        domain: Arc<Domain>,
        objects: Vec<String>,
        init: Vec<GroundAtom>,
        goal: QuantifiedGoal,
    ) -> Result<Self, StripsError> {
        let mut all: Vec<String> = domain.constants().to_vec();
        all.extend(objects);
        let mut object_ids = BTreeMap::new();
        for (i, o) in all.iter().enumerate() {
            if object_ids.insert(o.clone(), ObjectId(i as u32)).is_some() {
                return Err(StripsError::DuplicateObject(o.clone()));
            }
        }
        let n = all.len();
        for a in &init {
            if let Some(o) = a.args().iter().find(|o| o.index() >= n) {
                return Err(StripsError::UnknownObject(format!("#{}", o.0)));
            }
        }
        for v in goal.variables() {
            let name = goal.var_name(*v);
            if object_ids.contains_key(name) {
                return Err(StripsError::VariableShadowsObject(name.to_string()));
            }
        }
        for t in goal
            .atoms()
            .iter()
            .flat_map(|a| a.args().iter())
            .chain(goal.neq().iter().flat_map(|(a, b)| [a, b]))
        {
            if let Term::Obj(o) = t {
                if o.index() >= n {
                    return Err(StripsError::UnknownObject(format!("#{}", o.0)));
                }
            }
        }
        let init = State::new(&domain, init)?;
        Ok(Problem {
            name: name.into(),
            domain,
            objects: all,
            object_ids,
            init,
            goal,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn shared_domain(&self) -> Arc<Domain> {
        self.domain.clone()
    }

    /// All objects, domain constants first.
    pub fn objects(&self) -> &[String] {
        &self.objects
    }

    pub fn num_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn object_ids(&self) -> impl Iterator<Item = ObjectId> {
        (0..self.objects.len() as u32).map(ObjectId)
    }

    pub fn object_name(&self, id: ObjectId) -> &str {
        &self.objects[id.index()]
    }

    pub fn object_id(&self, name: &str) -> Option<ObjectId> {
        self.object_ids.get(name).copied()
    }

    pub fn init(&self) -> &State {
        &self.init
    }

    pub fn goal(&self) -> &QuantifiedGoal {
        &self.goal
    }

    pub fn with_goal(&self, goal: QuantifiedGoal) -> Problem {
        Problem {
            goal,
            ..self.clone()
        }
    }

    /// Same problem started from another state. The state must share this
    /// problem's static atoms.
    pub fn with_init(&self, init: State) -> Problem {
        Problem {
            init,
            ..self.clone()
        }
    }

    pub fn with_name(&self, name: impl Into<String>) -> Problem {
        Problem {
            name: name.into(),
            ..self.clone()
        }
    }

    /// A state of this problem from fluent atoms, sharing the static part of
    /// `init`.
    pub fn state_from_fluents(&self, fluents: Vec<GroundAtom>) -> State {
        self.init.with_fluents(fluents)
    }

    /// Rebuilds the problem over a different domain with an identical
    /// predicate prefix (used by goal compilation).
    pub(crate) fn rehome(&self, domain: Arc<Domain>, goal: QuantifiedGoal) -> Problem {
        Problem {
            name: self.name.clone(),
            domain,
            objects: self.objects.clone(),
            object_ids: self.object_ids.clone(),
            init: self.init.clone(),
            goal,
        }
    }

    pub fn atom_label(&self, atom: &GroundAtom) -> String {
        let mut s = String::from("(");
        s.push_str(&self.domain.predicate(atom.pred).name);
        for o in atom.args() {
            s.push(' ');
            s.push_str(self.object_name(*o));
        }
        s.push(')');
        s
    }

    pub fn action_label(&self, action: &GroundAction) -> String {
        let mut s = String::from("(");
        s.push_str(&self.domain.schemas()[action.schema].name);
        for o in &action.args {
            s.push(' ');
            s.push_str(self.object_name(*o));
        }
        s.push(')');
        s
    }
}

/// All ground actions whose static preconditions hold in `init`, in schema
/// order and then lexicographic parameter order.
pub fn ground_actions(problem: &Problem) -> Vec<GroundAction> {
    let domain = problem.domain();
    let statics = problem.init();
    let n = problem.num_objects() as u32;
    let mut out = Vec::new();
    for (si, schema) in domain.schemas().iter().enumerate() {
        let p = schema.params.len();
        // Static preconditions are checked once their last parameter is bound.
        let mut checks: Vec<Vec<LiftedAtom>> = alloc::vec![Vec::new(); p + 1];
        for atom in &schema.pre {
            if domain.is_static(atom.pred) {
                let level = atom.vars().map(|v| v.index() + 1).max().unwrap_or(0);
                checks[level].push(*atom);
            }
        }
        let holds = |atom: &LiftedAtom, binding: &[ObjectId]| {
            let g = atom.map(|t| match t {
                Term::Obj(o) => o,
                Term::Var(v) => binding[v.index()],
            });
            statics.contains(&g)
        };
        let mut binding: Vec<ObjectId> = alloc::vec![ObjectId(0); p];
        if !checks[0].iter().all(|a| holds(a, &binding)) {
            continue;
        }
        if p == 0 {
            out.push(instantiate(si, schema, &binding));
            continue;
        }
        if n == 0 {
            continue;
        }
        // Odometer over parameter values with pruning at each level.
        let mut level = 0usize;
        let mut cursor: Vec<u32> = alloc::vec![0; p];
        loop {
            if cursor[level] >= n {
                if level == 0 {
                    break;
                }
                cursor[level] = 0;
                level -= 1;
                cursor[level] += 1;
                continue;
            }
            binding[level] = ObjectId(cursor[level]);
            if checks[level + 1].iter().all(|a| holds(a, &binding)) {
                if level + 1 == p {
                    out.push(instantiate(si, schema, &binding));
                    cursor[level] += 1;
                } else {
                    level += 1;
                    cursor[level] = 0;
                }
            } else {
                cursor[level] += 1;
            }
        }
    }
    out
}

fn instantiate(schema_index: usize, schema: &ActionSchema, binding: &[ObjectId]) -> GroundAction {
    let sub = |atom: &LiftedAtom| {
        atom.map(|t| match t {
            Term::Obj(o) => o,
            Term::Var(v) => binding[v.index()],
        })
    };
    let mut pre: Vec<GroundAtom> = schema.pre.iter().map(sub).collect();
    pre.sort_unstable();
    pre.dedup();
    let mut add: Vec<GroundAtom> = schema.add.iter().map(sub).collect();
    add.sort_unstable();
    add.dedup();
    let mut del: Vec<GroundAtom> = schema.del.iter().map(sub).collect();
    del.sort_unstable();
    del.dedup();
    // Delete-then-add: an atom both deleted and added survives.
    del.retain(|a| add.binary_search(a).is_err());
    GroundAction {
        schema: schema_index,
        args: binding.to_vec(),
        pre,
        add,
        del,
    }
}

/// A problem together with its ground actions.
#[derive(Clone, Debug)]
pub struct Task {
    pub problem: Problem,
    pub actions: Vec<GroundAction>,
}

impl Task {
    pub fn new(problem: Problem) -> Self {
        let actions = ground_actions(&problem);
        Task { problem, actions }
    }

    /// Successor states with the index of the action producing them.
    pub fn successors<'a>(&'a self, state: &'a State) -> impl Iterator<Item = (usize, State)> + 'a {
        self.actions
            .iter()
            .enumerate()
            .filter(move |(_, a)| a.is_applicable(state))
            .map(move |(i, a)| (i, a.apply_unchecked(state)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("action at step {step} is not applicable")]
    Inapplicable { step: usize },
    #[error("goal not satisfied after {steps} steps")]
    GoalUnsatisfied { steps: usize },
}

impl PlanError {
    /// Index of the first failing step; `plan.len()` when only the goal test fails.
    pub fn step(&self) -> usize {
        match *self {
            PlanError::Inapplicable { step } => step,
            PlanError::GoalUnsatisfied { steps } => steps,
        }
    }
}

/// Replays `plan` from the initial state; `Ok(cost)` iff every step applies
/// and the final state satisfies the (possibly quantified) goal.
pub fn validate_plan(problem: &Problem, plan: &[GroundAction]) -> Result<usize, PlanError> {
    let mut state = problem.init().clone();
    for (step, action) in plan.iter().enumerate() {
        if !action.is_applicable(&state) {
            return Err(PlanError::Inapplicable { step });
        }
        state = action.apply_unchecked(&state);
    }
    if crate::goal::satisfies(&state, problem.goal(), problem.num_objects()).is_some() {
        Ok(plan.len())
    } else {
        Err(PlanError::GoalUnsatisfied { steps: plan.len() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{domain_for, DomainKind};
    use alloc::vec;

    fn blocks_problem() -> Problem {
        let d = domain_for(DomainKind::Blocks);
        let on = d.pred_id("on").unwrap();
        let ontable = d.pred_id("ontable").unwrap();
        let clear = d.pred_id("clear").unwrap();
        let handempty = d.pred_id("handempty").unwrap();
        let (a, b, c) = (ObjectId(0), ObjectId(1), ObjectId(2));
        let init = vec![
            Atom::new(ontable, &[a]),
            Atom::new(clear, &[a]),
            Atom::new(on, &[b, c]),
            Atom::new(ontable, &[c]),
            Atom::new(clear, &[b]),
            Atom::new(handempty, &[]),
        ];
        let goal = QuantifiedGoal::conjunction(vec![Atom::new(on, &[a, b]).map(Term::Obj)]);
        Problem::new("p", d, vec!["a".into(), "b".into(), "c".into()], init, goal).unwrap()
    }

    #[test]
    fn every_base_predicate_has_goal_twin() {
        let d = domain_for(DomainKind::Blocks);
        for (id, p) in d.base_predicates() {
            let m = d.marker_of(id).unwrap();
            assert_eq!(d.predicate(m).arity, p.arity);
            assert_eq!(d.predicate(m).kind, PredicateKind::GoalMarker);
            assert_eq!(d.base_of(m), Some(id));
            assert_eq!(d.predicate(m).name, format!("{}_g", p.name));
        }
        let builtins: Vec<_> = d
            .predicates()
            .iter()
            .filter(|p| p.kind == PredicateKind::Builtin)
            .map(|p| (p.name.as_str(), p.arity))
            .collect();
        assert_eq!(
            builtins,
            vec![
                ("Constant", 1),
                ("Variable", 1),
                ("PossibleBinding", 2),
                ("Neq", 2)
            ]
        );
    }

    #[test]
    fn pickup_hand_simulated() {
        let p = blocks_problem();
        let d = p.domain();
        let actions = ground_actions(&p);
        let pick_a = actions
            .iter()
            .find(|a| d.schemas()[a.schema].name == "pick-up" && a.args == [ObjectId(0)])
            .unwrap();
        let s2 = apply(p.init(), pick_a).unwrap();
        let holding = d.pred_id("holding").unwrap();
        let handempty = d.pred_id("handempty").unwrap();
        assert!(s2.contains(&Atom::new(holding, &[ObjectId(0)])));
        assert!(!s2.contains(&Atom::new(handempty, &[])));
        // a second pick-up is no longer applicable
        assert!(apply(&s2, pick_a).is_err());
    }

    #[test]
    fn empty_precondition_always_applicable() {
        let mut d = Domain::new("t");
        let f = d.add_predicate("f", 0, false).unwrap();
        d.add_schema(ActionSchema {
            name: "go".into(),
            params: vec![],
            pre: vec![],
            add: vec![Atom::new(f, &[])],
            del: vec![],
        })
        .unwrap();
        let p = Problem::new(
            "p",
            Arc::new(d),
            vec![],
            vec![],
            QuantifiedGoal::conjunction(vec![]),
        )
        .unwrap();
        let acts = ground_actions(&p);
        assert_eq!(acts.len(), 1);
        assert_eq!(applicable(p.init(), &acts).len(), 1);
    }

    #[test]
    fn nonempty_precondition_excluded_on_empty_state() {
        let p = blocks_problem();
        let acts = ground_actions(&p);
        let empty = p.state_from_fluents(vec![]);
        assert!(applicable(&empty, &acts).is_empty());
    }

    #[test]
    fn static_predicate_in_effect_rejected() {
        let mut d = Domain::new("t");
        let s = d.add_predicate("conn", 2, true).unwrap();
        let err = d
            .add_schema(ActionSchema {
                name: "bad".into(),
                params: vec!["x".into()],
                pre: vec![],
                add: vec![Atom::new(s, &[Term::Var(VarId(0)), Term::Var(VarId(0))])],
                del: vec![],
            })
            .unwrap_err();
        assert!(matches!(err, StripsError::StaticInEffect { .. }));
    }

    #[test]
    fn state_equality_ignores_insertion_order() {
        let p = blocks_problem();
        let f = p.init().fluents().to_vec();
        let mut r = f.clone();
        r.reverse();
        let s1 = p.state_from_fluents(f);
        let s2 = p.state_from_fluents(r);
        assert_eq!(s1, s2);
        let merged: Vec<_> = s1.iter().copied().collect();
        let mut sorted = merged.clone();
        sorted.sort();
        assert_eq!(merged, sorted);
    }

    #[test]
    fn validate_empty_plan() {
        let p = blocks_problem();
        assert_eq!(
            validate_plan(&p, &[]),
            Err(PlanError::GoalUnsatisfied { steps: 0 })
        );
        let on = p.domain().pred_id("on").unwrap();
        let solved = p.with_goal(QuantifiedGoal::conjunction(vec![Atom::new(
            on,
            &[ObjectId(1), ObjectId(2)],
        )
        .map(Term::Obj)]));
        assert_eq!(validate_plan(&solved, &[]), Ok(0));
    }

    #[test]
    fn validate_reports_first_bad_step() {
        let p = blocks_problem();
        let acts = ground_actions(&p);
        let d = p.domain();
        let find = |name: &str, args: &[u32]| {
            acts.iter()
                .find(|a| {
                    d.schemas()[a.schema].name == name
                        && a.args.iter().map(|o| o.0).eq(args.iter().copied())
                })
                .unwrap()
                .clone()
        };
        let good = vec![find("pick-up", &[0]), find("stack", &[0, 1])];
        assert_eq!(validate_plan(&p, &good), Ok(2));
        let bad = vec![find("stack", &[0, 1])];
        assert_eq!(
            validate_plan(&p, &bad),
            Err(PlanError::Inapplicable { step: 0 })
        );
    }

    #[test]
    fn shadowing_variable_rejected() {
        let d = domain_for(DomainKind::Blocks);
        let clear = d.pred_id("clear").unwrap();
        let goal = QuantifiedGoal::new(
            vec!["a".into()],
            vec![Atom::new(clear, &[Term::Var(VarId(0))])],
            vec![],
        )
        .unwrap();
        let err = Problem::new("p", d, vec!["a".into()], vec![], goal).unwrap_err();
        assert!(matches!(err, StripsError::VariableShadowsObject(_)));
    }
}
