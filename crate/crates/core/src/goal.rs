//! Existentially quantified goals: satisfaction, substitution, enumeration of
//! statically valid bindings, and compilation into a classical problem.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::search::{Budget, Unlimited};
use crate::strips::{
    ActionSchema, Atom, GroundAtom, LiftedAtom, ObjectId, Problem, State, StripsError, Term, VarId,
};

/// Default ceiling on the number of bindings materialized at once.
pub const DEFAULT_BINDING_CAP: usize = 1_000_000;

/// Name of the nullary fluent that compiled problems must reach.
pub const DNF_GOAL: &str = "dnf-goal-reached";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GoalError {
    #[error("variable ?{0} is not declared")]
    UndeclaredVariableName(String),
    #[error("variable #{} is not declared", .0 .0)]
    UndeclaredVariable(VarId),
    #[error("variable #{} is constrained to differ from itself", .0 .0)]
    SelfInequality(VarId),
    #[error("more than {0} bindings")]
    TooManyBindings(usize),
    #[error(transparent)]
    Strips(#[from] StripsError),
}

/// A conjunction of atoms over objects and existentially quantified
/// variables, plus pairwise inequality constraints.
///
/// Atoms are stored with their base predicate; the goal-marker twin is only
/// introduced when encoding for the network.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QuantifiedGoal {
    variables: Vec<VarId>,
    atoms: Vec<LiftedAtom>,
    neq: Vec<(Term, Term)>,
    names: Arc<[String]>,
}

fn ordered(a: Term, b: Term) -> (Term, Term) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl QuantifiedGoal {
    /// Declares one variable per name (ids `0..n` in order).
    pub fn new(
        var_names: Vec<String>,
        atoms: Vec<LiftedAtom>,
        neq: Vec<(Term, Term)>,
    ) -> Result<Self, GoalError> {
        let n = var_names.len();
        let declared = |t: &Term| match t {
            Term::Var(v) if v.index() >= n => Err(GoalError::UndeclaredVariable(*v)),
            _ => Ok(()),
        };
        for a in &atoms {
            a.args().iter().try_for_each(declared)?;
        }
        let mut pairs = Vec::with_capacity(neq.len());
        for (a, b) in neq {
            declared(&a)?;
            declared(&b)?;
            if let (Term::Var(v), true) = (a, a == b) {
                return Err(GoalError::SelfInequality(v));
            }
            pairs.push(ordered(a, b));
        }
        pairs.sort_unstable();
        pairs.dedup();
        let mut uniq: Vec<LiftedAtom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            if !uniq.contains(&a) {
                uniq.push(a);
            }
        }
        Ok(QuantifiedGoal {
            variables: (0..n as u32).map(VarId).collect(),
            atoms: uniq,
            neq: pairs,
            names: var_names.into(),
        })
    }

    /// A fully ground conjunction.
    pub fn conjunction(atoms: Vec<LiftedAtom>) -> Self {
        QuantifiedGoal::new(Vec::new(), atoms, Vec::new()).expect("ground atoms only")
    }

    pub fn from_ground_atoms(atoms: &[GroundAtom]) -> Self {
        QuantifiedGoal::conjunction(atoms.iter().map(LiftedAtom::from_ground).collect())
    }

    /// Free variables, in declaration order.
    pub fn variables(&self) -> &[VarId] {
        &self.variables
    }

    pub fn atoms(&self) -> &[LiftedAtom] {
        &self.atoms
    }

    pub fn neq(&self) -> &[(Term, Term)] {
        &self.neq
    }

    pub fn var_name(&self, v: VarId) -> &str {
        &self.names[v.index()]
    }

    /// Name table for every variable ever declared, bound or not.
    pub fn var_names(&self) -> &[String] {
        &self.names
    }

    pub fn is_ground(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    /// Ground atoms of a ground goal (`None` if variables remain).
    pub fn ground_atoms(&self) -> Option<Vec<GroundAtom>> {
        self.atoms.iter().map(|a| a.to_ground()).collect()
    }

    /// True when an inequality between two identical constants makes the
    /// goal unsatisfiable outright.
    pub fn has_violated_neq(&self) -> bool {
        self.neq
            .iter()
            .any(|(a, b)| matches!((a, b), (Term::Obj(x), Term::Obj(y)) if x == y))
    }

    /// Substitutes the given variables; bound variables leave the variable
    /// list. Inequalities between constants are kept, even equal ones.
    pub fn bind(&self, binding: &Binding) -> Result<QuantifiedGoal, GoalError> {
        for v in binding.vars() {
            if !self.variables.contains(&v) {
                return Err(GoalError::UndeclaredVariable(v));
            }
        }
        let sub = |t: Term| match t {
            Term::Var(v) => binding.get(v).map(Term::Obj).unwrap_or(t),
            t => t,
        };
        let mut atoms: Vec<LiftedAtom> = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            let a = a.map(sub);
            if !atoms.contains(&a) {
                atoms.push(a);
            }
        }
        let mut neq: Vec<(Term, Term)> = self
            .neq
            .iter()
            .map(|&(a, b)| ordered(sub(a), sub(b)))
            .collect();
        neq.sort_unstable();
        neq.dedup();
        Ok(QuantifiedGoal {
            variables: self
                .variables
                .iter()
                .copied()
                .filter(|v| binding.get(*v).is_none())
                .collect(),
            atoms,
            neq,
            names: self.names.clone(),
        })
    }

    /// Renames variables and objects (used by invariance checks).
    pub fn permuted(&self, var_order: &[VarId], obj_map: &[ObjectId]) -> QuantifiedGoal {
        let n = self.names.len();
        let mut new_id = vec![VarId(0); n];
        let mut names = vec![String::new(); n];
        for (new, old) in var_order.iter().enumerate() {
            new_id[old.index()] = VarId(new as u32);
            names[new] = self.names[old.index()].clone();
        }
        // variables not listed keep a slot after the listed ones
        let mut next = var_order.len();
        for old in 0..n {
            if !var_order.iter().any(|v| v.index() == old) {
                new_id[old] = VarId(next as u32);
                names[next] = self.names[old].clone();
                next += 1;
            }
        }
        let sub = |t: Term| match t {
            Term::Var(v) => Term::Var(new_id[v.index()]),
            Term::Obj(o) => Term::Obj(obj_map[o.index()]),
        };
        let mut neq: Vec<(Term, Term)> = self
            .neq
            .iter()
            .map(|&(a, b)| ordered(sub(a), sub(b)))
            .collect();
        neq.sort_unstable();
        let mut variables: Vec<VarId> = self.variables.iter().map(|v| new_id[v.index()]).collect();
        variables.sort_unstable();
        QuantifiedGoal {
            variables,
            atoms: self.atoms.iter().map(|a| a.map(sub)).collect(),
            neq,
            names: names.into(),
        }
    }
}

/// Substitution `ground(G, b)`.
pub fn ground(goal: &QuantifiedGoal, binding: &Binding) -> Result<QuantifiedGoal, GoalError> {
    goal.bind(binding)
}

/// Partial map from goal variables to objects.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Binding(BTreeMap<VarId, ObjectId>);

impl Binding {
    pub fn new() -> Self {
        Binding(BTreeMap::new())
    }

    pub fn single(v: VarId, o: ObjectId) -> Self {
        let mut b = Binding::new();
        b.insert(v, o);
        b
    }

    pub fn insert(&mut self, v: VarId, o: ObjectId) {
        self.0.insert(v, o);
    }

    pub fn get(&self, v: VarId) -> Option<ObjectId> {
        self.0.get(&v).copied()
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.0.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, ObjectId)> + '_ {
        self.0.iter().map(|(v, o)| (*v, *o))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Whether every variable of `goal` is bound.
    pub fn is_total_for(&self, goal: &QuantifiedGoal) -> bool {
        goal.variables().iter().all(|v| self.0.contains_key(v))
    }
}

impl FromIterator<(VarId, ObjectId)> for Binding {
    fn from_iter<I: IntoIterator<Item = (VarId, ObjectId)>>(iter: I) -> Self {
        Binding(iter.into_iter().collect())
    }
}

/// Decides whether some substitution of the goal variables makes every goal
/// atom true in `state` while respecting the inequalities.
///
/// Complete backtracking search: most-constrained variable first, candidate
/// sets seeded from matching state atoms, forward checking on atoms with one
/// remaining variable and on inequalities.
pub fn satisfies(state: &State, goal: &QuantifiedGoal, num_objects: usize) -> Option<Binding> {
    if goal.has_violated_neq() {
        return None;
    }
    for a in goal.atoms() {
        if let Some(g) = a.to_ground() {
            if !state.contains(&g) {
                return None;
            }
        }
    }
    let vars = goal.variables();
    if vars.is_empty() {
        return Some(Binding::new());
    }
    let local = LocalVars::new(goal);
    let nv = vars.len();

    let lifted: Vec<LiftedAtom> = goal
        .atoms()
        .iter()
        .filter(|a| !a.is_ground())
        .copied()
        .collect();
    let mut var_atoms: Vec<Vec<usize>> = vec![Vec::new(); nv];
    let mut domains: Vec<Option<Vec<u32>>> = vec![None; nv];
    for (ai, atom) in lifted.iter().enumerate() {
        let mut seen: Vec<usize> = Vec::new();
        for v in atom.vars() {
            let l = local.get(v);
            if !seen.contains(&l) {
                seen.push(l);
                var_atoms[l].push(ai);
            }
        }
        // Project matching state atoms onto each variable of this atom.
        let mut projections: Vec<Vec<u32>> = vec![Vec::new(); seen.len()];
        'facts: for fact in state.with_pred(atom.pred) {
            let mut assigned: [Option<u32>; crate::strips::MAX_ARITY] =
                [None; crate::strips::MAX_ARITY];
            for (t, o) in atom.args().iter().zip(fact.args()) {
                match *t {
                    Term::Obj(c) => {
                        if c != *o {
                            continue 'facts;
                        }
                    }
                    Term::Var(v) => {
                        let slot = seen.iter().position(|&l| l == local.get(v)).unwrap_or(0);
                        match assigned[slot] {
                            Some(prev) if prev != o.0 => continue 'facts,
                            _ => assigned[slot] = Some(o.0),
                        }
                    }
                }
            }
            for (slot, proj) in projections.iter_mut().enumerate() {
                if let Some(val) = assigned[slot] {
                    proj.push(val);
                }
            }
        }
        for (slot, mut proj) in projections.into_iter().enumerate() {
            proj.sort_unstable();
            proj.dedup();
            let l = seen[slot];
            domains[l] = Some(match domains[l].take() {
                None => proj,
                Some(prev) => intersect(&prev, &proj),
            });
        }
    }
    let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); nv];
    let mut domains: Vec<Vec<u32>> = domains
        .into_iter()
        .map(|d| d.unwrap_or_else(|| (0..num_objects as u32).collect()))
        .collect();
    for &(a, b) in goal.neq() {
        match (a, b) {
            (Term::Var(x), Term::Var(y)) => {
                let (lx, ly) = (local.get(x), local.get(y));
                neighbours[lx].push(ly);
                neighbours[ly].push(lx);
            }
            (Term::Var(x), Term::Obj(c)) | (Term::Obj(c), Term::Var(x)) => {
                domains[local.get(x)].retain(|&o| o != c.0);
            }
            _ => {}
        }
    }
    if domains.iter().any(|d| d.is_empty()) {
        return None;
    }
    let mut csp = Csp {
        state,
        atoms: &lifted,
        local: &local,
        var_atoms,
        neighbours,
        assign: vec![None; nv],
    };
    if csp.search(domains) {
        Some(
            csp.assign
                .iter()
                .enumerate()
                .map(|(l, o)| (vars[l], ObjectId(o.expect("total assignment"))))
                .collect(),
        )
    } else {
        None
    }
}

fn intersect(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Dense local index for each free variable of a goal.
struct LocalVars {
    index: Vec<usize>,
}

impl LocalVars {
    fn new(goal: &QuantifiedGoal) -> Self {
        let mut index = vec![usize::MAX; goal.var_names().len()];
        for (l, v) in goal.variables().iter().enumerate() {
            index[v.index()] = l;
        }
        LocalVars { index }
    }

    #[inline]
    fn get(&self, v: VarId) -> usize {
        self.index[v.index()]
    }
}

struct Csp<'a> {
    state: &'a State,
    atoms: &'a [LiftedAtom],
    local: &'a LocalVars,
    var_atoms: Vec<Vec<usize>>,
    neighbours: Vec<Vec<usize>>,
    assign: Vec<Option<u32>>,
}

impl Csp<'_> {
    fn ground_with(&self, atom: &LiftedAtom, extra: Option<(usize, u32)>) -> Option<GroundAtom> {
        let mut ok = true;
        let g = atom.map(|t| match t {
            Term::Obj(o) => o,
            Term::Var(v) => {
                let l = self.local.get(v);
                match (self.assign[l], extra) {
                    (Some(o), _) => ObjectId(o),
                    (None, Some((el, o))) if el == l => ObjectId(o),
                    _ => {
                        ok = false;
                        ObjectId(0)
                    }
                }
            }
        });
        ok.then_some(g)
    }

    fn search(&mut self, domains: Vec<Vec<u32>>) -> bool {
        let var = (0..self.assign.len())
            .filter(|&l| self.assign[l].is_none())
            .min_by_key(|&l| (domains[l].len(), l));
        let Some(var) = var else {
            return true;
        };
        for &val in &domains[var] {
            if self.neighbours[var]
                .iter()
                .any(|&u| self.assign[u] == Some(val))
            {
                continue;
            }
            self.assign[var] = Some(val);
            if let Some(next) = self.forward_check(var, val, &domains) {
                if self.search(next) {
                    return true;
                }
            }
            self.assign[var] = None;
        }
        false
    }

    fn forward_check(&self, var: usize, val: u32, domains: &[Vec<u32>]) -> Option<Vec<Vec<u32>>> {
        let mut next = domains.to_vec();
        next[var] = vec![val];
        for &ai in &self.var_atoms[var] {
            let atom = &self.atoms[ai];
            let mut open: Option<usize> = None;
            let mut several = false;
            for v in atom.vars() {
                let l = self.local.get(v);
                if self.assign[l].is_none() {
                    match open {
                        Some(o) if o != l => several = true,
                        _ => open = Some(l),
                    }
                }
            }
            if several {
                continue;
            }
            match open {
                None => {
                    let g = self.ground_with(atom, None)?;
                    if !self.state.contains(&g) {
                        return None;
                    }
                }
                Some(u) => {
                    let keep: Vec<u32> = next[u]
                        .iter()
                        .copied()
                        .filter(|&w| {
                            self.ground_with(atom, Some((u, w)))
                                .is_some_and(|g| self.state.contains(&g))
                        })
                        .collect();
                    if keep.is_empty() {
                        return None;
                    }
                    next[u] = keep;
                }
            }
        }
        for &u in &self.neighbours[var] {
            if self.assign[u].is_none() {
                next[u].retain(|&w| w != val);
                if next[u].is_empty() {
                    return None;
                }
            }
        }
        Some(next)
    }
}

/// Streaming enumeration of the total bindings whose static goal atoms hold
/// in the static part of `state0` and whose inequalities are respected.
/// Order is lexicographic in (variable order, object order).
pub struct ValidBindings<'a> {
    state: &'a State,
    vars: Vec<VarId>,
    num_objects: u32,
    /// Static atoms to check once the variable at this depth is bound.
    checks: Vec<Vec<LiftedAtom>>,
    neq_checks: Vec<Vec<(Term, Term)>>,
    local: LocalVars,
    cursor: Vec<u32>,
    level: usize,
    done: bool,
}

pub fn enumerate_valid_bindings<'a>(
    problem: &Problem,
    state0: &'a State,
    goal: &QuantifiedGoal,
) -> ValidBindings<'a> {
    let domain = problem.domain();
    let vars = goal.variables().to_vec();
    let local = LocalVars::new(goal);
    let depth_of = |t: &Term| match t {
        Term::Var(v) => local.get(*v) + 1,
        Term::Obj(_) => 0,
    };
    let nv = vars.len();
    let mut checks: Vec<Vec<LiftedAtom>> = vec![Vec::new(); nv + 1];
    for a in goal.atoms() {
        if domain.is_static(a.pred) {
            let d = a.args().iter().map(depth_of).max().unwrap_or(0);
            checks[d].push(*a);
        }
    }
    let mut neq_checks: Vec<Vec<(Term, Term)>> = vec![Vec::new(); nv + 1];
    for &(a, b) in goal.neq() {
        neq_checks[depth_of(&a).max(depth_of(&b))].push((a, b));
    }
    let mut it = ValidBindings {
        state: state0,
        vars,
        num_objects: problem.num_objects() as u32,
        checks,
        neq_checks,
        local,
        cursor: vec![0; nv],
        level: 0,
        done: false,
    };
    if !it.consistent(0) || (nv > 0 && it.num_objects == 0) {
        it.done = true;
    }
    it
}

impl ValidBindings<'_> {
    fn value(&self, t: Term) -> ObjectId {
        match t {
            Term::Obj(o) => o,
            Term::Var(v) => ObjectId(self.cursor[self.local.get(v)]),
        }
    }

    /// Checks the constraints that become fully bound at `depth`
    /// (depth 0: constraints without variables).
    fn consistent(&self, depth: usize) -> bool {
        self.checks[depth].iter().all(|a| {
            self.state
                .statics()
                .binary_search(&a.map(|t| self.value(t)))
                .is_ok()
        }) && self.neq_checks[depth]
            .iter()
            .all(|&(a, b)| self.value(a) != self.value(b))
    }
}

impl Iterator for ValidBindings<'_> {
    type Item = Binding;

    fn next(&mut self) -> Option<Binding> {
        if self.done {
            return None;
        }
        let n = self.vars.len();
        if n == 0 {
            self.done = true;
            return Some(Binding::new());
        }
        loop {
            if self.level == n {
                let b: Binding = self
                    .vars
                    .iter()
                    .zip(&self.cursor)
                    .map(|(v, o)| (*v, ObjectId(*o)))
                    .collect();
                self.level -= 1;
                self.cursor[self.level] += 1;
                return Some(b);
            }
            if self.cursor[self.level] >= self.num_objects {
                if self.level == 0 {
                    self.done = true;
                    return None;
                }
                self.cursor[self.level] = 0;
                self.level -= 1;
                self.cursor[self.level] += 1;
                continue;
            }
            if self.consistent(self.level + 1) {
                self.level += 1;
                if self.level < n {
                    self.cursor[self.level] = 0;
                }
            } else {
                self.cursor[self.level] += 1;
            }
        }
    }
}

/// Materializes the valid bindings, failing once more than `cap` are found.
pub fn collect_valid_bindings(
    problem: &Problem,
    state0: &State,
    goal: &QuantifiedGoal,
    cap: usize,
) -> Result<Vec<Binding>, GoalError> {
    let mut out = Vec::new();
    for b in enumerate_valid_bindings(problem, state0, goal) {
        if out.len() == cap {
            return Err(GoalError::TooManyBindings(cap));
        }
        out.push(b);
    }
    Ok(out)
}

/// Result of compiling the quantified goal away.
#[derive(Clone, Debug)]
pub struct DnfCompilation {
    pub problem: Problem,
    /// Binding realised by dummy action `bind-<k>`; empty means the compiled
    /// problem is trivially unsolvable.
    pub bindings: Vec<Binding>,
}

/// Replaces the quantified goal by a fresh nullary goal atom reached through
/// one dummy action per statically valid binding.
pub fn compile_dnf(problem: &Problem, cap: usize) -> Result<DnfCompilation, GoalError> {
    Ok(compile_dnf_within(problem, cap, &mut Unlimited)?.expect("unlimited budget"))
}

/// [`compile_dnf`] that polls `budget` once per binding and returns `None`
/// when it runs out.
pub fn compile_dnf_within(
    problem: &Problem,
    cap: usize,
    budget: &mut dyn Budget,
) -> Result<Option<DnfCompilation>, GoalError> {
    let goal = problem.goal();
    let mut bindings = Vec::new();
    for b in enumerate_valid_bindings(problem, problem.init(), goal) {
        if bindings.len() == cap {
            return Err(GoalError::TooManyBindings(cap));
        }
        if budget.exhausted(bindings.len()) {
            return Ok(None);
        }
        bindings.push(b);
    }
    let mut domain = problem.domain().clone();
    domain.set_name(format!("{}-dnf", problem.domain().name()));
    let reached = domain.add_predicate(DNF_GOAL, 0, false)?;
    for name in &problem.objects()[problem.domain().constants().len()..] {
        domain.add_constant(name)?;
    }
    for (k, b) in bindings.iter().enumerate() {
        if budget.exhausted(k) {
            return Ok(None);
        }
        let g = goal.bind(b)?;
        domain.add_schema(ActionSchema {
            name: format!("bind-{k}"),
            params: Vec::new(),
            pre: g.atoms().to_vec(),
            add: vec![Atom::new(reached, &[])],
            del: Vec::new(),
        })?;
    }
    let compiled_goal = QuantifiedGoal::conjunction(vec![Atom::new(reached, &[])]);
    Ok(Some(DnfCompilation {
        problem: problem.rehome(Arc::new(domain), compiled_goal),
        bindings,
    }))
}
