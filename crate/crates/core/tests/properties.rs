use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use qground_core::generators::{generate_instance, DomainKind, GeneratorConfig};
use qground_core::goal::{ground, satisfies, Binding};
use qground_core::oracle::explore;
use qground_core::seed;
use qground_core::strips::{ground_actions, GroundAction};
use qground_core::{
    Atom, GroundAtom, LiftedAtom, ObjectId, Problem, QuantifiedGoal, State, Task, Term, VarId,
};

fn small_instance(kind_idx: usize, s: u64) -> Problem {
    let kind = DomainKind::ALL[kind_idx % DomainKind::ALL.len()];
    let mut cfg = GeneratorConfig::desk(kind);
    cfg.objects = (cfg.objects.0, cfg.objects.0 + 1);
    cfg.width = (2, 2);
    cfg.height = (2, 3);
    cfg.rooms = (2, 2);
    generate_instance(&cfg, &mut seed::rng(s, "instance", 0), "p").unwrap()
}

fn reachable_state(problem: &Problem, s: u64) -> State {
    let space = explore(&Task::new(problem.clone()), 5_000);
    let i = seed::rng(s, "state", 0).gen_range(0..space.len());
    space.states()[i].clone()
}

/// A random goal over the instance's base predicates, biased towards atoms
/// that actually occur so that both outcomes are common.
fn random_goal(problem: &Problem, state: &State, nvars: usize, s: u64) -> QuantifiedGoal {
    let mut rng = seed::rng(s, "goal", 0);
    let n = problem.num_objects() as u32;
    let facts: Vec<GroundAtom> = state
        .iter()
        .copied()
        .filter(|a| a.arity() > 0 && problem.domain().base_of(a.pred).is_none())
        .collect();
    let preds: Vec<_> = problem
        .domain()
        .base_predicates()
        .filter(|(_, p)| p.arity > 0)
        .map(|(id, p)| (id, p.arity))
        .collect();
    let term = |rng: &mut seed::Rng, o: ObjectId| -> Term {
        if nvars > 0 && rng.gen_bool(0.6) {
            Term::Var(VarId(rng.gen_range(0..nvars as u32)))
        } else {
            Term::Obj(o)
        }
    };
    let mut atoms: Vec<LiftedAtom> = Vec::new();
    for _ in 0..rng.gen_range(1..=4) {
        if rng.gen_bool(0.7) && !facts.is_empty() {
            let f = *facts.choose(&mut rng).unwrap();
            let args: Vec<Term> = f.args().iter().map(|&o| term(&mut rng, o)).collect();
            atoms.push(Atom::new(f.pred, &args));
        } else {
            let (p, arity) = *preds.choose(&mut rng).unwrap();
            let args: Vec<Term> = (0..arity)
                .map(|_| {
                    let o = ObjectId(rng.gen_range(0..n));
                    term(&mut rng, o)
                })
                .collect();
            atoms.push(Atom::new(p, &args));
        }
    }
    let mut neq = Vec::new();
    if nvars >= 2 && rng.gen_bool(0.5) {
        neq.push((Term::Var(VarId(0)), Term::Var(VarId(1))));
    }
    if nvars >= 1 && rng.gen_bool(0.3) {
        neq.push((
            Term::Var(VarId(0)),
            Term::Obj(ObjectId(rng.gen_range(0..n))),
        ));
    }
    let names = (0..nvars).map(|i| format!("x{i}")).collect();
    QuantifiedGoal::new(names, atoms, neq).unwrap()
}

fn brute_force(state: &State, goal: &QuantifiedGoal, n: usize) -> bool {
    let k = goal.num_vars();
    let total = n.pow(k as u32);
    (0..total).any(|mut code| {
        let mut b = Binding::new();
        for &v in goal.variables() {
            b.insert(v, ObjectId((code % n) as u32));
            code /= n;
        }
        let g = ground(goal, &b).unwrap();
        !g.has_violated_neq() && g.ground_atoms().unwrap().iter().all(|a| state.contains(a))
    })
}

fn ground_schema_unpruned(problem: &Problem) -> Vec<GroundAction> {
    let n = problem.num_objects();
    let mut out = Vec::new();
    for (si, schema) in problem.domain().schemas().iter().enumerate() {
        let p = schema.params.len();
        for mut code in 0..n.pow(p as u32) {
            let mut args = Vec::with_capacity(p);
            for _ in 0..p {
                args.push(ObjectId((code % n) as u32));
                code /= n;
            }
            let inst = |atoms: &[LiftedAtom]| -> Vec<GroundAtom> {
                atoms
                    .iter()
                    .map(|a| {
                        a.map(|t| match t {
                            Term::Obj(o) => o,
                            Term::Var(v) => args[v.index()],
                        })
                    })
                    .collect()
            };
            out.push(GroundAction {
                schema: si,
                args: args.clone(),
                pre: inst(&schema.pre),
                add: inst(&schema.add),
                del: inst(&schema.del),
            });
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn satisfies_agrees_with_brute_force(kind in 0usize..5, s in any::<u64>(), nvars in 0usize..=4) {
        let p = small_instance(kind, s);
        prop_assume!(p.num_objects() <= 8);
        let st = reachable_state(&p, s);
        let g = random_goal(&p, &st, nvars, s);
        let found = satisfies(&st, &g, p.num_objects());
        prop_assert_eq!(found.is_some(), brute_force(&st, &g, p.num_objects()));
        if let Some(b) = found {
            prop_assert!(b.is_total_for(&g));
            let grounded = ground(&g, &b).unwrap();
            prop_assert!(satisfies(&st, &grounded, p.num_objects()).is_some());
        }
    }

    #[test]
    fn binding_never_creates_satisfiability(kind in 0usize..5, s in any::<u64>(), nvars in 1usize..=3, o in 0u32..8) {
        let p = small_instance(kind, s);
        let st = reachable_state(&p, s);
        let g = random_goal(&p, &st, nvars, s);
        let o = ObjectId(o % p.num_objects() as u32);
        let bound = g.bind(&Binding::single(VarId(0), o)).unwrap();
        if satisfies(&st, &g, p.num_objects()).is_none() {
            prop_assert!(satisfies(&st, &bound, p.num_objects()).is_none());
        }
    }

    #[test]
    fn apply_is_sound(kind in 0usize..5, s in any::<u64>()) {
        let p = small_instance(kind, s);
        let task = Task::new(p.clone());
        let st = reachable_state(&p, s);
        for a in task.actions.iter().filter(|a| a.is_applicable(&st)) {
            let next = a.apply_unchecked(&st);
            prop_assert!(a.add.iter().all(|x| next.contains(x)));
            prop_assert!(a.del.iter().all(|x| !next.contains(x) || a.add.contains(x)));
            prop_assert_eq!(next.statics(), st.statics());
        }
    }

    #[test]
    fn state_is_canonical(kind in 0usize..5, s in any::<u64>()) {
        let p = small_instance(kind, s);
        let st = reachable_state(&p, s);
        let mut shuffled: Vec<GroundAtom> = st.fluents().to_vec();
        shuffled.reverse();
        shuffled.extend_from_slice(st.fluents());
        prop_assert_eq!(p.state_from_fluents(shuffled), st);
    }
}

#[test]
fn static_pruning_keeps_every_reachable_applicable_action() {
    for s in 0..20u64 {
        for kind in 0..5 {
            let p = small_instance(kind, s);
            let pruned = ground_actions(&p);
            let n = p.num_objects();
            for (si, schema) in p.domain().schemas().iter().enumerate() {
                let count = pruned.iter().filter(|a| a.schema == si).count();
                assert!(count <= n.pow(schema.params.len() as u32));
            }
            let space = explore(&Task::new(p.clone()), 10_000);
            assert!(!space.truncated());
            let all = ground_schema_unpruned(&p);
            for a in &all {
                if space.states().iter().any(|st| a.is_applicable(st)) {
                    assert!(
                        pruned
                            .iter()
                            .any(|b| b.schema == a.schema && b.args == a.args),
                        "{} pruned",
                        p.action_label(a)
                    );
                }
            }
        }
    }
}

#[test]
fn grounding_is_deterministic() {
    let p = small_instance(0, 5);
    assert_eq!(ground_actions(&p), ground_actions(&p));
}
