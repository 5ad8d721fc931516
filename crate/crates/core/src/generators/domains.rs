use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::strips::{ActionSchema, Atom, Domain, LiftedAtom, Term, VarId};

/// The fixed colour vocabulary, as static unary predicates.
pub const PALETTE: [&str; 6] = ["blue", "red", "green", "yellow", "purple", "orange"];

type Spec<'a> = &'a [(&'a str, &'a [&'a str])];

fn schema(
    d: &Domain,
    name: &str,
    params: &[&str],
    pre: Spec,
    add: Spec,
    del: Spec,
) -> ActionSchema {
    let lift = |list: Spec| -> Vec<LiftedAtom> {
        list.iter()
            .map(|(p, args)| {
                let terms: Vec<Term> = args
                    .iter()
                    .map(|a| {
                        let i = params.iter().position(|q| q == a).expect("parameter");
                        Term::Var(VarId(i as u32))
                    })
                    .collect();
                Atom::new(d.pred_id(p).expect("predicate"), &terms)
            })
            .collect()
    };
    ActionSchema {
        name: name.into(),
        params: params.iter().map(|p| String::from(*p)).collect(),
        pre: lift(pre),
        add: lift(add),
        del: lift(del),
    }
}

fn with_palette(d: &mut Domain) {
    for c in PALETTE {
        d.add_predicate(c, 1, true).expect("fresh colour");
    }
}

fn finish(mut d: Domain, schemas: impl FnOnce(&Domain) -> Vec<ActionSchema>) -> Arc<Domain> {
    for s in schemas(&d) {
        d.add_schema(s).expect("valid builtin schema");
    }
    Arc::new(d)
}

pub fn blocks() -> Arc<Domain> {
    let mut d = Domain::new("blocks");
    for (p, a) in [
        ("on", 2),
        ("ontable", 1),
        ("clear", 1),
        ("holding", 1),
        ("handempty", 0),
    ] {
        d.add_predicate(p, a, false).expect("fresh");
    }
    with_palette(&mut d);
    finish(d, |d| {
        alloc::vec![
            schema(
                d,
                "pick-up",
                &["x"],
                &[("clear", &["x"]), ("ontable", &["x"]), ("handempty", &[])],
                &[("holding", &["x"])],
                &[("clear", &["x"]), ("ontable", &["x"]), ("handempty", &[])],
            ),
            schema(
                d,
                "put-down",
                &["x"],
                &[("holding", &["x"])],
                &[("clear", &["x"]), ("ontable", &["x"]), ("handempty", &[])],
                &[("holding", &["x"])],
            ),
            schema(
                d,
                "stack",
                &["x", "y"],
                &[("holding", &["x"]), ("clear", &["y"])],
                &[("on", &["x", "y"]), ("clear", &["x"]), ("handempty", &[])],
                &[("holding", &["x"]), ("clear", &["y"])],
            ),
            schema(
                d,
                "unstack",
                &["x", "y"],
                &[("on", &["x", "y"]), ("clear", &["x"]), ("handempty", &[])],
                &[("holding", &["x"]), ("clear", &["y"])],
                &[("on", &["x", "y"]), ("clear", &["x"]), ("handempty", &[])],
            ),
        ]
    })
}

pub fn gripper() -> Arc<Domain> {
    let mut d = Domain::new("gripper");
    for (p, a) in [("room", 1), ("ball", 1), ("gripper", 1), ("connected", 2)] {
        d.add_predicate(p, a, true).expect("fresh");
    }
    for (p, a) in [("at-robby", 1), ("at", 2), ("free", 1), ("carry", 2)] {
        d.add_predicate(p, a, false).expect("fresh");
    }
    with_palette(&mut d);
    finish(d, |d| {
        alloc::vec![
            schema(
                d,
                "move",
                &["from", "to"],
                &[
                    ("room", &["from"]),
                    ("room", &["to"]),
                    ("connected", &["from", "to"]),
                    ("at-robby", &["from"])
                ],
                &[("at-robby", &["to"])],
                &[("at-robby", &["from"])],
            ),
            schema(
                d,
                "pick",
                &["b", "r", "g"],
                &[
                    ("ball", &["b"]),
                    ("room", &["r"]),
                    ("gripper", &["g"]),
                    ("at", &["b", "r"]),
                    ("at-robby", &["r"]),
                    ("free", &["g"]),
                ],
                &[("carry", &["b", "g"])],
                &[("at", &["b", "r"]), ("free", &["g"])],
            ),
            schema(
                d,
                "drop",
                &["b", "r", "g"],
                &[
                    ("ball", &["b"]),
                    ("room", &["r"]),
                    ("gripper", &["g"]),
                    ("carry", &["b", "g"]),
                    ("at-robby", &["r"]),
                ],
                &[("at", &["b", "r"]), ("free", &["g"])],
                &[("carry", &["b", "g"])],
            ),
        ]
    })
}

pub fn delivery() -> Arc<Domain> {
    let mut d = Domain::new("delivery");
    for (p, a) in [("cell", 1), ("truck", 1), ("package", 1), ("adjacent", 2)] {
        d.add_predicate(p, a, true).expect("fresh");
    }
    for (p, a) in [("at", 2), ("carrying", 2), ("empty", 1)] {
        d.add_predicate(p, a, false).expect("fresh");
    }
    with_palette(&mut d);
    finish(d, |d| {
        alloc::vec![
            schema(
                d,
                "move",
                &["t", "from", "to"],
                &[
                    ("truck", &["t"]),
                    ("adjacent", &["from", "to"]),
                    ("at", &["t", "from"])
                ],
                &[("at", &["t", "to"])],
                &[("at", &["t", "from"])],
            ),
            schema(
                d,
                "pick-package",
                &["t", "p", "c"],
                &[
                    ("truck", &["t"]),
                    ("package", &["p"]),
                    ("cell", &["c"]),
                    ("at", &["t", "c"]),
                    ("at", &["p", "c"]),
                    ("empty", &["t"]),
                ],
                &[("carrying", &["t", "p"])],
                &[("at", &["p", "c"]), ("empty", &["t"])],
            ),
            schema(
                d,
                "drop-package",
                &["t", "p", "c"],
                &[
                    ("truck", &["t"]),
                    ("package", &["p"]),
                    ("cell", &["c"]),
                    ("at", &["t", "c"]),
                    ("carrying", &["t", "p"]),
                ],
                &[("at", &["p", "c"]), ("empty", &["t"])],
                &[("carrying", &["t", "p"])],
            ),
        ]
    })
}

pub fn visitall() -> Arc<Domain> {
    let mut d = Domain::new("visitall");
    d.add_predicate("connected", 2, true).expect("fresh");
    d.add_predicate("at-robot", 1, false).expect("fresh");
    d.add_predicate("visited", 1, false).expect("fresh");
    with_palette(&mut d);
    finish(d, |d| {
        alloc::vec![schema(
            d,
            "move",
            &["from", "to"],
            &[("at-robot", &["from"]), ("connected", &["from", "to"])],
            &[("at-robot", &["to"]), ("visited", &["to"])],
            &[("at-robot", &["from"])],
        )]
    })
}
