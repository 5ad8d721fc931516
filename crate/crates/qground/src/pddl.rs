//! Reader and writer for the PDDL-flavoured s-expression format.
//!
//! A file holds one or more `(define ...)` forms. Problems resolve their
//! domain against a domain defined in the same file, then an explicitly
//! supplied one, then the built-in domains.

use std::fmt::{self, Write as _};
use std::sync::Arc;

use qground_core::generators::domain_by_name;
use qground_core::strips::{ActionSchema, PredicateKind};
use qground_core::{
    Atom, Domain, GroundAtom, LiftedAtom, ObjectId, Problem, QuantifiedGoal, State, Term, VarId,
};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{pos}: {message}")]
pub struct ParseError {
    pub pos: Pos,
    pub message: String,
}

fn err<T>(pos: Pos, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        pos,
        message: message.into(),
    })
}

trait At<T> {
    fn at(self, pos: Pos) -> Result<T, ParseError>;
}

impl<T, E: fmt::Display> At<T> for Result<T, E> {
    fn at(self, pos: Pos) -> Result<T, ParseError> {
        self.map_err(|e| ParseError {
            pos,
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sexp {
    Sym(String, Pos),
    List(Vec<Sexp>, Pos),
}

impl Sexp {
    pub fn pos(&self) -> Pos {
        match self {
            Sexp::Sym(_, p) | Sexp::List(_, p) => *p,
        }
    }

    fn sym(&self) -> Result<&str, ParseError> {
        match self {
            Sexp::Sym(s, _) => Ok(s),
            Sexp::List(_, p) => err(*p, "expected a symbol, found a list"),
        }
    }

    fn list(&self) -> Result<&[Sexp], ParseError> {
        match self {
            Sexp::List(v, _) => Ok(v),
            Sexp::Sym(s, p) => err(*p, format!("expected a list, found `{s}`")),
        }
    }

    /// `(head ...)` with a symbol head.
    fn head(&self) -> Option<&str> {
        match self {
            Sexp::List(v, _) => match v.first() {
                Some(Sexp::Sym(s, _)) => Some(s),
                _ => None,
            },
            _ => None,
        }
    }
}

/// Splits text into top-level s-expressions. `;` starts a line comment.
pub fn read_sexps(text: &str) -> Result<Vec<Sexp>, ParseError> {
    let mut stack: Vec<(Vec<Sexp>, Pos)> = vec![(Vec::new(), Pos::default())];
    let (mut line, mut col) = (1usize, 0usize);
    let mut chars = text.chars().peekable();
    let mut token = String::new();
    let mut token_pos = Pos::default();
    fn flush(token: &mut String, pos: Pos, stack: &mut [(Vec<Sexp>, Pos)]) {
        if !token.is_empty() {
            stack
                .last_mut()
                .expect("root")
                .0
                .push(Sexp::Sym(std::mem::take(token), pos));
        }
    }
    while let Some(c) = chars.next() {
        col += 1;
        let here = Pos { line, col };
        match c {
            ';' => {
                flush(&mut token, token_pos, &mut stack);
                for c in chars.by_ref() {
                    if c == '\n' {
                        line += 1;
                        col = 0;
                        break;
                    }
                }
            }
            '(' => {
                flush(&mut token, token_pos, &mut stack);
                stack.push((Vec::new(), here));
            }
            ')' => {
                flush(&mut token, token_pos, &mut stack);
                if stack.len() == 1 {
                    return err(here, "unbalanced `)`");
                }
                let (items, start) = stack.pop().expect("nonempty");
                stack
                    .last_mut()
                    .expect("root")
                    .0
                    .push(Sexp::List(items, start));
            }
            c if c.is_whitespace() => {
                flush(&mut token, token_pos, &mut stack);
                if c == '\n' {
                    line += 1;
                    col = 0;
                }
            }
            c => {
                if token.is_empty() {
                    token_pos = here;
                }
                token.push(c);
            }
        }
    }
    flush(&mut token, token_pos, &mut stack);
    if stack.len() > 1 {
        let (_, start) = stack.pop().expect("open list");
        return err(start, "unclosed `(`");
    }
    Ok(stack.pop().expect("root").0)
}

/// `(define (KIND NAME) sections...)` → (kind, name, sections).
fn define_form(s: &Sexp) -> Result<(&str, &str, &[Sexp]), ParseError> {
    let items = s.list()?;
    if items.first().map(Sexp::sym).transpose()? != Some("define") || items.len() < 2 {
        return err(s.pos(), "expected `(define (domain|problem NAME) ...)`");
    }
    let header = items[1].list()?;
    if header.len() != 2 {
        return err(
            items[1].pos(),
            "expected `(domain NAME)` or `(problem NAME)`",
        );
    }
    Ok((header[0].sym()?, header[1].sym()?, &items[2..]))
}

fn section<'a>(sections: &'a [Sexp], key: &str) -> Option<&'a [Sexp]> {
    sections
        .iter()
        .find(|s| s.head() == Some(key))
        .map(|s| &s.list().expect("list")[1..])
}

fn conjuncts(s: &Sexp) -> Result<&[Sexp], ParseError> {
    match s {
        Sexp::List(v, _) if v.is_empty() => Ok(&[]),
        _ if s.head() == Some("and") => Ok(&s.list()?[1..]),
        _ => Ok(std::slice::from_ref(s)),
    }
}

pub fn parse_domain_form(form: &Sexp) -> Result<Domain, ParseError> {
    let (kind, name, sections) = define_form(form)?;
    if kind != "domain" {
        return err(form.pos(), format!("expected a domain, found {kind}"));
    }
    let mut d = Domain::new(name);
    let statics: Vec<&Sexp> = section(sections, ":static")
        .map(|s| s.iter().collect())
        .unwrap_or_default();
    let static_names: Vec<&str> = statics.iter().map(|s| s.sym()).collect::<Result<_, _>>()?;
    if let Some(preds) = section(sections, ":predicates") {
        for p in preds {
            let items = p.list()?;
            let Some(first) = items.first() else {
                return err(p.pos(), "empty predicate declaration");
            };
            let pname = first.sym()?;
            d.add_predicate(pname, items.len() - 1, static_names.contains(&pname))
                .at(p.pos())?;
        }
    }
    for s in &statics {
        let n = s.sym()?;
        if d.pred_id(n).is_none() {
            return err(s.pos(), format!("undeclared predicate {n}"));
        }
    }
    if let Some(consts) = section(sections, ":constants") {
        for c in consts {
            d.add_constant(c.sym()?).at(c.pos())?;
        }
    }
    for a in sections.iter().filter(|s| s.head() == Some(":action")) {
        let schema = parse_action(&d, a)?;
        d.add_schema(schema).at(a.pos())?;
    }
    for s in sections {
        match s.head() {
            Some(":predicates" | ":static" | ":constants" | ":action" | ":requirements") => {}
            _ => return err(s.pos(), "unknown domain section"),
        }
    }
    Ok(d)
}

fn parse_action(d: &Domain, form: &Sexp) -> Result<ActionSchema, ParseError> {
    let items = form.list()?;
    let name = items
        .get(1)
        .ok_or(())
        .or_else(|_| err(form.pos(), "action without a name"))?
        .sym()?
        .to_string();
    let mut params: Vec<String> = Vec::new();
    let mut pre = Vec::new();
    let (mut add, mut del) = (Vec::new(), Vec::new());
    let mut i = 2;
    while i < items.len() {
        let key = items[i].sym()?;
        let Some(value) = items.get(i + 1) else {
            return err(items[i].pos(), format!("missing value for {key}"));
        };
        match key {
            ":parameters" => {
                for p in value.list()? {
                    let s = p.sym()?;
                    let Some(v) = s.strip_prefix('?') else {
                        return err(p.pos(), format!("parameter `{s}` must start with `?`"));
                    };
                    params.push(v.to_string());
                }
            }
            ":precondition" => {
                for c in conjuncts(value)? {
                    pre.push(lifted_atom(
                        d,
                        c,
                        |v| params.iter().position(|p| p == v).map(|i| VarId(i as u32)),
                        &|n| {
                            d.constants()
                                .iter()
                                .position(|c| c == n)
                                .map(|i| ObjectId(i as u32))
                        },
                    )?);
                }
            }
            ":effect" => {
                for c in conjuncts(value)? {
                    let (target, atom) = match c.head() {
                        Some("not") => {
                            let inner = c.list()?;
                            if inner.len() != 2 {
                                return err(c.pos(), "`not` takes one atom");
                            }
                            (&mut del, &inner[1])
                        }
                        _ => (&mut add, c),
                    };
                    target.push(lifted_atom(
                        d,
                        atom,
                        |v| params.iter().position(|p| p == v).map(|i| VarId(i as u32)),
                        &|n| {
                            d.constants()
                                .iter()
                                .position(|c| c == n)
                                .map(|i| ObjectId(i as u32))
                        },
                    )?);
                }
            }
            _ => return err(items[i].pos(), format!("unknown action key {key}")),
        }
        i += 2;
    }
    Ok(ActionSchema {
        name,
        params,
        pre,
        add,
        del,
    })
}

fn lifted_atom(
    d: &Domain,
    s: &Sexp,
    var: impl Fn(&str) -> Option<VarId>,
    obj: &dyn Fn(&str) -> Option<ObjectId>,
) -> Result<LiftedAtom, ParseError> {
    let items = s.list()?;
    let Some(first) = items.first() else {
        return err(s.pos(), "empty atom");
    };
    let name = first.sym()?;
    let pred = d.resolve(name, items.len() - 1).at(s.pos())?;
    let mut args = Vec::with_capacity(items.len() - 1);
    for a in &items[1..] {
        let t = a.sym()?;
        let term = match t.strip_prefix('?') {
            Some(v) => Term::Var(
                var(v)
                    .ok_or(())
                    .or_else(|_| err(a.pos(), format!("unknown variable ?{v}")))?,
            ),
            None => Term::Obj(
                obj(t)
                    .ok_or(())
                    .or_else(|_| err(a.pos(), format!("unknown object {t}")))?,
            ),
        };
        args.push(term);
    }
    Ok(Atom::new(pred, &args))
}

pub fn parse_domain(text: &str) -> Result<Domain, ParseError> {
    let forms = read_sexps(text)?;
    for f in &forms {
        if define_form(f)?.0 == "domain" {
            return parse_domain_form(f);
        }
    }
    err(Pos { line: 1, col: 1 }, "no domain definition found")
}

pub fn parse_problem_form(form: &Sexp, domain: Arc<Domain>) -> Result<Problem, ParseError> {
    let (kind, name, sections) = define_form(form)?;
    if kind != "problem" {
        return err(form.pos(), format!("expected a problem, found {kind}"));
    }
    let mut objects: Vec<String> = domain.constants().to_vec();
    if let Some(objs) = section(sections, ":objects") {
        for o in objs {
            let n = o.sym()?;
            if objects.iter().any(|x| x == n) {
                return err(o.pos(), format!("duplicate object {n}"));
            }
            objects.push(n.to_string());
        }
    }
    let obj = |n: &str| {
        objects
            .iter()
            .position(|o| o == n)
            .map(|i| ObjectId(i as u32))
    };
    let mut init: Vec<GroundAtom> = Vec::new();
    for a in section(sections, ":init").unwrap_or_default() {
        let atom = lifted_atom(&domain, a, |_| None, &obj)?;
        match domain.predicate(atom.pred).kind {
            PredicateKind::Fluent | PredicateKind::Static => {}
            _ => {
                return err(
                    a.pos(),
                    format!(
                        "predicate {} may not appear in a state",
                        domain.predicate(atom.pred).name
                    ),
                )
            }
        }
        init.push(atom.to_ground().expect("no variables"));
    }
    let goal = match sections.iter().find(|s| s.head() == Some(":goal")) {
        Some(g) => {
            let items = g.list()?;
            if items.len() != 2 {
                return err(g.pos(), "`:goal` takes one formula");
            }
            parse_goal(&domain, &items[1], &obj)?
        }
        None => QuantifiedGoal::conjunction(Vec::new()),
    };
    for s in sections {
        match s.head() {
            Some(":domain" | ":objects" | ":init" | ":goal") => {}
            _ => return err(s.pos(), "unknown problem section"),
        }
    }
    let own = objects[domain.constants().len()..].to_vec();
    Problem::new(name, domain, own, init, goal).at(form.pos())
}

fn parse_goal(
    d: &Domain,
    s: &Sexp,
    obj: &dyn Fn(&str) -> Option<ObjectId>,
) -> Result<QuantifiedGoal, ParseError> {
    let (names, body): (Vec<String>, &Sexp) = if s.head() == Some("exists") {
        let items = s.list()?;
        if items.len() != 3 {
            return err(s.pos(), "expected `(exists (?x ...) formula)`");
        }
        let mut names = Vec::new();
        for v in items[1].list()? {
            let t = v.sym()?;
            let Some(n) = t.strip_prefix('?') else {
                return err(v.pos(), format!("variable `{t}` must start with `?`"));
            };
            if obj(n).is_some() {
                return err(v.pos(), format!("goal variable {n} shadows an object name"));
            }
            if names.iter().any(|x| x == n) {
                return err(v.pos(), format!("duplicate variable ?{n}"));
            }
            names.push(n.to_string());
        }
        (names, &items[2])
    } else {
        (Vec::new(), s)
    };
    let var = |n: &str| names.iter().position(|x| x == n).map(|i| VarId(i as u32));
    let mut atoms = Vec::new();
    let mut neq = Vec::new();
    for c in conjuncts(body)? {
        let items = c.list()?;
        let head = items.first().map(Sexp::sym).transpose()?.unwrap_or("");
        if head == "neq" {
            if items.len() != 3 {
                return err(c.pos(), "`neq` takes two terms");
            }
            let mut t = [Term::Obj(ObjectId(0)); 2];
            for (k, a) in items[1..].iter().enumerate() {
                let s = a.sym()?;
                t[k] = match s.strip_prefix('?') {
                    Some(v) => Term::Var(
                        var(v)
                            .ok_or(())
                            .or_else(|_| err(a.pos(), format!("unknown variable ?{v}")))?,
                    ),
                    None => Term::Obj(
                        obj(s)
                            .ok_or(())
                            .or_else(|_| err(a.pos(), format!("unknown object {s}")))?,
                    ),
                };
            }
            neq.push((t[0], t[1]));
            continue;
        }
        let atom = lifted_atom(d, c, var, obj)?;
        let base = match d.predicate(atom.pred).kind {
            PredicateKind::GoalMarker => atom.with_pred(d.base_of(atom.pred).expect("marker twin")),
            PredicateKind::Fluent | PredicateKind::Static => atom,
            PredicateKind::Builtin => {
                return err(c.pos(), format!("builtin {head} may not appear in a goal"))
            }
        };
        atoms.push(base);
    }
    QuantifiedGoal::new(names, atoms, neq).at(s.pos())
}

/// A problem from `text`. The domain comes from the same file when present,
/// then from `domain`, then from the built-in domains by name.
pub fn parse_problem(text: &str, domain: Option<Arc<Domain>>) -> Result<Problem, ParseError> {
    let forms = read_sexps(text)?;
    let mut local: Vec<Arc<Domain>> = Vec::new();
    let mut problem_form = None;
    for f in &forms {
        match define_form(f)?.0 {
            "domain" => local.push(Arc::new(parse_domain_form(f)?)),
            "problem" if problem_form.is_none() => problem_form = Some(f),
            "problem" => return err(f.pos(), "more than one problem in file"),
            k => return err(f.pos(), format!("unknown definition kind {k}")),
        }
    }
    let Some(form) = problem_form else {
        return err(Pos { line: 1, col: 1 }, "no problem definition found");
    };
    let (_, _, sections) = define_form(form)?;
    let dname = match section(sections, ":domain") {
        Some([n]) => n.sym()?.to_string(),
        _ => return err(form.pos(), "problem needs `(:domain NAME)`"),
    };
    let resolved = local
        .into_iter()
        .find(|d| d.name() == dname)
        .or_else(|| domain.filter(|d| d.name() == dname))
        .or_else(|| domain_by_name(&dname));
    match resolved {
        Some(d) => parse_problem_form(form, d),
        None => err(form.pos(), format!("unknown domain {dname}")),
    }
}

fn write_lifted(
    out: &mut String,
    d: &Domain,
    a: &LiftedAtom,
    var: &dyn Fn(VarId) -> String,
    obj: &dyn Fn(ObjectId) -> String,
    marker: bool,
) {
    out.push('(');
    let id = if marker {
        d.marker_of(a.pred).unwrap_or(a.pred)
    } else {
        a.pred
    };
    out.push_str(&d.predicate(id).name);
    for t in a.args() {
        out.push(' ');
        match *t {
            Term::Var(v) => out.push_str(&var(v)),
            Term::Obj(o) => out.push_str(&obj(o)),
        }
    }
    out.push(')');
}

pub fn print_domain(d: &Domain) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (domain {})", d.name());
    out.push_str("  (:predicates");
    for (_, p) in d.base_predicates() {
        out.push_str("\n    (");
        out.push_str(&p.name);
        for i in 0..p.arity {
            let _ = write!(out, " ?a{i}");
        }
        out.push(')');
    }
    out.push_str(")\n");
    let statics: Vec<&str> = d
        .base_predicates()
        .filter(|(_, p)| p.kind == PredicateKind::Static)
        .map(|(_, p)| p.name.as_str())
        .collect();
    if !statics.is_empty() {
        let _ = writeln!(out, "  (:static {})", statics.join(" "));
    }
    if !d.constants().is_empty() {
        let _ = writeln!(out, "  (:constants {})", d.constants().join(" "));
    }
    for s in d.schemas() {
        let var = |v: VarId| format!("?{}", s.params[v.index()]);
        let obj = |o: ObjectId| d.constants()[o.index()].clone();
        let _ = write!(out, "  (:action {}\n    :parameters (", s.name);
        out.push_str(
            &s.params
                .iter()
                .map(|p| format!("?{p}"))
                .collect::<Vec<_>>()
                .join(" "),
        );
        out.push_str(")\n    :precondition (and");
        for a in &s.pre {
            out.push(' ');
            write_lifted(&mut out, d, a, &var, &obj, false);
        }
        out.push_str(")\n    :effect (and");
        for a in &s.add {
            out.push(' ');
            write_lifted(&mut out, d, a, &var, &obj, false);
        }
        for a in &s.del {
            out.push_str(" (not ");
            write_lifted(&mut out, d, a, &var, &obj, false);
            out.push(')');
        }
        out.push_str("))\n");
    }
    out.push_str(")\n");
    out
}

fn write_goal(out: &mut String, problem: &Problem, goal: &QuantifiedGoal) {
    let d = problem.domain();
    let var = |v: VarId| format!("?{}", goal.var_name(v));
    let obj = |o: ObjectId| problem.object_name(o).to_string();
    let mut body = String::from("(and");
    for a in goal.atoms() {
        body.push(' ');
        write_lifted(&mut body, d, a, &var, &obj, true);
    }
    for (a, b) in goal.neq() {
        let t = |t: &Term| match *t {
            Term::Var(v) => var(v),
            Term::Obj(o) => obj(o),
        };
        let _ = write!(body, " (neq {} {})", t(a), t(b));
    }
    body.push(')');
    if goal.num_vars() == 0 {
        out.push_str(&body);
    } else {
        let vars: Vec<String> = goal.variables().iter().map(|&v| var(v)).collect();
        let _ = write!(out, "(exists ({}) {body})", vars.join(" "));
    }
}

/// A goal in problem-file syntax.
pub fn print_goal(problem: &Problem, goal: &QuantifiedGoal) -> String {
    let mut s = String::new();
    write_goal(&mut s, problem, goal);
    s
}

pub fn print_state(problem: &Problem, state: &State) -> String {
    state
        .iter()
        .map(|a| problem.atom_label(a))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn print_problem(p: &Problem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (problem {})", p.name());
    let _ = writeln!(out, "  (:domain {})", p.domain().name());
    let own = &p.objects()[p.domain().constants().len()..];
    let _ = writeln!(out, "  (:objects {})", own.join(" "));
    out.push_str("  (:init");
    for a in p.init().iter() {
        out.push_str("\n    ");
        out.push_str(&p.atom_label(a));
    }
    out.push_str(")\n  (:goal ");
    write_goal(&mut out, p, p.goal());
    out.push_str("))\n");
    out
}
