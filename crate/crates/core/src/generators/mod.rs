//! Coloured instance generators for Blocks, Blocks-C, Gripper, Delivery and
//! Visitall, and closed-form reference values for the Visitall colour goals.

mod domains;
pub mod visit;

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::goal::QuantifiedGoal;
use crate::strips::{Atom, Domain, GroundAtom, ObjectId, PredId, Problem, Term, VarId};

pub use domains::PALETTE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DomainKind {
    Blocks,
    BlocksC,
    Gripper,
    Delivery,
    Visitall,
}

impl DomainKind {
    pub const ALL: [DomainKind; 5] = [
        DomainKind::Blocks,
        DomainKind::BlocksC,
        DomainKind::Gripper,
        DomainKind::Delivery,
        DomainKind::Visitall,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DomainKind::Blocks => "blocks",
            DomainKind::BlocksC => "blocks-c",
            DomainKind::Gripper => "gripper",
            DomainKind::Delivery => "delivery",
            DomainKind::Visitall => "visitall",
        }
    }

    pub fn from_name(name: &str) -> Option<DomainKind> {
        DomainKind::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Name of the planning domain; Blocks-C shares the Blocks domain.
    pub fn domain_name(self) -> &'static str {
        match self {
            DomainKind::BlocksC => "blocks",
            k => k.name(),
        }
    }
}

pub fn domain_for(kind: DomainKind) -> Arc<Domain> {
    match kind {
        DomainKind::Blocks | DomainKind::BlocksC => domains::blocks(),
        DomainKind::Gripper => domains::gripper(),
        DomainKind::Delivery => domains::delivery(),
        DomainKind::Visitall => domains::visitall(),
    }
}

/// Built-in domain with the given `(define (domain NAME))` name.
pub fn domain_by_name(name: &str) -> Option<Arc<Domain>> {
    DomainKind::ALL
        .into_iter()
        .find(|k| k.domain_name() == name)
        .map(domain_for)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NeqMode {
    None,
    AllPairs,
}

impl NeqMode {
    pub fn name(self) -> &'static str {
        match self {
            NeqMode::None => "none",
            NeqMode::AllPairs => "all-pairs",
        }
    }

    pub fn from_name(s: &str) -> Option<NeqMode> {
        match s {
            "none" => Some(NeqMode::None),
            "all-pairs" => Some(NeqMode::AllPairs),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RoomGraph {
    Complete,
    RandomConnected,
}

/// Inclusive ranges are written `(lo, hi)`.
///
/// `objects` counts blocks (Blocks, Blocks-C), balls (Gripper) or packages
/// (Delivery). Grids use `width` and `height`; Gripper uses `rooms`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub kind: DomainKind,
    pub objects: (usize, usize),
    pub width: (usize, usize),
    pub height: (usize, usize),
    pub rooms: (usize, usize),
    pub colors: (usize, usize),
    pub vars: (usize, usize),
    pub neq: NeqMode,
    pub room_graph: RoomGraph,
    pub max_attempts: usize,
}

impl GeneratorConfig {
    /// Small instances whose state spaces are cheap to explore exhaustively.
    pub fn desk(kind: DomainKind) -> Self {
        let base = GeneratorConfig {
            kind,
            objects: (3, 5),
            width: (2, 4),
            height: (2, 4),
            rooms: (2, 3),
            colors: (2, 2),
            vars: (1, 2),
            neq: NeqMode::None,
            room_graph: RoomGraph::Complete,
            max_attempts: 100,
        };
        match kind {
            DomainKind::Blocks | DomainKind::BlocksC => base,
            DomainKind::Gripper => GeneratorConfig {
                objects: (2, 4),
                colors: (2, 3),
                ..base
            },
            DomainKind::Delivery => GeneratorConfig {
                objects: (1, 2),
                width: (2, 3),
                height: (2, 3),
                colors: (2, 3),
                ..base
            },
            DomainKind::Visitall => GeneratorConfig {
                width: (2, 4),
                height: (2, 4),
                colors: (2, 3),
                ..base
            },
        }
    }

    fn check(&self) -> Result<(), GenError> {
        let ranges = [
            ("objects", self.objects),
            ("width", self.width),
            ("height", self.height),
            ("rooms", self.rooms),
            ("colors", self.colors),
            ("vars", self.vars),
        ];
        for (name, (lo, hi)) in ranges {
            if lo > hi {
                return Err(GenError::InvalidConfig(format!(
                    "{name}: empty range {lo}..={hi}"
                )));
            }
        }
        if self.colors.0 == 0 || self.colors.1 > PALETTE.len() {
            return Err(GenError::InvalidConfig(format!(
                "colors must lie in 1..={}",
                PALETTE.len()
            )));
        }
        if self.width.0 == 0 || self.height.0 == 0 || self.rooms.0 == 0 {
            return Err(GenError::InvalidConfig(
                "grids and room sets must be nonempty".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("invalid generator configuration: {0}")]
    InvalidConfig(String),
    #[error("no satisfiable goal after {0} attempts")]
    Unsatisfiable(usize),
}

/// Generates one instance: a random world and a goal drawn from the domain's
/// template with a number of variables in `config.vars`.
pub fn generate_instance<R: Rng>(
    config: &GeneratorConfig,
    rng: &mut R,
    name: &str,
) -> Result<Problem, GenError> {
    config.check()?;
    for _ in 0..config.max_attempts.max(1) {
        let problem = random_world(config, rng, name);
        let k = rng.gen_range(config.vars.0..=config.vars.1);
        if let Some(goal) = sample_goal(config.kind, &problem, k, config.neq, rng) {
            return Ok(problem.with_goal(goal));
        }
    }
    Err(GenError::Unsatisfiable(config.max_attempts.max(1)))
}

fn pick<R: Rng>(rng: &mut R, range: (usize, usize)) -> usize {
    rng.gen_range(range.0..=range.1)
}

fn pid(d: &Domain, name: &str) -> PredId {
    d.pred_id(name).expect("builtin domain predicate")
}

struct World {
    objects: Vec<String>,
    init: Vec<GroundAtom>,
}

impl World {
    fn add(&mut self, name: String) -> ObjectId {
        self.objects.push(name);
        ObjectId(self.objects.len() as u32 - 1)
    }

    fn fact(&mut self, pred: PredId, args: &[ObjectId]) {
        self.init.push(Atom::new(pred, args));
    }

    fn paint<R: Rng>(&mut self, d: &Domain, rng: &mut R, objects: &[ObjectId], colors: usize) {
        for &o in objects {
            let c = PALETTE[rng.gen_range(0..colors)];
            self.fact(pid(d, c), &[o]);
        }
    }

    /// A `w × h` grid of cells with symmetric 4-neighbour adjacency.
    fn grid(&mut self, adjacency: PredId, w: usize, h: usize) -> Vec<ObjectId> {
        let cells: Vec<ObjectId> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| self.add(format!("c{x}-{y}")))
            .collect();
        for y in 0..h {
            for x in 0..w {
                let here = cells[y * w + x];
                if x + 1 < w {
                    self.fact(adjacency, &[here, cells[y * w + x + 1]]);
                    self.fact(adjacency, &[cells[y * w + x + 1], here]);
                }
                if y + 1 < h {
                    self.fact(adjacency, &[here, cells[(y + 1) * w + x]]);
                    self.fact(adjacency, &[cells[(y + 1) * w + x], here]);
                }
            }
        }
        cells
    }
}

fn random_world<R: Rng>(config: &GeneratorConfig, rng: &mut R, name: &str) -> Problem {
    let d = domain_for(config.kind);
    let colors = pick(rng, config.colors);
    let mut w = World {
        objects: Vec::new(),
        init: Vec::new(),
    };
    match config.kind {
        DomainKind::Blocks | DomainKind::BlocksC => {
            let n = pick(rng, config.objects);
            let blocks: Vec<ObjectId> = (1..=n).map(|i| w.add(format!("b{i}"))).collect();
            let mut order = blocks.clone();
            order.shuffle(rng);
            let mut tops: Vec<ObjectId> = Vec::new();
            for b in order {
                if tops.is_empty() || rng.gen_bool(0.4) {
                    w.fact(pid(&d, "ontable"), &[b]);
                    tops.push(b);
                } else {
                    let t = rng.gen_range(0..tops.len());
                    w.fact(pid(&d, "on"), &[b, tops[t]]);
                    tops[t] = b;
                }
            }
            for t in tops {
                w.fact(pid(&d, "clear"), &[t]);
            }
            w.fact(pid(&d, "handempty"), &[]);
            w.paint(&d, rng, &blocks, colors);
        }
        DomainKind::Gripper => {
            let r = pick(rng, config.rooms);
            let n = pick(rng, config.objects);
            let rooms: Vec<ObjectId> = (1..=r).map(|i| w.add(format!("room{i}"))).collect();
            let balls: Vec<ObjectId> = (1..=n).map(|i| w.add(format!("ball{i}"))).collect();
            let grippers = [w.add("left".into()), w.add("right".into())];
            let connected = pid(&d, "connected");
            match config.room_graph {
                RoomGraph::Complete => {
                    for i in 0..r {
                        for j in (0..r).filter(|&j| j != i) {
                            w.fact(connected, &[rooms[i], rooms[j]]);
                        }
                    }
                }
                // random spanning tree plus random chords
                RoomGraph::RandomConnected => {
                    for i in 1..r {
                        let j = rng.gen_range(0..i);
                        w.fact(connected, &[rooms[i], rooms[j]]);
                        w.fact(connected, &[rooms[j], rooms[i]]);
                        for k in 0..i {
                            if k != j && rng.gen_bool(0.3) {
                                w.fact(connected, &[rooms[i], rooms[k]]);
                                w.fact(connected, &[rooms[k], rooms[i]]);
                            }
                        }
                    }
                }
            }
            for &room in &rooms {
                w.fact(pid(&d, "room"), &[room]);
            }
            for &b in &balls {
                w.fact(pid(&d, "ball"), &[b]);
                let room = rooms[rng.gen_range(0..r)];
                w.fact(pid(&d, "at"), &[b, room]);
            }
            for g in grippers {
                w.fact(pid(&d, "gripper"), &[g]);
                w.fact(pid(&d, "free"), &[g]);
            }
            w.fact(pid(&d, "at-robby"), &[rooms[rng.gen_range(0..r)]]);
            w.paint(&d, rng, &balls, colors);
        }
        DomainKind::Delivery => {
            let (gw, gh) = (pick(rng, config.width), pick(rng, config.height));
            let cells = w.grid(pid(&d, "adjacent"), gw, gh);
            let truck = w.add("t".into());
            let n = pick(rng, config.objects);
            let packages: Vec<ObjectId> = (1..=n).map(|i| w.add(format!("p{i}"))).collect();
            for &c in &cells {
                w.fact(pid(&d, "cell"), &[c]);
            }
            w.fact(pid(&d, "truck"), &[truck]);
            w.fact(pid(&d, "empty"), &[truck]);
            w.fact(
                pid(&d, "at"),
                &[truck, cells[rng.gen_range(0..cells.len())]],
            );
            for &p in &packages {
                w.fact(pid(&d, "package"), &[p]);
                w.fact(pid(&d, "at"), &[p, cells[rng.gen_range(0..cells.len())]]);
            }
            w.paint(&d, rng, &cells, colors);
        }
        DomainKind::Visitall => {
            let (gw, gh) = (pick(rng, config.width), pick(rng, config.height));
            let cells = w.grid(pid(&d, "connected"), gw, gh);
            let start = cells[rng.gen_range(0..cells.len())];
            w.fact(pid(&d, "at-robot"), &[start]);
            w.fact(pid(&d, "visited"), &[start]);
            w.paint(&d, rng, &cells, colors);
        }
    }
    Problem::new(
        name,
        d,
        w.objects,
        w.init,
        QuantifiedGoal::conjunction(Vec::new()),
    )
    .expect("generated world is well formed")
}

/// Colour predicate of an object in the problem's initial state.
pub fn color_of(problem: &Problem, o: ObjectId) -> Option<PredId> {
    let d = problem.domain();
    PALETTE
        .iter()
        .filter_map(|c| d.pred_id(c))
        .find(|&p| problem.init().contains(&Atom::new(p, &[o])))
}

/// Objects that goal variables of this domain range over.
pub fn eligible_objects(kind: DomainKind, problem: &Problem) -> Vec<ObjectId> {
    let d = problem.domain();
    let typed = |ty: &str| -> Vec<ObjectId> {
        let p = pid(d, ty);
        problem
            .object_ids()
            .filter(|&o| problem.init().contains(&Atom::new(p, &[o])))
            .collect()
    };
    match kind {
        DomainKind::Blocks | DomainKind::BlocksC => problem.object_ids().collect(),
        DomainKind::Gripper => typed("ball"),
        DomainKind::Delivery => typed("cell"),
        DomainKind::Visitall => problem
            .object_ids()
            .filter(|&o| color_of(problem, o).is_some())
            .collect(),
    }
}

/// Draws a goal with `k` variables from the domain's template. Variables are
/// coloured after `k` distinct eligible objects, so at least one valid
/// binding exists. Returns `None` when the instance is too small.
pub fn sample_goal<R: Rng>(
    kind: DomainKind,
    problem: &Problem,
    k: usize,
    neq: NeqMode,
    rng: &mut R,
) -> Option<QuantifiedGoal> {
    if k == 0 {
        return None;
    }
    let d = problem.domain();
    let eligible = eligible_objects(kind, problem);
    if eligible.len() < k {
        return None;
    }
    let chosen: Vec<ObjectId> = eligible.choose_multiple(rng, k).copied().collect();
    let x = |i: usize| Term::Var(VarId(i as u32));
    let mut atoms = Vec::new();
    for (i, &o) in chosen.iter().enumerate() {
        atoms.push(Atom::new(color_of(problem, o)?, &[x(i)]));
    }
    match kind {
        DomainKind::Blocks => {
            let on = pid(d, "on");
            if k >= 2 {
                for i in 0..k - 1 {
                    atoms.push(Atom::new(on, &[x(i), x(i + 1)]));
                }
            } else {
                let others: Vec<ObjectId> = eligible
                    .iter()
                    .copied()
                    .filter(|&o| o != chosen[0])
                    .collect();
                let c = Term::Obj(*others.choose(rng)?);
                if rng.gen_bool(0.5) {
                    atoms.push(Atom::new(on, &[x(0), c]));
                } else {
                    atoms.push(Atom::new(on, &[c, x(0)]));
                }
            }
        }
        DomainKind::BlocksC => {
            let clear = pid(d, "clear");
            for i in 0..k {
                atoms.push(Atom::new(clear, &[x(i)]));
            }
        }
        DomainKind::Gripper => {
            let at = pid(d, "at");
            let room = pid(d, "room");
            let rooms: Vec<ObjectId> = problem
                .object_ids()
                .filter(|&o| problem.init().contains(&Atom::new(room, &[o])))
                .collect();
            for i in 0..k {
                atoms.push(Atom::new(at, &[x(i), Term::Obj(*rooms.choose(rng)?)]));
            }
        }
        DomainKind::Delivery => {
            let at = pid(d, "at");
            let package = pid(d, "package");
            let truck = pid(d, "truck");
            let packages: Vec<ObjectId> = problem
                .object_ids()
                .filter(|&o| problem.init().contains(&Atom::new(package, &[o])))
                .collect();
            let t = problem
                .object_ids()
                .find(|&o| problem.init().contains(&Atom::new(truck, &[o])))?;
            let parcels = if k >= 2 { k - 1 } else { 1 };
            if packages.len() < parcels {
                return None;
            }
            for (i, &p) in packages.choose_multiple(rng, parcels).enumerate() {
                atoms.push(Atom::new(at, &[Term::Obj(p), x(i)]));
            }
            if k >= 2 {
                atoms.push(Atom::new(at, &[Term::Obj(t), x(k - 1)]));
            }
        }
        DomainKind::Visitall => {
            let visited = pid(d, "visited");
            for i in 0..k {
                atoms.push(Atom::new(visited, &[x(i)]));
            }
        }
    }
    let mut pairs = Vec::new();
    if neq == NeqMode::AllPairs {
        for i in 0..k {
            for j in i + 1..k {
                pairs.push((x(i), x(j)));
            }
        }
    }
    let names = (1..=k).map(|i| format!("x{i}")).collect();
    QuantifiedGoal::new(names, atoms, pairs).ok()
}
