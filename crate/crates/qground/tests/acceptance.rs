//! End-to-end acceptance suite. Run a subset with
//! `cargo test -p qground --test acceptance -- 3 9`.

use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use qground::eval::{self, EvalSettings, InstanceRecord, Method, Row};
use qground::pipeline::{
    generate_dataset_parallel, generate_testset, items_from_dataset, train_model,
};
use qground_core::dataset::DatasetConfig;
use qground_core::generators::visit::{visit1_value, visit_many_value};
use qground_core::generators::{
    domain_for, generate_instance, DomainKind, GeneratorConfig, NeqMode,
};
use qground_core::goal::{compile_dnf, DEFAULT_BINDING_CAP};
use qground_core::oracle::{forward_cost, Cost};
use qground_core::rgnn::{
    encode, loss_and_grad, prepare, rename_state, signature_of, value, BoundModel, Model,
    ModelConfig, Prepared,
};
use qground_core::search::{plan, Mode, Unlimited};
use qground_core::strips::builtin;
use qground_core::train::TrainConfig;
use qground_core::{seed, Binding, ObjectId, PredId, Problem, Task, VarId};

const SEED: u64 = 7;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

/// Binds one random goal variable to a random object; often unsolvable.
fn partially_bound(p: &Problem, i: u64) -> Problem {
    let mut rng = seed::rng(SEED, "c1-bind", i);
    let v = *p
        .goal()
        .variables()
        .choose(&mut rng)
        .expect("goal has variables");
    let o = ObjectId(rng.gen_range(0..p.num_objects() as u32));
    p.with_goal(p.goal().bind(&Binding::single(v, o)).expect("bind"))
}

fn dnf_equivalence() -> Outcome {
    let mut checked = 0;
    let mut dead = 0;
    let mut seen = [[false; 2]; 5];
    let mut i = 0u64;
    while checked < 250 && i < 5000 {
        let d = (i % 5) as usize;
        let kind = DomainKind::ALL[d];
        let neq = (i / 5) % 2;
        i += 1;
        let mut cfg = GeneratorConfig::desk(kind);
        cfg.vars = (1, 3);
        cfg.neq = if neq == 0 {
            NeqMode::None
        } else {
            NeqMode::AllPairs
        };
        match kind {
            DomainKind::Gripper => {
                cfg.objects = (1, 3);
                cfg.rooms = (2, 2);
            }
            DomainKind::Delivery => {
                cfg.width = (1, 2);
                cfg.height = (2, 2);
            }
            DomainKind::Visitall => {
                cfg.width = (2, 3);
                cfg.height = (2, 2);
            }
            _ => cfg.objects = (2, 6),
        }
        let Ok(p) = generate_instance(&cfg, &mut seed::rng(SEED, "c1", i), "p") else {
            continue;
        };
        if p.num_objects() > 7 {
            continue;
        }
        let p = if i % 2 == 0 {
            partially_bound(&p, i)
        } else {
            p
        };
        let v =
            forward_cost(&Task::new(p.clone()), p.init(), p.goal(), usize::MAX).expect("oracle");
        let c = compile_dnf(&p, DEFAULT_BINDING_CAP).expect("compile");
        let r = plan(&Task::new(c.problem), Mode::OptimalBfs, &mut Unlimited).expect("plan");
        let agree = match v {
            Cost::Finite(n) => r.cost() == Some(n as usize + 1),
            Cost::DeadEnd => r.cost().is_none(),
        };
        if !agree {
            return outcome(
                false,
                format!(
                    "{} instance {i}: V* {v:?}, compiled plan {:?}",
                    kind.name(),
                    r.cost()
                ),
            );
        }
        dead += usize::from(v.is_dead_end());
        seen[d][neq as usize] = true;
        checked += 1;
    }
    let all_seen = seen.iter().all(|s| s[0] && s[1]);
    outcome(
        checked >= 200 && all_seen,
        format!(
            "{checked} instances, {dead} unsolvable, every domain in both neq modes: {all_seen}"
        ),
    )
}

fn goal_colors(p: &Problem) -> Vec<PredId> {
    p.goal()
        .atoms()
        .iter()
        .filter(|a| p.domain().is_static(a.pred))
        .map(|a| a.pred)
        .collect()
}

fn visit_oracles() -> Outcome {
    let mut counts = [0usize; 2];
    for (which, vars) in [(0usize, (1, 1)), (1, (2, 3))] {
        let mut i = 0u64;
        while counts[which] < 100 {
            let mut cfg = GeneratorConfig::desk(DomainKind::Visitall);
            cfg.width = (2, 5);
            cfg.height = (2, 5);
            cfg.vars = vars;
            let p = generate_instance(
                &cfg,
                &mut seed::rng(SEED, "c2", (which as u64) << 32 | i),
                "p",
            )
            .expect("instance");
            i += 1;
            let colors = goal_colors(&p);
            let closed = if which == 0 {
                visit1_value(&p, p.init(), colors[0])
            } else {
                visit_many_value(&p, p.init(), &colors)
            }
            .expect("visitall");
            let bfs = forward_cost(&Task::new(p.clone()), p.init(), p.goal(), usize::MAX)
                .expect("oracle");
            if closed != bfs {
                return outcome(
                    false,
                    format!(
                        "grid {i} ({} colours): closed form {closed:?}, search {bfs:?}",
                        colors.len()
                    ),
                );
            }
            counts[which] += 1;
        }
    }
    outcome(
        true,
        format!(
            "{} single-colour and {} multi-colour grids agree",
            counts[0], counts[1]
        ),
    )
}

fn squared_error(model: &Model, input: &Prepared, target: f64) -> f64 {
    let d = value(model, input).expect("forward") - target;
    d * d
}

fn central_difference_error(model: &mut Model, input: &Prepared, target: f64) -> f64 {
    const H: f64 = 1e-5;
    let (loss, analytic) = loss_and_grad(model, input, target).expect("forward");
    let floor = 1e-6 * loss.abs().max(1.0);
    let mut worst: f64 = 0.0;
    for p in 0..model.params().len() {
        for j in 0..model.params()[p].data.len() {
            let x = model.params()[p].data[j];
            model.params_mut()[p].data[j] = x + H;
            let plus = squared_error(model, input, target);
            model.params_mut()[p].data[j] = x - H;
            let minus = squared_error(model, input, target);
            model.params_mut()[p].data[j] = x;
            let numeric = (plus - minus) / (2.0 * H);
            let a = analytic[p].as_ref().map_or(0.0, |g| g.data[j]);
            worst = worst.max((numeric - a).abs() / numeric.abs().max(a.abs()).max(floor));
        }
    }
    worst
}

fn gradient_check() -> Outcome {
    let t0 = Instant::now();
    let mut cases = Vec::new();
    let mut i = 0u64;
    while cases.len() < 20 {
        let kind = DomainKind::ALL[(i % 5) as usize];
        let mut cfg = GeneratorConfig::desk(kind);
        cfg.vars = (1, 2);
        match kind {
            DomainKind::Gripper => {
                cfg.objects = (1, 1);
                cfg.rooms = (2, 2);
                cfg.vars = (1, 1);
            }
            DomainKind::Delivery => {
                cfg.objects = (1, 1);
                cfg.width = (1, 2);
                cfg.height = (1, 1);
            }
            DomainKind::Visitall => {
                cfg.width = (2, 2);
                cfg.height = (1, 2);
            }
            _ => cfg.objects = (2, 4),
        }
        let mut rng = seed::rng(SEED, "c3", i);
        i += 1;
        let Ok(p) = generate_instance(&cfg, &mut rng, "p") else {
            continue;
        };
        if p.num_objects() + p.goal().num_vars() > 6 {
            continue;
        }
        let d = p.shared_domain();
        let model = Model::new(
            signature_of(&d),
            ModelConfig {
                k: 8,
                layers: 3,
                alpha: 12.0,
            },
            10,
            &mut rng,
        )
        .expect("model");
        let map = model.bind(&d).expect("bind");
        let input = prepare(
            &model,
            &map,
            &encode(&d, p.init(), p.goal(), p.num_objects()),
        )
        .expect("prepare");
        cases.push((model, input, rng.gen_range(0.0..10.0)));
    }
    let worst = cases
        .into_par_iter()
        .map(|(mut model, input, target)| central_difference_error(&mut model, &input, target))
        .reduce(|| 0.0, f64::max);
    outcome(
        worst <= 1e-4,
        format!(
            "20 inputs, max relative error {worst:.2e}, {:.1}s",
            t0.elapsed().as_secs_f64()
        ),
    )
}

fn isomorphism_invariance() -> Outcome {
    let mut checked = 0;
    for i in 0..10u64 {
        let kind = DomainKind::ALL[(i % 5) as usize];
        let mut cfg = GeneratorConfig::desk(kind);
        cfg.vars = (2, 3);
        let mut rng = seed::rng(SEED, "c4", i);
        let p = generate_instance(&cfg, &mut rng, "p").expect("instance");
        let d = p.shared_domain();
        let model = Model::new(signature_of(&d), ModelConfig::desk(), 10, &mut rng).expect("model");
        let bm = BoundModel::new(&model, &d).expect("bind");
        let base = bm
            .evaluate(&d, p.init(), p.goal(), p.num_objects())
            .expect("value");
        for r in 0..50 {
            let mut objs: Vec<ObjectId> = p.object_ids().collect();
            objs.shuffle(&mut rng);
            let mut vars: Vec<VarId> = p.goal().variables().to_vec();
            vars.shuffle(&mut rng);
            let s = rename_state(p.init(), &objs);
            let g = p.goal().permuted(&vars, &objs);
            let v = bm.evaluate(&d, &s, &g, p.num_objects()).expect("value");
            if v.to_bits() != base.to_bits() {
                return outcome(
                    false,
                    format!("{} instance {i}, renaming {r}: {v} vs {base}", kind.name()),
                );
            }
            checked += 1;
        }
    }
    outcome(checked >= 250, format!("{checked} renamings bit-identical"))
}

fn encoding_counts() -> Outcome {
    let mut checked = 0;
    for kind in DomainKind::ALL {
        let cfg = DatasetConfig {
            samples: 200,
            ..DatasetConfig::desk(kind)
        };
        let ds = generate_dataset_parallel(&cfg, SEED).expect("dataset");
        for s in &ds.samples {
            let p = &ds.problems[s.instance as usize];
            let e = encode(p.domain(), &s.state, &s.goal, p.num_objects());
            let (o, x) = (p.num_objects(), s.goal.num_vars());
            let ok = e.count(builtin::POSSIBLE_BINDING) == o * x
                && e.count(builtin::CONSTANT) == o
                && e.count(builtin::VARIABLE) == x;
            if !ok {
                return outcome(
                    false,
                    format!("{} sample with |O| = {o}, |X| = {x}", kind.name()),
                );
            }
            checked += 1;
        }
    }
    outcome(true, format!("{checked} samples over all domains"))
}

fn trained(data: &DatasetConfig) -> Model {
    let ds = generate_dataset_parallel(data, SEED).expect("dataset");
    let items = items_from_dataset(&ds);
    let config = TrainConfig {
        seed: SEED,
        ..TrainConfig::default()
    };
    let domain = domain_for(data.generator.kind);
    train_model(
        &domain,
        &items,
        ds.n_dead,
        ModelConfig::desk(),
        &config,
        &mut |_| {},
    )
    .expect("train")
    .0
}

struct DeskRun {
    rows: Vec<Row>,
    records: Vec<InstanceRecord>,
    seconds: f64,
}

fn desk_run(kind: DomainKind, methods: &[Method]) -> DeskRun {
    let t0 = Instant::now();
    let model = trained(&DatasetConfig::desk(kind));
    let settings = EvalSettings {
        seed: SEED,
        ..EvalSettings::default()
    };
    let tests = generate_testset(&GeneratorConfig::desk(kind), 100, SEED, settings.oracle_cap)
        .expect("test set");
    let records = eval::evaluate(&tests, methods, Some(&model), &settings).expect("evaluate");
    DeskRun {
        rows: eval::summarize(&records),
        records,
        seconds: t0.elapsed().as_secs_f64(),
    }
}

fn blocks_run() -> &'static DeskRun {
    static RUN: OnceLock<DeskRun> = OnceLock::new();
    RUN.get_or_init(|| {
        desk_run(
            DomainKind::Blocks,
            &[
                Method::Learned,
                Method::Exact,
                Method::RandomAll,
                Method::RandomValid,
            ],
        )
    })
}

fn row(run: &DeskRun, m: Method) -> &Row {
    run.rows.iter().find(|r| r.method == m).expect("method row")
}

fn desk_learning() -> Outcome {
    let blocks = blocks_run();
    let b = row(blocks, Method::Learned);
    let b_ratio = b.mean_ratio.unwrap_or(f64::INFINITY);
    let visitall = desk_run(DomainKind::Visitall, &[Method::Learned]);
    let v = row(&visitall, Method::Learned);
    let passed = b.coverage >= 0.9 && b_ratio <= 1.3 && v.coverage >= 0.85;
    outcome(
        passed,
        format!(
            "blocks coverage {:.1}% ratio {b_ratio:.3} over {} ({} undefined, {:.0}s); visitall coverage {:.1}% ratio {:.3} ({:.0}s)",
            100.0 * b.coverage,
            b.ratio_count,
            b.undefined,
            blocks.seconds,
            100.0 * v.coverage,
            v.mean_ratio.unwrap_or(f64::NAN),
            visitall.seconds
        ),
    )
}

fn baseline_ordering() -> Outcome {
    let run = blocks_run();
    let [all, valid, learned] = [Method::RandomAll, Method::RandomValid, Method::Learned]
        .map(|m| 100.0 * row(run, m).coverage);
    outcome(
        valid - all >= 10.0 && learned - valid >= 10.0,
        format!("random-all {all:.1}% < random-valid {valid:.1}% < learned {learned:.1}%"),
    )
}

fn oracle_substitution() -> Outcome {
    let run = blocks_run();
    let exact: Vec<&InstanceRecord> = run
        .records
        .iter()
        .filter(|r| r.method == Method::Exact)
        .collect();
    let violations: Vec<String> = exact
        .iter()
        .filter(|r| r.ratio != Some(1.0))
        .map(|r| format!("{} (cost {:?}, V* {:?})", r.instance, r.cost, r.reference))
        .collect();
    let detail = if violations.is_empty() {
        format!("ratio 1.0 on all {} instances", exact.len())
    } else {
        format!("{} violations: {}", violations.len(), violations.join(", "))
    };
    outcome(violations.is_empty() && !exact.is_empty(), detail)
}

/// Gripper goals with four colours, three rooms and
/// pairwise-distinct balls, on large instances.
fn gripper_pattern(cfg: &mut GeneratorConfig) {
    cfg.colors = (4, 4);
    cfg.rooms = (3, 3);
    cfg.neq = NeqMode::AllPairs;
}

fn speedup_direction() -> Outcome {
    let t0 = Instant::now();
    let mut data = DatasetConfig::desk(DomainKind::Gripper);
    gripper_pattern(&mut data.generator);
    data.generator.vars = (1, 4);
    let model = trained(&data);
    let mut cfg = GeneratorConfig::desk(DomainKind::Gripper);
    gripper_pattern(&mut cfg);
    cfg.objects = (24, 32);
    cfg.vars = (4, 6);
    let settings = EvalSettings {
        mode: Mode::GbfsGoalCount,
        timeout: Duration::from_secs(5),
        prune: true,
        seed: SEED,
        ..EvalSettings::default()
    };
    let records: Vec<_> = (0..50u64)
        .map(|i| {
            let p = generate_instance(
                &cfg,
                &mut seed::rng(SEED, "c9", i),
                &format!("gripper-large-{i}"),
            )
            .expect("instance");
            eval::speedup(&p, &model, &settings, 3).expect("speedup")
        })
        .collect();
    let median = eval::median_speedup(&records);
    let compiled_timeouts = records.iter().filter(|r| r.t_compiled.is_none()).count();
    let grounded_timeouts = records.iter().filter(|r| r.t_grounded.is_none()).count();
    let grounded_solved = records.iter().filter(|r| r.grounded_solved).count();
    outcome(
        median.is_some_and(|m| m > 1.0),
        format!(
            "median speedup {} over {} instances (timeouts: compiled {compiled_timeouts}, grounded {grounded_timeouts}; grounded solved {grounded_solved}), {:.0}s",
            median.map_or("-".into(), |m| format!("{m:.2}")),
            records.len(),
            t0.elapsed().as_secs_f64()
        ),
    )
}

fn cli(args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_qground"))
        .args(args)
        .env("QGROUND_LOG", "error")
        .status()
        .expect("spawn");
    assert!(status.success(), "qground {args:?} failed");
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let gen = |out: &str, threads: &str| {
        cli(&[
            "--seed",
            "11",
            "--threads",
            threads,
            "gen-dataset",
            "--domain",
            "blocks",
            "--samples",
            "120",
            "-o",
            out,
        ]);
    };
    let train = |data: &str, out: &str, threads: &str| {
        cli(&[
            "--seed",
            "11",
            "--threads",
            threads,
            "train",
            "--dataset",
            data,
            "--k",
            "4",
            "--layers",
            "2",
            "--epochs",
            "3",
            "--batch-size",
            "16",
            "-o",
            out,
        ]);
    };
    gen(&path("a.jsonl"), "1");
    gen(&path("b.jsonl"), "1");
    gen(&path("c.jsonl"), "2");
    train(&path("a.jsonl"), &path("a.json"), "1");
    train(&path("a.jsonl"), &path("b.json"), "1");
    train(&path("a.jsonl"), &path("c.json"), "2");
    let same = |x: &str, y: &str| {
        std::fs::read(Path::new(&path(x))).expect("read")
            == std::fs::read(Path::new(&path(y))).expect("read")
    };
    let data = same("a.jsonl", "b.jsonl");
    let model = same("a.json", "b.json");
    let across = same("a.jsonl", "c.jsonl") && same("a.json", "c.json");
    outcome(
        data && model,
        format!("dataset identical: {data}, model identical: {model}, identical across thread counts: {across}"),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "DNF equivalence", dnf_equivalence),
        (2, "closed-form Visitall oracles", visit_oracles),
        (3, "gradient correctness", gradient_check),
        (4, "isomorphism invariance", isomorphism_invariance),
        (5, "encoding counts", encoding_counts),
        (6, "desk-scale learning", desk_learning),
        (7, "baseline ordering", baseline_ordering),
        (8, "oracle substitution", oracle_substitution),
        (9, "speedup direction", speedup_direction),
        (10, "determinism", determinism),
    ];
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (n, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let r = run();
        println!(
            "criterion {n:>2} {} {name}: {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.detail
        );
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
