//! Quick consistency suites behind `qground selfcheck`.

use qground_core::generators::{
    domain_for, generate_instance, DomainKind, GeneratorConfig, NeqMode,
};
use qground_core::goal::{compile_dnf, satisfies, Binding, DEFAULT_BINDING_CAP};
use qground_core::oracle::{check_bellman, explore, forward_cost};
use qground_core::rgnn::{encode, loss_and_grad, prepare, signature_of, Model, ModelConfig};
use qground_core::search::{plan, Mode, Unlimited};
use qground_core::{seed, ObjectId, Task};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Largest relative error between analytic and central-difference gradients
/// of the squared error over every parameter entry. Entries smaller than
/// `floor * max(1, |loss|)` are compared on that absolute scale.
pub fn model_gradient_error(
    model: &mut Model,
    input: &qground_core::rgnn::Prepared,
    target: f64,
    h: f64,
    floor: f64,
) -> f64 {
    let (loss, grads) = loss_and_grad(model, input, target).expect("forward");
    let scale = floor * loss.abs().max(1.0);
    let mut worst: f64 = 0.0;
    for p in 0..model.params().len() {
        for j in 0..model.params()[p].data.len() {
            let orig = model.params()[p].data[j];
            model.params_mut()[p].data[j] = orig + h;
            let up = loss_and_grad(model, input, target).expect("forward").0;
            model.params_mut()[p].data[j] = orig - h;
            let down = loss_and_grad(model, input, target).expect("forward").0;
            model.params_mut()[p].data[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads[p].as_ref().map_or(0.0, |g| g.data[j]);
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(scale);
            worst = worst.max(rel);
        }
    }
    worst
}

fn gradients() -> CheckResult {
    let kind = DomainKind::Blocks;
    let d = domain_for(kind);
    let mut model = Model::new(
        signature_of(&d),
        ModelConfig {
            k: 4,
            layers: 2,
            alpha: 12.0,
        },
        10,
        &mut seed::rng(0, "selfcheck", 0),
    )
    .expect("model");
    let map = model.bind(&d).expect("bind");
    let mut cfg = GeneratorConfig::desk(kind);
    cfg.objects = (3, 3);
    let p = generate_instance(&cfg, &mut seed::rng(0, "selfcheck", 1), "p").expect("instance");
    let input = prepare(
        &model,
        &map,
        &encode(&d, p.init(), p.goal(), p.num_objects()),
    )
    .expect("prepare");
    let err = model_gradient_error(&mut model, &input, 3.0, 1e-5, 1e-6);
    CheckResult {
        name: "gradients",
        passed: err <= 1e-4,
        detail: format!("max relative error {err:.2e}"),
    }
}

fn satisfies_vs_brute_force() -> CheckResult {
    let mut checked = 0;
    for i in 0..40u64 {
        let kind = DomainKind::ALL[i as usize % 5];
        let p = generate_instance(
            &GeneratorConfig::desk(kind),
            &mut seed::rng(i, "selfcheck", 2),
            "p",
        )
        .expect("instance");
        let n = p.num_objects();
        let g = p.goal();
        if n.pow(g.num_vars() as u32) > 100_000 {
            continue;
        }
        let brute = (0..n.pow(g.num_vars() as u32)).any(|mut code| {
            let b: Binding = g
                .variables()
                .iter()
                .map(|&v| {
                    let o = ObjectId((code % n) as u32);
                    code /= n;
                    (v, o)
                })
                .collect();
            let gg = g.bind(&b).expect("bind");
            !gg.has_violated_neq()
                && gg
                    .ground_atoms()
                    .expect("ground")
                    .iter()
                    .all(|a| p.init().contains(a))
        });
        if brute != satisfies(p.init(), g, n).is_some() {
            return CheckResult {
                name: "satisfies",
                passed: false,
                detail: format!("disagreement on instance {i}"),
            };
        }
        checked += 1;
    }
    CheckResult {
        name: "satisfies",
        passed: true,
        detail: format!("{checked} instances"),
    }
}

fn dnf_and_bellman() -> CheckResult {
    for i in 0..20u64 {
        let kind = DomainKind::ALL[i as usize % 5];
        let mut cfg = GeneratorConfig::desk(kind);
        cfg.neq = if i % 2 == 0 {
            NeqMode::None
        } else {
            NeqMode::AllPairs
        };
        let p = generate_instance(&cfg, &mut seed::rng(i, "selfcheck", 3), "p").expect("instance");
        let task = Task::new(p.clone());
        let v = forward_cost(&task, p.init(), p.goal(), 1_000_000)
            .ok()
            .map(|c| c.finite());
        let c = compile_dnf(&p, DEFAULT_BINDING_CAP).expect("compile");
        let r = plan(&Task::new(c.problem), Mode::OptimalBfs, &mut Unlimited).expect("plan");
        if v != Some(r.cost().map(|c| c as u32 - 1)) {
            return CheckResult {
                name: "dnf",
                passed: false,
                detail: format!("instance {i}: V* {v:?}, compiled {:?}", r.cost()),
            };
        }
        let space = explore(&task, 20_000);
        if !space.truncated() {
            let dist = space.goal_distances(p.goal(), p.num_objects());
            if let Some(s) = check_bellman(&space, &dist, p.goal(), p.num_objects()) {
                return CheckResult {
                    name: "dnf",
                    passed: false,
                    detail: format!("instance {i}: Bellman violated at state {s}"),
                };
            }
        }
    }
    CheckResult {
        name: "dnf",
        passed: true,
        detail: "20 instances".into(),
    }
}

pub fn run_all() -> Vec<CheckResult> {
    vec![gradients(), satisfies_vs_brute_force(), dnf_and_bellman()]
}
