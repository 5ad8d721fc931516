//! Coverage, quality ratios, random baselines and grounded-vs-compiled
//! timing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::seq::IteratorRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use qground_core::goal::{
    compile_dnf_within, enumerate_valid_bindings, Binding, DEFAULT_BINDING_CAP,
};
use qground_core::oracle::{explore, forward_cost, Cost, ReachableSpace};
use qground_core::policy::{ground_goal, ExactValue, GoalValue, ModelValue, PolicyError};
use qground_core::rgnn::Model;
use qground_core::search::{plan_for_goal, Budget, Mode, Outcome};
use qground_core::{seed, ObjectId, Problem, QuantifiedGoal, Task};

use crate::pddl::print_goal;

/// Wall-clock budget, checked every 64 expansions.
pub struct Deadline {
    start: Instant,
    limit: Duration,
    pub timed_out: bool,
}

impl Deadline {
    pub fn new(limit: Duration) -> Self {
        Deadline {
            start: Instant::now(),
            limit,
            timed_out: false,
        }
    }
}

impl Budget for Deadline {
    fn exhausted(&mut self, expanded: usize) -> bool {
        if !self.timed_out && expanded % 64 == 0 && self.start.elapsed() >= self.limit {
            self.timed_out = true;
        }
        self.timed_out
    }
}

/// What a grounding's cost is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reference {
    /// `V*` of the quantified goal by breadth-first search.
    Optimal,
    /// Plan for the DNF-compiled problem with the configured planner, minus
    /// the dummy action.
    Compiled,
}

#[derive(Clone, Debug)]
pub struct EvalSettings {
    pub mode: Mode,
    pub timeout: Duration,
    pub prune: bool,
    pub reference: Reference,
    pub oracle_cap: usize,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            mode: Mode::OptimalBfs,
            timeout: Duration::from_secs(60),
            prune: false,
            reference: Reference::Optimal,
            oracle_cap: 1_000_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Learned,
    Exact,
    RandomAll,
    RandomValid,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Learned => "learned",
            Method::Exact => "exact",
            Method::RandomAll => "random-all",
            Method::RandomValid => "random-valid",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InstanceRecord {
    pub domain: String,
    pub instance: String,
    pub method: Method,
    pub vars: usize,
    pub objects: usize,
    pub grounding: Option<String>,
    pub covered: bool,
    pub timed_out: bool,
    pub cost: Option<u32>,
    pub reference: Option<u32>,
    pub ratio: Option<f64>,
    /// Wall-clock seconds; excluded from determinism checks.
    pub seconds: f64,
}

/// `V / V*`. A zero reference gives 1 for an empty plan and no ratio otherwise.
pub fn quality_ratio(cost: u32, reference: u32) -> Option<f64> {
    match (cost, reference) {
        (0, 0) => Some(1.0),
        (_, 0) => None,
        _ => Some(cost as f64 / reference as f64),
    }
}

/// Reference cost of an instance's quantified goal, if it could be settled.
pub fn reference_cost(task: &Task, settings: &EvalSettings) -> Option<u32> {
    let p = &task.problem;
    match settings.reference {
        Reference::Optimal => forward_cost(task, p.init(), p.goal(), settings.oracle_cap)
            .ok()?
            .finite(),
        Reference::Compiled => {
            let mut budget = Deadline::new(settings.timeout);
            let c = compile_dnf_within(p, DEFAULT_BINDING_CAP, &mut budget).ok()??;
            let ct = Task::new(c.problem);
            let r = plan_for_goal(
                &ct,
                ct.problem.init(),
                ct.problem.goal(),
                settings.mode,
                &mut budget,
            )
            .ok()?;
            r.cost().map(|c| c.saturating_sub(1) as u32)
        }
    }
}

/// Plans for a ground goal: (plan length, timed out).
pub fn solve_ground(
    task: &Task,
    goal: &QuantifiedGoal,
    settings: &EvalSettings,
) -> (Option<u32>, bool) {
    let mut budget = Deadline::new(settings.timeout);
    match plan_for_goal(task, task.problem.init(), goal, settings.mode, &mut budget) {
        Ok(r) => (r.cost().map(|c| c as u32), r.outcome == Outcome::Exhausted),
        Err(_) => (None, false),
    }
}

fn random_all(
    problem: &Problem,
    goal: &QuantifiedGoal,
    s: u64,
    index: usize,
) -> Option<QuantifiedGoal> {
    let mut rng = seed::rng(s, "random-all", index as u64);
    let n = problem.num_objects() as u32;
    if n == 0 && goal.num_vars() > 0 {
        return None;
    }
    let b: Binding = goal
        .variables()
        .iter()
        .map(|&v| (v, ObjectId(rng.gen_range(0..n))))
        .collect();
    goal.bind(&b).ok()
}

fn random_valid(
    problem: &Problem,
    goal: &QuantifiedGoal,
    s: u64,
    index: usize,
) -> Option<QuantifiedGoal> {
    let mut rng = seed::rng(s, "random-valid", index as u64);
    let b = enumerate_valid_bindings(problem, problem.init(), goal)
        .take(DEFAULT_BINDING_CAP)
        .choose(&mut rng)?;
    goal.bind(&b).ok()
}

struct Prepared {
    task: Task,
    reference: Option<u32>,
    space: Option<ReachableSpace>,
}

fn prepare_instance(p: &Problem, settings: &EvalSettings, with_space: bool) -> Prepared {
    let task = Task::new(p.clone());
    let reference = reference_cost(&task, settings);
    let space = if with_space {
        Some(explore(&task, settings.oracle_cap)).filter(|s| !s.truncated())
    } else {
        None
    };
    Prepared {
        task,
        reference,
        space,
    }
}

fn grounding_for(
    method: Method,
    prep: &Prepared,
    model: Option<&Model>,
    settings: &EvalSettings,
    index: usize,
) -> Result<Option<QuantifiedGoal>, PolicyError> {
    let p = &prep.task.problem;
    let goal = p.goal();
    Ok(match method {
        Method::Learned => {
            let model = model.ok_or_else(|| PolicyError::Value("no model supplied".into()))?;
            let v = ModelValue::new(model, p).map_err(|e| PolicyError::Value(e.to_string()))?;
            Some(ground_goal(p, p.init(), goal, &v, settings.prune)?.goal)
        }
        Method::Exact => {
            let v = ExactValue {
                task: &prep.task,
                space: prep.space.as_ref(),
                n_dead: model.map_or(1_000_000, |m| m.n_dead),
                cap: settings.oracle_cap,
            };
            Some(ground_goal(p, p.init(), goal, &v as &dyn GoalValue, settings.prune)?.goal)
        }
        Method::RandomAll => random_all(p, goal, settings.seed, index),
        Method::RandomValid => random_valid(p, goal, settings.seed, index),
    })
}

/// One record per (instance, method). Instances run in parallel; output is
/// in input order with methods in the given order.
pub fn evaluate(
    problems: &[Problem],
    methods: &[Method],
    model: Option<&Model>,
    settings: &EvalSettings,
) -> Result<Vec<InstanceRecord>, PolicyError> {
    let with_space = methods.contains(&Method::Exact);
    let per: Vec<Result<Vec<InstanceRecord>, PolicyError>> = problems
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let prep = prepare_instance(p, settings, with_space);
            let mut out = Vec::with_capacity(methods.len());
            for &m in methods {
                let t0 = Instant::now();
                let g = grounding_for(m, &prep, model, settings, i)?;
                let (cost, timed_out) = match &g {
                    Some(g) => solve_ground(&prep.task, g, settings),
                    None => (None, false),
                };
                let ratio = match (cost, prep.reference) {
                    (Some(c), Some(r)) => quality_ratio(c, r),
                    _ => None,
                };
                out.push(InstanceRecord {
                    domain: p.domain().name().to_string(),
                    instance: p.name().to_string(),
                    method: m,
                    vars: p.goal().num_vars(),
                    objects: p.num_objects(),
                    grounding: g.as_ref().map(|g| print_goal(p, g)),
                    covered: cost.is_some(),
                    timed_out,
                    cost,
                    reference: prep.reference,
                    ratio,
                    seconds: t0.elapsed().as_secs_f64(),
                });
            }
            Ok(out)
        })
        .collect();
    let mut records = Vec::new();
    for r in per {
        records.extend(r?);
    }
    Ok(records)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub domain: String,
    pub method: Method,
    pub instances: usize,
    pub covered: usize,
    pub coverage: f64,
    /// Instances entering the ratio mean (solved by both sides).
    pub ratio_count: usize,
    pub excluded: usize,
    /// Solved with a non-empty plan although the reference is zero.
    pub undefined: usize,
    pub mean_reference: Option<f64>,
    pub mean_ratio: Option<f64>,
}

pub fn summarize(records: &[InstanceRecord]) -> Vec<Row> {
    let mut groups: BTreeMap<(String, Method), Vec<&InstanceRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.domain.clone(), r.method))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((domain, method), rs)| {
            let covered = rs.iter().filter(|r| r.covered).count();
            let both: Vec<&&InstanceRecord> = rs.iter().filter(|r| r.ratio.is_some()).collect();
            let mean = |f: &dyn Fn(&InstanceRecord) -> f64| {
                if both.is_empty() {
                    None
                } else {
                    Some(both.iter().map(|r| f(r)).sum::<f64>() / both.len() as f64)
                }
            };
            Row {
                domain,
                method,
                instances: rs.len(),
                covered,
                coverage: if rs.is_empty() {
                    0.0
                } else {
                    covered as f64 / rs.len() as f64
                },
                ratio_count: both.len(),
                excluded: rs.len() - both.len(),
                undefined: rs
                    .iter()
                    .filter(|r| r.reference == Some(0) && r.cost.is_some_and(|c| c > 0))
                    .count(),
                mean_reference: mean(&|r| r.reference.unwrap_or(0) as f64),
                mean_ratio: mean(&|r| r.ratio.unwrap_or(0.0)),
            }
        })
        .collect()
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.digits$}"))
}

/// Coverage and ratio per domain with baseline coverages alongside.
pub fn markdown_table(rows: &[Row], reference: Reference) -> String {
    let label = match reference {
        Reference::Optimal => "V*",
        Reference::Compiled => "V^G",
    };
    let mut out = format!("| Domain | Method | N | Cov. | {label} | V/{label} | Excluded | Undefined |\n|---|---|---|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.1}% | {} | {} | {} | {} |",
            r.domain,
            r.method.name(),
            r.instances,
            100.0 * r.coverage,
            opt(r.mean_reference, 2),
            opt(r.mean_ratio, 3),
            r.excluded,
            r.undefined
        );
    }
    out
}

pub fn csv_rows(rows: &[Row]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "domain",
        "method",
        "instances",
        "covered",
        "coverage",
        "ratio_count",
        "excluded",
        "undefined",
        "mean_reference",
        "mean_ratio",
    ])?;
    for r in rows {
        w.write_record([
            r.domain.clone(),
            r.method.name().to_string(),
            r.instances.to_string(),
            r.covered.to_string(),
            format!("{:.6}", r.coverage),
            r.ratio_count.to_string(),
            r.excluded.to_string(),
            r.undefined.to_string(),
            opt(r.mean_reference, 6),
            opt(r.mean_ratio, 6),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

pub fn jsonl_records(records: &[InstanceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("serializable"));
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpeedupRecord {
    pub instance: String,
    pub vars: usize,
    pub t_grounded: Option<f64>,
    pub t_compiled: Option<f64>,
    pub grounded_solved: bool,
    pub compiled_solved: bool,
    /// `t_compiled / t_grounded`; `None` when either side timed out.
    pub ratio: Option<f64>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

/// Times one side `runs` times; `None` on a timeout.
fn timed(runs: usize, mut f: impl FnMut() -> (bool, bool)) -> (Option<f64>, bool) {
    let mut times = Vec::with_capacity(runs);
    let mut solved = false;
    for _ in 0..runs.max(1) {
        let t0 = Instant::now();
        let (ok, timed_out) = f();
        if timed_out {
            return (None, false);
        }
        solved = ok;
        times.push(t0.elapsed().as_secs_f64());
    }
    (Some(median(times)), solved)
}

/// Grounding with the model and planning, against compiling the goal away
/// and planning. Runs on the calling thread.
pub fn speedup(
    problem: &Problem,
    model: &Model,
    settings: &EvalSettings,
    runs: usize,
) -> Result<SpeedupRecord, PolicyError> {
    let value = ModelValue::new(model, problem).map_err(|e| PolicyError::Value(e.to_string()))?;
    let mut err = None;
    let (t_grounded, grounded_solved) = timed(runs, || {
        let task = Task::new(problem.clone());
        match ground_goal(
            problem,
            problem.init(),
            problem.goal(),
            &value,
            settings.prune,
        ) {
            Ok(trace) => {
                let (c, t) = solve_ground(&task, &trace.goal, settings);
                (c.is_some(), t)
            }
            Err(e) => {
                err = Some(e);
                (false, false)
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let (t_compiled, compiled_solved) = timed(runs, || {
        let mut budget = Deadline::new(settings.timeout);
        let Ok(Some(c)) = compile_dnf_within(problem, DEFAULT_BINDING_CAP, &mut budget) else {
            return (false, true);
        };
        let task = Task::new(c.problem);
        match plan_for_goal(
            &task,
            task.problem.init(),
            task.problem.goal(),
            settings.mode,
            &mut budget,
        ) {
            Ok(r) => (r.plan().is_some(), r.outcome == Outcome::Exhausted),
            Err(_) => (false, false),
        }
    });
    let ratio = match (t_grounded, t_compiled) {
        (Some(g), Some(c)) if g > 0.0 => Some(c / g),
        _ => None,
    };
    Ok(SpeedupRecord {
        instance: problem.name().to_string(),
        vars: problem.goal().num_vars(),
        t_grounded,
        t_compiled,
        grounded_solved,
        compiled_solved,
        ratio,
    })
}

/// Median of `t_compiled / t_grounded`. A timeout on one side only counts as
/// an unbounded ratio in the other side's favour; double timeouts are dropped.
pub fn median_speedup(records: &[SpeedupRecord]) -> Option<f64> {
    let xs: Vec<f64> = records
        .iter()
        .filter_map(|r| match (r.t_grounded, r.t_compiled) {
            (Some(_), Some(_)) => r.ratio,
            (Some(_), None) => Some(f64::INFINITY),
            (None, Some(_)) => Some(0.0),
            (None, None) => None,
        })
        .collect();
    if xs.is_empty() {
        None
    } else {
        Some(median(xs))
    }
}

pub fn speedup_markdown(domain: &str, records: &[SpeedupRecord]) -> String {
    let censored = records.iter().filter(|r| r.ratio.is_none()).count();
    format!(
        "| Domain | N | Median speedup | Censored |\n|---|---|---|---|\n| {domain} | {} | {} | {censored} |\n",
        records.len(),
        opt(median_speedup(records), 3)
    )
}

/// Costs by the exact oracle, for checking greedy grounding against `V*`.
pub fn exact_cost(problem: &Problem, goal: &QuantifiedGoal, cap: usize) -> Option<Cost> {
    forward_cost(&Task::new(problem.clone()), problem.init(), goal, cap).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use qground_core::generators::{generate_instance, DomainKind, GeneratorConfig};
    use qground_core::search::{plan, Unlimited};

    fn instances(kind: DomainKind, n: u64) -> Vec<Problem> {
        (0..n)
            .map(|i| {
                generate_instance(
                    &GeneratorConfig::desk(kind),
                    &mut seed::rng(i, "e", 0),
                    &format!("p{i}"),
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn empty_testset_gives_empty_report() {
        let r = evaluate(&[], &[Method::RandomAll], None, &EvalSettings::default()).unwrap();
        assert!(r.is_empty());
        assert!(summarize(&r).is_empty());
    }

    #[test]
    fn exact_grounding_is_optimal_and_baselines_are_seeded() {
        let ps = instances(DomainKind::Gripper, 6);
        let settings = EvalSettings::default();
        let methods = [Method::Exact, Method::RandomAll, Method::RandomValid];
        let a = evaluate(&ps, &methods, None, &settings).unwrap();
        let b = evaluate(&ps, &methods, None, &settings).unwrap();
        let strip = |v: &[InstanceRecord]| {
            v.iter()
                .map(|r| InstanceRecord {
                    seconds: 0.0,
                    ..r.clone()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
        for r in a
            .iter()
            .filter(|r| r.method == Method::Exact && r.reference.is_some())
        {
            assert_eq!(r.ratio, Some(1.0), "{}", r.instance);
        }
        let rows = summarize(&a);
        assert_eq!(rows.len(), 3);
        assert!(markdown_table(&rows, Reference::Optimal).contains("| gripper | exact | 6 |"));
        assert!(csv_rows(&rows).unwrap().starts_with("domain,method"));
    }

    #[test]
    fn bfs_matches_oracle_and_gbfs_is_never_shorter() {
        for (i, p) in instances(DomainKind::Blocks, 10).into_iter().enumerate() {
            let b = Binding::from_iter(p.goal().variables().iter().map(|&v| (v, ObjectId(v.0))));
            let g = p.goal().bind(&b).unwrap();
            let task = Task::new(p.with_goal(g.clone()));
            let bfs = plan(&task, Mode::OptimalBfs, &mut Unlimited).unwrap();
            let gbfs = plan(&task, Mode::GbfsGoalCount, &mut Unlimited).unwrap();
            let oracle = forward_cost(&task, p.init(), &g, 1_000_000).unwrap();
            assert_eq!(
                bfs.cost().map(|c| c as u32),
                oracle.finite(),
                "instance {i}"
            );
            if let (Some(a), Some(b)) = (bfs.cost(), gbfs.cost()) {
                assert!(b >= a);
            }
        }
    }

    #[test]
    fn ratio_policy() {
        assert_eq!(quality_ratio(4, 2), Some(2.0));
        assert_eq!(quality_ratio(0, 0), Some(1.0));
        assert_eq!(quality_ratio(2, 0), None);
    }

    #[test]
    fn compiled_reference_is_at_least_optimal() {
        let settings = EvalSettings {
            reference: Reference::Compiled,
            mode: Mode::OptimalBfs,
            ..EvalSettings::default()
        };
        for p in instances(DomainKind::Visitall, 5) {
            let task = Task::new(p.clone());
            let opt = reference_cost(&task, &EvalSettings::default());
            assert_eq!(reference_cost(&task, &settings), opt);
        }
    }

    #[test]
    fn deadline_stops_search() {
        let mut d = Deadline::new(Duration::ZERO);
        assert!(d.exhausted(0));
        assert!(d.timed_out);
    }
}
