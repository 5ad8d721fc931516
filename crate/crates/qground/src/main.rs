use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use qground::checks;
use qground::eval::{self, EvalSettings, Method, Reference};
use qground::io;
use qground::pddl::{parse_domain, parse_problem, print_domain, print_goal, print_problem};
use qground::pipeline::{
    generate_dataset_parallel, generate_testset, generate_unfiltered, items_from_loaded,
    train_model,
};
use qground_core::dataset::DatasetConfig;
use qground_core::generators::{
    domain_for, generate_instance, DomainKind, GeneratorConfig, NeqMode,
};
use qground_core::goal::{compile_dnf, DEFAULT_BINDING_CAP};
use qground_core::optim::AdamConfig;
use qground_core::oracle::{forward_cost, Cost};
use qground_core::policy::{ground_goal, ModelValue};
use qground_core::rgnn::ModelConfig;
use qground_core::search::{plan, Mode, Outcome};
use qground_core::train::TrainConfig;
use qground_core::{seed, Domain, Problem, Task};

#[derive(Parser)]
#[command(
    name = "qground",
    version,
    about = "Learned grounding of existentially quantified planning goals"
)]
struct Cli {
    /// Master seed; every stage derives its own streams from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    Blocks,
    BlocksC,
    Gripper,
    Delivery,
    Visitall,
}

impl DomainArg {
    fn kind(self) -> DomainKind {
        match self {
            DomainArg::Blocks => DomainKind::Blocks,
            DomainArg::BlocksC => DomainKind::BlocksC,
            DomainArg::Gripper => DomainKind::Gripper,
            DomainArg::Delivery => DomainKind::Delivery,
            DomainArg::Visitall => DomainKind::Visitall,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum NeqArg {
    None,
    AllPairs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    OptimalBfs,
    GbfsGoalcount,
}

impl ModeArg {
    fn mode(self) -> Mode {
        match self {
            ModeArg::OptimalBfs => Mode::OptimalBfs,
            ModeArg::GbfsGoalcount => Mode::GbfsGoalCount,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ReferenceArg {
    Optimal,
    Compiled,
}

/// Instance generator knobs; unset values keep the desk defaults.
#[derive(Args, Clone)]
struct GenArgs {
    #[arg(long, value_enum)]
    domain: DomainArg,
    #[arg(long, value_enum, default_value = "none")]
    neq: NeqArg,
    #[arg(long)]
    min_objects: Option<usize>,
    #[arg(long)]
    max_objects: Option<usize>,
    #[arg(long)]
    min_vars: Option<usize>,
    #[arg(long)]
    max_vars: Option<usize>,
    #[arg(long)]
    max_colors: Option<usize>,
    /// Largest grid side (Visitall and Delivery).
    #[arg(long)]
    max_side: Option<usize>,
}

impl GenArgs {
    fn config(&self) -> GeneratorConfig {
        let mut c = GeneratorConfig::desk(self.domain.kind());
        c.neq = match self.neq {
            NeqArg::None => NeqMode::None,
            NeqArg::AllPairs => NeqMode::AllPairs,
        };
        if let Some(v) = self.min_objects {
            c.objects.0 = v;
        }
        if let Some(v) = self.max_objects {
            c.objects.1 = v;
        }
        if let Some(v) = self.min_vars {
            c.vars.0 = v;
        }
        if let Some(v) = self.max_vars {
            c.vars.1 = v;
        }
        if let Some(v) = self.max_colors {
            c.colors.1 = v;
            c.colors.0 = c.colors.0.min(v);
        }
        if let Some(v) = self.max_side {
            c.width.1 = v;
            c.height.1 = v;
        }
        c
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write random problem files and the domain file.
    GenInstances {
        #[command(flatten)]
        gen: GenArgs,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Write a labelled JSON Lines dataset.
    GenDataset {
        #[command(flatten)]
        gen: GenArgs,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 10)]
        samples_per_instance: usize,
        #[arg(long, default_value_t = 0.1)]
        val_fraction: f64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train a value function on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 16)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        layers: usize,
        #[arg(long, default_value_t = 40)]
        epochs: usize,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0.1)]
        val_fraction: f64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Ground a problem's goal with a trained model.
    Ground {
        #[command(flatten)]
        input: ProblemArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        prune_invalid: bool,
    },
    /// Plan for a problem.
    Solve {
        #[command(flatten)]
        input: ProblemArgs,
        #[arg(long, value_enum, default_value = "optimal-bfs")]
        mode: ModeArg,
        #[arg(long, default_value_t = 60)]
        timeout_secs: u64,
    },
    /// Compile the quantified goal into dummy actions.
    CompileDnf {
        #[command(flatten)]
        input: ProblemArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Evaluate a model and the random baselines on fresh instances.
    Eval {
        #[command(flatten)]
        gen: GenArgs,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, value_enum, default_value = "optimal-bfs")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "optimal")]
        reference: ReferenceArg,
        #[arg(long, default_value_t = 60)]
        timeout_secs: u64,
        #[arg(long)]
        prune_invalid: bool,
        /// Also ground with exact values in place of the model.
        #[arg(long)]
        exact: bool,
        /// Time grounded against compiled planning (median of 3 runs).
        #[arg(long)]
        speedup: bool,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Print the optimal cost of the problem's goal from its initial state.
    Oracle {
        #[command(flatten)]
        input: ProblemArgs,
    },
    /// Run the gradient and invariant suites.
    Selfcheck,
}

#[derive(Args, Clone)]
struct ProblemArgs {
    #[arg(long)]
    problem: PathBuf,
    /// Domain file, when the problem does not use a built-in domain.
    #[arg(long)]
    domain_file: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

type Res<T> = Result<T, Failure>;

fn runtime<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::Runtime(format!("{context}: {e}"))
}

fn read(path: &Path) -> Res<String> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Res<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(runtime("create directory"))?;
    }
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    args: Vec<String>,
    seed: u64,
    threads: Option<usize>,
}

fn manifest_path(out: &Path) -> PathBuf {
    if out.extension().is_none() {
        out.join("manifest.json")
    } else {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        out.with_file_name(name)
    }
}

fn write_manifest(cli: &Cli, command: &str, out: &Path) -> Res<()> {
    let m = Manifest {
        tool: "qground",
        version: env!("CARGO_PKG_VERSION"),
        command,
        args: std::env::args().skip(1).collect(),
        seed: cli.seed,
        threads: cli.threads,
    };
    write(
        &manifest_path(out),
        &(serde_json::to_string_pretty(&m).expect("serializable") + "\n"),
    )
}

fn load_problem(args: &ProblemArgs) -> Res<Problem> {
    let domain: Option<Arc<Domain>> = match &args.domain_file {
        Some(p) => {
            Some(Arc::new(parse_domain(&read(p)?).map_err(|e| {
                Failure::Usage(format!("{}:{e}", p.display()))
            })?))
        }
        None => None,
    };
    parse_problem(&read(&args.problem)?, domain)
        .map_err(|e| Failure::Usage(format!("{}:{e}", args.problem.display())))
}

fn run(cli: &Cli) -> Res<()> {
    match &cli.command {
        Command::GenInstances { gen, count, out } => {
            let cfg = gen.config();
            let kind = cfg.kind;
            fs::create_dir_all(out).map_err(runtime("create directory"))?;
            write(
                &out.join(format!("{}-domain.pddl", kind.domain_name())),
                &print_domain(&domain_for(kind)),
            )?;
            for i in 0..*count {
                let name = format!("{}-{i}", kind.name());
                let p =
                    generate_instance(&cfg, &mut seed::rng(cli.seed, "instance", i as u64), &name)
                        .map_err(runtime("generate"))?;
                write(&out.join(format!("{name}.pddl")), &print_problem(&p))?;
            }
            info!("wrote {count} instances to {}", out.display());
            write_manifest(cli, "gen-instances", out)
        }
        Command::GenDataset {
            gen,
            samples,
            samples_per_instance,
            val_fraction,
            out,
        } => {
            let cfg = DatasetConfig {
                generator: gen.config(),
                samples: *samples,
                samples_per_instance: *samples_per_instance,
                ..DatasetConfig::desk(gen.domain.kind())
            };
            let ds = generate_dataset_parallel(&cfg, cli.seed).map_err(runtime("dataset"))?;
            let mut buf = Vec::new();
            io::write_dataset(&ds, *val_fraction, &mut buf).map_err(runtime("dataset"))?;
            write(out, &String::from_utf8(buf).expect("utf-8"))?;
            let dead = ds.samples.iter().filter(|s| s.cost.is_dead_end()).count();
            info!(
                "{} samples from {} instances, {dead} dead ends, N_dead = {}",
                ds.samples.len(),
                ds.problems.len(),
                ds.n_dead
            );
            write_manifest(cli, "gen-dataset", out)
        }
        Command::Train {
            dataset,
            k,
            layers,
            epochs,
            batch_size,
            lr,
            val_fraction,
            out,
        } => {
            let ds = io::read_dataset(&read(dataset)?)
                .map_err(|e| Failure::Usage(format!("{}: {e}", dataset.display())))?;
            let items = items_from_loaded(&ds);
            let mc = ModelConfig {
                k: *k,
                layers: *layers,
                ..ModelConfig::desk()
            };
            let tc = TrainConfig {
                adam: AdamConfig {
                    lr: *lr,
                    ..AdamConfig::default()
                },
                batch_size: *batch_size,
                epochs: *epochs,
                seed: cli.seed,
                val_fraction: *val_fraction,
            };
            let (model, report) =
                train_model(&ds.domain, &items, ds.meta.n_dead, mc, &tc, &mut |e| {
                    info!(
                        "epoch {:>3}  train {:.4}  val {:.4}",
                        e.epoch, e.train_loss, e.val_loss
                    );
                })
                .map_err(runtime("train"))?;
            info!(
                "best epoch {} with validation loss {:.4}",
                report.best_epoch, report.best_val_loss
            );
            write(
                out,
                &io::write_model(&model, &ds.meta.domain).map_err(runtime("model"))?,
            )?;
            write_manifest(cli, "train", out)
        }
        Command::Ground {
            input,
            model,
            prune_invalid,
        } => {
            let p = load_problem(input)?;
            let (m, _) = io::read_model(&read(model)?)
                .map_err(|e| Failure::Usage(format!("{}: {e}", model.display())))?;
            let v = ModelValue::new(&m, &p).map_err(runtime("model"))?;
            let trace = ground_goal(&p, p.init(), p.goal(), &v, *prune_invalid)
                .map_err(runtime("ground"))?;
            println!(
                "{:>4}  {:<12} {:<12} {:>10}",
                "step", "variable", "object", "V"
            );
            for (i, s) in trace.steps.iter().enumerate() {
                println!(
                    "{:>4}  {:<12} {:<12} {:>10.4}",
                    i + 1,
                    p.goal().var_name(s.var),
                    p.object_name(s.object),
                    s.value
                );
            }
            println!("{}", print_goal(&p, &trace.goal));
            Ok(())
        }
        Command::Solve {
            input,
            mode,
            timeout_secs,
        } => {
            let p = load_problem(input)?;
            let task = Task::new(p);
            let mut budget = eval::Deadline::new(Duration::from_secs(*timeout_secs));
            let r =
                plan(&task, mode.mode(), &mut budget).map_err(|e| Failure::Usage(e.to_string()))?;
            match r.outcome {
                Outcome::Plan(steps) => {
                    for a in &steps {
                        println!("{}", task.problem.action_label(&task.actions[*a]));
                    }
                    println!("; cost {}", steps.len());
                    Ok(())
                }
                Outcome::Unsolvable => {
                    println!("unsolvable");
                    Ok(())
                }
                Outcome::Exhausted => Err(Failure::Runtime(format!(
                    "timeout after {} expansions",
                    r.expanded
                ))),
            }
        }
        Command::CompileDnf { input, out } => {
            let p = load_problem(input)?;
            let c = compile_dnf(&p, DEFAULT_BINDING_CAP).map_err(runtime("compile"))?;
            let text = format!(
                "{}\n{}",
                print_domain(c.problem.domain()),
                print_problem(&c.problem)
            );
            write(out, &text)?;
            info!("{} bindings", c.bindings.len());
            write_manifest(cli, "compile-dnf", out)
        }
        Command::Oracle { input } => {
            let p = load_problem(input)?;
            let task = Task::new(p.clone());
            match forward_cost(&task, p.init(), p.goal(), usize::MAX).map_err(runtime("oracle"))? {
                Cost::Finite(c) => println!("{c}"),
                Cost::DeadEnd => println!("dead-end"),
            }
            Ok(())
        }
        Command::Eval {
            gen,
            model,
            count,
            mode,
            reference,
            timeout_secs,
            prune_invalid,
            exact,
            speedup,
            out,
        } => {
            let settings = EvalSettings {
                mode: mode.mode(),
                timeout: Duration::from_secs(*timeout_secs),
                prune: *prune_invalid,
                reference: match reference {
                    ReferenceArg::Optimal => Reference::Optimal,
                    ReferenceArg::Compiled => Reference::Compiled,
                },
                seed: cli.seed,
                ..EvalSettings::default()
            };
            let loaded = match model {
                Some(path) => Some(
                    io::read_model(&read(path)?)
                        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
                        .0,
                ),
                None => None,
            };
            let tests = match settings.reference {
                Reference::Optimal => {
                    generate_testset(&gen.config(), *count, cli.seed, settings.oracle_cap)
                }
                Reference::Compiled => generate_unfiltered(&gen.config(), *count, cli.seed),
            }
            .map_err(runtime("test set"))?;
            let mut methods = Vec::new();
            if loaded.is_some() {
                methods.push(Method::Learned);
            }
            if *exact {
                methods.push(Method::Exact);
            }
            methods.extend([Method::RandomAll, Method::RandomValid]);
            let records = eval::evaluate(&tests, &methods, loaded.as_ref(), &settings)
                .map_err(runtime("evaluate"))?;
            let rows = eval::summarize(&records);
            let mut md = eval::markdown_table(&rows, settings.reference);
            if let (true, Some(m)) = (*speedup, loaded.as_ref()) {
                let mut sp = Vec::with_capacity(tests.len());
                for p in &tests {
                    sp.push(eval::speedup(p, m, &settings, 3).map_err(runtime("speedup"))?);
                }
                md.push('\n');
                md.push_str(&eval::speedup_markdown(gen.domain.kind().name(), &sp));
                let lines: String = sp
                    .iter()
                    .map(|r| serde_json::to_string(r).expect("serializable") + "\n")
                    .collect();
                write(&out.join("speedup.jsonl"), &lines)?;
            }
            fs::create_dir_all(out).map_err(runtime("create directory"))?;
            write(&out.join("report.md"), &md)?;
            write(
                &out.join("report.csv"),
                &eval::csv_rows(&rows).map_err(runtime("csv"))?,
            )?;
            write(&out.join("records.jsonl"), &eval::jsonl_records(&records))?;
            print!("{md}");
            write_manifest(cli, "eval", out)
        }
        Command::Selfcheck => {
            let results = checks::run_all();
            let mut ok = true;
            for r in &results {
                println!(
                    "{} {:<10} {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                );
                ok &= r.passed;
            }
            if ok {
                Ok(())
            } else {
                Err(Failure::Runtime("self-check failed".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QGROUND_LOG", "info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
