use std::path::Path;
use std::process::{Command, Output};

fn qground(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qground"))
        .args(args)
        .env("QGROUND_LOG", "error")
        .output()
        .expect("spawn qground")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

#[test]
fn exit_codes() {
    assert_eq!(qground(&["--help"]).status.code(), Some(0));
    assert_eq!(qground(&["--version"]).status.code(), Some(0));
    assert_eq!(qground(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(
        qground(&["oracle", "--problem", "/nonexistent.pddl"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn malformed_problem_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("bad.pddl");
    std::fs::write(
        &f,
        "(define (problem p)\n  (:domain blocks)\n  (:init (on a b))",
    )
    .unwrap();
    let o = qground(&["oracle", "--problem", s(&f)]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.pddl:"), "{err}");
}

#[test]
fn compiled_plan_costs_one_more_than_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst");
    let o = qground(&[
        "--seed",
        "3",
        "gen-instances",
        "--domain",
        "gripper",
        "--count",
        "3",
        "-o",
        s(&inst),
    ]);
    assert!(o.status.success());
    assert!(inst.join("gripper-domain.pddl").exists());
    let manifest = std::fs::read_to_string(inst.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"command\": \"gen-instances\""));
    assert!(manifest.contains("\"seed\": 3"));
    for i in 0..3 {
        let p = inst.join(format!("gripper-{i}.pddl"));
        let v: usize = stdout(&qground(&["oracle", "--problem", s(&p)]))
            .trim()
            .parse()
            .expect("finite cost");
        let plan = stdout(&qground(&["solve", "--problem", s(&p)]));
        assert!(plan.trim_end().ends_with(&format!("; cost {v}")), "{plan}");
        let c = dir.path().join(format!("c{i}.pddl"));
        assert!(qground(&["compile-dnf", "--problem", s(&p), "-o", s(&c)])
            .status
            .success());
        let compiled = stdout(&qground(&["solve", "--problem", s(&c)]));
        assert!(
            compiled.trim_end().ends_with(&format!("; cost {}", v + 1)),
            "{compiled}"
        );
    }
}

#[test]
fn pipeline_grounds_every_variable() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    let model = dir.path().join("m.json");
    let inst = dir.path().join("inst");
    assert!(qground(&[
        "gen-dataset",
        "--domain",
        "blocks",
        "--samples",
        "60",
        "-o",
        s(&data)
    ])
    .status
    .success());
    assert!(qground(&[
        "train",
        "--dataset",
        s(&data),
        "--k",
        "4",
        "--layers",
        "2",
        "--epochs",
        "2",
        "-o",
        s(&model)
    ])
    .status
    .success());
    assert!(dir.path().join("m.json.manifest.json").exists());
    assert!(qground(&[
        "--seed",
        "5",
        "gen-instances",
        "--domain",
        "blocks",
        "--count",
        "1",
        "-o",
        s(&inst)
    ])
    .status
    .success());
    let o = qground(&[
        "ground",
        "--problem",
        s(&inst.join("blocks-0.pddl")),
        "--model",
        s(&model),
    ]);
    assert!(o.status.success());
    let out = stdout(&o);
    let goal = out.lines().last().unwrap();
    assert!(out.starts_with("step"));
    assert!(!goal.contains("exists") && !goal.contains('?'), "{goal}");
}

#[test]
fn selfcheck_succeeds() {
    let o = qground(&["selfcheck"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(
        stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(),
        3
    );
}
