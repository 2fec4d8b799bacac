#![cfg(unix)]

use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use aspfolio::classify::{Classifier, LinearSvm, Standardizer, TrainedModel};
use aspfolio::runner::{
    live_group_members, run_pipeline, run_single, ProgramSource, ResourceLimits, RunError,
    RunOutcome, Status, ToolSpec,
};
use aspfolio::selector::{Selector, SolverSpec};

fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, format!("#!/bin/sh\n{body}\n")).unwrap();
    fs::set_permissions(&p, fs::Permissions::from_mode(0o755)).unwrap();
    p
}

fn limits(secs: f64, mib: u64) -> ResourceLimits {
    ResourceLimits::new(Duration::from_secs_f64(secs), mib << 20).unwrap()
}

fn no_orphans(o: &RunOutcome) {
    for g in &o.process_groups {
        assert!(live_group_members(*g).is_empty(), "group {g} still has members");
    }
}

fn ground_file(dir: &Path) -> PathBuf {
    let p = dir.join("g.txt");
    fs::write(&p, "1 1 1 1 2\n1 2 1 1 1\n0\n1 a\n2 b\n0\nB+\n0\nB-\n0\n1\n").unwrap();
    p
}

#[test]
fn instant_solver() {
    let dir = tempfile::tempdir().unwrap();
    let exe = script(dir.path(), "fast", "cat >/dev/null\necho 'Answer: 1'\necho 'a'\nexit 10");
    let o = run_single(&ground_file(dir.path()), &SolverSpec::new("fast", exe, &[]), limits(5.0, 512)).unwrap();
    assert_eq!(o.status, Status::Solved);
    assert!(o.wall_time < 0.1, "{}", o.wall_time);
    assert_eq!(o.answer.as_deref(), Some("Answer: 1\na\n"));
    no_orphans(&o);
}

#[test]
fn unsat_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let exe = script(dir.path(), "unsat", "exit 20");
    let o = run_single(&ground_file(dir.path()), &SolverSpec::new("u", exe, &[]), limits(5.0, 512)).unwrap();
    assert_eq!(o.status, Status::Unsat);
    assert!(o.answer.is_none());
}

#[test]
fn exit_codes_come_from_the_spec() {
    let dir = tempfile::tempdir().unwrap();
    let exe = script(dir.path(), "zero", "exit 0");
    let mut spec = SolverSpec::new("z", exe, &[]);
    let o = run_single(&ground_file(dir.path()), &spec, limits(5.0, 512)).unwrap();
    assert!(matches!(o.status, Status::Error(_)));
    spec.exit_codes.solved.push(0);
    let o = run_single(&ground_file(dir.path()), &spec, limits(5.0, 512)).unwrap();
    assert_eq!(o.status, Status::Solved);
}

#[test]
fn sleeper_times_out() {
    let dir = tempfile::tempdir().unwrap();
    let exe = script(dir.path(), "slow", "sleep 30");
    let o = run_single(&ground_file(dir.path()), &SolverSpec::new("slow", exe, &[]), limits(1.0, 512)).unwrap();
    assert_eq!(o.status, Status::Timeout);
    assert!(o.wall_time >= 1.0 && o.wall_time <= 3.0, "{}", o.wall_time);
    no_orphans(&o);
}

#[test]
fn term_ignoring_child_is_killed() {
    let dir = tempfile::tempdir().unwrap();
    let exe = script(dir.path(), "stubborn", "trap '' TERM\nwhile true; do sleep 0.05; done");
    let o = run_single(&ground_file(dir.path()), &SolverSpec::new("s", exe, &[]), limits(1.0, 512)).unwrap();
    assert_eq!(o.status, Status::Timeout);
    assert!(o.wall_time <= 3.0, "{}", o.wall_time);
    no_orphans(&o);
}

#[test]
fn background_grandchild_is_reaped() {
    let dir = tempfile::tempdir().unwrap();
    let exe = script(dir.path(), "forker", "sleep 30 &\necho done\nexit 10");
    let o = run_single(&ground_file(dir.path()), &SolverSpec::new("f", exe, &[]), limits(5.0, 512)).unwrap();
    assert_eq!(o.status, Status::Solved);
    assert!(o.wall_time < 2.0);
    no_orphans(&o);
}

#[test]
fn failing_solver_reports_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let exe = script(dir.path(), "broken", "echo 'parse failure at line 3' >&2\nexit 1");
    let o = run_single(&ground_file(dir.path()), &SolverSpec::new("b", exe, &[]), limits(5.0, 512)).unwrap();
    match &o.status {
        Status::Error(msg) => assert!(msg.contains("parse failure at line 3"), "{msg}"),
        s => panic!("{s:?}"),
    }
}

#[test]
fn resident_memory_hog_is_stopped() {
    let dir = tempfile::tempdir().unwrap();
    // Touches 200 MiB, which fits under the address-space cap but not the
    // 64 MiB limit.
    let exe = script(
        dir.path(),
        "hog",
        "exec python3 -c 'import time; b = bytearray(200 << 20); time.sleep(30)'",
    );
    let o = run_single(&ground_file(dir.path()), &SolverSpec::new("h", exe, &[]), limits(10.0, 64)).unwrap();
    assert_eq!(o.status, Status::Memout);
    assert!(o.wall_time < 5.0);
    assert!(o.peak_mem > 64 << 20);
    no_orphans(&o);
}

#[test]
fn allocation_failure_is_memout() {
    let dir = tempfile::tempdir().unwrap();
    let exe = script(dir.path(), "greedy", "exec python3 -c 'b = bytearray(4 << 30)'");
    let o = run_single(&ground_file(dir.path()), &SolverSpec::new("g", exe, &[]), limits(10.0, 64)).unwrap();
    assert_eq!(o.status, Status::Memout);
    no_orphans(&o);
}

#[test]
fn missing_executable_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_single(
        &ground_file(dir.path()),
        &SolverSpec::new("x", "/no/such/solver", &[]),
        limits(1.0, 64),
    );
    assert!(matches!(r, Err(RunError::MissingExecutable(_))));
}

fn selector(dir: &Path, a_body: &str, b_body: &str) -> Selector {
    let a = script(dir, "solver_a", a_body);
    let b = script(dir, "solver_b", b_body);
    let model = TrainedModel {
        labels: vec!["a".into(), "b".into()],
        standardizer: Standardizer::identity(10),
        classifier: Classifier::Svm(LinearSvm {
            w: vec![0.0; 10],
            b: 1.0,
            c: 1.0,
        }),
    };
    Selector::new(model, vec![SolverSpec::new("a", a, &[]), SolverSpec::new("b", b, &[])]).unwrap()
}

#[test]
fn pipeline_solver_free() {
    let dir = tempfile::tempdir().unwrap();
    let sel = selector(dir.path(), "exit 1", "exit 1");
    let cat = ToolSpec::from_command_line("cat").unwrap();
    let text = "1 1 0 0\n1 2 1 0 1\n0\n1 a\n2 b\n0\nB+\n0\nB-\n0\n1\n";
    let o = run_pipeline(ProgramSource::Inline(text), &cat, &sel, limits(5.0, 512)).unwrap();
    assert_eq!(o.status, Status::Solved);
    assert_eq!(o.answer.as_deref(), Some("a b"));
    assert_eq!(o.phases.solve, 0.0);
    assert!(o.solver.is_none());
    no_orphans(&o);
}

#[test]
fn pipeline_runs_chosen_solver() {
    let dir = tempfile::tempdir().unwrap();
    let sel = selector(dir.path(), "cat >/dev/null\necho 'a'\nexit 10", "exit 1");
    let cat = ToolSpec::from_command_line("cat").unwrap();
    let p = ground_file(dir.path());
    let o = run_pipeline(ProgramSource::Path(&p), &cat, &sel, limits(5.0, 512)).unwrap();
    assert_eq!(o.status, Status::Solved);
    assert_eq!(o.solver.as_deref(), Some("a"));
    assert_eq!(o.answer.as_deref(), Some("a\n"));
    let sum = o.phases.ground + o.phases.select + o.phases.solve;
    assert!(sum <= o.wall_time + 0.05);
    no_orphans(&o);
}

#[test]
fn pipeline_budget_is_shared() {
    let dir = tempfile::tempdir().unwrap();
    let sel = selector(dir.path(), "sleep 30", "exit 1");
    let grounder = script(dir.path(), "slow_grounder", "sleep 0.7\ncat \"$1\"");
    let tool = ToolSpec {
        executable: grounder,
        args: Vec::new(),
    };
    let p = ground_file(dir.path());
    let o = run_pipeline(ProgramSource::Path(&p), &tool, &sel, limits(1.0, 512)).unwrap();
    assert_eq!(o.status, Status::Timeout);
    assert!(o.phases.ground >= 0.7);
    assert!(o.phases.solve < 0.5, "{:?}", o.phases);
    assert!(o.wall_time <= 3.0);
    no_orphans(&o);
}

#[test]
fn pipeline_grounder_failure() {
    let dir = tempfile::tempdir().unwrap();
    let sel = selector(dir.path(), "exit 10", "exit 10");
    let grounder = script(dir.path(), "bad_grounder", "echo 'unsafe variable X' >&2\nexit 65");
    let tool = ToolSpec {
        executable: grounder,
        args: Vec::new(),
    };
    let o = run_pipeline(ProgramSource::Inline("p(X)."), &tool, &sel, limits(5.0, 512)).unwrap();
    match &o.status {
        Status::Error(m) => assert!(m.contains("unsafe variable X"), "{m}"),
        s => panic!("{s:?}"),
    }
    assert!(o.solver.is_none());
}

#[test]
fn pipeline_checks_every_executable_first() {
    let dir = tempfile::tempdir().unwrap();
    let model = TrainedModel {
        labels: vec!["a".into(), "b".into()],
        standardizer: Standardizer::identity(10),
        classifier: Classifier::Svm(LinearSvm {
            w: vec![0.0; 10],
            b: 1.0,
            c: 1.0,
        }),
    };
    let marker = dir.path().join("ran");
    let grounder = script(dir.path(), "g", &format!("touch {}", marker.display()));
    let sel = Selector::new(
        model,
        vec![SolverSpec::new("a", "/bin/sh", &[]), SolverSpec::new("b", "/missing/b", &[])],
    )
    .unwrap();
    let tool = ToolSpec {
        executable: grounder,
        args: Vec::new(),
    };
    let r = run_pipeline(ProgramSource::Inline(""), &tool, &sel, limits(5.0, 512));
    assert!(matches!(r, Err(RunError::MissingExecutable(p)) if p == Path::new("/missing/b")));
    assert!(!marker.exists());
}
