//! Supervised execution of grounder and solver processes under a shared
//! time and memory budget.
//!
//! Each child runs in its own process group. Memory is capped twice: an
//! address-space rlimit set a margin above the limit, and a 100 ms poll of
//! the resident set of the whole group that terminates it on breach. On any
//! exit the group is killed and its members reaped.

use std::fs::File;
use std::io::{self, BufReader, Read, Seek, SeekFrom};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::dataset::{RunStatus, RuntimeRecord};
use crate::ground::parse_ground_program;
use crate::selector::{answer_names, ExitCodes, Outcome, SelectError, Selector, SolverSpec};

/// Time between the terminate and kill signals.
pub const GRACE: Duration = Duration::from_millis(1800);
const WAIT_POLL: Duration = Duration::from_millis(5);
const MEM_POLL: Duration = Duration::from_millis(100);
const STDERR_KEEP: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResourceLimits {
    pub time: Duration,
    pub memory: u64,
}

impl Default for ResourceLimits {
    fn default() -> Self {
        ResourceLimits {
            time: Duration::from_secs(600),
            memory: 15 << 30,
        }
    }
}

impl ResourceLimits {
    pub fn new(time: Duration, memory: u64) -> Result<Self, RunError> {
        if time.is_zero() || memory == 0 {
            return Err(RunError::Config("time and memory limits must be positive".into()));
        }
        Ok(ResourceLimits { time, memory })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Status {
    Solved,
    Unsat,
    Timeout,
    Memout,
    Error(String),
}

impl Status {
    pub fn tag(&self) -> &'static str {
        match self {
            Status::Solved => "solved",
            Status::Unsat => "unsat",
            Status::Timeout => "timeout",
            Status::Memout => "memout",
            Status::Error(_) => "error",
        }
    }

    /// Unsatisfiable counts as solved: the instance was answered.
    pub fn run_status(&self) -> RunStatus {
        match self {
            Status::Solved | Status::Unsat => RunStatus::Solved,
            Status::Timeout => RunStatus::Timeout,
            Status::Memout => RunStatus::Memout,
            Status::Error(_) => RunStatus::Error,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MemEnforcement {
    /// Address-space rlimit as a backstop plus group RSS polling.
    RlimitAndPolling,
    /// The rlimit could not be applied; RSS polling only.
    PollingOnly,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTimes {
    pub ground: f64,
    pub select: f64,
    pub solve: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub status: Status,
    pub wall_time: f64,
    pub peak_mem: u64,
    pub answer: Option<String>,
    pub phases: PhaseTimes,
    pub solver: Option<String>,
    pub mem_enforcement: MemEnforcement,
    /// Process groups the run created; all are empty once the outcome exists.
    pub process_groups: Vec<i32>,
}

impl RunOutcome {
    pub fn to_record(&self, instance: &str, solver: &str) -> RuntimeRecord {
        let mut r = RuntimeRecord::new(instance, solver, self.status.run_status(), self.wall_time);
        if self.phases.ground > 0.0 {
            r.ground_time = Some(self.phases.ground);
        }
        r
    }

    /// One `key=value` line for machine consumption.
    pub fn record_line(&self) -> String {
        let mut s = format!(
            "status={} wall={:.3} ground={:.3} select={:.3} solve={:.3} peak_mem={} solver={}",
            self.status.tag(),
            self.wall_time,
            self.phases.ground,
            self.phases.select,
            self.phases.solve,
            self.peak_mem,
            self.solver.as_deref().unwrap_or("-"),
        );
        if let Status::Error(e) = &self.status {
            s.push_str(&format!(" error={:?}", e));
        }
        s
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("executable not found: {0}")]
    MissingExecutable(PathBuf),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// Locates `exe` the way a shell would: paths with a separator are used as
/// given, bare names are looked up in `PATH`.
pub fn resolve_executable(exe: &Path) -> Result<PathBuf, RunError> {
    use std::os::unix::fs::PermissionsExt;
    let runnable = |p: &Path| {
        p.metadata()
            .map(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
            .unwrap_or(false)
    };
    if exe.components().count() > 1 {
        return if runnable(exe) {
            Ok(exe.to_path_buf())
        } else {
            Err(RunError::MissingExecutable(exe.to_path_buf()))
        };
    }
    let path = std::env::var_os("PATH").unwrap_or_default();
    std::env::split_paths(&path)
        .map(|d| d.join(exe))
        .find(|p| runnable(p))
        .ok_or_else(|| RunError::MissingExecutable(exe.to_path_buf()))
}

enum Ended {
    Exited(ExitStatus),
    TimedOut,
    MemOut,
}

struct Supervised {
    ended: Ended,
    wall: Duration,
    peak_mem: u64,
    enforcement: MemEnforcement,
    pgid: i32,
}

fn address_space_cap(limit: u64) -> u64 {
    limit.saturating_add((limit / 2).max(256 << 20))
}

fn set_subreaper() {
    #[cfg(target_os = "linux")]
    unsafe {
        libc::prctl(libc::PR_SET_CHILD_SUBREAPER, 1, 0, 0, 0);
    }
}

fn killpg(pgid: i32, sig: i32) {
    unsafe {
        libc::killpg(pgid, sig);
    }
}

/// Live (non-zombie) processes whose process group is `pgid`.
pub fn live_group_members(pgid: i32) -> Vec<i32> {
    let Ok(dir) = std::fs::read_dir("/proc") else {
        return Vec::new();
    };
    dir.filter_map(|e| e.ok()?.file_name().to_str()?.parse::<i32>().ok())
        .filter(|pid| {
            proc_stat(*pid).is_some_and(|(state, pgrp)| pgrp == pgid && state != 'Z' && state != 'X')
        })
        .collect()
}

/// State letter and process group from `/proc/<pid>/stat`.
fn proc_stat(pid: i32) -> Option<(char, i32)> {
    let text = std::fs::read_to_string(format!("/proc/{pid}/stat")).ok()?;
    let rest = &text[text.rfind(')')? + 1..];
    let mut f = rest.split_ascii_whitespace();
    let state = f.next()?.chars().next()?;
    let _ppid = f.next()?;
    let pgrp = f.next()?.parse().ok()?;
    Some((state, pgrp))
}

fn group_rss(pgid: i32) -> u64 {
    let page = unsafe { libc::sysconf(libc::_SC_PAGESIZE) }.max(1) as u64;
    live_group_members(pgid)
        .into_iter()
        .filter_map(|pid| {
            let s = std::fs::read_to_string(format!("/proc/{pid}/statm")).ok()?;
            s.split_ascii_whitespace().nth(1)?.parse::<u64>().ok()
        })
        .sum::<u64>()
        * page
}

/// Kills what is left of the group and reaps members that were reparented
/// to this process.
fn clean_up_group(pgid: i32) {
    let deadline = Instant::now() + Duration::from_secs(2);
    loop {
        killpg(pgid, libc::SIGKILL);
        loop {
            let mut st = 0;
            let r = unsafe { libc::waitpid(-pgid, &mut st, libc::WNOHANG) };
            if r <= 0 {
                break;
            }
        }
        if live_group_members(pgid).is_empty() || Instant::now() >= deadline {
            return;
        }
        std::thread::sleep(WAIT_POLL);
    }
}

fn supervise(
    mut cmd: Command,
    budget: Duration,
    memory: u64,
) -> io::Result<Supervised> {
    set_subreaper();
    let cap = address_space_cap(memory);
    cmd.process_group(0);
    unsafe {
        cmd.pre_exec(move || {
            let rl = libc::rlimit {
                rlim_cur: cap as libc::rlim_t,
                rlim_max: cap as libc::rlim_t,
            };
            // Failure leaves polling as the only guard.
            libc::setrlimit(libc::RLIMIT_AS, &rl);
            Ok(())
        });
    }
    let start = Instant::now();
    let child = cmd.spawn()?;
    let pid = child.id() as i32;
    let enforcement = current_rlimit_ok(cap);

    let mut verdict: Option<Ended> = None;
    let mut term_sent: Option<Instant> = None;
    let mut last_mem = Instant::now() - MEM_POLL;
    let mut peak = 0u64;
    let status = loop {
        let mut st = 0;
        let mut ru: libc::rusage = unsafe { std::mem::zeroed() };
        let r = unsafe { libc::wait4(pid, &mut st, libc::WNOHANG, &mut ru) };
        if r == pid {
            peak = peak.max(ru.ru_maxrss.max(0) as u64 * 1024);
            break ExitStatus::from_raw(st);
        }
        if r < 0 {
            let e = io::Error::last_os_error();
            if e.kind() == io::ErrorKind::Interrupted {
                continue;
            }
            clean_up_group(pid);
            return Err(e);
        }
        let now = Instant::now();
        if term_sent.is_none() {
            if now - start >= budget {
                verdict = Some(Ended::TimedOut);
            } else if now - last_mem >= MEM_POLL {
                last_mem = now;
                let rss = group_rss(pid);
                peak = peak.max(rss);
                if rss > memory {
                    verdict = Some(Ended::MemOut);
                }
            }
            if verdict.is_some() {
                killpg(pid, libc::SIGTERM);
                term_sent = Some(now);
            }
        } else if term_sent.is_some_and(|t| now - t >= GRACE) {
            killpg(pid, libc::SIGKILL);
        }
        std::thread::sleep(WAIT_POLL);
    };
    let wall = start.elapsed();
    drop(child);
    clean_up_group(pid);
    Ok(Supervised {
        ended: verdict.unwrap_or(Ended::Exited(status)),
        wall,
        peak_mem: peak,
        enforcement,
        pgid: pid,
    })
}

fn current_rlimit_ok(cap: u64) -> MemEnforcement {
    let mut rl = libc::rlimit {
        rlim_cur: 0,
        rlim_max: 0,
    };
    let ok = unsafe { libc::getrlimit(libc::RLIMIT_AS, &mut rl) } == 0;
    if ok && (rl.rlim_max == libc::RLIM_INFINITY || rl.rlim_max as u64 >= cap) {
        MemEnforcement::RlimitAndPolling
    } else {
        MemEnforcement::PollingOnly
    }
}

fn looks_like_memory_failure(stderr: &str) -> bool {
    const PATTERNS: [&str; 6] = [
        "memoryerror",
        "bad_alloc",
        "out of memory",
        "cannot allocate memory",
        "memory exhausted",
        "memory limit",
    ];
    let s = stderr.to_ascii_lowercase();
    PATTERNS.iter().any(|p| s.contains(p))
}

fn read_tail(f: &mut File, keep: usize) -> io::Result<String> {
    let len = f.seek(SeekFrom::End(0))?;
    f.seek(SeekFrom::Start(len.saturating_sub(keep as u64)))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf)?;
    Ok(String::from_utf8_lossy(&buf).into_owned())
}

fn read_all(f: &mut File) -> io::Result<String> {
    f.seek(SeekFrom::Start(0))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf)?;
    Ok(String::from_utf8_lossy(&buf).into_owned())
}

struct Finished {
    status: Status,
    stdout: File,
    sup: Supervised,
}

/// Runs one executable with `stdin` attached and classifies the result.
fn run_tool(
    exe: &Path,
    args: &[String],
    exit_codes: &ExitCodes,
    stdin: Stdio,
    stdout: File,
    budget: Duration,
    memory: u64,
) -> io::Result<Finished> {
    let mut stderr = tempfile::tempfile()?;
    let mut cmd = Command::new(exe);
    cmd.args(args)
        .stdin(stdin)
        .stdout(stdout.try_clone()?)
        .stderr(stderr.try_clone()?);
    let sup = supervise(cmd, budget, memory)?;
    let status = match &sup.ended {
        Ended::TimedOut => Status::Timeout,
        Ended::MemOut => Status::Memout,
        Ended::Exited(st) => {
            let diag = read_tail(&mut stderr, STDERR_KEEP)?;
            match st.code() {
                Some(c) if exit_codes.solved.contains(&c) => Status::Solved,
                Some(c) if exit_codes.unsat.contains(&c) => Status::Unsat,
                _ if looks_like_memory_failure(&diag) => Status::Memout,
                Some(c) => Status::Error(format!("exit code {c}: {}", diag.trim())),
                None => Status::Error(format!(
                    "killed by signal {}: {}",
                    st.signal().unwrap_or(0),
                    diag.trim()
                )),
            }
        }
    };
    Ok(Finished {
        status,
        stdout,
        sup,
    })
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Runs `solver` on a ground program file.
pub fn run_single(ground: &Path, solver: &SolverSpec, limits: ResourceLimits) -> Result<RunOutcome, RunError> {
    let exe = resolve_executable(&solver.executable)?;
    let input = File::open(ground)?;
    let out = tempfile::tempfile()?;
    let mut f = run_tool(
        &exe,
        &solver.args,
        &solver.exit_codes,
        Stdio::from(input),
        out,
        limits.time,
        limits.memory,
    )?;
    let answer = match f.status {
        Status::Solved => Some(read_all(&mut f.stdout)?),
        _ => None,
    };
    let wall = secs(f.sup.wall);
    Ok(RunOutcome {
        status: f.status,
        wall_time: wall,
        peak_mem: f.sup.peak_mem,
        answer,
        phases: PhaseTimes {
            ground: 0.0,
            select: 0.0,
            solve: wall,
        },
        solver: Some(solver.id.clone()),
        mem_enforcement: f.sup.enforcement,
        process_groups: vec![f.sup.pgid],
    })
}

/// A grounder invocation: the program path is appended to `args`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToolSpec {
    pub executable: PathBuf,
    pub args: Vec<String>,
}

impl ToolSpec {
    /// Splits a command line on whitespace.
    pub fn from_command_line(line: &str) -> Result<Self, RunError> {
        let mut parts = line.split_whitespace().map(str::to_string);
        let exe = parts
            .next()
            .ok_or_else(|| RunError::Config("empty grounder command".into()))?;
        Ok(ToolSpec {
            executable: exe.into(),
            args: parts.collect(),
        })
    }
}

pub enum ProgramSource<'a> {
    Path(&'a Path),
    Inline(&'a str),
}

/// Ground, select and solve, all against one time budget.
pub fn run_pipeline(
    program: ProgramSource<'_>,
    grounder: &ToolSpec,
    selector: &Selector,
    limits: ResourceLimits,
) -> Result<RunOutcome, RunError> {
    let grounder_exe = resolve_executable(&grounder.executable)?;
    let solvers = selector
        .pool()
        .iter()
        .map(|s| resolve_executable(&s.executable))
        .collect::<Result<Vec<_>, _>>()?;

    let dir = tempfile::tempdir()?;
    let program_path = match program {
        ProgramSource::Path(p) => p.to_path_buf(),
        ProgramSource::Inline(text) => {
            let p = dir.path().join("program.lp");
            std::fs::write(&p, text)?;
            p
        }
    };
    let ground_path = dir.path().join("ground.txt");
    let start = Instant::now();
    let mut args = grounder.args.clone();
    args.push(program_path.to_string_lossy().into_owned());
    let g = run_tool(
        &grounder_exe,
        &args,
        &ExitCodes::zero_only(),
        Stdio::null(),
        File::create(&ground_path)?,
        limits.time,
        limits.memory,
    )?;
    let mut phases = PhaseTimes {
        ground: secs(g.sup.wall),
        ..PhaseTimes::default()
    };
    let mut outcome = RunOutcome {
        status: Status::Solved,
        wall_time: 0.0,
        peak_mem: g.sup.peak_mem,
        answer: None,
        phases,
        solver: None,
        mem_enforcement: g.sup.enforcement,
        process_groups: vec![g.sup.pgid],
    };
    let finish = |mut o: RunOutcome, status: Status| {
        o.status = status;
        o.wall_time = secs(start.elapsed());
        o
    };
    match g.status {
        Status::Solved => {}
        Status::Error(e) => return Ok(finish(outcome, Status::Error(format!("grounder: {e}")))),
        other => return Ok(finish(outcome, other)),
    }

    let t = Instant::now();
    let parsed = parse_ground_program(BufReader::new(File::open(&ground_path)?));
    let program = match parsed {
        Ok(p) => p,
        Err(e) => {
            phases.select = secs(t.elapsed());
            outcome.phases = phases;
            return Ok(finish(outcome, Status::Error(format!("ground output: {e}"))));
        }
    };
    let decision = selector.select(&program)?;
    phases.select = secs(t.elapsed());
    outcome.phases = phases;
    let used = start.elapsed();
    if used >= limits.time {
        return Ok(finish(outcome, Status::Timeout));
    }

    let chosen = match decision.outcome {
        Outcome::SolverFree(Some(set)) => {
            outcome.answer = Some(answer_names(&program, &set).join(" "));
            return Ok(finish(outcome, Status::Solved));
        }
        Outcome::SolverFree(None) => return Ok(finish(outcome, Status::Unsat)),
        Outcome::Chosen(id) => id,
    };
    drop(program);
    let idx = selector
        .pool()
        .iter()
        .position(|s| s.id == chosen)
        .expect("selector only chooses pool members");
    let spec = &selector.pool()[idx];
    outcome.solver = Some(chosen.clone());
    let mut s = run_tool(
        &solvers[idx],
        &spec.args,
        &spec.exit_codes,
        Stdio::from(File::open(&ground_path)?),
        tempfile::tempfile()?,
        limits.time - used,
        limits.memory,
    )?;
    outcome.phases.solve = secs(s.sup.wall);
    outcome.peak_mem = outcome.peak_mem.max(s.sup.peak_mem);
    outcome.process_groups.push(s.sup.pgid);
    if s.sup.enforcement == MemEnforcement::PollingOnly {
        outcome.mem_enforcement = MemEnforcement::PollingOnly;
    }
    if s.status == Status::Solved {
        outcome.answer = Some(read_all(&mut s.stdout)?);
    }
    Ok(finish(outcome, s.status))
}
