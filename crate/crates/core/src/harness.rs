//! Offline scoring of selection policies on a runtime matrix.
//!
//! Average times are taken over solved instances only; a domain where a
//! policy solves nothing shows `TO`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dataset::{RunStatus, RuntimeRecord};

pub const UNKNOWN_DOMAIN: &str = "-";

#[derive(Debug, Error, PartialEq)]
pub enum HarnessError {
    #[error("duplicate row for instance {instance}, solver {solver}")]
    Duplicate { instance: String, solver: String },
    #[error("no row for instance {instance}, solver {solver}")]
    MissingRow { instance: String, solver: String },
    #[error("no scores to report")]
    NoScores,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TimeBasis {
    /// Solver wall time only.
    #[default]
    Solve,
    /// Solver wall time plus recorded grounding time.
    WithGrounding,
}

#[derive(Clone, Debug, Default)]
pub struct RuntimeMatrix {
    rows: BTreeMap<(String, String), RuntimeRecord>,
    pub instances: BTreeSet<String>,
    pub solvers: BTreeSet<String>,
    pub domains: BTreeMap<String, String>,
    pub basis: TimeBasis,
}

impl RuntimeMatrix {
    pub fn new(
        records: impl IntoIterator<Item = RuntimeRecord>,
        domains: BTreeMap<String, String>,
    ) -> Result<Self, HarnessError> {
        let mut m = RuntimeMatrix {
            domains,
            ..RuntimeMatrix::default()
        };
        for r in records {
            let key = (r.instance_id.clone(), r.solver_id.clone());
            if m.rows.contains_key(&key) {
                return Err(HarnessError::Duplicate {
                    instance: key.0,
                    solver: key.1,
                });
            }
            m.instances.insert(r.instance_id.clone());
            m.solvers.insert(r.solver_id.clone());
            m.rows.insert(key, r);
        }
        Ok(m)
    }

    pub fn get(&self, instance: &str, solver: &str) -> Option<&RuntimeRecord> {
        self.rows.get(&(instance.to_string(), solver.to_string()))
    }

    pub fn domain_of(&self, instance: &str) -> &str {
        self.domains.get(instance).map_or(UNKNOWN_DOMAIN, String::as_str)
    }

    /// Instances lacking a row for some solver.
    pub fn partial(&self) -> Vec<&str> {
        self.instances
            .iter()
            .filter(|i| self.solvers.iter().any(|s| self.get(i, s).is_none()))
            .map(String::as_str)
            .collect()
    }

    /// Time of a solved row under the matrix's time basis.
    pub fn solved_time(&self, instance: &str, solver: &str) -> Option<f64> {
        let r = self.get(instance, solver)?;
        if r.status != RunStatus::Solved {
            return None;
        }
        Some(match self.basis {
            TimeBasis::Solve => r.wall_time,
            TimeBasis::WithGrounding => r.wall_time + r.ground_time.unwrap_or(0.0),
        })
    }

    /// Fastest solver that solved `instance`; ties go to the smaller id.
    pub fn best_solver(&self, instance: &str) -> Option<(&str, f64)> {
        let mut best: Option<(&str, f64)> = None;
        for s in &self.solvers {
            if let Some(t) = self.solved_time(instance, s) {
                if best.map_or(true, |(_, bt)| t < bt) {
                    best = Some((s, t));
                }
            }
        }
        best
    }

    /// Solver with the most solved instances, then the lowest total time
    /// over solved ones, then the smaller id.
    pub fn single_best(&self) -> Option<&str> {
        let mut best: Option<(&str, usize, f64)> = None;
        for s in &self.solvers {
            let times: Vec<f64> = self.instances.iter().filter_map(|i| self.solved_time(i, s)).collect();
            let (n, total) = (times.len(), times.iter().sum::<f64>());
            let better = match best {
                None => true,
                Some((_, bn, bt)) => n > bn || (n == bn && total < bt),
            };
            if better {
                best = Some((s, n, total));
            }
        }
        best.map(|b| b.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Policy {
    VirtualBest,
    SingleBest(String),
    Selector(String),
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::VirtualBest => write!(f, "virtual-best"),
            Policy::SingleBest(s) => write!(f, "single:{s}"),
            Policy::Selector(m) => write!(f, "selector:{m}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DomainScore {
    pub instances: usize,
    pub solved: usize,
    pub total_time: f64,
}

impl DomainScore {
    /// Mean time over solved instances; `None` renders as TO.
    pub fn avg_time(&self) -> Option<f64> {
        (self.solved > 0).then(|| self.total_time / self.solved as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyScore {
    pub policy: Policy,
    pub solved: usize,
    pub per_domain: BTreeMap<String, DomainScore>,
    /// Times of the solved instances, ascending.
    pub times: Vec<f64>,
}

/// Scores `policy` on `m`. `choose` is consulted for `Policy::Selector` and
/// ignored otherwise.
pub fn score_policy(
    m: &RuntimeMatrix,
    policy: &Policy,
    choose: Option<&dyn Fn(&str) -> String>,
) -> Result<PolicyScore, HarnessError> {
    let mut per_domain: BTreeMap<String, DomainScore> = BTreeMap::new();
    let mut times = Vec::new();
    for inst in &m.instances {
        let t = match policy {
            Policy::VirtualBest => m.best_solver(inst).map(|b| b.1),
            Policy::SingleBest(s) | Policy::Selector(s) => {
                let solver = match (policy, choose) {
                    (Policy::Selector(_), Some(f)) => f(inst),
                    _ => s.clone(),
                };
                if m.get(inst, &solver).is_none() {
                    return Err(HarnessError::MissingRow {
                        instance: inst.clone(),
                        solver,
                    });
                }
                m.solved_time(inst, &solver)
            }
        };
        let d = per_domain.entry(m.domain_of(inst).to_string()).or_default();
        d.instances += 1;
        if let Some(t) = t {
            d.solved += 1;
            d.total_time += t;
            times.push(t);
        }
    }
    times.sort_by(f64::total_cmp);
    Ok(PolicyScore {
        policy: policy.clone(),
        solved: times.len(),
        per_domain,
        times,
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OverheadStats {
    pub pairs: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OverheadReport {
    /// Percentages per domain.
    pub per_domain: BTreeMap<String, OverheadStats>,
    /// Instances without a solved counterpart on both sides.
    pub excluded: Vec<String>,
}

/// Relative overhead `(selector - baseline) / baseline` in percent, per
/// instance solved on both sides, aggregated by domain.
pub fn overhead_report(
    selector: &[RuntimeRecord],
    baseline: &[RuntimeRecord],
    domains: &BTreeMap<String, String>,
) -> OverheadReport {
    let base: BTreeMap<&str, &RuntimeRecord> = baseline.iter().map(|r| (r.instance_id.as_str(), r)).collect();
    let sel: BTreeMap<&str, &RuntimeRecord> = selector.iter().map(|r| (r.instance_id.as_str(), r)).collect();
    let mut excluded: BTreeSet<String> = BTreeSet::new();
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for id in sel.keys().chain(base.keys()).collect::<BTreeSet<_>>() {
        match (sel.get(id), base.get(id)) {
            (Some(s), Some(b))
                if s.status == RunStatus::Solved && b.status == RunStatus::Solved && b.wall_time > 0.0 =>
            {
                let d = domains.get(*id).map_or(UNKNOWN_DOMAIN, String::as_str);
                values
                    .entry(d.to_string())
                    .or_default()
                    .push(100.0 * (s.wall_time - b.wall_time) / b.wall_time);
            }
            _ => {
                excluded.insert(id.to_string());
            }
        }
    }
    let per_domain = values
        .into_iter()
        .map(|(d, v)| {
            let stats = OverheadStats {
                pairs: v.len(),
                min: v.iter().copied().fold(f64::INFINITY, f64::min),
                max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean: v.iter().sum::<f64>() / v.len() as f64,
            };
            (d, stats)
        })
        .collect();
    OverheadReport {
        per_domain,
        excluded: excluded.into_iter().collect(),
    }
}

impl fmt::Display for OverheadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<24} {:>6} {:>9} {:>9} {:>9}", "domain", "pairs", "min%", "mean%", "max%")?;
        for (d, s) in &self.per_domain {
            writeln!(f, "{:<24} {:>6} {:>9.2} {:>9.2} {:>9.2}", d, s.pairs, s.min, s.mean, s.max)?;
        }
        if !self.excluded.is_empty() {
            write!(f, "excluded: {}", self.excluded.join(" "))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub table: String,
    /// `(file name, contents)` of one cactus data file per policy.
    pub cactus: Vec<(String, String)>,
}

impl Report {
    pub fn write_to_dir(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let table = dir.join("report.txt");
        std::fs::write(&table, &self.table)?;
        written.push(table);
        for (name, body) in &self.cactus {
            let p = dir.join(name);
            std::fs::write(&p, body)?;
            written.push(p);
        }
        Ok(written)
    }
}

fn slug(policy: &Policy) -> String {
    let mut s = String::new();
    for c in policy.to_string().chars() {
        if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
            s.push(c);
        } else if !s.ends_with('_') {
            s.push('_');
        }
    }
    s.trim_end_matches('_').to_string()
}

/// Text table with one `solved time` column pair per policy and a row per
/// domain, plus cactus data (`index sorted_time`) per policy.
pub fn render_report(scores: &[PolicyScore]) -> Result<Report, HarnessError> {
    if scores.is_empty() {
        return Err(HarnessError::NoScores);
    }
    let domains: BTreeSet<&str> = scores
        .iter()
        .flat_map(|s| s.per_domain.keys().map(String::as_str))
        .collect();
    let width = scores.iter().map(|s| s.policy.to_string().len()).max().unwrap_or(0).max(16);
    let mut t = String::new();
    let _ = write!(t, "{:<24}", "domain");
    for s in scores {
        let _ = write!(t, " | {:^width$}", s.policy.to_string());
    }
    t.push('\n');
    let _ = write!(t, "{:<24}", "");
    for _ in scores {
        let _ = write!(t, " | {:>7} {:>w$}", "solved", "time", w = width - 8);
    }
    t.push('\n');
    let cell = |d: &DomainScore| match d.avg_time() {
        Some(a) => format!("{a:.2}"),
        None => "TO".to_string(),
    };
    for dom in &domains {
        let _ = write!(t, "{dom:<24}");
        for s in scores {
            let d = s.per_domain.get(*dom).cloned().unwrap_or_default();
            let _ = write!(t, " | {:>7} {:>w$}", d.solved, cell(&d), w = width - 8);
        }
        t.push('\n');
    }
    let _ = write!(t, "{:<24}", "total");
    for s in scores {
        let all = DomainScore {
            instances: s.per_domain.values().map(|d| d.instances).sum(),
            solved: s.solved,
            total_time: s.times.iter().sum(),
        };
        let _ = write!(t, " | {:>7} {:>w$}", all.solved, cell(&all), w = width - 8);
    }
    t.push('\n');

    let mut names = BTreeSet::new();
    let cactus = scores
        .iter()
        .map(|s| {
            let base = format!("cactus_{}", slug(&s.policy));
            let mut name = format!("{base}.dat");
            let mut k = 2;
            while !names.insert(name.clone()) {
                name = format!("{base}_{k}.dat");
                k += 1;
            }
            let mut body = format!("# {}\n", s.policy);
            for (i, x) in s.times.iter().enumerate() {
                let _ = writeln!(body, "{} {}", i + 1, x);
            }
            (name, body)
        })
        .collect();
    Ok(Report { table: t, cactus })
}
