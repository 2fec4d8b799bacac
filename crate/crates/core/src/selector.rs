//! Per-program solver choice: short-circuit solver-free programs, otherwise
//! classify the feature vector and map the label to a pool entry.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Deserialize;
use thiserror::Error;

use crate::classify::{ModelError, TrainedModel};
use crate::features::{self, FeatureVector};
use crate::ground::{AtomId, GroundProgram};
use crate::strat::{self, ProgramClass};

/// What an exit code means for a given executable. Codes not listed are
/// errors.
#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitCodes {
    #[serde(default)]
    pub solved: Vec<i32>,
    #[serde(default)]
    pub unsat: Vec<i32>,
}

impl ExitCodes {
    /// 10 and 30 (satisfiable, optimum found) and 20 (unsatisfiable).
    pub fn competition() -> Self {
        ExitCodes {
            solved: vec![10, 30],
            unsat: vec![20],
        }
    }

    pub fn zero_only() -> Self {
        ExitCodes {
            solved: vec![0],
            unsat: Vec::new(),
        }
    }
}

impl Default for ExitCodes {
    fn default() -> Self {
        ExitCodes::competition()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub id: String,
    pub executable: PathBuf,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default)]
    pub exit_codes: ExitCodes,
}

impl SolverSpec {
    pub fn new(id: &str, executable: impl Into<PathBuf>, args: &[&str]) -> Self {
        SolverSpec {
            id: id.to_string(),
            executable: executable.into(),
            args: args.iter().map(|s| s.to_string()).collect(),
            exit_codes: ExitCodes::competition(),
        }
    }
}

pub fn default_pool() -> Vec<SolverSpec> {
    vec![
        SolverSpec::new("clasp*", "clasp", &["--configuration=trendy"]),
        SolverSpec::new(
            "wasp*",
            "wasp",
            &[
                "--shrinking-strategy=progression",
                "--shrinking-budget=10",
                "--trim-core",
                "--enable-disjcores",
            ],
        ),
    ]
}

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("cannot read pool file {path}: {source}")]
    PoolIo {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("pool file {path}: {message}")]
    PoolFormat { path: PathBuf, message: String },
    #[error("solver id `{0}` appears twice in the pool")]
    DuplicateSolver(String),
    #[error("pool is empty")]
    EmptyPool,
    #[error("model labels not in the pool: {}", .0.join(", "))]
    PoolMissing(Vec<String>),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolFile {
    #[serde(default)]
    solver: Vec<SolverSpec>,
}

pub fn parse_pool(text: &str, path: &Path) -> Result<Vec<SolverSpec>, SelectError> {
    let file: PoolFile = toml::from_str(text).map_err(|e| SelectError::PoolFormat {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    check_pool(&file.solver)?;
    Ok(file.solver)
}

pub fn load_pool(path: &Path) -> Result<Vec<SolverSpec>, SelectError> {
    let text = std::fs::read_to_string(path).map_err(|source| SelectError::PoolIo {
        path: path.to_path_buf(),
        source,
    })?;
    parse_pool(&text, path)
}

pub fn check_pool(pool: &[SolverSpec]) -> Result<(), SelectError> {
    if pool.is_empty() {
        return Err(SelectError::EmptyPool);
    }
    let mut seen = BTreeSet::new();
    for s in pool {
        if !seen.insert(s.id.as_str()) {
            return Err(SelectError::DuplicateSolver(s.id.clone()));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// The unique answer set, or `None` when the program has none.
    SolverFree(Option<BTreeSet<AtomId>>),
    Chosen(String),
}

#[derive(Clone, Debug)]
pub struct SelectionDecision {
    pub outcome: Outcome,
    pub features: Option<FeatureVector>,
    pub model_id: String,
    pub elapsed: Duration,
}

impl SelectionDecision {
    pub fn chosen(&self) -> Option<&str> {
        match &self.outcome {
            Outcome::Chosen(s) => Some(s),
            Outcome::SolverFree(_) => None,
        }
    }
}

/// Symbolic names of `atoms`, skipping atoms without an entry in the symbol
/// table.
pub fn answer_names(p: &GroundProgram, atoms: &BTreeSet<AtomId>) -> Vec<String> {
    atoms
        .iter()
        .filter_map(|a| p.name_of(*a).map(str::to_string))
        .collect()
}

/// A trained model bound to a solver pool that covers its labels.
#[derive(Clone, Debug)]
pub struct Selector {
    model: TrainedModel,
    model_id: String,
    pool: Vec<SolverSpec>,
}

impl Selector {
    pub fn new(model: TrainedModel, pool: Vec<SolverSpec>) -> Result<Self, SelectError> {
        check_pool(&pool)?;
        let ids: BTreeSet<&str> = pool.iter().map(|s| s.id.as_str()).collect();
        let missing: Vec<String> = model
            .labels
            .iter()
            .filter(|l| !ids.contains(l.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(SelectError::PoolMissing(missing));
        }
        let model_id = model.id();
        Ok(Selector {
            model,
            model_id,
            pool,
        })
    }

    pub fn model(&self) -> &TrainedModel {
        &self.model
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn pool(&self) -> &[SolverSpec] {
        &self.pool
    }

    pub fn solver(&self, id: &str) -> Option<&SolverSpec> {
        self.pool.iter().find(|s| s.id == id)
    }

    pub fn select(&self, p: &GroundProgram) -> Result<SelectionDecision, SelectError> {
        let start = Instant::now();
        let (outcome, features) = match strat::classify_program(p) {
            ProgramClass::SolverFree => {
                let answer = match strat::evaluate_stratified(p) {
                    Ok(set) => Some(set),
                    Err(e) if e.is_inconsistent() => None,
                    Err(e) => unreachable!("classified solver-free but {e}"),
                };
                (Outcome::SolverFree(answer), None)
            }
            ProgramClass::NeedsSolver => {
                // A program needing a solver has at least one rule, so the
                // ratios are defined.
                let fv = features::extract(p).expect("nonempty program");
                let label = self.model.predict(&fv)?;
                (Outcome::Chosen(label.to_string()), Some(fv))
            }
        };
        Ok(SelectionDecision {
            outcome,
            features,
            model_id: self.model_id.clone(),
            elapsed: start.elapsed(),
        })
    }
}

pub fn select(
    p: &GroundProgram,
    model: &TrainedModel,
    pool: &[SolverSpec],
) -> Result<SelectionDecision, SelectError> {
    Selector::new(model.clone(), pool.to_vec())?.select(p)
}

/// Maps solver ids to executables; used to apply per-solver path overrides.
pub fn override_executables(pool: &mut [SolverSpec], paths: &BTreeMap<String, PathBuf>) {
    for s in pool {
        if let Some(p) = paths.get(&s.id) {
            s.executable = p.clone();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{Classifier, LinearSvm, Standardizer};
    use crate::ground::parse_ground_str;

    const FIXTURE: &str = "1 2 0 0\n3 1 3 1 0 2\n1 4 1 1 3\n1 1 1 0 4\n6 0 1 0 4 1\n0\n2 a\n3 b\n4 c\n0\nB+\n0\nB-\n1\n0\n1\n";

    fn model(sign: f64) -> TrainedModel {
        let mut w = vec![0.0; 10];
        // Feature i (choice share) is 0.2 for the fixture.
        w[8] = sign;
        TrainedModel {
            labels: vec!["clasp*".into(), "wasp*".into()],
            standardizer: Standardizer::identity(10),
            classifier: Classifier::Svm(LinearSvm { w, b: -0.1 * sign, c: 1.0 }),
        }
    }

    #[test]
    fn fixture_side_of_hyperplane() {
        let p = parse_ground_str(FIXTURE).unwrap();
        let d = select(&p, &model(1.0), &default_pool()).unwrap();
        assert_eq!(d.outcome, Outcome::Chosen("clasp*".into()));
        assert!(d.features.is_some());
        let d = select(&p, &model(-1.0), &default_pool()).unwrap();
        assert_eq!(d.outcome, Outcome::Chosen("wasp*".into()));
    }

    #[test]
    fn facts_short_circuit() {
        let p = parse_ground_str("1 2 0 0\n0\n2 a\n0\nB+\n0\nB-\n0\n1\n").unwrap();
        let d = select(&p, &model(1.0), &default_pool()).unwrap();
        let Outcome::SolverFree(Some(set)) = &d.outcome else { panic!("{:?}", d.outcome) };
        assert_eq!(answer_names(&p, set), vec!["a"]);
        assert!(d.features.is_none());
    }

    #[test]
    fn empty_program_is_solver_free() {
        let d = select(&GroundProgram::default(), &model(1.0), &default_pool()).unwrap();
        assert_eq!(d.outcome, Outcome::SolverFree(Some(BTreeSet::new())));
    }

    #[test]
    fn pool_must_cover_labels() {
        let pool = vec![SolverSpec::new("clasp*", "clasp", &[])];
        assert!(matches!(
            Selector::new(model(1.0), pool),
            Err(SelectError::PoolMissing(m)) if m == vec!["wasp*".to_string()]
        ));
    }

    #[test]
    fn pool_file() {
        let text = r#"
            [[solver]]
            id = "clasp*"
            executable = "/opt/clasp"
            args = ["--configuration=trendy"]

            [[solver]]
            id = "wasp*"
            executable = "wasp"
            exit_codes = { solved = [0] }
        "#;
        let pool = parse_pool(text, Path::new("pool.toml")).unwrap();
        assert_eq!(pool[0].exit_codes, ExitCodes::competition());
        assert_eq!(pool[1].exit_codes.solved, vec![0]);
        assert!(pool[1].exit_codes.unsat.is_empty());

        let dup = "[[solver]]\nid = \"a\"\nexecutable = \"x\"\n[[solver]]\nid = \"a\"\nexecutable = \"y\"\n";
        assert!(matches!(
            parse_pool(dup, Path::new("p")),
            Err(SelectError::DuplicateSolver(_))
        ));
        assert!(matches!(
            parse_pool("[[solver]]\nid = \"a\"\n", Path::new("p")),
            Err(SelectError::PoolFormat { .. })
        ));
    }
}
