//! Solver-selection classifiers: a linear SVM and a random forest, both
//! trained on standardized feature vectors with grid search on the
//! validation split.

pub mod forest;
pub mod metrics;
mod persist;
pub mod standardize;
pub mod svm;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::LabeledInstance;
use crate::features::FeatureVector;

pub use forest::{ForestParams, RandomForest};
pub use metrics::{f1_score, EvalReport};
pub use persist::{read_model, write_model, MODEL_MAGIC};
pub use standardize::Standardizer;
pub use svm::LinearSvm;

pub const SVM_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];
pub const FOREST_GRID: [(usize, usize); 6] = [(50, 4), (50, 8), (50, 16), (100, 4), (100, 8), (100, 16)];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training set is empty")]
    Empty,
    #[error("training set has a single label `{0}`; need two")]
    SingleLabel(String),
    #[error("training set has {0} labels; the linear SVM is binary")]
    TooManyLabels(usize),
    #[error("instance {0} has a non-finite feature")]
    NonFinite(String),
    #[error("feature vector has a non-finite component")]
    NonFiniteInput,
    #[error("model file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("model io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Classifier {
    /// `labels[0]` is predicted for nonnegative decision values.
    Svm(LinearSvm),
    Forest(RandomForest),
}

impl Classifier {
    pub fn kind(&self) -> &'static str {
        match self {
            Classifier::Svm(_) => "svm",
            Classifier::Forest(_) => "forest",
        }
    }
}

/// A classifier together with its input scaling and label names.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub labels: Vec<String>,
    pub standardizer: Standardizer,
    pub classifier: Classifier,
}

impl TrainedModel {
    pub fn predict_index(&self, x: &[f64]) -> Result<usize, ModelError> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteInput);
        }
        let z = self.standardizer.transform(x);
        Ok(match &self.classifier {
            Classifier::Svm(m) => {
                if m.decision(&z) >= 0.0 {
                    0
                } else {
                    1
                }
            }
            Classifier::Forest(f) => f.predict(&z),
        })
    }

    pub fn predict_values(&self, x: &[f64]) -> Result<&str, ModelError> {
        let i = self.predict_index(x)?;
        Ok(&self.labels[i.min(self.labels.len() - 1)])
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<&str, ModelError> {
        self.predict_values(&x.values)
    }

    pub fn evaluate(&self, test: &[LabeledInstance]) -> Result<EvalReport, ModelError> {
        let predicted = test
            .iter()
            .map(|i| self.predict(&i.x))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EvalReport::from_pairs(
            &self.labels,
            test.iter().map(|i| i.y.as_str()).zip(predicted),
        ))
    }

    /// Short content hash, stable for identical model files.
    pub fn id(&self) -> String {
        let mut buf = Vec::new();
        write_model(self, &mut buf).expect("writing to a Vec cannot fail");
        let digest = Sha256::digest(&buf);
        let hex: String = digest[..6].iter().map(|b| format!("{b:02x}")).collect();
        format!("{}-{hex}", self.classifier.kind())
    }
}

pub fn evaluate(model: &TrainedModel, test: &[LabeledInstance]) -> Result<EvalReport, ModelError> {
    model.evaluate(test)
}

struct Prepared {
    labels: Vec<String>,
    standardizer: Standardizer,
    xs: Vec<Vec<f64>>,
    ys: Vec<usize>,
}

fn prepare(train: &[LabeledInstance]) -> Result<Prepared, ModelError> {
    if train.is_empty() {
        return Err(ModelError::Empty);
    }
    if let Some(bad) = train.iter().find(|i| !i.x.is_finite()) {
        return Err(ModelError::NonFinite(bad.instance_id.clone()));
    }
    let mut labels: Vec<String> = train.iter().map(|i| i.y.clone()).collect();
    labels.sort();
    labels.dedup();
    let raw: Vec<Vec<f64>> = train.iter().map(|i| i.x.values.to_vec()).collect();
    let standardizer = Standardizer::fit(&raw);
    let xs = standardizer.transform_all(&raw);
    let ys = train
        .iter()
        .map(|i| labels.binary_search(&i.y).expect("label collected above"))
        .collect();
    Ok(Prepared {
        labels,
        standardizer,
        xs,
        ys,
    })
}

fn check_finite(rows: &[LabeledInstance]) -> Result<(), ModelError> {
    match rows.iter().find(|i| !i.x.is_finite()) {
        Some(bad) => Err(ModelError::NonFinite(bad.instance_id.clone())),
        None => Ok(()),
    }
}

/// Picks the candidate with the best validation F1; earlier candidates win ties.
fn select_best(
    candidates: impl IntoIterator<Item = TrainedModel>,
    valid: &[LabeledInstance],
) -> Result<(TrainedModel, f64), ModelError> {
    let mut best: Option<(TrainedModel, f64)> = None;
    for m in candidates {
        let score = if valid.is_empty() {
            0.0
        } else {
            m.evaluate(valid)?.f1
        };
        if best.as_ref().map_or(true, |(_, s)| score > *s) {
            best = Some((m, score));
        }
    }
    best.ok_or(ModelError::Empty)
}

#[derive(Clone, Debug)]
pub struct SvmOptions {
    pub grid: Vec<f64>,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmOptions {
    fn default() -> Self {
        SvmOptions {
            grid: SVM_GRID.to_vec(),
            epochs: svm::DEFAULT_EPOCHS,
            seed: 0,
        }
    }
}

/// Trains one SVM per grid value of `C` and keeps the one with the best
/// macro-F1 on `valid`.
pub fn train_svm(
    train: &[LabeledInstance],
    valid: &[LabeledInstance],
    opts: &SvmOptions,
) -> Result<TrainedModel, ModelError> {
    check_finite(valid)?;
    let p = prepare(train)?;
    match p.labels.len() {
        1 => return Err(ModelError::SingleLabel(p.labels[0].clone())),
        2 => {}
        n => return Err(ModelError::TooManyLabels(n)),
    }
    let ys: Vec<f64> = p.ys.iter().map(|&y| if y == 0 { 1.0 } else { -1.0 }).collect();
    let candidates = opts.grid.iter().map(|&c| {
        let fit = svm::fit(&p.xs, &ys, c, opts.epochs, opts.seed);
        TrainedModel {
            labels: p.labels.clone(),
            standardizer: p.standardizer.clone(),
            classifier: Classifier::Svm(fit.model),
        }
    });
    Ok(select_best(candidates, valid)?.0)
}

#[derive(Clone, Debug)]
pub struct ForestOptions {
    pub grid: Vec<(usize, usize)>,
    /// Defaults to ceil(sqrt(dims)) when `None`.
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for ForestOptions {
    fn default() -> Self {
        ForestOptions {
            grid: FOREST_GRID.to_vec(),
            features_per_split: None,
            seed: 0,
        }
    }
}

pub fn train_forest(
    train: &[LabeledInstance],
    valid: &[LabeledInstance],
    opts: &ForestOptions,
) -> Result<TrainedModel, ModelError> {
    check_finite(valid)?;
    let p = prepare(train)?;
    let dims = p.standardizer.dims();
    let fps = opts
        .features_per_split
        .unwrap_or_else(|| forest::default_features_per_split(dims));
    let candidates = opts.grid.iter().map(|&(trees, depth)| {
        let f = forest::fit(
            &p.xs,
            &p.ys,
            p.labels.len(),
            ForestParams {
                tree_count: trees,
                max_depth: depth,
                features_per_split: fps,
                seed: opts.seed,
            },
        );
        TrainedModel {
            labels: p.labels.clone(),
            standardizer: p.standardizer.clone(),
            classifier: Classifier::Forest(f),
        }
    });
    Ok(select_best(candidates, valid)?.0)
}
