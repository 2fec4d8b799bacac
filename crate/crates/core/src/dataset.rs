//! Runtime records, best-solver labeling and the stratified three-way split.
//!
//! File formats (all comma-separated with one header line):
//!
//! * records: `instanceId,solverId,status,wallTime,groundTime`
//! * features: `instanceId,a,..,j,F,R,PA,NA,BA,C,W,SR,CR,WR,DR`
//! * labeled splits: `instanceId,label,a,..,j,F,..,DR`

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureVector, RawCounts, COUNT_NAMES, FEATURE_COUNT, FEATURE_NAMES};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row}: {message}")]
    Format { row: usize, message: String },
    #[error("empty dataset")]
    Empty,
    #[error("instance {0} has a non-finite feature")]
    NonFinite(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Solved,
    Timeout,
    Memout,
    Error,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Solved => "solved",
            RunStatus::Timeout => "timeout",
            RunStatus::Memout => "memout",
            RunStatus::Error => "error",
        })
    }
}

impl FromStr for RunStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "solved" => Ok(RunStatus::Solved),
            "timeout" => Ok(RunStatus::Timeout),
            "memout" => Ok(RunStatus::Memout),
            "error" => Ok(RunStatus::Error),
            other => Err(format!("unknown status `{other}`")),
        }
    }
}

/// Outcome of one solver on one instance. For timeouts `wall_time` holds
/// the limit itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRecord {
    #[serde(rename = "instanceId")]
    pub instance_id: String,
    #[serde(rename = "solverId")]
    pub solver_id: String,
    pub status: RunStatus,
    #[serde(rename = "wallTime")]
    pub wall_time: f64,
    #[serde(rename = "groundTime")]
    pub ground_time: Option<f64>,
}

impl RuntimeRecord {
    pub fn new(instance: &str, solver: &str, status: RunStatus, wall_time: f64) -> Self {
        RuntimeRecord {
            instance_id: instance.to_string(),
            solver_id: solver.to_string(),
            status,
            wall_time,
            ground_time: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledInstance {
    pub instance_id: String,
    pub x: FeatureVector,
    pub y: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabelingReport {
    pub labeled: Vec<LabeledInstance>,
    /// Instances no solver solved; excluded from training.
    pub unsolved: Vec<String>,
    /// Instances with features but no runtime records.
    pub missing_records: Vec<String>,
    /// Instances with records but no features.
    pub missing_features: Vec<String>,
}

/// Rank of a solver for tie-breaking: declared order first, then by name.
fn priority_key<'a>(solver: &'a str, priority: &[String]) -> (usize, &'a str) {
    let rank = priority
        .iter()
        .position(|s| s == solver)
        .unwrap_or(priority.len());
    (rank, solver)
}

/// Labels each instance with its fastest solving solver. Ties go to the
/// solver listed first in `priority`. Output is ordered by instance id.
pub fn label_instances(
    records: &[RuntimeRecord],
    features: &BTreeMap<String, FeatureVector>,
    priority: &[String],
) -> LabelingReport {
    let mut best: BTreeMap<&str, Option<&RuntimeRecord>> = BTreeMap::new();
    for r in records {
        let slot = best.entry(r.instance_id.as_str()).or_insert(None);
        if r.status != RunStatus::Solved {
            continue;
        }
        let better = match slot {
            None => true,
            Some(cur) => {
                r.wall_time < cur.wall_time
                    || (r.wall_time == cur.wall_time
                        && priority_key(&r.solver_id, priority)
                            < priority_key(&cur.solver_id, priority))
            }
        };
        if better {
            *slot = Some(r);
        }
    }

    let mut report = LabelingReport::default();
    for (inst, winner) in &best {
        let Some(x) = features.get(*inst) else {
            report.missing_features.push(inst.to_string());
            continue;
        };
        match winner {
            Some(r) => report.labeled.push(LabeledInstance {
                instance_id: inst.to_string(),
                x: *x,
                y: r.solver_id.clone(),
            }),
            None => report.unsolved.push(inst.to_string()),
        }
    }
    report.missing_records = features
        .keys()
        .filter(|k| !best.contains_key(k.as_str()))
        .cloned()
        .collect();
    if !report.unsolved.is_empty() {
        log::info!("{} instances solved by no solver were dropped", report.unsolved.len());
    }
    report
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SplitDataset {
    pub train: Vec<LabeledInstance>,
    pub valid: Vec<LabeledInstance>,
    pub test: Vec<LabeledInstance>,
}

impl SplitDataset {
    pub fn parts(&self) -> [&[LabeledInstance]; 3] {
        [&self.train, &self.valid, &self.test]
    }
}

pub const DEFAULT_RATIOS: [f64; 3] = [0.5, 0.25, 0.25];

/// Largest-remainder apportionment of `total` items over `ratios`.
/// Ties in the remainder go to the earlier part.
pub fn apportion(total: usize, ratios: &[f64]) -> Vec<usize> {
    let sum: f64 = ratios.iter().sum();
    let quotas: Vec<f64> = ratios.iter().map(|r| total as f64 * r / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - counts[a] as f64;
        let rb = quotas[b] - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(total - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Per-label split sizes. Row sums equal the label sizes, column sums equal
/// the overall apportionment, and each cell is the floor or ceiling of its
/// proportional share.
///
/// The floors are fixed first; the leftover units form a 0/1 transportation
/// problem between labels and parts, solved by augmenting paths with cells
/// of larger fractional share tried first.
pub fn stratified_counts(label_sizes: &[usize], ratios: &[f64]) -> Vec<Vec<usize>> {
    let total: usize = label_sizes.iter().sum();
    let parts = ratios.len();
    let column_target = apportion(total, ratios);
    let sum: f64 = ratios.iter().sum();

    let mut cells: Vec<Vec<usize>> = Vec::with_capacity(label_sizes.len());
    let mut frac: Vec<Vec<f64>> = Vec::with_capacity(label_sizes.len());
    for &n in label_sizes {
        let quotas: Vec<f64> = ratios.iter().map(|r| n as f64 * r / sum).collect();
        let floors: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        frac.push(quotas.iter().zip(&floors).map(|(q, f)| q - *f as f64).collect());
        cells.push(floors);
    }
    let mut row_need: Vec<usize> = label_sizes
        .iter()
        .zip(&cells)
        .map(|(n, row)| n - row.iter().sum::<usize>())
        .collect();
    let mut col_need: Vec<usize> = (0..parts)
        .map(|s| column_target[s] - cells.iter().map(|row| row[s]).sum::<usize>())
        .collect();

    // Candidate cells per label, best fractional share first.
    let prefs: Vec<Vec<usize>> = frac
        .iter()
        .map(|f| {
            let mut idx: Vec<usize> = (0..parts).collect();
            idx.sort_by(|&a, &b| f[b].partial_cmp(&f[a]).unwrap().then(a.cmp(&b)));
            idx
        })
        .collect();
    let mut extra = vec![vec![false; parts]; label_sizes.len()];

    // Depth-first augmenting path from label `l` to any part with spare need.
    fn augment(
        l: usize,
        prefs: &[Vec<usize>],
        extra: &mut [Vec<bool>],
        col_need: &mut [usize],
        seen: &mut [bool],
    ) -> bool {
        for &s in &prefs[l] {
            if extra[l][s] || seen[s] {
                continue;
            }
            seen[s] = true;
            if col_need[s] > 0 {
                col_need[s] -= 1;
                extra[l][s] = true;
                return true;
            }
            // Part s is full: try to move one of its units to another part.
            for other in 0..extra.len() {
                if other != l && extra[other][s] {
                    extra[other][s] = false;
                    if augment(other, prefs, extra, col_need, seen) {
                        extra[l][s] = true;
                        return true;
                    }
                    extra[other][s] = true;
                }
            }
        }
        false
    }

    for l in 0..label_sizes.len() {
        while row_need[l] > 0 {
            let mut seen = vec![false; parts];
            if !augment(l, &prefs, &mut extra, &mut col_need, &mut seen) {
                break;
            }
            row_need[l] -= 1;
        }
    }
    debug_assert!(row_need.iter().all(|&r| r == 0), "controlled rounding failed");
    for (row, ex) in cells.iter_mut().zip(&extra) {
        for (c, e) in row.iter_mut().zip(ex) {
            *c += *e as usize;
        }
    }
    cells
}

/// Splits `instances` into train/valid/test, preserving label frequencies.
/// Deterministic for a given seed.
pub fn stratified_split(
    instances: &[LabeledInstance],
    ratios: [f64; 3],
    seed: u64,
) -> Result<SplitDataset, DatasetError> {
    if instances.is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut groups: BTreeMap<&str, Vec<&LabeledInstance>> = BTreeMap::new();
    for inst in instances {
        groups.entry(inst.y.as_str()).or_default().push(inst);
    }
    for (label, members) in &groups {
        if members.len() < 4 {
            log::warn!(
                "label {label} has only {} instances; its split is degenerate",
                members.len()
            );
        }
    }
    let sizes: Vec<usize> = groups.values().map(Vec::len).collect();
    let counts = stratified_counts(&sizes, &ratios);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SplitDataset::default();
    for (members, row) in groups.into_values().zip(counts) {
        let mut members = members;
        // Shuffle from a canonical order so input order does not matter.
        members.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
        members.shuffle(&mut rng);
        let mut it = members.into_iter().cloned();
        out.train.extend(it.by_ref().take(row[0]));
        out.valid.extend(it.by_ref().take(row[1]));
        out.test.extend(it.by_ref().take(row[2]));
    }
    Ok(out)
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<RuntimeRecord>, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize().enumerate() {
        let rec: RuntimeRecord = row?;
        if !(rec.wall_time >= 0.0 && rec.wall_time.is_finite()) {
            return Err(DatasetError::Format {
                row: i + 2,
                message: format!("invalid wallTime {}", rec.wall_time),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_records<W: Write>(out: W, records: &[RuntimeRecord]) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn feature_header(with_label: bool) -> Vec<&'static str> {
    let mut h = vec!["instanceId"];
    if with_label {
        h.push("label");
    }
    h.extend(FEATURE_NAMES);
    h.extend(COUNT_NAMES);
    h
}

fn parse_feature_row(
    row: &csv::StringRecord,
    columns: &HashMap<String, usize>,
    line: usize,
) -> Result<FeatureVector, DatasetError> {
    let field = |name: &str| -> Result<Option<&str>, DatasetError> {
        Ok(columns.get(name).and_then(|&i| row.get(i)).filter(|s| !s.is_empty()))
    };
    let mut values = [0.0; FEATURE_COUNT];
    for (slot, name) in values.iter_mut().zip(FEATURE_NAMES) {
        let text = field(name)?.ok_or_else(|| DatasetError::Format {
            row: line,
            message: format!("missing feature {name}"),
        })?;
        *slot = text.parse().map_err(|_| DatasetError::Format {
            row: line,
            message: format!("feature {name}: cannot parse `{text}`"),
        })?;
    }
    let mut counts = [0u64; 11];
    for (slot, name) in counts.iter_mut().zip(COUNT_NAMES) {
        if let Some(text) = field(name)? {
            *slot = text.parse().map_err(|_| DatasetError::Format {
                row: line,
                message: format!("count {name}: cannot parse `{text}`"),
            })?;
        }
    }
    Ok(FeatureVector {
        values,
        counts: RawCounts::from_array(counts),
    })
}

fn header_index(rdr: &mut csv::Reader<impl Read>) -> Result<HashMap<String, usize>, DatasetError> {
    Ok(rdr
        .headers()?
        .iter()
        .enumerate()
        .map(|(i, h)| (h.to_string(), i))
        .collect())
}

fn require(columns: &HashMap<String, usize>, name: &str) -> Result<usize, DatasetError> {
    columns.get(name).copied().ok_or_else(|| DatasetError::Format {
        row: 1,
        message: format!("missing column {name}"),
    })
}

pub fn read_features<R: Read>(input: R) -> Result<BTreeMap<String, FeatureVector>, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let columns = header_index(&mut rdr)?;
    let id_col = require(&columns, "instanceId")?;
    let mut out = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let id = row.get(id_col).unwrap_or_default().to_string();
        let fv = parse_feature_row(&row, &columns, i + 2)?;
        if !fv.is_finite() {
            return Err(DatasetError::NonFinite(id));
        }
        out.insert(id, fv);
    }
    Ok(out)
}

pub fn write_features<'a, W, I>(out: W, rows: I) -> Result<(), DatasetError>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a FeatureVector)>,
{
    let mut w = csv::Writer::from_writer(out);
    w.write_record(feature_header(false))?;
    for (id, fv) in rows {
        let mut rec = vec![id.to_string()];
        rec.extend(fv.values.iter().map(f64::to_string));
        rec.extend(fv.counts.as_array().iter().map(u64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labeled<R: Read>(input: R) -> Result<Vec<LabeledInstance>, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let columns = header_index(&mut rdr)?;
    let id_col = require(&columns, "instanceId")?;
    let label_col = require(&columns, "label")?;
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let id = row.get(id_col).unwrap_or_default().to_string();
        let x = parse_feature_row(&row, &columns, i + 2)?;
        if !x.is_finite() {
            return Err(DatasetError::NonFinite(id));
        }
        out.push(LabeledInstance {
            instance_id: id,
            x,
            y: row.get(label_col).unwrap_or_default().to_string(),
        });
    }
    Ok(out)
}

pub fn write_labeled<W: Write>(out: W, rows: &[LabeledInstance]) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(feature_header(true))?;
    for inst in rows {
        let mut rec = vec![inst.instance_id.clone(), inst.y.clone()];
        rec.extend(inst.x.values.iter().map(f64::to_string));
        rec.extend(inst.x.counts.as_array().iter().map(u64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `instanceId,domain` pairs.
pub fn read_domains<R: Read>(input: R) -> Result<BTreeMap<String, String>, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let columns = header_index(&mut rdr)?;
    let id_col = require(&columns, "instanceId")?;
    let dom_col = require(&columns, "domain")?;
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        out.insert(
            row.get(id_col).unwrap_or_default().to_string(),
            row.get(dom_col).unwrap_or_default().to_string(),
        );
    }
    Ok(out)
}

/// Distinct labels in order of first appearance.
pub fn labels_of(instances: &[LabeledInstance]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    instances
        .iter()
        .filter(|i| seen.insert(i.y.as_str()))
        .map(|i| i.y.clone())
        .collect()
}
