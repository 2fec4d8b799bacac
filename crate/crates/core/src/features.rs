//! The ten atom/rule ratios used as classifier input.
//!
//! Counting is a single pass over the rule list. Every statement falls into
//! exactly one category, so `C + W + SR + CR + WR + DR = R` always holds.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::ground::{AtomId, GroundProgram, RuleKind, RuleStatement};

pub const FEATURE_COUNT: usize = 10;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"];

pub const COUNT_NAMES: [&str; 11] = [
    "F", "R", "PA", "NA", "BA", "C", "W", "SR", "CR", "WR", "DR",
];

/// Raw statement and literal totals of one ground program.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RawCounts {
    /// Facts plus atoms forced true by the compute section.
    pub facts: u64,
    pub rules: u64,
    pub pos_atoms: u64,
    pub neg_atoms: u64,
    pub body_atoms: u64,
    pub constraints: u64,
    pub weak_constraints: u64,
    pub standard_rules: u64,
    pub choice_rules: u64,
    pub weight_rules: u64,
    pub disjunctive_rules: u64,
}

impl RawCounts {
    pub fn as_array(&self) -> [u64; 11] {
        [
            self.facts,
            self.rules,
            self.pos_atoms,
            self.neg_atoms,
            self.body_atoms,
            self.constraints,
            self.weak_constraints,
            self.standard_rules,
            self.choice_rules,
            self.weight_rules,
            self.disjunctive_rules,
        ]
    }

    pub fn from_array(v: [u64; 11]) -> Self {
        RawCounts {
            facts: v[0],
            rules: v[1],
            pos_atoms: v[2],
            neg_atoms: v[3],
            body_atoms: v[4],
            constraints: v[5],
            weak_constraints: v[6],
            standard_rules: v[7],
            choice_rules: v[8],
            weight_rules: v[9],
            disjunctive_rules: v[10],
        }
    }

    /// True when the program has no body literals at all, in which case the
    /// `d`/`e` ratios are reported as 0.
    pub fn empty_bodies(&self) -> bool {
        self.body_atoms == 0
    }
}

/// Category a statement is counted under.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleCategory {
    Constraint,
    WeakConstraint,
    Standard,
    Choice,
    Weight,
    Disjunctive,
}

/// Cardinality statements count as standard rules; only weighted bodies are
/// counted as weight rules. A Basic rule whose head must be false is the
/// format's encoding of an integrity constraint.
pub fn categorize(rule: &RuleStatement, compute_false: &BTreeSet<AtomId>) -> RuleCategory {
    match rule.kind {
        RuleKind::Minimize => RuleCategory::WeakConstraint,
        RuleKind::Basic if compute_false.contains(&rule.heads[0]) => RuleCategory::Constraint,
        RuleKind::Basic | RuleKind::Cardinality => RuleCategory::Standard,
        RuleKind::Choice => RuleCategory::Choice,
        RuleKind::Weight => RuleCategory::Weight,
        RuleKind::Disjunctive => RuleCategory::Disjunctive,
    }
}

fn is_fact(rule: &RuleStatement) -> bool {
    rule.kind == RuleKind::Basic && rule.body_len() == 0
}

/// Counts over an arbitrary rule sequence; `count_program` is the usual entry.
pub fn count_rules<'a, I>(rules: I, compute_true: usize, compute_false: &BTreeSet<AtomId>) -> RawCounts
where
    I: IntoIterator<Item = &'a RuleStatement>,
{
    let mut c = RawCounts {
        facts: compute_true as u64,
        ..Default::default()
    };
    for rule in rules {
        c.rules += 1;
        c.pos_atoms += rule.pos_body.len() as u64;
        c.neg_atoms += rule.neg_body.len() as u64;
        match categorize(rule, compute_false) {
            RuleCategory::Constraint => c.constraints += 1,
            RuleCategory::WeakConstraint => c.weak_constraints += 1,
            RuleCategory::Standard => {
                c.standard_rules += 1;
                if is_fact(rule) {
                    c.facts += 1;
                }
            }
            RuleCategory::Choice => c.choice_rules += 1,
            RuleCategory::Weight => c.weight_rules += 1,
            RuleCategory::Disjunctive => c.disjunctive_rules += 1,
        }
    }
    c.body_atoms = c.pos_atoms + c.neg_atoms;
    c
}

pub fn count_program(p: &GroundProgram) -> RawCounts {
    count_rules(&p.rules, p.compute_true.len(), &p.compute_false)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("program has no rules; ratios are undefined")]
    EmptyProgram,
}

/// The ten ratios, together with the counts they were computed from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: [f64; FEATURE_COUNT],
    pub counts: RawCounts,
}

impl FeatureVector {
    pub fn from_counts(counts: RawCounts) -> Result<Self, FeatureError> {
        if counts.rules == 0 {
            return Err(FeatureError::EmptyProgram);
        }
        let r = counts.rules as f64;
        let per_body = |n: u64| {
            if counts.body_atoms == 0 {
                0.0
            } else {
                n as f64 / counts.body_atoms as f64
            }
        };
        let values = [
            counts.facts as f64 / r,
            counts.pos_atoms as f64 / r,
            counts.neg_atoms as f64 / r,
            per_body(counts.pos_atoms),
            per_body(counts.neg_atoms),
            counts.constraints as f64 / r,
            counts.weak_constraints as f64 / r,
            counts.standard_rules as f64 / r,
            counts.choice_rules as f64 / r,
            counts.weight_rules as f64 / r,
        ];
        Ok(FeatureVector { values, counts })
    }

    /// A vector with no backing counts, for inputs read back from feature files.
    pub fn from_values(values: [f64; FEATURE_COUNT]) -> Self {
        FeatureVector {
            values,
            counts: RawCounts::default(),
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.values[i])
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Flat `(key, value)` listing: the ten ratios followed by the raw counts.
    pub fn record(&self) -> Vec<(&'static str, String)> {
        let mut out: Vec<(&'static str, String)> = FEATURE_NAMES
            .iter()
            .zip(self.values)
            .map(|(k, v)| (*k, v.to_string()))
            .collect();
        out.extend(
            COUNT_NAMES
                .iter()
                .zip(self.counts.as_array())
                .map(|(k, v)| (*k, v.to_string())),
        );
        out
    }
}

impl fmt::Display for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, v) in self.record() {
            if !first {
                f.write_str(" ")?;
            }
            first = false;
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

pub fn compute_features(counts: RawCounts) -> Result<FeatureVector, FeatureError> {
    FeatureVector::from_counts(counts)
}

pub fn extract(p: &GroundProgram) -> Result<FeatureVector, FeatureError> {
    FeatureVector::from_counts(count_program(p))
}
