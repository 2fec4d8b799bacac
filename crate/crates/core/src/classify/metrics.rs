use std::fmt;

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Confusion counts and precision/recall figures. Aggregates are macro
/// averages over `labels`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub labels: Vec<String>,
    /// `confusion[actual][predicted]`
    pub confusion: Vec<Vec<usize>>,
    pub precision_per_class: Vec<f64>,
    pub recall_per_class: Vec<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    /// `labels` fixes the row/column order; labels seen in the data but not
    /// listed are appended in order of appearance.
    pub fn from_pairs<'a, I>(labels: &[String], pairs: I) -> EvalReport
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut labels = labels.to_vec();
        let idx = |l: &str, labels: &mut Vec<String>| match labels.iter().position(|x| x == l) {
            Some(i) => i,
            None => {
                labels.push(l.to_string());
                labels.len() - 1
            }
        };
        let mut cells: Vec<(usize, usize)> = Vec::new();
        for (actual, predicted) in pairs {
            let a = idx(actual, &mut labels);
            let p = idx(predicted, &mut labels);
            cells.push((a, p));
        }
        let k = labels.len();
        let mut confusion = vec![vec![0usize; k]; k];
        for (a, p) in cells {
            confusion[a][p] += 1;
        }
        let precision_per_class: Vec<f64> = (0..k)
            .map(|c| ratio(confusion[c][c], (0..k).map(|a| confusion[a][c]).sum()))
            .collect();
        let recall_per_class: Vec<f64> = (0..k)
            .map(|c| ratio(confusion[c][c], confusion[c].iter().sum()))
            .collect();
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let precision = mean(&precision_per_class);
        let recall = mean(&recall_per_class);
        EvalReport {
            labels,
            confusion,
            precision_per_class,
            recall_per_class,
            precision,
            recall,
            f1: f1_score(precision, recall),
        }
    }

    pub fn accuracy(&self) -> f64 {
        let total: usize = self.confusion.iter().flatten().sum();
        let diag: usize = (0..self.labels.len()).map(|i| self.confusion[i][i]).sum();
        ratio(diag, total)
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<16} {:>9} {:>9}", "class", "precision", "recall")?;
        for (i, l) in self.labels.iter().enumerate() {
            writeln!(
                f,
                "{:<16} {:>9.4} {:>9.4}",
                l, self.precision_per_class[i], self.recall_per_class[i]
            )?;
        }
        writeln!(
            f,
            "{:<16} {:>9.4} {:>9.4}  f1 {:.4}  accuracy {:.4}",
            "macro",
            self.precision,
            self.recall,
            self.f1,
            self.accuracy()
        )?;
        write!(f, "confusion (rows actual, columns predicted):")?;
        for row in &self.confusion {
            write!(f, "\n ")?;
            for c in row {
                write!(f, " {c:>6}")?;
            }
        }
        Ok(())
    }
}
