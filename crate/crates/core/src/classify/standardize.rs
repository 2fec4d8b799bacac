/// Per-component z-scaling fitted on the training split.
///
/// Uses the population standard deviation, so transformed training data has
/// unit variance in every non-constant component. Constant components map
/// to 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// 0 marks a constant component.
    pub stdev: Vec<f64>,
}

const CONSTANT_EPS: f64 = 1e-12;

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Standardizer {
        let dims = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dims];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dims];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let stdev = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > CONSTANT_EPS {
                    sd
                } else {
                    0.0
                }
            })
            .collect();
        Standardizer { mean, stdev }
    }

    pub fn identity(dims: usize) -> Standardizer {
        Standardizer {
            mean: vec![0.0; dims],
            stdev: vec![1.0; dims],
        }
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn is_constant(&self, i: usize) -> bool {
        self.stdev[i] == 0.0
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.stdev))
            .map(|(v, (m, s))| if *s == 0.0 { 0.0 } else { (v - m) / s })
            .collect()
    }

    pub fn transform_all(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_component_maps_to_zero() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardizer::fit(&rows);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert!(s.is_constant(1));
        assert_eq!(s.transform(&[3.0, 9.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn mean_vector_maps_to_origin() {
        let rows = vec![vec![0.1, 0.7], vec![0.3, 0.2], vec![0.9, 0.4]];
        let s = Standardizer::fit(&rows);
        for z in s.transform(&s.mean.clone()) {
            assert!(z.abs() < 1e-15);
        }
    }
}
