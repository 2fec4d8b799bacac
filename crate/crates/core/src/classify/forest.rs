//! Random forest of Gini-split decision trees over bootstrap samples.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Node {
    Leaf { class: usize },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Axis-aligned decision tree; `nodes[0]` is the root. Samples with
/// `x[feature] <= threshold` go left.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { class } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForestParams {
    pub tree_count: usize,
    pub max_depth: usize,
    pub features_per_split: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomForest {
    pub params: ForestParams,
    pub classes: usize,
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Majority vote; ties go to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut votes = vec![0usize; self.classes.max(1)];
        for t in &self.trees {
            votes[t.predict(x)] += 1;
        }
        let best = *votes.iter().max().unwrap_or(&0);
        votes.iter().position(|&v| v == best).unwrap_or(0)
    }
}

pub fn default_features_per_split(dims: usize) -> usize {
    ((dims as f64).sqrt().ceil() as usize).max(1)
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

fn majority(counts: &[usize]) -> usize {
    let best = *counts.iter().max().unwrap_or(&0);
    counts.iter().position(|&c| c == best).unwrap_or(0)
}

struct Builder<'a> {
    xs: &'a [Vec<f64>],
    ys: &'a [usize],
    classes: usize,
    max_depth: usize,
    features_per_split: usize,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl Builder<'_> {
    fn class_counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        for &i in idx {
            c[self.ys[i]] += 1;
        }
        c
    }

    /// Best threshold on one feature, or `None` when all values are equal.
    fn best_threshold(&self, idx: &mut [usize], feature: usize) -> Option<BestSplit> {
        idx.sort_by(|&a, &b| self.xs[a][feature].total_cmp(&self.xs[b][feature]));
        let total = idx.len();
        let mut left = vec![0usize; self.classes];
        let mut right = self.class_counts(idx);
        let mut best: Option<BestSplit> = None;
        for k in 0..total - 1 {
            let y = self.ys[idx[k]];
            left[y] += 1;
            right[y] -= 1;
            let here = self.xs[idx[k]][feature];
            let next = self.xs[idx[k + 1]][feature];
            if here == next {
                continue;
            }
            let nl = k + 1;
            let nr = total - nl;
            let impurity =
                (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / total as f64;
            if best.as_ref().map_or(true, |b| impurity < b.impurity) {
                best = Some(BestSplit {
                    feature,
                    threshold: here + (next - here) / 2.0,
                    impurity,
                });
            }
        }
        best
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let counts = self.class_counts(idx);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf {
            class: majority(&counts),
        });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.max_depth || idx.len() < 2 {
            return at;
        }

        let dims = self.xs[idx[0]].len();
        let mut features: Vec<usize> = (0..dims).collect();
        features.shuffle(rng);
        // Keep drawing features until enough of them admit a split.
        let mut tried = 0;
        let mut best: Option<BestSplit> = None;
        for f in features {
            if tried >= self.features_per_split {
                break;
            }
            if let Some(s) = self.best_threshold(idx, f) {
                tried += 1;
                if best.as_ref().map_or(true, |b| s.impurity < b.impurity) {
                    best = Some(s);
                }
            }
        }
        let Some(split) = best else {
            return at;
        };

        let mut cut = 0;
        for k in 0..idx.len() {
            if self.xs[idx[k]][split.feature] <= split.threshold {
                idx.swap(cut, k);
                cut += 1;
            }
        }
        let (l, r) = idx.split_at_mut(cut);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[at] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        at
    }
}

pub fn fit_tree(
    xs: &[Vec<f64>],
    ys: &[usize],
    sample: &mut [usize],
    classes: usize,
    max_depth: usize,
    features_per_split: usize,
    rng: &mut ChaCha8Rng,
) -> DecisionTree {
    let mut b = Builder {
        xs,
        ys,
        classes,
        max_depth,
        features_per_split,
        nodes: Vec::new(),
    };
    b.grow(sample, 0, rng);
    DecisionTree { nodes: b.nodes }
}

/// Trains `params.tree_count` trees, each on its own bootstrap sample drawn
/// from a seed derived from `params.seed` and the tree index.
pub fn fit(xs: &[Vec<f64>], ys: &[usize], classes: usize, params: ForestParams) -> RandomForest {
    let n = xs.len();
    let trees = (0..params.tree_count)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64);
            let mut sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            fit_tree(
                xs,
                ys,
                &mut sample,
                classes,
                params.max_depth,
                params.features_per_split,
                &mut rng,
            )
        })
        .collect();
    RandomForest {
        params,
        classes,
        trees,
    }
}
