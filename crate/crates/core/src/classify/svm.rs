//! Linear soft-margin SVM trained by stochastic sub-gradient descent.
//!
//! The primal objective is
//!
//! ```text
//! J(w, b) = 1/2 |w|^2 + C * sum_i max(0, 1 - y_i (w . x_i + b))
//! ```
//!
//! Training runs on the equivalent scaled objective
//! `lambda/2 |w|^2 + 1/n sum_i hinge_i` with `lambda = 1 / (C n)`, using the
//! step `1 / (lambda t)` and a seeded per-epoch shuffle. The returned model
//! is the running average of all iterates; at the end of every epoch the
//! average is kept only if it does not increase `J`, so the per-epoch trace
//! is non-increasing.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_EPOCHS: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSvm {
    pub w: Vec<f64>,
    pub b: f64,
    /// Regularization weight the model was trained with.
    pub c: f64,
}

impl LinearSvm {
    pub fn decision(&self, z: &[f64]) -> f64 {
        dot(&self.w, z) + self.b
    }

    /// +1 for a nonnegative decision value, -1 otherwise.
    pub fn sign(&self, z: &[f64]) -> f64 {
        if self.decision(z) >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Primal objective `J(w, b)`; `ys` are +1/-1.
pub fn objective(w: &[f64], b: f64, c: f64, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    let hinge: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (1.0 - y * (dot(w, x) + b)).max(0.0))
        .sum();
    0.5 * dot(w, w) + c * hinge
}

/// A sub-gradient of `J` at `(w, b)`; the true gradient wherever no margin
/// equals exactly 1.
pub fn subgradient(w: &[f64], b: f64, c: f64, xs: &[Vec<f64>], ys: &[f64]) -> (Vec<f64>, f64) {
    let mut gw = w.to_vec();
    let mut gb = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        if y * (dot(w, x) + b) < 1.0 {
            for (g, v) in gw.iter_mut().zip(x) {
                *g -= c * y * v;
            }
            gb -= c * y;
        }
    }
    (gw, gb)
}

#[derive(Clone, Debug)]
pub struct SvmFit {
    pub model: LinearSvm,
    /// Objective of the kept averaged iterate after each epoch.
    pub trace: Vec<f64>,
    /// Objective of the raw averaged iterate after each epoch.
    pub raw_trace: Vec<f64>,
}

pub fn fit(xs: &[Vec<f64>], ys: &[f64], c: f64, epochs: usize, seed: u64) -> SvmFit {
    let n = xs.len();
    let dims = xs.first().map_or(0, Vec::len);
    let lambda = 1.0 / (c * n as f64);

    // The minimizer satisfies |w| <= sqrt(2/lambda) (compare against w = 0)
    // and |b| <= 1 + |w| max|x|, so projecting onto that box loses nothing.
    let w_radius = (2.0 / lambda).sqrt();
    let max_norm = xs.iter().map(|x| dot(x, x).sqrt()).fold(0.0, f64::max);
    let b_radius = 1.0 + w_radius * max_norm;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut w = vec![0.0; dims];
    let mut b = 0.0;
    let mut avg_w = vec![0.0; dims];
    let mut avg_b = 0.0;
    let mut t = 0usize;

    let mut kept = LinearSvm {
        w: vec![0.0; dims],
        b: 0.0,
        c,
    };
    let mut kept_obj = objective(&kept.w, kept.b, c, xs, ys);
    let mut trace = Vec::with_capacity(epochs);
    let mut raw_trace = Vec::with_capacity(epochs);

    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let violated = ys[i] * (dot(&w, &xs[i]) + b) < 1.0;
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if violated {
                let step = eta * ys[i];
                for (v, x) in w.iter_mut().zip(&xs[i]) {
                    *v += step * x;
                }
                b += step;
            }
            let norm = dot(&w, &w).sqrt();
            if norm > w_radius {
                let scale = w_radius / norm;
                w.iter_mut().for_each(|v| *v *= scale);
            }
            b = b.clamp(-b_radius, b_radius);

            let k = 1.0 / t as f64;
            for (a, v) in avg_w.iter_mut().zip(&w) {
                *a += (v - *a) * k;
            }
            avg_b += (b - avg_b) * k;
        }
        let obj = objective(&avg_w, avg_b, c, xs, ys);
        raw_trace.push(obj);
        if obj <= kept_obj {
            kept_obj = obj;
            kept.w.copy_from_slice(&avg_w);
            kept.b = avg_b;
        }
        trace.push(kept_obj);
    }
    SvmFit {
        model: kept,
        trace,
        raw_trace,
    }
}
