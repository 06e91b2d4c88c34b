//! Per-pixel linear softmax classifier shared by the fusion layer and the
//! baseline parser: logits = matrix * x + bias, cross-entropy loss, full-batch
//! gradient descent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Probabilities are floored at this value inside the logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

/// Pixels per reduction chunk; partial sums are combined in chunk order.
const CHUNK: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Linear {
    pub classes: usize,
    pub dim: usize,
    /// `classes x dim`, row-major.
    pub matrix: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Design matrix plus targets.
#[derive(Clone, Debug, Default)]
pub(crate) struct Batch {
    pub dim: usize,
    pub rows: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn push(&mut self, row: &[f64], label: usize) {
        debug_assert_eq!(row.len(), self.dim);
        self.rows.extend_from_slice(row);
        self.labels.push(label);
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }
}

/// Rounds to the nearest `f32`, so weights survive 32-bit serialization unchanged.
#[inline]
pub(crate) fn to_f32_precision(v: f64) -> f64 {
    v as f32 as f64
}

/// In-place numerically stable softmax.
pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

impl Linear {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            classes,
            dim,
            matrix: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
        }
    }

    /// Weights and biases drawn from `N(0, std^2)`, rounded to `f32` precision.
    pub fn gaussian(classes: usize, dim: usize, std: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, std).expect("standard deviation is positive");
        let mut draw = || to_f32_precision(normal.sample(&mut rng));
        let matrix = (0..classes * dim).map(|_| draw()).collect();
        let bias = (0..classes).map(|_| draw()).collect();
        Self {
            classes,
            dim,
            matrix,
            bias,
        }
    }

    pub fn param_count(&self) -> usize {
        self.matrix.len() + self.bias.len()
    }

    pub fn param(&self, i: usize) -> f64 {
        if i < self.matrix.len() {
            self.matrix[i]
        } else {
            self.bias[i - self.matrix.len()]
        }
    }

    pub fn param_mut(&mut self, i: usize) -> &mut f64 {
        let n = self.matrix.len();
        if i < n {
            &mut self.matrix[i]
        } else {
            &mut self.bias[i - n]
        }
    }

    pub fn is_finite(&self) -> bool {
        self.matrix.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    pub fn logits(&self, x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let row = &self.matrix[c * self.dim..(c + 1) * self.dim];
            *o = self.bias[c] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    pub fn probabilities(&self, x: &[f64], out: &mut [f64]) {
        self.logits(x, out);
        softmax_in_place(out);
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, batch: &Batch) -> f64 {
        self.evaluate(batch, false).0
    }

    /// Mean cross-entropy and its gradient (laid out like `self`).
    pub fn loss_and_gradient(&self, batch: &Batch) -> (f64, Linear) {
        let (loss, grad) = self.evaluate(batch, true);
        (loss, grad.expect("gradient requested"))
    }

    fn evaluate(&self, batch: &Batch, with_grad: bool) -> (f64, Option<Linear>) {
        assert_eq!(batch.dim, self.dim, "batch dimension mismatch");
        let n = batch.len();
        if n == 0 {
            return (0.0, with_grad.then(|| Linear::zeros(self.classes, self.dim)));
        }
        let chunk = |start: usize| {
            let end = (start + CHUNK).min(n);
            let mut loss = 0.0;
            let mut grad = with_grad.then(|| Linear::zeros(self.classes, self.dim));
            let mut p = vec![0.0; self.classes];
            for i in start..end {
                let x = batch.row(i);
                let y = batch.labels[i];
                self.probabilities(x, &mut p);
                loss -= p[y].max(LOG_FLOOR).ln();
                if let Some(g) = grad.as_mut() {
                    for (c, &pc) in p.iter().enumerate() {
                        let d = pc - if c == y { 1.0 } else { 0.0 };
                        g.bias[c] += d;
                        let row = &mut g.matrix[c * self.dim..(c + 1) * self.dim];
                        row.iter_mut().zip(x).for_each(|(w, v)| *w += d * v);
                    }
                }
            }
            (loss, grad)
        };
        let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
        #[cfg(feature = "parallel")]
        let partials: Vec<(f64, Option<Linear>)> = {
            use rayon::prelude::*;
            starts.par_iter().map(|&s| chunk(s)).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let partials: Vec<(f64, Option<Linear>)> = starts.iter().map(|&s| chunk(s)).collect();

        // fixed-order reduction keeps results independent of thread count
        let mut loss = 0.0;
        let mut grad = with_grad.then(|| Linear::zeros(self.classes, self.dim));
        for (l, g) in partials {
            loss += l;
            if let (Some(acc), Some(g)) = (grad.as_mut(), g) {
                acc.matrix.iter_mut().zip(&g.matrix).for_each(|(a, b)| *a += b);
                acc.bias.iter_mut().zip(&g.bias).for_each(|(a, b)| *a += b);
            }
        }
        let inv = 1.0 / n as f64;
        if let Some(g) = grad.as_mut() {
            g.matrix.iter_mut().for_each(|v| *v *= inv);
            g.bias.iter_mut().for_each(|v| *v *= inv);
        }
        (loss * inv, grad)
    }

    /// One gradient step, keeping every parameter at `f32` precision.
    pub fn step(&mut self, grad: &Linear, learning_rate: f64) {
        for (w, g) in self.matrix.iter_mut().zip(&grad.matrix) {
            *w = to_f32_precision(*w - learning_rate * g);
        }
        for (b, g) in self.bias.iter_mut().zip(&grad.bias) {
            *b = to_f32_precision(*b - learning_rate * g);
        }
    }
}

/// Outcome of a gradient-descent run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainLog {
    /// Training loss before each update, followed by the loss after the last one.
    pub losses: Vec<f64>,
    /// Index into `losses` of the returned weights.
    pub best_index: usize,
}

impl TrainLog {
    pub fn best_loss(&self) -> f64 {
        self.losses[self.best_index]
    }

    pub fn initial_loss(&self) -> f64 {
        self.losses[0]
    }
}

/// Full-batch gradient descent returning the lowest-loss iterate.
///
/// `extra_loss` is a constant added to every recorded loss (terms that do not
/// depend on these weights).
pub(crate) fn descend(
    init: Linear,
    batch: &Batch,
    learning_rate: f64,
    epochs: usize,
    extra_loss: f64,
) -> (Linear, TrainLog) {
    let mut w = init;
    let mut losses = Vec::with_capacity(epochs + 1);
    let mut best = w.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_index = 0;
    for _ in 0..epochs {
        let (loss, grad) = w.loss_and_gradient(batch);
        let loss = loss + extra_loss;
        if loss < best_loss {
            best_loss = loss;
            best = w.clone();
            best_index = losses.len();
        }
        losses.push(loss);
        w.step(&grad, learning_rate);
        if !w.is_finite() {
            break;
        }
    }
    if w.is_finite() {
        let loss = w.loss(batch) + extra_loss;
        if loss < best_loss {
            best = w;
            best_index = losses.len();
        }
        losses.push(loss);
    }
    (best, TrainLog { losses, best_index })
}

/// Largest relative deviation between the analytic gradient and central
/// finite differences with the given step.
pub(crate) fn gradient_check(w: &Linear, batch: &Batch, step: f64) -> f64 {
    let (_, analytic) = w.loss_and_gradient(batch);
    let mut probe = w.clone();
    let mut worst = 0.0f64;
    for i in 0..w.param_count() {
        let orig = w.param(i);
        *probe.param_mut(i) = orig + step;
        let up = probe.loss(batch);
        *probe.param_mut(i) = orig - step;
        let down = probe.loss(batch);
        *probe.param_mut(i) = orig;
        let numeric = (up - down) / (2.0 * step);
        let a = analytic.param(i);
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-7);
        worst = worst.max(rel);
    }
    worst
}
