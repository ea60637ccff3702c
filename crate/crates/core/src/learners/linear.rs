//! Multinomial logistic regression trained by full-batch gradient descent.

use crate::binfmt::Encoder;
use crate::data::VectorRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    n_classes: usize,
    dim: usize,
    /// `n_classes` rows of `dim` weights followed by a bias.
    weights: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(n_classes: usize, dim: usize) -> Self {
        LinearModel {
            n_classes,
            dim,
            weights: vec![0.0; n_classes * (dim + 1)],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn logits(&self, x: &[f64], out: &mut [f64]) {
        let stride = self.dim + 1;
        for (c, z) in out.iter_mut().enumerate() {
            let row = &self.weights[c * stride..(c + 1) * stride];
            let mut acc = row[self.dim];
            for (w, v) in row[..self.dim].iter().zip(x) {
                acc += w * v;
            }
            *z = acc;
        }
    }

    /// Cross-entropy of the true label.
    pub fn cross_entropy(&self, x: &[f64], label: usize) -> f64 {
        let mut z = vec![0.0; self.n_classes];
        self.logits(x, &mut z);
        log_sum_exp(&z) - z[label]
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let mut z = vec![0.0; self.n_classes];
        self.logits(x, &mut z);
        let mut best = 0;
        for c in 1..z.len() {
            if z[c] > z[best] {
                best = c;
            }
        }
        best
    }

    /// Mean cross-entropy plus `l2 / 2 * |W|^2` (biases unpenalized).
    pub fn objective(&self, records: &[&VectorRecord], l2: f64) -> f64 {
        let ce: f64 = records
            .iter()
            .map(|r| self.cross_entropy(&r.features, r.label))
            .sum::<f64>()
            / records.len() as f64;
        ce + 0.5 * l2 * self.penalty()
    }

    fn penalty(&self) -> f64 {
        let stride = self.dim + 1;
        (0..self.n_classes)
            .flat_map(|c| self.weights[c * stride..c * stride + self.dim].iter())
            .map(|w| w * w)
            .sum()
    }

    /// Runs `iterations` gradient steps from zero weights and returns the
    /// model with the objective measured after each step.
    pub fn fit(
        records: &[&VectorRecord],
        n_classes: usize,
        dim: usize,
        learning_rate: f64,
        iterations: usize,
        l2: f64,
    ) -> (Self, Vec<f64>) {
        let mut model = LinearModel::zeros(n_classes, dim);
        let stride = dim + 1;
        let n = records.len() as f64;
        let mut grad = vec![0.0; model.weights.len()];
        let mut z = vec![0.0; n_classes];
        let mut trace = Vec::with_capacity(iterations);
        for _ in 0..iterations {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for r in records {
                model.logits(&r.features, &mut z);
                let lse = log_sum_exp(&z);
                for c in 0..n_classes {
                    let residual = (z[c] - lse).exp() - if c == r.label { 1.0 } else { 0.0 };
                    let g = &mut grad[c * stride..(c + 1) * stride];
                    for (gd, x) in g[..dim].iter_mut().zip(&r.features) {
                        *gd += residual * x;
                    }
                    g[dim] += residual;
                }
            }
            for c in 0..n_classes {
                for d in 0..stride {
                    let k = c * stride + d;
                    let reg = if d < dim { l2 * model.weights[k] } else { 0.0 };
                    model.weights[k] -= learning_rate * (grad[k] / n + reg);
                }
            }
            trace.push(model.objective(records, l2));
        }
        (model, trace)
    }

    pub(crate) fn dump_into(&self, e: &mut Encoder) {
        e.u64(self.n_classes as u64).u64(self.dim as u64);
        for &w in &self.weights {
            e.f64(w);
        }
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}
