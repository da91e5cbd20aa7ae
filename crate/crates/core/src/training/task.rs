use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::StreamRng;

/// A learning problem: parameter count, per-sample loss gradients over a
/// training set, and a held-out accuracy.
pub trait Task: Send + Sync {
    fn num_params(&self) -> usize;

    fn train_len(&self) -> usize;

    fn init_params(&self, rng: &mut StreamRng) -> Vec<f64>;

    /// Mean loss over the training samples in `batch`.
    fn loss(&self, w: &[f64], batch: &[usize]) -> f64;

    /// Mean gradient over the training samples in `batch`.
    fn gradient(&self, w: &[f64], batch: &[usize]) -> Vec<f64>;

    /// Held-out accuracy in [0, 1].
    fn accuracy(&self, w: &[f64]) -> f64;
}

/// `f(w) = ½‖w − w*‖²`, identical for every sample. Accuracy is the fraction
/// of coordinates within `tolerance` of the optimum.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub optimum: Vec<f64>,
    pub samples: usize,
    pub tolerance: f64,
}

impl Task for Quadratic {
    fn num_params(&self) -> usize {
        self.optimum.len()
    }

    fn train_len(&self) -> usize {
        self.samples
    }

    fn init_params(&self, _rng: &mut StreamRng) -> Vec<f64> {
        vec![0.0; self.optimum.len()]
    }

    fn loss(&self, w: &[f64], _batch: &[usize]) -> f64 {
        0.5 * w.iter().zip(&self.optimum).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
    }

    fn gradient(&self, w: &[f64], _batch: &[usize]) -> Vec<f64> {
        w.iter().zip(&self.optimum).map(|(a, b)| a - b).collect()
    }

    fn accuracy(&self, w: &[f64]) -> f64 {
        let close = w
            .iter()
            .zip(&self.optimum)
            .filter(|(a, b)| (*a - *b).abs() <= self.tolerance)
            .count();
        close as f64 / self.optimum.len().max(1) as f64
    }
}

/// Binary logistic regression on Gaussian features labelled by a random
/// hyperplane through the origin. Parameters are `d` weights then a bias.
#[derive(Debug, Clone)]
pub struct SyntheticLogistic {
    dim: usize,
    train_x: Vec<f64>,
    train_y: Vec<f64>,
    test_x: Vec<f64>,
    test_y: Vec<f64>,
}

impl SyntheticLogistic {
    pub const DIM: usize = 20;
    pub const TRAIN: usize = 2000;
    pub const TEST: usize = 1000;

    pub fn generate(dim: usize, n_train: usize, n_test: usize, rng: &mut StreamRng) -> Self {
        let truth: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let mut draw = |n: usize| {
            let mut x = Vec::with_capacity(n * dim);
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                let row: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                let margin: f64 = row.iter().zip(&truth).map(|(a, b)| a * b).sum();
                y.push(if margin > 0.0 { 1.0 } else { 0.0 });
                x.extend(row);
            }
            (x, y)
        };
        let (train_x, train_y) = draw(n_train);
        let (test_x, test_y) = draw(n_test);
        Self {
            dim,
            train_x,
            train_y,
            test_x,
            test_y,
        }
    }

    fn logit(&self, w: &[f64], row: &[f64]) -> f64 {
        row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + w[self.dim]
    }

    fn row<'a>(&self, x: &'a [f64], i: usize) -> &'a [f64] {
        &x[i * self.dim..(i + 1) * self.dim]
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Task for SyntheticLogistic {
    fn num_params(&self) -> usize {
        self.dim + 1
    }

    fn train_len(&self) -> usize {
        self.train_y.len()
    }

    fn init_params(&self, _rng: &mut StreamRng) -> Vec<f64> {
        vec![0.0; self.dim + 1]
    }

    fn loss(&self, w: &[f64], batch: &[usize]) -> f64 {
        let total: f64 = batch
            .iter()
            .map(|&i| {
                let z = self.logit(w, self.row(&self.train_x, i));
                // log(1 + e^z) − y·z, computed without overflow.
                let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
                softplus - self.train_y[i] * z
            })
            .sum();
        total / batch.len() as f64
    }

    fn gradient(&self, w: &[f64], batch: &[usize]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim + 1];
        for &i in batch {
            let row = self.row(&self.train_x, i);
            let err = sigmoid(self.logit(w, row)) - self.train_y[i];
            for (gj, xj) in g.iter_mut().zip(row) {
                *gj += err * xj;
            }
            g[self.dim] += err;
        }
        let n = batch.len() as f64;
        g.iter_mut().for_each(|v| *v /= n);
        g
    }

    fn accuracy(&self, w: &[f64]) -> f64 {
        let n = self.test_y.len();
        let correct = (0..n)
            .filter(|&i| {
                let predict = if self.logit(w, self.row(&self.test_x, i)) > 0.0 { 1.0 } else { 0.0 };
                predict == self.test_y[i]
            })
            .count();
        correct as f64 / n.max(1) as f64
    }
}

/// Central finite-difference gradient, used as an independent check.
#[cfg(test)]
pub(crate) fn finite_difference(task: &dyn Task, w: &[f64], batch: &[usize], h: f64) -> Vec<f64> {
    let mut probe = w.to_vec();
    (0..w.len())
        .map(|j| {
            probe[j] = w[j] + h;
            let up = task.loss(&probe, batch);
            probe[j] = w[j] - h;
            let down = task.loss(&probe, batch);
            probe[j] = w[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> StreamRng {
        StreamRng::seed_from_u64(seed)
    }

    #[test]
    fn quadratic_gradient_is_offset() {
        let q = Quadratic {
            optimum: vec![1.0, -2.0, 0.5],
            samples: 10,
            tolerance: 0.01,
        };
        assert_eq!(q.gradient(&[0.0, 0.0, 0.0], &[0]), vec![-1.0, 2.0, -0.5]);
        assert_eq!(q.accuracy(&[1.0, -2.0, 0.0]), 2.0 / 3.0);
    }

    #[test]
    fn logistic_matches_finite_differences() {
        let task = SyntheticLogistic::generate(20, 200, 50, &mut rng(1));
        let mut r = rng(2);
        let w: Vec<f64> = (0..21).map(|_| r.sample::<f64, _>(StandardNormal) * 0.3).collect();
        let batch: Vec<usize> = (0..64).collect();
        let g = task.gradient(&w, &batch);
        let fd = finite_difference(&task, &w, &batch, 1e-6);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-5 * a.abs().max(1e-3), "{a} vs {b}");
        }
    }

    #[test]
    fn logistic_labels_are_balanced_and_learnable() {
        let task = SyntheticLogistic::generate(20, 2000, 1000, &mut rng(3));
        let pos = task.train_y.iter().sum::<f64>() / 2000.0;
        assert!((pos - 0.5).abs() < 0.05);
        assert!((task.accuracy(&[0.0; 21]) - 0.5).abs() < 0.06);
    }
}
