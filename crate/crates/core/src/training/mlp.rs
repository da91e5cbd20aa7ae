//! Two-layer perceptron (tanh hidden layer, softmax output) on MNIST-style images.

use std::path::Path;

use rand::Rng;

use super::idx::{read_images, read_labels};
use super::task::Task;
use crate::rng::StreamRng;
use crate::{Error, Result};

pub const CLASSES: usize = 10;

#[derive(Debug, Clone)]
pub struct MnistMlp {
    inputs: usize,
    hidden: usize,
    train_x: Vec<f64>,
    train_y: Vec<u8>,
    test_x: Vec<f64>,
    test_y: Vec<u8>,
}

impl MnistMlp {
    pub const DEFAULT_HIDDEN: usize = 12;

    /// Build from in-memory data; pixel rows are `inputs` values in [0, 1].
    pub fn new(inputs: usize, hidden: usize, train: (Vec<f64>, Vec<u8>), test: (Vec<f64>, Vec<u8>)) -> Result<Self> {
        for (x, y) in [&train, &test] {
            if x.len() != y.len() * inputs {
                return Err(Error::invalid("pixel and label counts disagree"));
            }
            if y.iter().any(|&c| c as usize >= CLASSES) {
                return Err(Error::invalid("label outside 0..9"));
            }
        }
        if inputs == 0 || hidden == 0 {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        Ok(Self {
            inputs,
            hidden,
            train_x: train.0,
            train_y: train.1,
            test_x: test.0,
            test_y: test.1,
        })
    }

    /// Load the first `n_train` / `n_test` examples from the four standard
    /// MNIST IDX files in `dir`.
    pub fn load(dir: &Path, n_train: usize, n_test: usize, hidden: usize) -> Result<Self> {
        let load_split = |images: &str, labels: &str, n: usize| -> Result<(usize, Vec<f64>, Vec<u8>)> {
            let img = read_images(&dir.join(images))?;
            let lbl = read_labels(&dir.join(labels))?;
            if img.count != lbl.len() {
                return Err(Error::invalid(format!(
                    "{images} has {} images but {labels} has {} labels",
                    img.count,
                    lbl.len()
                )));
            }
            let n = n.min(img.count);
            let per = img.rows * img.cols;
            let x = img.pixels[..n * per].iter().map(|&p| p as f64 / 255.0).collect();
            Ok((per, x, lbl[..n].to_vec()))
        };
        let (per, tx, ty) = load_split("train-images-idx3-ubyte", "train-labels-idx1-ubyte", n_train)?;
        let (per_test, vx, vy) = load_split("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", n_test)?;
        if per != per_test {
            return Err(Error::invalid("train and test images differ in size"));
        }
        Self::new(per, hidden, (tx, ty), (vx, vy))
    }

    fn split<'a>(&self, w: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64], &'a [f64]) {
        let (w1, rest) = w.split_at(self.hidden * self.inputs);
        let (b1, rest) = rest.split_at(self.hidden);
        let (w2, b2) = rest.split_at(CLASSES * self.hidden);
        (w1, b1, w2, b2)
    }

    /// Hidden activations and class probabilities for one input row.
    fn forward(&self, w: &[f64], x: &[f64]) -> (Vec<f64>, [f64; CLASSES]) {
        let (w1, b1, w2, b2) = self.split(w);
        let h: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &w1[j * self.inputs..(j + 1) * self.inputs];
                (row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b1[j]).tanh()
            })
            .collect();
        let mut z = [0.0; CLASSES];
        for (c, zc) in z.iter_mut().enumerate() {
            let row = &w2[c * self.hidden..(c + 1) * self.hidden];
            *zc = row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() + b2[c];
        }
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for zc in z.iter_mut() {
            *zc = (*zc - max).exp();
            sum += *zc;
        }
        z.iter_mut().for_each(|p| *p /= sum);
        (h, z)
    }

    fn train_row(&self, i: usize) -> &[f64] {
        &self.train_x[i * self.inputs..(i + 1) * self.inputs]
    }
}

impl Task for MnistMlp {
    fn num_params(&self) -> usize {
        self.hidden * self.inputs + self.hidden + CLASSES * self.hidden + CLASSES
    }

    fn train_len(&self) -> usize {
        self.train_y.len()
    }

    fn init_params(&self, rng: &mut StreamRng) -> Vec<f64> {
        let a1 = (6.0 / (self.inputs + self.hidden) as f64).sqrt();
        let a2 = (6.0 / (self.hidden + CLASSES) as f64).sqrt();
        let mut w = Vec::with_capacity(self.num_params());
        w.extend((0..self.hidden * self.inputs).map(|_| rng.random_range(-a1..a1)));
        w.extend(std::iter::repeat_n(0.0, self.hidden));
        w.extend((0..CLASSES * self.hidden).map(|_| rng.random_range(-a2..a2)));
        w.extend(std::iter::repeat_n(0.0, CLASSES));
        w
    }

    fn loss(&self, w: &[f64], batch: &[usize]) -> f64 {
        let total: f64 = batch
            .iter()
            .map(|&i| {
                let (_, p) = self.forward(w, self.train_row(i));
                -p[self.train_y[i] as usize].max(1e-300).ln()
            })
            .sum();
        total / batch.len() as f64
    }

    fn gradient(&self, w: &[f64], batch: &[usize]) -> Vec<f64> {
        let mut g = vec![0.0; self.num_params()];
        let (_, _, w2, _) = self.split(w);
        let n1 = self.hidden * self.inputs;
        let o_w2 = n1 + self.hidden;
        let o_b2 = o_w2 + CLASSES * self.hidden;
        for &i in batch {
            let x = self.train_row(i);
            let (h, mut d_out) = self.forward(w, x);
            d_out[self.train_y[i] as usize] -= 1.0;
            let mut d_hidden = vec![0.0; self.hidden];
            for (c, &dz) in d_out.iter().enumerate() {
                g[o_b2 + c] += dz;
                for j in 0..self.hidden {
                    g[o_w2 + c * self.hidden + j] += dz * h[j];
                    d_hidden[j] += dz * w2[c * self.hidden + j];
                }
            }
            for j in 0..self.hidden {
                let da = d_hidden[j] * (1.0 - h[j] * h[j]);
                g[n1 + j] += da;
                if da != 0.0 {
                    for (gw, xk) in g[j * self.inputs..(j + 1) * self.inputs].iter_mut().zip(x) {
                        *gw += da * xk;
                    }
                }
            }
        }
        let n = batch.len() as f64;
        g.iter_mut().for_each(|v| *v /= n);
        g
    }

    fn accuracy(&self, w: &[f64]) -> f64 {
        let n = self.test_y.len();
        let correct = (0..n)
            .filter(|&i| {
                let (_, p) = self.forward(w, &self.test_x[i * self.inputs..(i + 1) * self.inputs]);
                let best = (0..CLASSES).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
                best == self.test_y[i] as usize
            })
            .count();
        correct as f64 / n.max(1) as f64
    }
}
