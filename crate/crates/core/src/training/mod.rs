//! signSGD with majority vote: every round each device sends the signs of its
//! mini-batch gradient, the server forms the per-coordinate majority, and all
//! devices step by `−η` times that vote.

pub mod idx;
mod mlp;
mod task;
mod transport;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

pub use mlp::MnistMlp;
pub use task::{Quadratic, SyntheticLogistic, Task};
pub use transport::{LinkChannel, ObdaLink, PpmLink, Transport};

use crate::rng::{Purpose, SeedTree, StreamRng};
use crate::{Error, Result, SignVector};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub eta: f64,
    pub n_b: usize,
    pub rounds: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub test_accuracy: f64,
    /// Fraction of coordinates where the delivered vote differs from the ideal one.
    pub mv_error_rate: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub records: Vec<RoundRecord>,
    pub model: ModelState,
}

/// A device's share of the training set, consumed in shuffled epochs.
#[derive(Debug, Clone)]
pub struct Shard {
    indices: Vec<usize>,
    order: Vec<usize>,
    cursor: usize,
}

impl Shard {
    pub fn new(indices: Vec<usize>) -> Self {
        let order = indices.clone();
        let cursor = order.len();
        Self { indices, order, cursor }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Next `n_b` samples without replacement; reshuffles when the epoch runs out.
    /// Returned indices are sorted so the batch mean does not depend on draw order.
    pub fn next_batch<R: Rng + ?Sized>(&mut self, n_b: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.is_empty() {
            return Err(Error::invalid("empty shard"));
        }
        if n_b == 0 || n_b > self.len() {
            return Err(Error::invalid(format!(
                "batch size {n_b} outside 1..={}",
                self.len()
            )));
        }
        if self.cursor + n_b > self.order.len() {
            self.order.copy_from_slice(&self.indices);
            self.order.shuffle(rng);
            self.cursor = 0;
        }
        let mut batch = self.order[self.cursor..self.cursor + n_b].to_vec();
        self.cursor += n_b;
        batch.sort_unstable();
        Ok(batch)
    }
}

/// Random split of `0..n` into `k` disjoint shards of `n / k` samples each.
pub fn partition<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Vec<Shard>> {
    if k == 0 {
        return Err(Error::invalid("need at least one device"));
    }
    let d = n / k;
    if d == 0 {
        return Err(Error::invalid(format!("{n} samples cannot fill {k} shards")));
    }
    let mut all: Vec<usize> = (0..n).collect();
    all.shuffle(rng);
    Ok(all.chunks_exact(d).take(k).map(|c| Shard::new(c.to_vec())).collect())
}

/// Mini-batch mean gradient on the device's shard.
pub fn local_gradient<R: Rng + ?Sized>(
    task: &dyn Task,
    model: &ModelState,
    shard: &mut Shard,
    n_b: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let batch = shard.next_batch(n_b, rng)?;
    Ok(task.gradient(&model.w, &batch))
}

/// Per-coordinate sign of the vote sum, ties broken at random.
pub fn ideal_mv<R: Rng + ?Sized>(votes: &[SignVector], rng: &mut R) -> Result<SignVector> {
    let q = votes.first().map(SignVector::len).ok_or_else(|| Error::invalid("no votes"))?;
    if votes.iter().any(|v| v.len() != q) {
        return Err(Error::invalid("vote vectors differ in length"));
    }
    let signs = (0..q)
        .map(|i| {
            let sum: i64 = votes.iter().map(|v| v.as_slice()[i] as i64).sum();
            crate::sign_or_random(sum as f64, rng)
        })
        .collect();
    SignVector::new(signs)
}

/// `w ← w − η·mv`.
pub fn apply_update(model: &ModelState, mv: &SignVector, eta: f64) -> ModelState {
    assert_eq!(model.w.len(), mv.len(), "vote length differs from model size");
    ModelState {
        w: model.w.iter().zip(mv.as_slice()).map(|(w, &s)| w - eta * s as f64).collect(),
    }
}

struct Device {
    shard: Shard,
    batch_rng: StreamRng,
}

fn validate(cfg: &TrainConfig, task: &dyn Task, transport: &Transport) -> Result<()> {
    if !(cfg.eta.is_finite() && cfg.eta > 0.0) {
        return Err(Error::config(format!("learning rate {} must be positive", cfg.eta)));
    }
    if cfg.rounds == 0 || cfg.k == 0 || cfg.n_b == 0 {
        return Err(Error::config("rounds, K and n_b must be positive"));
    }
    let d = task.train_len() / cfg.k;
    if cfg.n_b > d {
        return Err(Error::config(format!(
            "batch size {} exceeds the {d} samples per device ({} samples over {} devices)",
            cfg.n_b,
            task.train_len(),
            cfg.k
        )));
    }
    if let Some(q) = transport.q() {
        if q != task.num_params() {
            return Err(Error::config(format!(
                "transport is laid out for {q} parameters but the model has {}",
                task.num_params()
            )));
        }
    }
    Ok(())
}

pub fn run_training(cfg: &TrainConfig, task: &dyn Task, transport: &Transport, seeds: &SeedTree) -> Result<TrainingRun> {
    validate(cfg, task, transport)?;
    let shards = partition(task.train_len(), cfg.k, &mut seeds.stream(Purpose::Partition, 0, 0))?;
    let mut devices: Vec<Device> = shards
        .into_iter()
        .enumerate()
        .map(|(k, shard)| Device {
            shard,
            batch_rng: seeds.stream(Purpose::Batch, 0, k as u64),
        })
        .collect();
    let mut model = ModelState {
        w: task.init_params(&mut seeds.stream(Purpose::Init, 0, 0)),
    };
    let mut records = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        let start = Instant::now();
        let r = round as u64;
        let votes: Vec<SignVector> = devices
            .par_iter_mut()
            .enumerate()
            .map(|(k, dev)| {
                let g = local_gradient(task, &model, &mut dev.shard, cfg.n_b, &mut dev.batch_rng)?;
                Ok(SignVector::from_values(
                    &g,
                    &mut seeds.stream(Purpose::GradientTie, r, k as u64),
                ))
            })
            .collect::<Result<_>>()?;
        let reference = ideal_mv(&votes, &mut seeds.stream(Purpose::MajorityTie, r, 0))?;
        let delivered = transport.aggregate(r, &votes, seeds)?;
        model = apply_update(&model, &delivered, cfg.eta);
        records.push(RoundRecord {
            round,
            test_accuracy: task.accuracy(&model.w),
            mv_error_rate: delivered.disagreement(&reference),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(TrainingRun { records, model })
}
