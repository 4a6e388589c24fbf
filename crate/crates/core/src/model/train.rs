//! Minibatch training with step-decayed learning rate.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, Optimizer, TrainConfig};
use super::network::{loss_and_gradient, plan_sampling};
use super::params::ModelParams;
use crate::cloud::LabeledCloud;
use crate::error::{contract, Error, Result};
use crate::scalar::Real;
use crate::split::{normalize_chunk, plan_split, split};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean loss of every epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// Splits a labeled, featurized cloud into normalized training chunks.
pub fn prepare_training_chunks<T: Real>(
    cloud: &LabeledCloud<T>,
    max_point_num: usize,
) -> Result<Vec<LabeledCloud<T>>> {
    if cloud.labels().is_none() || cloud.linearity().is_none() {
        return contract("training clouds need labels and linearity");
    }
    let plan = plan_split(cloud.len(), max_point_num)?;
    split(cloud, &plan)?
        .iter()
        .map(|c| normalize_chunk(&c.cloud).map(|(n, _)| n))
        .collect()
}

struct Adam<T> {
    m: ModelParams<T>,
    v: ModelParams<T>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl<T: Real> Adam<T> {
    fn new(p: &ModelParams<T>) -> Self {
        Self {
            m: p.zeros_like(),
            v: p.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ModelParams<T>, grad: &ModelParams<T>, lr: f64) {
        self.t += 1;
        let (b1, b2) = (T::lit(BETA1), T::lit(BETA2));
        let c1 = T::lit(1.0 - BETA1.powi(self.t));
        let c2 = T::lit(1.0 - BETA2.powi(self.t));
        let (lr, eps) = (T::lit(lr), T::lit(ADAM_EPS));
        for (((p, g), m), v) in params
            .tensors
            .iter_mut()
            .zip(&grad.tensors)
            .zip(&mut self.m.tensors)
            .zip(&mut self.v.tensors)
        {
            for k in 0..p.data.len() {
                let gk = g.data[k];
                m.data[k] = b1 * m.data[k] + (T::one() - b1) * gk;
                v.data[k] = b2 * v.data[k] + (T::one() - b2) * gk * gk;
                let mh = m.data[k] / c1;
                let vh = v.data[k] / c2;
                p.data[k] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

fn step_seed(seed: u64, epoch: usize, chunk: usize) -> u64 {
    seed ^ ((epoch as u64) << 32 | chunk as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Trains from `init` (or a fresh seeded initialization) on normalized chunks.
///
/// `on_epoch` receives the zero-based epoch and its mean loss.
pub fn train_with_progress<T: Real>(
    config: &ModelConfig,
    train_cfg: &TrainConfig,
    chunks: &[LabeledCloud<T>],
    init: Option<ModelParams<T>>,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(ModelParams<T>, TrainReport)> {
    config.validate()?;
    train_cfg.validate()?;
    if chunks.is_empty() {
        return contract("no training chunks");
    }
    for (c, chunk) in chunks.iter().enumerate() {
        if chunk.labels().is_none() || chunk.linearity().is_none() {
            return contract(format!("chunk {c} lacks labels or linearity"));
        }
        if chunk.len() < config.min_chunk_points() {
            return contract(format!(
                "chunk {c} has {} points, fewer than {} centroids",
                chunk.len(),
                config.min_chunk_points()
            ));
        }
    }
    let mut params = match init {
        Some(p) => {
            p.check_shapes(config)?;
            p
        }
        None => ModelParams::init(config, train_cfg.seed)?,
    };
    let mut adam = Adam::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let mut order: Vec<usize> = (0..chunks.len()).collect();
    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(train_cfg.epochs),
        steps: 0,
    };
    for epoch in 0..train_cfg.epochs {
        let lr = train_cfg.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(train_cfg.batch) {
            let mut grad = params.zeros_like();
            for &c in batch {
                let plan = plan_sampling(
                    config,
                    chunks[c].points(),
                    step_seed(train_cfg.seed, epoch, c),
                )?;
                let (l, g) =
                    loss_and_gradient(&params, config, &chunks[c], &plan, train_cfg.class_weights)?;
                let l = l.to_f64_lossless();
                if !l.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "loss at epoch {epoch}, chunk {c}"
                    )));
                }
                total += l;
                grad.add_scaled(&g, T::one());
            }
            grad.scale(T::one() / T::from_usize_lossy(batch.len()));
            match train_cfg.optimizer {
                Optimizer::Adam => adam.step(&mut params, &grad, lr),
                Optimizer::Sgd => params.add_scaled(&grad, -T::lit(lr)),
            }
            if !params.is_finite() {
                return Err(Error::NonFinite(format!(
                    "parameters after epoch {epoch} step"
                )));
            }
            report.steps += 1;
        }
        let mean = total / chunks.len() as f64;
        report.epoch_losses.push(mean);
        on_epoch(epoch, mean);
    }
    Ok((params, report))
}

pub fn train<T: Real>(
    config: &ModelConfig,
    train_cfg: &TrainConfig,
    chunks: &[LabeledCloud<T>],
) -> Result<(ModelParams<T>, TrainReport)> {
    train_with_progress(config, train_cfg, chunks, None, |_, _| {})
}
