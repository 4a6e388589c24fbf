//! Whole-cloud inference: split, normalize, classify, reassemble.

use super::config::ModelConfig;
use super::network::{argmax_labels, forward};
use super::params::ModelParams;
use crate::cloud::{ClassLabel, LabeledCloud};
use crate::error::{contract, Result};
use crate::scalar::Real;
use crate::split::{integrate, normalize_chunk, plan_split, split, Chunk};

/// Labels for one already normalized chunk.
pub fn predict_chunk<T: Real>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    chunk: &LabeledCloud<T>,
    seed: u64,
) -> Result<Vec<ClassLabel>> {
    Ok(argmax_labels(&forward(params, config, chunk, seed)?))
}

/// Per-point labels for a featurized cloud in its original coordinates.
///
/// The result keeps the input points and linearity, with labels replaced.
pub fn predict<T: Real>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    cloud: &LabeledCloud<T>,
    max_point_num: usize,
    seed: u64,
) -> Result<LabeledCloud<T>> {
    if cloud.linearity().is_none() {
        return contract("prediction needs the linearity channel; featurize first");
    }
    let plan = plan_split(cloud.len(), max_point_num)?;
    if plan
        .chunk_sizes
        .iter()
        .any(|&s| s < config.min_chunk_points())
    {
        return contract(format!(
            "chunks of {:?} points are too small for {} centroids",
            plan.chunk_sizes,
            config.min_chunk_points()
        ));
    }
    let chunks = split(cloud, &plan)?;
    let mut labeled = Vec::with_capacity(chunks.len());
    for (k, chunk) in chunks.into_iter().enumerate() {
        let (norm, _) = normalize_chunk(&chunk.cloud)?;
        let labels = predict_chunk(params, config, &norm, seed.wrapping_add(k as u64))?;
        labeled.push(Chunk {
            cloud: chunk.cloud.without_labels().with_labels(labels)?,
            indices: chunk.indices,
        });
    }
    integrate(&labeled, cloud.len())
}
