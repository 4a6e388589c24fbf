//! Forward and reverse passes of the set-abstraction segmentation network.
//!
//! Per level: sample centroids, group neighbors at every scale, run each
//! scale's shared point-wise transform (dense + ReLU layers), max-pool per
//! group and concatenate scales. Feature propagation then interpolates the
//! coarse features back level by level (inverse-distance weights over the 3
//! nearest centroids), concatenating skip features, and a linear head emits
//! two class scores per point.
//!
//! Gradients are derived by hand layer by layer; the centroid choice is an
//! input (a [`SamplingPlan`]) so the network is a deterministic function of
//! its parameters.

use ndarray::{concatenate, s, Array2, ArrayView1, ArrayView2, Axis};

use super::config::{ModelConfig, NUM_CLASSES};
use super::group::{ball_group_indexed, interpolation_weights, Groups, Interpolation};
use super::params::{LayerRef, Layout, ModelParams};
use crate::cloud::{ClassLabel, LabeledCloud, Point3};
use crate::error::{contract, Result};
use crate::sampling::{farthest_point_sampling, random_centroids, Strategy};
use crate::scalar::Real;
use crate::spatial::SpatialIndex;

/// Centroid indices per level; level `l` indexes into the positions of
/// level `l - 1` (the input points for the first level).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingPlan {
    pub levels: Vec<Vec<usize>>,
}

fn level_seed(seed: u64, level: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((level as u64 + 1).wrapping_mul(0xBF58_476D_1CE4_E5B9))
}

pub fn plan_sampling<T: Real>(
    config: &ModelConfig,
    points: &[Point3<T>],
    seed: u64,
) -> Result<SamplingPlan> {
    config.validate()?;
    if points.len() < config.min_chunk_points() {
        return contract(format!(
            "chunk of {} points is smaller than the {} first-level centroids",
            points.len(),
            config.min_chunk_points()
        ));
    }
    let mut levels = Vec::with_capacity(config.levels.len());
    let mut pos: Vec<Point3<T>> = points.to_vec();
    for (l, level) in config.levels.iter().enumerate() {
        let k = level.num_centroids;
        let picked = match config.sampling {
            Strategy::Random => random_centroids(pos.len(), k, level_seed(seed, l))?,
            Strategy::Fps => farthest_point_sampling(&pos, k, 0)?,
        };
        pos = picked.indices.iter().map(|&i| pos[i]).collect();
        levels.push(picked.indices);
    }
    Ok(SamplingPlan { levels })
}

fn dense<T: Real>(x: &Array2<T>, w: ArrayView2<T>, b: ArrayView1<T>, relu: bool) -> Array2<T> {
    let mut z = x.dot(&w);
    z += &b;
    if relu {
        z.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() });
    }
    z
}

/// Activations of a dense stack; `acts[0]` is the input.
fn mlp_forward<T: Real>(
    params: &ModelParams<T>,
    layers: &[LayerRef],
    x: Array2<T>,
    relu_last: bool,
) -> Vec<Array2<T>> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(x);
    for (j, l) in layers.iter().enumerate() {
        let relu = relu_last || j + 1 < layers.len();
        let next = dense(
            &acts[j],
            params.tensors[l.w].matrix(),
            params.tensors[l.b].vector(),
            relu,
        );
        acts.push(next);
    }
    acts
}

/// Accumulates weight gradients and returns the gradient w.r.t. the input
/// (`None` when `need_input` is false).
fn mlp_backward<T: Real>(
    params: &ModelParams<T>,
    grads: &mut ModelParams<T>,
    layers: &[LayerRef],
    acts: &[Array2<T>],
    mut d: Array2<T>,
    relu_last: bool,
    need_input: bool,
) -> Option<Array2<T>> {
    for j in (0..layers.len()).rev() {
        let l = layers[j];
        let relu = relu_last || j + 1 < layers.len();
        if relu {
            d.zip_mut_with(&acts[j + 1], |g, &a| {
                if !(a > T::zero()) {
                    *g = T::zero();
                }
            });
        }
        let dw = acts[j].t().dot(&d);
        let mut gw = grads.tensors[l.w].matrix_mut();
        gw += &dw;
        let db = d.sum_axis(Axis(0));
        for (g, v) in grads.tensors[l.b].data.iter_mut().zip(db.iter()) {
            *g += *v;
        }
        if j > 0 || need_input {
            d = d.dot(&params.tensors[l.w].matrix().t());
        }
    }
    need_input.then_some(d)
}

/// Column-wise max over each run of `m` rows; also returns the winning row.
fn max_pool<T: Real>(y: &Array2<T>, groups: usize, m: usize) -> (Array2<T>, Array2<usize>) {
    let w = y.ncols();
    let mut out = Array2::from_elem((groups, w), T::neg_infinity());
    let mut arg = Array2::zeros((groups, w));
    for g in 0..groups {
        for r in g * m..(g + 1) * m {
            let row = y.row(r);
            for c in 0..w {
                if row[c] > out[[g, c]] {
                    out[[g, c]] = row[c];
                    arg[[g, c]] = r;
                }
            }
        }
    }
    (out, arg)
}

struct ScaleCache<T> {
    groups: Groups<T>,
    acts: Vec<Array2<T>>,
    argmax: Array2<usize>,
}

struct FpCache<T> {
    interp: Interpolation<T>,
    source_width: usize,
    acts: Vec<Array2<T>>,
}

/// Everything the reverse pass needs.
pub struct ForwardCache<T> {
    layout: Layout,
    /// `features[l]` lives on the level-`l` positions; `features[0]` is the linearity column.
    features: Vec<Array2<T>>,
    levels: Vec<Vec<ScaleCache<T>>>,
    fps: Vec<FpCache<T>>,
    head_input: Array2<T>,
}

fn point_features<T: Real>(chunk: &LabeledCloud<T>) -> Result<(Array2<T>, Array2<T>)> {
    let lin = chunk
        .linearity()
        .ok_or_else(|| crate::Error::Contract("chunk lacks the linearity channel".into()))?;
    let n = chunk.len();
    let feat = Array2::from_shape_fn((n, 1), |(i, _)| lin[i]);
    let skip = Array2::from_shape_fn((n, 4), |(i, c)| match c {
        3 => lin[i],
        a => chunk.points()[i].axis(a),
    });
    Ok((feat, skip))
}

/// Class scores (`n × 2`) for a normalized chunk with a fixed centroid plan.
pub fn forward_with_plan<T: Real>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    chunk: &LabeledCloud<T>,
    plan: &SamplingPlan,
) -> Result<(Array2<T>, ForwardCache<T>)> {
    params.check_shapes(config)?;
    let layout = Layout::new(config);
    let (feat0, skip0) = point_features(chunk)?;
    let levels = config.levels.len();
    if plan.levels.len() != levels {
        return contract("sampling plan has the wrong number of levels");
    }

    let mut positions: Vec<Vec<Point3<T>>> = vec![chunk.points().to_vec()];
    let mut features = vec![feat0];
    let mut level_caches = Vec::with_capacity(levels);
    for (l, level) in config.levels.iter().enumerate() {
        let prev = &positions[l];
        let cent = &plan.levels[l];
        if cent.len() != level.num_centroids {
            return contract(format!("level {l}: plan has {} centroids", cent.len()));
        }
        let index = SpatialIndex::new(prev)?;
        let prev_feat = &features[l];
        let channels = prev_feat.ncols();
        let mut pooled = Vec::with_capacity(level.scales.len());
        let mut scale_caches = Vec::with_capacity(level.scales.len());
        for (s, sc) in level.scales.iter().enumerate() {
            let r = T::lit(sc.radius);
            let groups = ball_group_indexed(cent, &index, r, sc.max_group)?;
            let rows = groups.members.len();
            let inv_r = T::one() / r;
            let mut x = Array2::zeros((rows, 3 + channels));
            for (row, (&m, rel)) in groups.members.iter().zip(&groups.relative).enumerate() {
                let mut xr = x.row_mut(row);
                xr[0] = rel.x * inv_r;
                xr[1] = rel.y * inv_r;
                xr[2] = rel.z * inv_r;
                xr.slice_mut(s![3..]).assign(&prev_feat.row(m));
            }
            let acts = mlp_forward(params, &layout.sa[l][s], x, true);
            let (p, argmax) = max_pool(acts.last().expect("layers"), cent.len(), sc.max_group);
            pooled.push(p);
            scale_caches.push(ScaleCache {
                groups,
                acts,
                argmax,
            });
        }
        let views: Vec<_> = pooled.iter().map(|p| p.view()).collect();
        features.push(concatenate(Axis(1), &views).expect("same row count"));
        positions.push(cent.iter().map(|&i| prev[i]).collect());
        level_caches.push(scale_caches);
    }

    let mut cur = features[levels].clone();
    let mut fps = Vec::with_capacity(levels);
    for j in 0..levels {
        let t = levels - 1 - j;
        let interp = interpolation_weights(&positions[t], &positions[t + 1])?;
        let width = cur.ncols();
        let n_t = positions[t].len();
        let mut inter = Array2::zeros((n_t, width));
        for i in 0..n_t {
            let mut row = inter.row_mut(i);
            for q in 0..interp.k {
                let src = interp.neighbors[i * interp.k + q];
                let w = interp.weights[i * interp.k + q];
                row.scaled_add(w, &cur.row(src));
            }
        }
        let skip = if t == 0 { &skip0 } else { &features[t] };
        let x = concatenate![Axis(1), inter, skip.view()];
        let acts = mlp_forward(params, &layout.fp[j], x, true);
        cur = acts.last().expect("layers").clone();
        fps.push(FpCache {
            interp,
            source_width: width,
            acts,
        });
    }

    let head = layout.head;
    let scores = dense(
        &cur,
        params.tensors[head.w].matrix(),
        params.tensors[head.b].vector(),
        false,
    );
    let cache = ForwardCache {
        layout,
        features,
        levels: level_caches,
        fps,
        head_input: cur,
    };
    Ok((scores, cache))
}

/// Scores with centroids drawn from `seed`.
pub fn forward<T: Real>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    chunk: &LabeledCloud<T>,
    seed: u64,
) -> Result<Array2<T>> {
    let plan = plan_sampling(config, chunk.points(), seed)?;
    Ok(forward_with_plan(params, config, chunk, &plan)?.0)
}

/// Parameter gradients given the gradient of the loss w.r.t. the scores.
pub fn backward_from_scores<T: Real>(
    params: &ModelParams<T>,
    cache: &ForwardCache<T>,
    d_scores: &Array2<T>,
) -> ModelParams<T> {
    let mut grads = params.zeros_like();
    let layout = &cache.layout;
    let levels = cache.levels.len();

    let head = layout.head;
    {
        let mut gw = grads.tensors[head.w].matrix_mut();
        gw += &cache.head_input.t().dot(d_scores);
        let db = d_scores.sum_axis(Axis(0));
        for (g, v) in grads.tensors[head.b].data.iter_mut().zip(db.iter()) {
            *g += *v;
        }
    }
    let mut d_cur = d_scores.dot(&params.tensors[head.w].matrix().t());

    let mut d_features: Vec<Array2<T>> = cache
        .features
        .iter()
        .map(|f| Array2::zeros(f.raw_dim()))
        .collect();

    for j in (0..levels).rev() {
        let t = levels - 1 - j;
        let fc = &cache.fps[j];
        let dx = mlp_backward(
            params,
            &mut grads,
            &layout.fp[j],
            &fc.acts,
            d_cur,
            true,
            true,
        )
        .expect("input gradient");
        let w = fc.source_width;
        if t >= 1 {
            d_features[t] += &dx.slice(s![.., w..]);
        }
        let n_src = if j == 0 {
            cache.features[levels].nrows()
        } else {
            cache.fps[j - 1].acts.last().expect("layers").nrows()
        };
        let mut d_src = Array2::zeros((n_src, w));
        let it = &fc.interp;
        for i in 0..dx.nrows() {
            let g = dx.slice(s![i, ..w]);
            for q in 0..it.k {
                let src = it.neighbors[i * it.k + q];
                d_src.row_mut(src).scaled_add(it.weights[i * it.k + q], &g);
            }
        }
        if j == 0 {
            d_features[levels] += &d_src;
            d_cur = Array2::zeros((0, 0));
        } else {
            d_cur = d_src;
        }
    }

    for l in (0..levels).rev() {
        let d_level = d_features[l + 1].clone();
        let mut offset = 0;
        for (s, sc) in cache.levels[l].iter().enumerate() {
            let out = sc.acts.last().expect("layers");
            let width = out.ncols();
            let mut dy = Array2::zeros(out.raw_dim());
            for g in 0..sc.argmax.nrows() {
                for c in 0..width {
                    dy[[sc.argmax[[g, c]], c]] += d_level[[g, offset + c]];
                }
            }
            offset += width;
            let need_input = l > 0;
            let dx = mlp_backward(
                params,
                &mut grads,
                &layout.sa[l][s],
                &sc.acts,
                dy,
                true,
                need_input,
            );
            if let Some(dx) = dx {
                let target = &mut d_features[l];
                for (row, &m) in sc.groups.members.iter().enumerate() {
                    let mut tr = target.row_mut(m);
                    tr += &dx.slice(s![row, 3..]);
                }
            }
        }
    }
    grads
}

fn weight_of<T: Real>(class_weights: Option<[f64; 2]>, label: ClassLabel) -> T {
    class_weights.map_or(T::one(), |w| T::lit(w[label.index()]))
}

/// Weighted mean softmax cross-entropy and its gradient w.r.t. the scores.
///
/// The mean divides by the summed weights of the true classes.
pub fn loss_and_grad<T: Real>(
    scores: &Array2<T>,
    labels: &[ClassLabel],
    class_weights: Option<[f64; 2]>,
) -> Result<(T, Array2<T>)> {
    if scores.nrows() != labels.len() || scores.ncols() != NUM_CLASSES {
        return contract(format!(
            "{} score rows for {} labels",
            scores.nrows(),
            labels.len()
        ));
    }
    if labels.is_empty() {
        return contract("loss over zero points");
    }
    let total_w = labels
        .iter()
        .fold(T::zero(), |a, &l| a + weight_of::<T>(class_weights, l));
    let mut loss = T::zero();
    let mut grad = Array2::zeros(scores.raw_dim());
    for (i, &label) in labels.iter().enumerate() {
        let row = scores.row(i);
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let sum_exp = row.iter().fold(T::zero(), |a, &v| a + (v - max).exp());
        let log_z = max + sum_exp.ln();
        let w = weight_of::<T>(class_weights, label) / total_w;
        loss += w * (log_z - row[label.index()]);
        for c in 0..NUM_CLASSES {
            let p = (row[c] - log_z).exp();
            let onehot = if c == label.index() {
                T::one()
            } else {
                T::zero()
            };
            grad[[i, c]] = w * (p - onehot);
        }
    }
    Ok((loss, grad))
}

pub fn loss<T: Real>(
    scores: &Array2<T>,
    labels: &[ClassLabel],
    class_weights: Option<[f64; 2]>,
) -> Result<T> {
    Ok(loss_and_grad(scores, labels, class_weights)?.0)
}

/// Loss and parameter gradient for a labeled, normalized chunk.
pub fn loss_and_gradient<T: Real>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    chunk: &LabeledCloud<T>,
    plan: &SamplingPlan,
    class_weights: Option<[f64; 2]>,
) -> Result<(T, ModelParams<T>)> {
    let labels = chunk
        .labels()
        .ok_or_else(|| crate::Error::Contract("training chunk has no labels".into()))?;
    let (scores, cache) = forward_with_plan(params, config, chunk, plan)?;
    let (l, d) = loss_and_grad(&scores, labels, class_weights)?;
    Ok((l, backward_from_scores(params, &cache, &d)))
}

/// Gradient of the unweighted loss with centroids drawn from `seed`.
pub fn backward<T: Real>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    chunk: &LabeledCloud<T>,
    seed: u64,
) -> Result<ModelParams<T>> {
    let plan = plan_sampling(config, chunk.points(), seed)?;
    Ok(loss_and_gradient(params, config, chunk, &plan, None)?.1)
}

/// Wood only when its score is strictly higher.
pub fn argmax_labels<T: Real>(scores: &Array2<T>) -> Vec<ClassLabel> {
    scores
        .rows()
        .into_iter()
        .map(|r| {
            if r[1] > r[0] {
                ClassLabel::Wood
            } else {
                ClassLabel::Leaf
            }
        })
        .collect()
}
