//! Splitting oversized clouds into network-sized chunks and merging
//! per-chunk predictions back into one cloud in the original point order.
//!
//! The chunk count is `ceil(total / max_point_num)` with sizes balanced to
//! within one point. Chunks come from recursive median cuts along the widest
//! bounding-box axis, so each chunk is a spatially compact block.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use crate::cloud::{save_xyz, write_atomic, ClassLabel, LabeledCloud, Point3};
use crate::error::{contract, Result};
use crate::scalar::Real;

pub const DEFAULT_MAX_POINT_NUM: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub total_points: usize,
    pub max_point_num: usize,
    /// Target size of each chunk, larger chunks first.
    pub chunk_sizes: Vec<usize>,
}

impl SplitPlan {
    pub fn num_chunks(&self) -> usize {
        self.chunk_sizes.len()
    }
}

pub fn plan_split(total_points: usize, max_point_num: usize) -> Result<SplitPlan> {
    if total_points == 0 || max_point_num == 0 {
        return contract("plan_split needs a positive point count and chunk capacity");
    }
    let n = total_points.div_ceil(max_point_num);
    let base = total_points / n;
    let extra = total_points % n;
    Ok(SplitPlan {
        total_points,
        max_point_num,
        chunk_sizes: (0..n).map(|k| base + usize::from(k < extra)).collect(),
    })
}

/// One median cut: chunks `left` lie at or below `threshold` on `axis`,
/// chunks `right` at or above it.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitRecord<T> {
    pub axis: usize,
    pub threshold: T,
    pub left: std::ops::Range<usize>,
    pub right: std::ops::Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chunk<T> {
    pub cloud: LabeledCloud<T>,
    /// Ascending original indices of the chunk's points.
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SplitResult<T> {
    pub chunks: Vec<Chunk<T>>,
    pub records: Vec<SplitRecord<T>>,
}

pub fn split<T: Real>(cloud: &LabeledCloud<T>, plan: &SplitPlan) -> Result<Vec<Chunk<T>>> {
    Ok(split_with_records(cloud, plan)?.chunks)
}

pub fn split_with_records<T: Real>(
    cloud: &LabeledCloud<T>,
    plan: &SplitPlan,
) -> Result<SplitResult<T>> {
    if plan.total_points != cloud.len() {
        return contract(format!(
            "plan is for {} points but the cloud has {}",
            plan.total_points,
            cloud.len()
        ));
    }
    if plan.chunk_sizes.iter().sum::<usize>() != cloud.len()
        || plan
            .chunk_sizes
            .iter()
            .any(|&s| s > plan.max_point_num || s == 0)
    {
        return contract("plan chunk sizes are inconsistent");
    }
    let mut indices: Vec<usize> = (0..cloud.len()).collect();
    let mut records = Vec::new();
    let mut lists = Vec::with_capacity(plan.num_chunks());
    cut(
        cloud.points(),
        &mut indices,
        &plan.chunk_sizes,
        0,
        &mut records,
        &mut lists,
    );
    let chunks = lists
        .into_iter()
        .map(|mut idx| {
            idx.sort_unstable();
            Chunk {
                cloud: cloud.select(&idx),
                indices: idx,
            }
        })
        .collect();
    Ok(SplitResult { chunks, records })
}

fn cut<T: Real>(
    points: &[Point3<T>],
    indices: &mut [usize],
    sizes: &[usize],
    first_chunk: usize,
    records: &mut Vec<SplitRecord<T>>,
    out: &mut Vec<Vec<usize>>,
) {
    if sizes.len() == 1 {
        out.push(indices.to_vec());
        return;
    }
    let half = sizes.len() / 2;
    let left_count: usize = sizes[..half].iter().sum();
    let axis = widest_axis(points, indices);
    indices.select_nth_unstable_by(left_count, |&a, &b| {
        points[a]
            .axis(axis)
            .partial_cmp(&points[b].axis(axis))
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let threshold = points[indices[left_count]].axis(axis);
    records.push(SplitRecord {
        axis,
        threshold,
        left: first_chunk..first_chunk + half,
        right: first_chunk + half..first_chunk + sizes.len(),
    });
    let (lo, hi) = indices.split_at_mut(left_count);
    cut(points, lo, &sizes[..half], first_chunk, records, out);
    cut(points, hi, &sizes[half..], first_chunk + half, records, out);
}

fn widest_axis<T: Real>(points: &[Point3<T>], indices: &[usize]) -> usize {
    let mut min = [T::infinity(); 3];
    let mut max = [T::neg_infinity(); 3];
    for &i in indices {
        for (a, v) in points[i].to_array().into_iter().enumerate() {
            min[a] = min[a].min(v);
            max[a] = max[a].max(v);
        }
    }
    let mut best = 0;
    for a in 1..3 {
        if max[a] - min[a] > max[best] - min[best] {
            best = a;
        }
    }
    best
}

/// Centroid translation and unit-ball scale of one chunk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkTransform<T> {
    pub translation: Point3<T>,
    pub scale: T,
}

impl<T: Real> ChunkTransform<T> {
    pub fn identity() -> Self {
        Self {
            translation: Point3::zero(),
            scale: T::one(),
        }
    }

    pub fn apply(&self, p: Point3<T>) -> Point3<T> {
        (p - self.translation).scale(T::one() / self.scale)
    }

    pub fn invert(&self, p: Point3<T>) -> Point3<T> {
        p.scale(self.scale) + self.translation
    }
}

/// Centers a chunk on its centroid and scales it into the unit ball.
pub fn normalize_chunk<T: Real>(
    chunk: &LabeledCloud<T>,
) -> Result<(LabeledCloud<T>, ChunkTransform<T>)> {
    if chunk.is_empty() {
        return contract("cannot normalize an empty chunk");
    }
    let n = T::from_usize_lossy(chunk.len());
    let centroid = chunk
        .points()
        .iter()
        .fold(Point3::zero(), |acc, &p| acc + p)
        .scale(T::one() / n);
    let radius = chunk
        .points()
        .iter()
        .map(|&p| p.distance(centroid))
        .fold(T::zero(), T::max);
    let t = ChunkTransform {
        translation: centroid,
        scale: if radius > T::zero() { radius } else { T::one() },
    };
    let pts = chunk.points().iter().map(|&p| t.apply(p)).collect();
    Ok((chunk.with_points(pts)?, t))
}

pub fn denormalize<T: Real>(
    chunk: &LabeledCloud<T>,
    t: &ChunkTransform<T>,
) -> Result<LabeledCloud<T>> {
    chunk.with_points(chunk.points().iter().map(|&p| t.invert(p)).collect())
}

/// Merges chunks back into original order. Labels and linearity are taken
/// from whichever chunk holds each index.
pub fn integrate<T: Real>(chunks: &[Chunk<T>], total: usize) -> Result<LabeledCloud<T>> {
    let mut owner: Vec<Option<(usize, usize)>> = vec![None; total];
    for (c, chunk) in chunks.iter().enumerate() {
        if chunk.indices.len() != chunk.cloud.len() {
            return contract(format!("chunk {c} index list length differs from its size"));
        }
        for (k, &i) in chunk.indices.iter().enumerate() {
            if i >= total {
                return contract(format!("chunk {c} references index {i} beyond {total}"));
            }
            if owner[i].is_some() {
                return contract(format!("index {i} appears in more than one chunk"));
            }
            owner[i] = Some((c, k));
        }
    }
    let owner: Vec<(usize, usize)> = owner
        .into_iter()
        .enumerate()
        .map(|(i, o)| o.ok_or(i))
        .collect::<std::result::Result<_, usize>>()
        .or_else(|i| contract(format!("index {i} is missing from every chunk")))?;

    let all_labels = chunks.iter().all(|c| c.cloud.labels().is_some());
    let all_lin = chunks.iter().all(|c| c.cloud.linearity().is_some());
    let points = owner
        .iter()
        .map(|&(c, k)| chunks[c].cloud.points()[k])
        .collect();
    let mut out = LabeledCloud::new(points)?;
    if all_labels && !chunks.is_empty() {
        let labels: Vec<ClassLabel> = owner
            .iter()
            .map(|&(c, k)| chunks[c].cloud.labels().map_or(ClassLabel::Leaf, |l| l[k]))
            .collect();
        out = out.with_labels(labels)?;
    }
    if all_lin && !chunks.is_empty() {
        let lin: Vec<T> = owner
            .iter()
            .map(|&(c, k)| chunks[c].cloud.linearity().map_or(T::zero(), |l| l[k]))
            .collect();
        out = out.with_linearity(lin)?;
    }
    Ok(out)
}

/// Writes `<stem>.chunk<k>.xyz` and `<stem>.chunk<k>.idx` for every chunk
/// into `dir`, returning the XYZ paths.
pub fn save_chunks<T: Real>(chunks: &[Chunk<T>], dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::with_capacity(chunks.len());
    for (k, chunk) in chunks.iter().enumerate() {
        let xyz = dir.join(format!("{stem}.chunk{k}.xyz"));
        save_xyz(&chunk.cloud, &xyz)?;
        let mut idx = String::with_capacity(chunk.indices.len() * 7);
        for i in &chunk.indices {
            idx.push_str(&i.to_string());
            idx.push('\n');
        }
        write_atomic(&dir.join(format!("{stem}.chunk{k}.idx")), idx.as_bytes())?;
        paths.push(xyz);
    }
    Ok(paths)
}
