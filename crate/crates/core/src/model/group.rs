//! Ball grouping around centroids and inverse-distance interpolation back
//! onto a denser point set.

use crate::cloud::Point3;
use crate::error::{contract, Result};
use crate::scalar::Real;
use crate::spatial::{in_closed_ball, SpatialIndex};

/// Fixed-size groups, one per centroid, stored row-major (`max_group` slots each).
#[derive(Debug, Clone, PartialEq)]
pub struct Groups<T> {
    pub max_group: usize,
    /// Source point index of every slot.
    pub members: Vec<usize>,
    /// Slot coordinates relative to the group's centroid.
    pub relative: Vec<Point3<T>>,
    /// Real (non-padding) members per group.
    pub counts: Vec<usize>,
}

impl<T> Groups<T> {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn group(&self, g: usize) -> &[usize] {
        &self.members[g * self.max_group..(g + 1) * self.max_group]
    }
}

/// Up to `max_group` nearest points within `radius` of each centroid; short
/// groups are padded by repeating their nearest member.
pub fn ball_group<T: Real>(
    centroid_indices: &[usize],
    points: &[Point3<T>],
    radius: T,
    max_group: usize,
) -> Result<Groups<T>> {
    if points.is_empty() {
        return contract("cannot group an empty cloud");
    }
    let index = SpatialIndex::new(points)?;
    ball_group_indexed(centroid_indices, &index, radius, max_group)
}

pub(crate) fn ball_group_indexed<T: Real>(
    centroid_indices: &[usize],
    index: &SpatialIndex<T>,
    radius: T,
    max_group: usize,
) -> Result<Groups<T>> {
    if !(radius > T::zero()) || max_group == 0 {
        return contract("group radius and size must be positive");
    }
    let points = index.points();
    let mut out = Groups {
        max_group,
        members: Vec::with_capacity(centroid_indices.len() * max_group),
        relative: Vec::with_capacity(centroid_indices.len() * max_group),
        counts: Vec::with_capacity(centroid_indices.len()),
    };
    for &c in centroid_indices {
        if c >= points.len() {
            return contract(format!("centroid index {c} out of range"));
        }
        let center = points[c];
        let nearest = index.nearest(center, max_group);
        let inside: Vec<usize> = nearest
            .iter()
            .map(|&(i, _)| i)
            .filter(|&i| in_closed_ball(points[i], center, radius))
            .collect();
        // the centroid itself is always inside, so `inside` is never empty
        let pad = inside[0];
        out.counts.push(inside.len());
        for slot in 0..max_group {
            let i = inside.get(slot).copied().unwrap_or(pad);
            out.members.push(i);
            out.relative.push(points[i] - center);
        }
    }
    Ok(out)
}

/// Inverse-distance weights from each target point to its nearest sources.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolation<T> {
    pub k: usize,
    /// `targets × k` source indices.
    pub neighbors: Vec<usize>,
    /// `targets × k` weights; each row sums to one.
    pub weights: Vec<T>,
}

pub const INTERP_NEIGHBORS: usize = 3;

pub fn interpolation_weights<T: Real>(
    targets: &[Point3<T>],
    sources: &[Point3<T>],
) -> Result<Interpolation<T>> {
    let index = SpatialIndex::new(sources)?;
    let k = INTERP_NEIGHBORS.min(sources.len());
    let eps = T::lit(1e-8);
    let mut neighbors = Vec::with_capacity(targets.len() * k);
    let mut weights = Vec::with_capacity(targets.len() * k);
    for &t in targets {
        let nn = index.nearest(t, k);
        let inv: Vec<T> = nn.iter().map(|&(_, d)| T::one() / (d + eps)).collect();
        let total = inv.iter().fold(T::zero(), |a, &b| a + b);
        for (&(i, _), w) in nn.iter().zip(inv) {
            neighbors.push(i);
            weights.push(w / total);
        }
    }
    Ok(Interpolation {
        k,
        neighbors,
        weights,
    })
}
