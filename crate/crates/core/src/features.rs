//! Per-point linearity from the PCA of each point's fixed-radius neighborhood.
//!
//! For every point: gather the closed ball of radius `r` (0.15 m by default),
//! center it, form the 3×3 sample covariance, take its eigenvalues
//! `λ1 ≥ λ2 ≥ λ3` and report `(λ1 − λ2) / λ1`. The field is computed once on
//! the full cloud in metric coordinates, before any splitting.

use rayon::prelude::*;

use crate::cloud::{LabeledCloud, Point3};
use crate::error::{contract, Error, Result};
use crate::scalar::Real;
use crate::spatial::SpatialIndex;

pub const DEFAULT_RADIUS_M: f64 = 0.15;

/// Neighborhoods smaller than this get linearity 0.
pub const MIN_NEIGHBORS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct CenteredNeighborhood<T> {
    pub centered_points: Vec<Point3<T>>,
    pub mean: Point3<T>,
}

impl<T> CenteredNeighborhood<T> {
    pub fn count(&self) -> usize {
        self.centered_points.len()
    }
}

/// Symmetric 3×3 sample covariance, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariance3<T>(pub [[T; 3]; 3]);

/// Eigenvalues in descending order, all nonnegative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenTriple<T> {
    pub l1: T,
    pub l2: T,
    pub l3: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearityField<T> {
    pub values: Vec<T>,
    pub radius_m: T,
}

pub fn centralize<T: Real>(points: &[Point3<T>]) -> Result<CenteredNeighborhood<T>> {
    if points.is_empty() {
        return contract("cannot centralize an empty neighborhood");
    }
    let n = T::from_usize_lossy(points.len());
    let sum = points.iter().fold(Point3::zero(), |acc, &p| acc + p);
    let mean = sum.scale(T::one() / n);
    Ok(CenteredNeighborhood {
        centered_points: points.iter().map(|&p| p - mean).collect(),
        mean,
    })
}

/// `Σ = Cᵀ C / (n − 1)` with `C` the n×3 matrix of centered points.
pub fn covariance<T: Real>(centered: &CenteredNeighborhood<T>) -> Result<Covariance3<T>> {
    let n = centered.count();
    if n < 2 {
        return Err(Error::DegenerateNeighborhood(n));
    }
    let mut s = [[T::zero(); 3]; 3];
    for p in &centered.centered_points {
        let v = p.to_array();
        for r in 0..3 {
            for c in r..3 {
                s[r][c] += v[r] * v[c];
            }
        }
    }
    let inv = T::one() / T::from_usize_lossy(n - 1);
    for r in 0..3 {
        for c in r..3 {
            s[r][c] *= inv;
            s[c][r] = s[r][c];
        }
    }
    Ok(Covariance3(s))
}

/// Eigenvalues of a symmetric PSD 3×3 matrix by cyclic Jacobi rotations.
pub fn eigenvalues_sym3<T: Real>(sigma: &Covariance3<T>) -> Result<EigenTriple<T>> {
    let mut a = sigma.0;
    let scale = a.iter().flatten().fold(T::zero(), |m, v| m.max(v.abs()));
    if a.iter().flatten().any(|v| !v.is_finite()) {
        return contract("covariance has non-finite entries");
    }
    let sym_tol = T::lit(1e-12).max(T::epsilon() * T::lit(64.0)) * scale.max(T::one());
    for (r, c) in [(0, 1), (0, 2), (1, 2)] {
        if (a[r][c] - a[c][r]).abs() > sym_tol {
            return contract(format!("matrix not symmetric at ({r},{c})"));
        }
        let m = (a[r][c] + a[c][r]) * T::lit(0.5);
        a[r][c] = m;
        a[c][r] = m;
    }

    for _sweep in 0..64 {
        let off = a[0][1].abs() + a[0][2].abs() + a[1][2].abs();
        let diag = a[0][0].abs() + a[1][1].abs() + a[2][2].abs();
        if off == T::zero() || off <= T::epsilon() * T::epsilon() * diag {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            jacobi_rotate(&mut a, p, q);
        }
    }

    let mut l = [a[0][0], a[1][1], a[2][2]];
    l.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    // Jacobi is backward stable, so rounding can leave a slightly negative
    // eigenvalue of a PSD input, proportional to the matrix scale.
    let neg_tol = T::lit(1e-10).max(T::epsilon() * T::lit(64.0)) * scale;
    if l[2] < -neg_tol {
        return contract("matrix is not positive semi-definite");
    }
    let clamp = |v: T| if v < T::zero() { T::zero() } else { v };
    Ok(EigenTriple {
        l1: clamp(l[0]),
        l2: clamp(l[1]),
        l3: clamp(l[2]),
    })
}

fn jacobi_rotate<T: Real>(a: &mut [[T; 3]; 3], p: usize, q: usize) {
    let apq = a[p][q];
    if apq == T::zero() {
        return;
    }
    let theta = (a[q][q] - a[p][p]) / (T::lit(2.0) * apq);
    let t = {
        let mag = T::one() / (theta.abs() + theta.hypot(T::one()));
        if theta < T::zero() {
            -mag
        } else {
            mag
        }
    };
    let c = T::one() / t.hypot(T::one());
    let s = t * c;
    a[p][p] -= t * apq;
    a[q][q] += t * apq;
    a[p][q] = T::zero();
    a[q][p] = T::zero();
    let r = 3 - p - q;
    let arp = a[r][p];
    let arq = a[r][q];
    a[r][p] = c * arp - s * arq;
    a[p][r] = a[r][p];
    a[r][q] = s * arp + c * arq;
    a[q][r] = a[r][q];
}

/// `(λ1 − λ2) / λ1`, or 0 when `λ1 = 0`.
pub fn linearity<T: Real>(eigs: &EigenTriple<T>) -> T {
    if eigs.l1 <= T::zero() {
        return T::zero();
    }
    ((eigs.l1 - eigs.l2) / eigs.l1).max(T::zero()).min(T::one())
}

/// Linearity of a single neighborhood given as raw points.
pub fn neighborhood_linearity<T: Real>(points: &[Point3<T>]) -> Result<T> {
    if points.len() < MIN_NEIGHBORS {
        return Ok(T::zero());
    }
    let centered = centralize(points)?;
    let sigma = covariance(&centered)?;
    Ok(linearity(&eigenvalues_sym3(&sigma)?))
}

/// Linearity of every point, aligned with cloud order.
///
/// Points are processed independently so the result does not depend on the
/// worker count. Neighbors are summed in coordinate order, which makes the
/// field exactly equivariant under reordering of the cloud.
pub fn compute_linearity_field<T: Real>(
    cloud: &LabeledCloud<T>,
    index: &SpatialIndex<T>,
    radius_m: T,
) -> Result<LinearityField<T>> {
    if index.len() != cloud.len() {
        return contract("spatial index was built over a different cloud");
    }
    if !(radius_m > T::zero()) {
        return contract("radius must be positive");
    }
    let values = cloud
        .points()
        .par_iter()
        .map(|&p| {
            let members = index.within(p, radius_m);
            let mut pts: Vec<Point3<T>> = members.iter().map(|&i| index.points()[i]).collect();
            pts.sort_unstable_by(|a, b| {
                a.to_array()
                    .partial_cmp(&b.to_array())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            neighborhood_linearity(&pts)
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(LinearityField { values, radius_m })
}

/// Builds the index, computes the field and attaches it to the cloud.
pub fn featurize<T: Real>(cloud: &LabeledCloud<T>, radius_m: T) -> Result<LabeledCloud<T>> {
    let index = SpatialIndex::new(cloud.points())?;
    let field = compute_linearity_field(cloud, &index, radius_m)?;
    cloud.clone().with_linearity(field.values)
}
