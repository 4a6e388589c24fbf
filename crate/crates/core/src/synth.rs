//! Deterministic synthetic trees with ground-truth wood/leaf labels.
//!
//! A tree is a vertical trunk cylinder, thinner tilted branch cylinders that
//! start on the trunk surface, and isotropic Gaussian leaf clusters centered
//! on the branch tips. Cylinders are sampled on a regular surface grid; only
//! the leaf clusters use the seeded RNG.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cloud::{ClassLabel, LabeledCloud, Point3};
use crate::error::{contract, Result};
use crate::scalar::Real;

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTreeSpec {
    pub trunk_radius_m: f64,
    pub trunk_height_m: f64,
    pub branch_radius_m: f64,
    pub branch_count: usize,
    pub branch_length_m: f64,
    /// Upward tilt of every branch above the horizontal, in degrees.
    pub branch_elevation_deg: f64,
    pub leaf_cluster_count: usize,
    pub leaf_points_per_cluster: usize,
    pub leaf_cluster_sigma_m: f64,
    pub surface_sample_pitch_m: f64,
    pub seed: u64,
}

impl Default for SynthTreeSpec {
    fn default() -> Self {
        Self {
            trunk_radius_m: 0.30,
            trunk_height_m: 4.0,
            branch_radius_m: 0.05,
            branch_count: 8,
            branch_length_m: 1.2,
            branch_elevation_deg: 35.0,
            leaf_cluster_count: 24,
            leaf_points_per_cluster: 1_200,
            leaf_cluster_sigma_m: 0.12,
            surface_sample_pitch_m: 0.03,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthCounts {
    pub trunk: usize,
    pub branch: usize,
    pub leaf: usize,
}

impl SynthCounts {
    pub fn wood(&self) -> usize {
        self.trunk + self.branch
    }

    pub fn total(&self) -> usize {
        self.wood() + self.leaf
    }
}

/// Grid resolution `(around, along)` of a cylinder surface.
pub fn cylinder_grid(radius: f64, length: f64, pitch: f64) -> (usize, usize) {
    let around = ((2.0 * PI * radius / pitch).ceil() as usize).max(3);
    let along = ((length / pitch).ceil() as usize).max(1);
    (around, along)
}

/// Regular grid on the lateral surface of a cylinder (no end caps).
pub fn sample_cylinder_surface(
    base: [f64; 3],
    axis: [f64; 3],
    radius: f64,
    length: f64,
    pitch: f64,
) -> Vec<[f64; 3]> {
    let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let a = axis.map(|v| v / norm);
    let (u, v) = orthonormal_pair(a);
    let (around, along) = cylinder_grid(radius, length, pitch);
    let mut out = Vec::with_capacity(around * along);
    for j in 0..along {
        let t = (j as f64 + 0.5) * length / along as f64;
        for i in 0..around {
            let theta = 2.0 * PI * i as f64 / around as f64;
            let (s, c) = theta.sin_cos();
            out.push(std::array::from_fn(|k| {
                base[k] + a[k] * t + radius * (c * u[k] + s * v[k])
            }));
        }
    }
    out
}

fn orthonormal_pair(a: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    if a[0] == 0.0 && a[1] == 0.0 {
        let s = a[2].signum();
        return ([1.0, 0.0, 0.0], [0.0, s, 0.0]);
    }
    let helper = if a[2].abs() < 0.9 {
        [0.0, 0.0, 1.0]
    } else {
        [1.0, 0.0, 0.0]
    };
    let u = normalize(cross(helper, a));
    let v = cross(a, u);
    (u, v)
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    a.map(|v| v / n)
}

struct Branch {
    base: [f64; 3],
    dir: [f64; 3],
}

impl SynthTreeSpec {
    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("trunk_radius_m", self.trunk_radius_m),
            ("trunk_height_m", self.trunk_height_m),
            ("branch_radius_m", self.branch_radius_m),
            ("branch_length_m", self.branch_length_m),
            ("leaf_cluster_sigma_m", self.leaf_cluster_sigma_m),
            ("surface_sample_pitch_m", self.surface_sample_pitch_m),
        ];
        for (name, v) in lengths {
            if !(v > 0.0 && v.is_finite()) {
                return contract(format!("{name} must be positive, got {v}"));
            }
        }
        let smallest = if self.branch_count > 0 {
            self.trunk_radius_m.min(self.branch_radius_m)
        } else {
            self.trunk_radius_m
        };
        if self.surface_sample_pitch_m >= smallest {
            return contract("surface pitch must be smaller than every cylinder radius");
        }
        if self.leaf_cluster_count > 0 && self.branch_count == 0 {
            return contract("leaf clusters hang on branch tips; branch_count is 0");
        }
        if !self.branch_elevation_deg.is_finite() || self.branch_elevation_deg.abs() >= 90.0 {
            return contract("branch elevation must lie in (-90, 90) degrees");
        }
        Ok(())
    }

    fn branches(&self) -> Vec<Branch> {
        let el = self.branch_elevation_deg.to_radians();
        (0..self.branch_count)
            .map(|k| {
                let frac = 0.35 + 0.55 * (k as f64 + 0.5) / self.branch_count as f64;
                let phi = k as f64 * GOLDEN_ANGLE;
                let (s, c) = phi.sin_cos();
                Branch {
                    base: [
                        self.trunk_radius_m * c,
                        self.trunk_radius_m * s,
                        self.trunk_height_m * frac,
                    ],
                    dir: [el.cos() * c, el.cos() * s, el.sin()],
                }
            })
            .collect()
    }

    /// Point counts per part, known before generation.
    pub fn counts(&self) -> SynthCounts {
        let pitch = self.surface_sample_pitch_m;
        let (ta, tl) = cylinder_grid(self.trunk_radius_m, self.trunk_height_m, pitch);
        let (ba, bl) = cylinder_grid(self.branch_radius_m, self.branch_length_m, pitch);
        SynthCounts {
            trunk: ta * tl,
            branch: if self.branch_count > 0 {
                self.branch_count * ba * bl
            } else {
                0
            },
            leaf: self.leaf_cluster_count * self.leaf_points_per_cluster,
        }
    }
}

/// Trunk points first, then branches in order, then leaf clusters.
pub fn generate_tree<T: Real>(spec: &SynthTreeSpec) -> Result<LabeledCloud<T>> {
    spec.validate()?;
    let pitch = spec.surface_sample_pitch_m;
    let mut raw = sample_cylinder_surface(
        [0.0; 3],
        [0.0, 0.0, 1.0],
        spec.trunk_radius_m,
        spec.trunk_height_m,
        pitch,
    );
    let branches = spec.branches();
    for b in &branches {
        raw.extend(sample_cylinder_surface(
            b.base,
            b.dir,
            spec.branch_radius_m,
            spec.branch_length_m,
            pitch,
        ));
    }
    let wood = raw.len();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, spec.leaf_cluster_sigma_m)
        .map_err(|e| crate::error::Error::Contract(e.to_string()))?;
    for c in 0..spec.leaf_cluster_count {
        let b = &branches[c % branches.len()];
        // later clusters on the same branch sit a little further back from the tip
        let back = (c / branches.len()) as f64 * spec.leaf_cluster_sigma_m;
        let along = (spec.branch_length_m - back).max(0.0);
        let center: [f64; 3] = std::array::from_fn(|k| b.base[k] + b.dir[k] * along);
        for _ in 0..spec.leaf_points_per_cluster {
            raw.push(std::array::from_fn(|k| center[k] + normal.sample(&mut rng)));
        }
    }

    let mut labels = vec![ClassLabel::Wood; wood];
    labels.resize(raw.len(), ClassLabel::Leaf);
    let points = raw
        .into_iter()
        .map(|[x, y, z]| Point3::from_f64(x, y, z))
        .collect();
    LabeledCloud::new(points)?.with_labels(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_tree_matches_counts_and_ratio() {
        let spec = SynthTreeSpec::default();
        let tree: LabeledCloud<f64> = generate_tree(&spec).unwrap();
        let counts = spec.counts();
        let labels = tree.labels().unwrap();
        let wood = labels.iter().filter(|l| l.is_wood()).count();
        assert_eq!(tree.len(), counts.total());
        assert_eq!(wood, counts.wood());
        assert_eq!(labels.len() - wood, counts.leaf);
        let ratio = (labels.len() - wood) as f64 / wood as f64;
        assert!((2.0..=15.0).contains(&ratio), "leaf:wood = {ratio}");
        assert!((20_000..=60_000).contains(&tree.len()), "{}", tree.len());
    }

    #[test]
    fn bare_trunk_is_all_wood_on_the_surface() {
        let spec = SynthTreeSpec {
            branch_count: 0,
            leaf_cluster_count: 0,
            ..Default::default()
        };
        let tree: LabeledCloud<f64> = generate_tree(&spec).unwrap();
        assert!(tree.labels().unwrap().iter().all(|l| l.is_wood()));
        for p in tree.points() {
            let r = (p.x * p.x + p.y * p.y).sqrt();
            assert!((r - spec.trunk_radius_m).abs() <= 1e-12);
        }
    }

    #[test]
    fn same_seed_same_tree() {
        let spec = SynthTreeSpec::default();
        let a: LabeledCloud<f64> = generate_tree(&spec).unwrap();
        let b: LabeledCloud<f64> = generate_tree(&spec).unwrap();
        assert_eq!(a, b);
        let c: LabeledCloud<f64> = generate_tree(&SynthTreeSpec { seed: 2, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_specs_rejected() {
        let bad = [
            SynthTreeSpec {
                trunk_radius_m: 0.0,
                ..Default::default()
            },
            SynthTreeSpec {
                surface_sample_pitch_m: 0.06,
                ..Default::default()
            },
            SynthTreeSpec {
                branch_count: 0,
                ..Default::default()
            },
            SynthTreeSpec {
                leaf_cluster_sigma_m: f64::NAN,
                ..Default::default()
            },
        ];
        for spec in bad {
            assert!(generate_tree::<f64>(&spec).is_err(), "{spec:?}");
        }
    }

    #[test]
    fn tilted_cylinder_points_keep_their_radius() {
        let axis = [0.3, -0.4, 0.5];
        let base = [1.0, 2.0, 3.0];
        let pts = sample_cylinder_surface(base, axis, 0.05, 1.0, 0.01);
        let a = normalize(axis);
        for p in pts {
            let d: [f64; 3] = std::array::from_fn(|k| p[k] - base[k]);
            let t = d[0] * a[0] + d[1] * a[1] + d[2] * a[2];
            let r2 = d.iter().map(|v| v * v).sum::<f64>() - t * t;
            assert!((r2.sqrt() - 0.05).abs() < 1e-9);
            assert!((0.0..=1.0).contains(&t));
        }
    }
}
