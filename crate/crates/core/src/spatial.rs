//! Exact fixed-radius and k-nearest queries over a static point set.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::cloud::{LabeledCloud, Point3};
use crate::error::{contract, Result};
use crate::scalar::Real;

const LEAF_SIZE: usize = 12;

/// The closed-ball membership test used everywhere in the crate.
#[inline]
pub fn in_closed_ball<T: Real>(p: Point3<T>, center: Point3<T>, radius: T) -> bool {
    p.distance_squared(center) <= radius * radius
}

/// Points within `radius` of a center point, center included.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood<T> {
    pub center_index: usize,
    /// Ascending original indices.
    pub member_indices: Vec<usize>,
    pub radius_m: T,
}

/// Balanced 3-d tree stored implicitly: the median of every subrange
/// `order[lo..hi]` sits at `(lo + hi) / 2` and splits along `axes[mid]`.
#[derive(Debug, Clone)]
pub struct SpatialIndex<T> {
    points: Vec<Point3<T>>,
    order: Vec<usize>,
    axes: Vec<u8>,
}

pub fn build_index<T: Real>(cloud: &LabeledCloud<T>) -> Result<SpatialIndex<T>> {
    SpatialIndex::new(cloud.points())
}

impl<T: Real> SpatialIndex<T> {
    pub fn new(points: &[Point3<T>]) -> Result<Self> {
        if points.is_empty() {
            return contract("cannot index an empty cloud");
        }
        let mut idx = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            axes: vec![0; points.len()],
        };
        idx.build(0, points.len());
        Ok(idx)
    }

    fn build(&mut self, lo: usize, hi: usize) {
        if hi - lo <= LEAF_SIZE {
            return;
        }
        let axis = self.widest_axis(lo, hi);
        let mid = (lo + hi) / 2;
        let pts = &self.points;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            pts[a]
                .axis(axis)
                .partial_cmp(&pts[b].axis(axis))
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        self.axes[mid] = axis as u8;
        self.build(lo, mid);
        self.build(mid + 1, hi);
    }

    fn widest_axis(&self, lo: usize, hi: usize) -> usize {
        let mut min = [T::infinity(); 3];
        let mut max = [T::neg_infinity(); 3];
        for &i in &self.order[lo..hi] {
            let p = self.points[i].to_array();
            for a in 0..3 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        (0..3)
            .max_by(|&a, &b| {
                (max[a] - min[a])
                    .partial_cmp(&(max[b] - min[b]))
                    .unwrap_or(Ordering::Equal)
                    .then(b.cmp(&a))
            })
            .unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<T>] {
        &self.points
    }

    /// Neighborhood of an indexed point: every `i` with `dist(p_i, p_center) <= radius`.
    pub fn radius_query(&self, center_index: usize, radius_m: T) -> Result<Neighborhood<T>> {
        if center_index >= self.points.len() {
            return contract(format!(
                "center index {center_index} out of range for {} points",
                self.points.len()
            ));
        }
        if !(radius_m > T::zero()) {
            return contract("radius must be positive");
        }
        let member_indices = self.within(self.points[center_index], radius_m);
        Ok(Neighborhood {
            center_index,
            member_indices,
            radius_m,
        })
    }

    /// Ascending indices of all points in the closed ball around `q`.
    pub fn within(&self, q: Point3<T>, radius: T) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_within(0, self.points.len(), q, radius, &mut out);
        out.sort_unstable();
        out
    }

    fn collect_within(&self, lo: usize, hi: usize, q: Point3<T>, r: T, out: &mut Vec<usize>) {
        if hi - lo <= LEAF_SIZE {
            out.extend(
                self.order[lo..hi]
                    .iter()
                    .copied()
                    .filter(|&i| in_closed_ball(self.points[i], q, r)),
            );
            return;
        }
        let mid = (lo + hi) / 2;
        let i = self.order[mid];
        let axis = self.axes[mid] as usize;
        if in_closed_ball(self.points[i], q, r) {
            out.push(i);
        }
        let d = q.axis(axis) - self.points[i].axis(axis);
        let (near, far) = if d <= T::zero() {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.collect_within(near.0, near.1, q, r, out);
        if d * d <= r * r {
            self.collect_within(far.0, far.1, q, r, out);
        }
    }

    /// The `k` nearest points to `q` as `(index, distance)`, nearest first,
    /// ties broken by lower index. Returns fewer when the index is smaller than `k`.
    pub fn nearest(&self, q: Point3<T>, k: usize) -> Vec<(usize, T)> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.collect_nearest(0, self.points.len(), q, k, &mut heap);
        let mut out: Vec<_> = heap.into_iter().map(|c| (c.index, c.dist2)).collect();
        out.sort_by(|a, b| cmp_candidate(a.1, a.0, b.1, b.0));
        out.into_iter().map(|(i, d2)| (i, d2.sqrt())).collect()
    }

    fn collect_nearest(
        &self,
        lo: usize,
        hi: usize,
        q: Point3<T>,
        k: usize,
        heap: &mut BinaryHeap<Candidate<T>>,
    ) {
        let mut offer = |i: usize| {
            let c = Candidate {
                dist2: self.points[i].distance_squared(q),
                index: i,
            };
            if heap.len() < k {
                heap.push(c);
            } else if heap.peek().is_some_and(|w| c < *w) {
                heap.pop();
                heap.push(c);
            }
        };
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                offer(i);
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let i = self.order[mid];
        let axis = self.axes[mid] as usize;
        offer(i);
        let d = q.axis(axis) - self.points[i].axis(axis);
        let (near, far) = if d <= T::zero() {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.collect_nearest(near.0, near.1, q, k, heap);
        let worst = heap.peek().map(|w| w.dist2);
        if heap.len() < k || worst.is_some_and(|w| d * d <= w) {
            self.collect_nearest(far.0, far.1, q, k, heap);
        }
    }
}

fn cmp_candidate<T: Real>(d1: T, i1: usize, d2: T, i2: usize) -> Ordering {
    d1.partial_cmp(&d2)
        .unwrap_or(Ordering::Equal)
        .then(i1.cmp(&i2))
}

#[derive(Debug, Clone, Copy)]
struct Candidate<T> {
    dist2: T,
    index: usize,
}

impl<T: Real> PartialEq for Candidate<T> {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl<T: Real> Eq for Candidate<T> {}
impl<T: Real> PartialOrd for Candidate<T> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl<T: Real> Ord for Candidate<T> {
    fn cmp(&self, o: &Self) -> Ordering {
        cmp_candidate(self.dist2, self.index, o.dist2, o.index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(xs: &[f64]) -> Vec<Point3<f64>> {
        xs.iter().map(|&x| Point3::new(x, 0.0, 0.0)).collect()
    }

    fn random_points(n: usize, seed: u64) -> Vec<Point3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
            .collect()
    }

    fn scan(points: &[Point3<f64>], q: Point3<f64>, r: f64) -> Vec<usize> {
        (0..points.len())
            .filter(|&i| {
                let d = points[i] - q;
                d.x * d.x + d.y * d.y + d.z * d.z <= r * r
            })
            .collect()
    }

    #[test]
    fn single_point_finds_itself() {
        let idx = SpatialIndex::new(&[Point3::new(1.0, 2.0, 3.0)]).unwrap();
        assert_eq!(idx.radius_query(0, 0.1).unwrap().member_indices, vec![0]);
    }

    #[test]
    fn empty_cloud_rejected() {
        assert!(SpatialIndex::<f64>::new(&[]).is_err());
    }

    #[test]
    fn collinear_hand_checked_neighbors() {
        let idx = SpatialIndex::new(&line(&[0.0, 0.1, 0.2, 0.5])).unwrap();
        assert_eq!(
            idx.radius_query(0, 0.15).unwrap().member_indices,
            vec![0, 1]
        );
        assert_eq!(
            idx.radius_query(1, 0.15).unwrap().member_indices,
            vec![0, 1, 2]
        );
    }

    #[test]
    fn invalid_query_arguments() {
        let idx = SpatialIndex::new(&line(&[0.0, 1.0])).unwrap();
        assert!(idx.radius_query(2, 0.1).is_err());
        assert!(idx.radius_query(0, 0.0).is_err());
        assert!(idx.radius_query(0, -1.0).is_err());
    }

    #[test]
    fn random_queries_match_linear_scan() {
        let pts = random_points(500, 7);
        let idx = SpatialIndex::new(&pts).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let c = rng.random_range(0..pts.len());
            let r = rng.random_range(0.01..0.5);
            let nb = idx.radius_query(c, r).unwrap();
            assert!(nb.member_indices.contains(&c));
            assert_eq!(nb.member_indices, scan(&pts, pts[c], r));
        }
    }

    #[test]
    fn large_cloud_matches_linear_scan() {
        let pts = random_points(100_000, 3);
        let idx = SpatialIndex::new(&pts).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let c = rng.random_range(0..pts.len());
            assert_eq!(idx.within(pts[c], 0.03), scan(&pts, pts[c], 0.03));
        }
    }

    #[test]
    fn duplicate_points_all_reported() {
        let pts = vec![Point3::new(1.0, 1.0, 1.0); 40];
        let idx = SpatialIndex::new(&pts).unwrap();
        assert_eq!(idx.within(pts[0], 1e-9).len(), 40);
        assert_eq!(idx.nearest(pts[0], 3), vec![(0, 0.0), (1, 0.0), (2, 0.0)]);
    }

    #[test]
    fn nearest_matches_sorted_scan() {
        let pts = random_points(2_000, 11);
        let idx = SpatialIndex::new(&pts).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let q = Point3::new(rng.random(), rng.random(), rng.random());
            let k = rng.random_range(1..8);
            let mut all: Vec<(usize, f64)> = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (i, p.distance(q)))
                .collect();
            all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            let got: Vec<usize> = idx.nearest(q, k).iter().map(|c| c.0).collect();
            let want: Vec<usize> = all[..k].iter().map(|c| c.0).collect();
            assert_eq!(got, want);
        }
        assert_eq!(idx.nearest(pts[0], 5000).len(), 2000);
    }

    #[test]
    fn works_in_single_precision() {
        let pts: Vec<Point3<f32>> = (0..100).map(|i| Point3::new(i as f32, 0.0, 0.0)).collect();
        let idx = SpatialIndex::new(&pts).unwrap();
        assert_eq!(
            idx.radius_query(50, 1.0).unwrap().member_indices,
            vec![49, 50, 51]
        );
    }
}
