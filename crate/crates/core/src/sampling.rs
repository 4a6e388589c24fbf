//! Centroid selection: uniform random sampling and farthest point sampling.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::Point3;
use crate::error::{contract, Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Random,
    Fps,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Random => "random",
            Strategy::Fps => "fps",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Strategy::Random),
            "fps" => Ok(Strategy::Fps),
            other => contract(format!("unknown sampling strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    pub indices: Vec<usize>,
    /// RNG seed for random sampling, start index for FPS.
    pub seed: u64,
    pub strategy: Strategy,
}

/// `k` distinct indices drawn uniformly from `0..n` without replacement.
///
/// Runs in `O(k)` expected time independent of `n`.
pub fn random_centroids(n: usize, k: usize, seed: u64) -> Result<SampleSet> {
    if k == 0 || k > n {
        return contract(format!("cannot draw {k} of {n} indices"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = rand::seq::index::sample(&mut rng, n, k).into_vec();
    Ok(SampleSet {
        indices,
        seed,
        strategy: Strategy::Random,
    })
}

/// Greedy max-min selection starting at `start_index`; ties go to the lowest index.
pub fn farthest_point_sampling<T: Real>(
    points: &[Point3<T>],
    k: usize,
    start_index: usize,
) -> Result<SampleSet> {
    let n = points.len();
    if k == 0 || k > n {
        return contract(format!("cannot select {k} of {n} points"));
    }
    if start_index >= n {
        return contract(format!("start index {start_index} out of range"));
    }
    let mut min_d2 = vec![T::infinity(); n];
    let mut chosen = Vec::with_capacity(k);
    let mut current = start_index;
    chosen.push(current);
    min_d2[current] = T::neg_infinity();
    while chosen.len() < k {
        let c = points[current];
        let mut best = usize::MAX;
        let mut best_d = T::neg_infinity();
        for (i, (p, m)) in points.iter().zip(min_d2.iter_mut()).enumerate() {
            if *m == T::neg_infinity() {
                continue;
            }
            let d = p.distance_squared(c);
            if d < *m {
                *m = d;
            }
            if *m > best_d {
                best_d = *m;
                best = i;
            }
        }
        current = best;
        min_d2[current] = T::neg_infinity();
        chosen.push(current);
    }
    Ok(SampleSet {
        indices: chosen,
        seed: start_index as u64,
        strategy: Strategy::Fps,
    })
}

pub fn sample_centroids<T: Real>(
    points: &[Point3<T>],
    k: usize,
    strategy: Strategy,
    seed: u64,
) -> Result<SampleSet> {
    match strategy {
        Strategy::Random => random_centroids(points.len(), k, seed),
        Strategy::Fps => {
            let start = if points.is_empty() {
                0
            } else {
                (seed % points.len() as u64) as usize
            };
            farthest_point_sampling(points, k, start)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyTiming {
    pub mean_seconds: f64,
    pub min_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub n: usize,
    pub k: usize,
    pub repeats: usize,
    pub random: StrategyTiming,
    pub fps: StrategyTiming,
}

impl BenchReport {
    /// How many times faster random sampling ran than FPS, by mean time.
    pub fn speed_ratio(&self) -> f64 {
        self.fps.mean_seconds / self.random.mean_seconds.max(f64::MIN_POSITIVE)
    }

    pub fn to_key_value(&self) -> String {
        format!(
            "n={}\nk={}\nrepeats={}\nrandom_mean_s={:.9}\nrandom_min_s={:.9}\n\
             fps_mean_s={:.9}\nfps_min_s={:.9}\nspeed_ratio={:.3}\n",
            self.n,
            self.k,
            self.repeats,
            self.random.mean_seconds,
            self.random.min_seconds,
            self.fps.mean_seconds,
            self.fps.min_seconds,
            self.speed_ratio()
        )
    }
}

/// Times both strategies on `n` seeded uniform points.
pub fn benchmark_sampling(n: usize, k: usize, repeats: usize) -> Result<BenchReport> {
    if repeats < 3 {
        return contract("benchmark needs at least 3 repeats");
    }
    if k == 0 || k > n {
        return contract(format!("cannot select {k} of {n} points"));
    }
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let points: Vec<Point3<f64>> = (0..n)
        .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
        .collect();

    let time = |f: &mut dyn FnMut(u64) -> Result<SampleSet>| -> Result<StrategyTiming> {
        let mut times = Vec::with_capacity(repeats);
        for r in 0..repeats {
            let t0 = Instant::now();
            let s = f(r as u64)?;
            times.push(t0.elapsed().as_secs_f64());
            std::hint::black_box(s);
        }
        Ok(StrategyTiming {
            mean_seconds: times.iter().sum::<f64>() / repeats as f64,
            min_seconds: times.iter().copied().fold(f64::INFINITY, f64::min),
        })
    };
    let random = time(&mut |seed| random_centroids(n, k, seed))?;
    let fps = time(&mut |seed| farthest_point_sampling(&points, k, (seed as usize) % n))?;
    Ok(BenchReport {
        n,
        k,
        repeats,
        random,
        fps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_draw_is_a_permutation() {
        let mut s = random_centroids(5, 5, 99).unwrap().indices;
        s.sort();
        assert_eq!(s, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn random_is_deterministic_per_seed() {
        assert_eq!(
            random_centroids(5, 1, 42).unwrap(),
            random_centroids(5, 1, 42).unwrap()
        );
        assert!(random_centroids(3, 4, 0).is_err());
        assert!(random_centroids(3, 0, 0).is_err());
    }

    #[test]
    fn fps_picks_farthest_point() {
        let pts: Vec<Point3<f64>> = [0.0, 10.0, 4.0]
            .iter()
            .map(|&x| Point3::new(x, 0.0, 0.0))
            .collect();
        assert_eq!(
            farthest_point_sampling(&pts, 2, 0).unwrap().indices,
            vec![0, 1]
        );
        assert_eq!(
            farthest_point_sampling(&pts, 3, 0).unwrap().indices,
            vec![0, 1, 2]
        );
        assert!(farthest_point_sampling(&pts, 4, 0).is_err());
        assert!(farthest_point_sampling(&pts, 1, 3).is_err());
    }

    #[test]
    fn fps_ties_break_to_lowest_index() {
        let pts: Vec<Point3<f64>> = [0.0, 1.0, -1.0]
            .iter()
            .map(|&x| Point3::new(x, 0.0, 0.0))
            .collect();
        assert_eq!(
            farthest_point_sampling(&pts, 2, 0).unwrap().indices,
            vec![0, 1]
        );
    }

    #[test]
    fn bench_rejects_few_repeats() {
        assert!(benchmark_sampling(10, 5, 0).is_err());
        assert!(benchmark_sampling(10, 5, 2).is_err());
    }

    #[test]
    fn bench_degenerate_full_selection() {
        let r = benchmark_sampling(64, 64, 3).unwrap();
        assert!(r.speed_ratio().is_finite());
        assert!(r.to_key_value().contains("speed_ratio="));
    }

    #[test]
    fn strategy_parses() {
        assert_eq!("fps".parse::<Strategy>().unwrap(), Strategy::Fps);
        assert_eq!("random".parse::<Strategy>().unwrap(), Strategy::Random);
        assert!("voxel".parse::<Strategy>().is_err());
    }
}
