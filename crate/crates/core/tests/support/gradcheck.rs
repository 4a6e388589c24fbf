//! Central finite differences against the analytic gradient.

use leafwood_core::cloud::{ClassLabel, LabeledCloud, Point3};
use leafwood_core::model::network::{forward_with_plan, loss, loss_and_gradient};
use leafwood_core::model::{plan_sampling, ModelConfig, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_chunk(n: usize, seed: u64) -> LabeledCloud<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = (0..n)
        .map(|_| {
            Point3::new(
                rng.random_range(-0.7..0.7),
                rng.random_range(-0.7..0.7),
                rng.random_range(-0.7..0.7),
            )
        })
        .collect();
    let labels = (0..n)
        .map(|_| {
            if rng.random_bool(0.4) {
                ClassLabel::Wood
            } else {
                ClassLabel::Leaf
            }
        })
        .collect();
    let lin = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    LabeledCloud::new(pts)
        .unwrap()
        .with_labels(labels)
        .unwrap()
        .with_linearity(lin)
        .unwrap()
}

/// Random weights and biases, so no ReLU input sits exactly on its kink.
pub fn random_params(config: &ModelConfig, seed: u64) -> ModelParams<f64> {
    let mut p = ModelParams::init(config, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    for t in &mut p.tensors {
        if t.name.ends_with(".bias") {
            for v in &mut t.data {
                *v = rng.random_range(-0.2..0.2);
            }
        }
    }
    p
}

pub struct GradReport {
    pub checked: usize,
    pub failures: usize,
    pub worst: f64,
}

/// Relative error `|a - b| / max(|a|, |b|)` per parameter, step `h`; pairs where
/// both values are below `floor` count as agreeing.
pub fn check(seed: u64, h: f64, tol: f64, floor: f64) -> GradReport {
    let config = ModelConfig::micro();
    let chunk = random_chunk(16, seed);
    let plan = plan_sampling(&config, chunk.points(), seed).unwrap();
    let weights = Some([1.0, 2.5]);
    let params = random_params(&config, seed);
    let (_, grad) = loss_and_gradient(&params, &config, &chunk, &plan, weights).unwrap();
    let labels = chunk.labels().unwrap();
    let eval = |p: &ModelParams<f64>| {
        let (s, _) = forward_with_plan(p, &config, &chunk, &plan).unwrap();
        loss(&s, labels, weights).unwrap()
    };
    let mut report = GradReport {
        checked: 0,
        failures: 0,
        worst: 0.0,
    };
    let mut p = params.clone();
    for i in 0..params.num_values() {
        let x = params.get(i);
        p.set(i, x + h);
        let up = eval(&p);
        p.set(i, x - h);
        let down = eval(&p);
        p.set(i, x);
        let fd = (up - down) / (2.0 * h);
        let an = grad.get(i);
        let big = an.abs().max(fd.abs());
        let e = if big < floor {
            0.0
        } else {
            (an - fd).abs() / big
        };
        report.checked += 1;
        if e > tol {
            report.failures += 1;
        }
        report.worst = report.worst.max(e);
    }
    report
}
