mod support;

use leafwood_core::cloud::ClassLabel;
use leafwood_core::model::network::{argmax_labels, forward_with_plan, loss, loss_and_gradient};
use leafwood_core::model::{plan_sampling, ModelConfig, ModelParams, SamplingPlan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::gradcheck::{self, random_chunk, random_params};

#[test]
fn gradients_match_central_differences_on_three_seeds() {
    for seed in [11, 22, 33] {
        let r = gradcheck::check(seed, 1e-5, 1e-4, 1e-9);
        assert_eq!(
            r.failures, 0,
            "seed {seed}: worst relative error {:e}",
            r.worst
        );
        assert!(r.checked > 300);
    }
}

#[test]
fn micro_config_respects_width_bound() {
    let c = ModelConfig::micro();
    assert_eq!(c.levels[0].num_centroids, 4);
    let widths = c
        .levels
        .iter()
        .flat_map(|l| l.scales.iter().flat_map(|s| s.widths.iter()))
        .chain(c.fp_widths.iter().flatten());
    assert!(widths.copied().all(|w| w <= 8));
}

#[test]
fn zero_network_ties_to_leaf() {
    let config = ModelConfig::micro();
    let chunk = random_chunk(30, 4);
    let params = ModelParams::zeros(&config).unwrap();
    let plan = plan_sampling(&config, chunk.points(), 1).unwrap();
    let (s, _) = forward_with_plan(&params, &config, &chunk, &plan).unwrap();
    assert!(s.iter().all(|&v| v == 0.0));
    assert!(argmax_labels(&s).iter().all(|&l| l == ClassLabel::Leaf));
}

#[test]
fn balanced_zero_network_is_stationary() {
    let config = ModelConfig::micro();
    let chunk = random_chunk(20, 8);
    let labels = (0..20)
        .map(|i| {
            if i % 2 == 0 {
                ClassLabel::Wood
            } else {
                ClassLabel::Leaf
            }
        })
        .collect();
    let chunk = chunk.without_labels().with_labels(labels).unwrap();
    let params = ModelParams::zeros(&config).unwrap();
    let plan = plan_sampling(&config, chunk.points(), 3).unwrap();
    let (l, g) = loss_and_gradient(&params, &config, &chunk, &plan, None).unwrap();
    assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    assert!(g.norm() <= 1e-8);
}

#[test]
fn scale_seeing_only_its_centroid_gets_no_offset_gradient() {
    let mut config = ModelConfig::micro();
    // the first scale now only ever contains the centroid itself
    config.levels[0].scales[0].radius = 1e-9;
    let chunk = random_chunk(16, 5);
    let plan = plan_sampling(&config, chunk.points(), 5).unwrap();
    let params = random_params(&config, 5);
    let (_, g) = loss_and_gradient(&params, &config, &chunk, &plan, None).unwrap();
    let first = g
        .tensors
        .iter()
        .find(|t| t.name == "sa1.scale0.layer0.weight")
        .unwrap();
    // rows 0..3 multiply the (all zero) relative offsets
    assert!(first.data[..3 * first.cols].iter().all(|&v| v == 0.0));
    assert!(first.data[3 * first.cols..].iter().any(|&v| v != 0.0));
}

#[test]
fn loss_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 37;
    let s: ndarray::Array2<f64> =
        ndarray::Array2::from_shape_fn((n, 2), |_| rng.random_range(-3.0..3.0));
    let labels: Vec<ClassLabel> = (0..n)
        .map(|_| {
            if rng.random_bool(0.3) {
                ClassLabel::Wood
            } else {
                ClassLabel::Leaf
            }
        })
        .collect();
    let w = [0.7, 1.9];
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        let c = labels[i].index();
        let p = s[[i, c]].exp() / (s[[i, 0]].exp() + s[[i, 1]].exp());
        num += -w[c] * p.ln();
        den += w[c];
    }
    let got = loss(&s, &labels, Some(w)).unwrap();
    assert!((got - num / den).abs() < 1e-12);
    let uniform = ndarray::Array2::<f64>::zeros((n, 2));
    assert!((loss(&uniform, &labels, None).unwrap() - 2f64.ln()).abs() < 1e-15);
    let sure = ndarray::Array2::<f64>::from_shape_fn((n, 2), |(i, c)| {
        if c == labels[i].index() {
            30.0
        } else {
            -30.0
        }
    });
    assert!(loss(&sure, &labels, None).unwrap() < 1e-6);
    assert!(loss(&sure, &labels[1..], None).is_err());
}

#[test]
fn fixed_centroids_make_outputs_permutation_equivariant() {
    let config = ModelConfig::micro();
    let chunk = random_chunk(40, 6);
    let params = random_params(&config, 6);
    let plan = plan_sampling(&config, chunk.points(), 6).unwrap();
    let (s, _) = forward_with_plan(&params, &config, &chunk, &plan).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut perm: Vec<usize> = (0..40).collect();
    rand::seq::SliceRandom::shuffle(&mut perm[..], &mut rng);
    let permuted = chunk.select(&perm);
    let mut inverse = vec![0; 40];
    for (new, &old) in perm.iter().enumerate() {
        inverse[old] = new;
    }
    let plan_p = SamplingPlan {
        levels: vec![
            plan.levels[0].iter().map(|&i| inverse[i]).collect(),
            plan.levels[1].clone(),
        ],
    };
    let (sp, _) = forward_with_plan(&params, &config, &permuted, &plan_p).unwrap();
    for (new, &old) in perm.iter().enumerate() {
        for c in 0..2 {
            assert!((sp[[new, c]] - s[[old, c]]).abs() < 1e-12);
        }
    }
}

#[test]
fn duplicating_a_group_member_keeps_scores() {
    let mut config = ModelConfig::micro();
    // groups large enough that nothing is ever cut off
    for level in &mut config.levels {
        for s in &mut level.scales {
            s.max_group = 64;
        }
    }
    let chunk = random_chunk(24, 9);
    let params = random_params(&config, 9);
    let plan = plan_sampling(&config, chunk.points(), 9).unwrap();
    let (s, _) = forward_with_plan(&params, &config, &chunk, &plan).unwrap();

    let mut idx: Vec<usize> = (0..24).collect();
    idx.push(plan.levels[0][0]);
    let dup = chunk.select(&idx);
    let (sd, _) = forward_with_plan(&params, &config, &dup, &plan).unwrap();
    for i in 0..24 {
        for c in 0..2 {
            assert!((sd[[i, c]] - s[[i, c]]).abs() < 1e-12);
        }
    }
}

#[test]
fn scores_are_finite_with_f32() {
    let config = ModelConfig::micro();
    let chunk = random_chunk(50, 10).cast::<f32>();
    let params: ModelParams<f32> = ModelParams::init(&config, 3).unwrap();
    let plan = plan_sampling(&config, chunk.points(), 2).unwrap();
    let (s, _) = forward_with_plan(&params, &config, &chunk, &plan).unwrap();
    assert_eq!(s.dim(), (50, 2));
    assert!(s.iter().all(|v| v.is_finite()));
}

#[test]
fn missing_linearity_or_tiny_chunk_is_rejected() {
    let config = ModelConfig::micro();
    let params = ModelParams::init(&config, 1).unwrap();
    let chunk = random_chunk(20, 1);
    let plan = plan_sampling(&config, chunk.points(), 1).unwrap();
    assert!(
        forward_with_plan(&params, &config, &chunk.clone().without_linearity(), &plan).is_err()
    );
    assert!(plan_sampling(&config, &chunk.points()[..3], 1).is_err());
}
