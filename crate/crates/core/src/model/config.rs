use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::sampling::Strategy;

/// Input channels per point: xyz plus linearity.
pub const INPUT_CHANNELS: usize = 4;
pub const NUM_CLASSES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleConfig {
    /// Grouping radius in normalized chunk units.
    pub radius: f64,
    pub max_group: usize,
    /// Output width of each layer of the shared point-wise transform.
    pub widths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelConfig {
    pub num_centroids: usize,
    pub scales: Vec<ScaleConfig>,
}

impl LevelConfig {
    pub fn out_width(&self) -> usize {
        self.scales
            .iter()
            .map(|s| s.widths.last().copied().unwrap_or(0))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub num_classes: usize,
    /// Set-abstraction levels, finest first.
    pub levels: Vec<LevelConfig>,
    /// Feature-propagation layer widths; entry `j` maps level `L - j` onto
    /// level `L - j - 1`, the last entry lands on the input points.
    pub fp_widths: Vec<Vec<usize>>,
    pub sampling: Strategy,
    pub seed: u64,
}

fn scale(radius: f64, max_group: usize, widths: &[usize]) -> ScaleConfig {
    ScaleConfig {
        radius,
        max_group,
        widths: widths.to_vec(),
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_channels: INPUT_CHANNELS,
            num_classes: NUM_CLASSES,
            levels: vec![
                LevelConfig {
                    num_centroids: 2048,
                    scales: vec![scale(0.1, 16, &[16, 16, 32]), scale(0.2, 32, &[32, 32, 64])],
                },
                LevelConfig {
                    num_centroids: 512,
                    scales: vec![
                        scale(0.2, 16, &[64, 64, 128]),
                        scale(0.4, 32, &[64, 96, 128]),
                    ],
                },
            ],
            fp_widths: vec![vec![128, 128], vec![128, 64]],
            sampling: Strategy::Random,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Desk-scale network for chunks of a few thousand points.
    pub fn toy() -> Self {
        Self {
            levels: vec![
                LevelConfig {
                    num_centroids: 512,
                    scales: vec![scale(0.05, 16, &[16, 32]), scale(0.1, 32, &[16, 32])],
                },
                LevelConfig {
                    num_centroids: 128,
                    scales: vec![scale(0.15, 16, &[48, 64]), scale(0.3, 32, &[48, 64])],
                },
            ],
            fp_widths: vec![vec![64], vec![32, 32]],
            ..Self::default()
        }
    }

    /// Tiny network for exhaustive gradient checks.
    pub fn micro() -> Self {
        Self {
            levels: vec![
                LevelConfig {
                    num_centroids: 4,
                    scales: vec![scale(0.4, 4, &[5, 6]), scale(0.8, 6, &[4])],
                },
                LevelConfig {
                    num_centroids: 2,
                    scales: vec![scale(0.8, 3, &[6]), scale(1.6, 4, &[5])],
                },
            ],
            fp_widths: vec![vec![7], vec![6, 5]],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels != INPUT_CHANNELS {
            return contract(format!("network expects {INPUT_CHANNELS} input channels"));
        }
        if self.num_classes != NUM_CLASSES {
            return contract(format!("network expects {NUM_CLASSES} classes"));
        }
        if self.levels.is_empty() {
            return contract("need at least one set-abstraction level");
        }
        if self.fp_widths.len() != self.levels.len() {
            return contract("one feature-propagation stage per level is required");
        }
        let mut prev = usize::MAX;
        for (l, level) in self.levels.iter().enumerate() {
            if level.num_centroids == 0 || level.num_centroids > prev {
                return contract(format!(
                    "level {l}: centroid counts must be positive and non-increasing"
                ));
            }
            prev = level.num_centroids;
            if level.scales.is_empty() {
                return contract(format!("level {l} has no scales"));
            }
            let mut last_r = 0.0;
            for s in &level.scales {
                if !(s.radius > last_r) || !s.radius.is_finite() {
                    return contract(format!("level {l}: radii must be positive and ascending"));
                }
                last_r = s.radius;
                if s.max_group == 0 || s.widths.is_empty() || s.widths.contains(&0) {
                    return contract(format!("level {l}: empty group or zero layer width"));
                }
            }
        }
        if self
            .fp_widths
            .iter()
            .any(|w| w.is_empty() || w.contains(&0))
        {
            return contract("feature-propagation stages need positive widths");
        }
        Ok(())
    }

    pub fn min_chunk_points(&self) -> usize {
        self.levels[0].num_centroids
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub decay_rate: f64,
    /// Epochs between learning-rate decays.
    pub decay_step: usize,
    /// Chunks per optimizer step.
    pub batch: usize,
    pub optimizer: Optimizer,
    /// Loss weight of `[leaf, wood]`.
    pub class_weights: Option<[f64; 2]>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 60,
            decay_rate: 0.5,
            decay_step: 20,
            batch: 1,
            optimizer: Optimizer::Adam,
            class_weights: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return contract("learning rate must be positive");
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return contract("decay rate must lie in (0, 1]");
        }
        if self.decay_step == 0 || self.batch == 0 {
            return contract("decay step and batch must be positive");
        }
        if let Some(w) = self.class_weights {
            if w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return contract("class weights must be positive");
            }
        }
        Ok(())
    }

    /// Step-decayed rate for a zero-based epoch.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.decay_rate.powi((epoch / self.decay_step) as i32)
    }
}
