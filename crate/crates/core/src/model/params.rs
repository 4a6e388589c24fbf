use std::path::Path;

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, INPUT_CHANNELS, NUM_CLASSES};
use crate::cloud::write_atomic;
use crate::error::{contract, io_err, Error, Result};
use crate::scalar::Real;

/// One weight matrix (`rows` = fan-in) or bias vector (`rows` = 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    fn zeros(name: String, rows: usize, cols: usize) -> Self {
        Self {
            name,
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn matrix(&self) -> ArrayView2<'_, T> {
        ArrayView2::from_shape((self.rows, self.cols), &self.data).expect("tensor shape")
    }

    pub fn matrix_mut(&mut self) -> ArrayViewMut2<'_, T> {
        ArrayViewMut2::from_shape((self.rows, self.cols), &mut self.data).expect("tensor shape")
    }

    pub fn vector(&self) -> ArrayView1<'_, T> {
        ArrayView1::from(&self.data[..])
    }
}

/// Weight and bias tensor indices of one dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LayerRef {
    pub w: usize,
    pub b: usize,
}

/// Where every layer of a config lives in the flat tensor list.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    /// `sa[level][scale]` is that scale's shared transform.
    pub sa: Vec<Vec<Vec<LayerRef>>>,
    pub fp: Vec<Vec<LayerRef>>,
    pub head: LayerRef,
    /// `(name, rows, cols)` of every tensor in order.
    pub shapes: Vec<(String, usize, usize)>,
}

impl Layout {
    pub fn new(config: &ModelConfig) -> Self {
        let mut shapes = Vec::new();
        let mut dense = |prefix: String, fan_in: usize, fan_out: usize| {
            let w = shapes.len();
            shapes.push((format!("{prefix}.weight"), fan_in, fan_out));
            shapes.push((format!("{prefix}.bias"), 1, fan_out));
            LayerRef { w, b: w + 1 }
        };
        // channels carried per point besides the xyz offsets
        let mut feat = INPUT_CHANNELS - 3;
        let mut level_widths = vec![feat];
        let mut sa = Vec::new();
        for (l, level) in config.levels.iter().enumerate() {
            let mut scales = Vec::new();
            for (s, sc) in level.scales.iter().enumerate() {
                let mut fan_in = 3 + feat;
                let mut layers = Vec::new();
                for (k, &w) in sc.widths.iter().enumerate() {
                    layers.push(dense(format!("sa{}.scale{s}.layer{k}", l + 1), fan_in, w));
                    fan_in = w;
                }
                scales.push(layers);
            }
            feat = level.out_width();
            level_widths.push(feat);
            sa.push(scales);
        }
        let levels = config.levels.len();
        let mut fp = Vec::new();
        let mut cur = feat;
        for (j, widths) in config.fp_widths.iter().enumerate() {
            let target = levels - 1 - j;
            let skip = if target == 0 {
                INPUT_CHANNELS
            } else {
                level_widths[target]
            };
            let mut fan_in = cur + skip;
            let mut layers = Vec::new();
            for (k, &w) in widths.iter().enumerate() {
                layers.push(dense(format!("fp{}.layer{k}", j + 1), fan_in, w));
                fan_in = w;
            }
            cur = fan_in;
            fp.push(layers);
        }
        let head = dense("head".to_string(), cur, NUM_CLASSES);
        Self {
            sa,
            fp,
            head,
            shapes,
        }
    }
}

/// All trainable tensors of a network, in a fixed order determined by its config.
///
/// Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Real> ModelParams<T> {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config);
        Ok(Self {
            tensors: layout
                .shapes
                .into_iter()
                .map(|(n, r, c)| Tensor::zeros(n, r, c))
                .collect(),
        })
    }

    /// He-uniform weights for ReLU layers, zero biases.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in &mut p.tensors {
            if t.rows == 1 && t.name.ends_with(".bias") {
                continue;
            }
            let bound = (6.0 / t.rows as f64).sqrt();
            for v in &mut t.data {
                *v = T::lit(rng.random_range(-bound..bound));
            }
        }
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.name.clone(), t.rows, t.cols))
                .collect(),
        }
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn get(&self, flat: usize) -> T {
        let (t, k) = self.locate(flat);
        self.tensors[t].data[k]
    }

    pub fn set(&mut self, flat: usize, v: T) {
        let (t, k) = self.locate(flat);
        self.tensors[t].data[k] = v;
    }

    fn locate(&self, mut flat: usize) -> (usize, usize) {
        for (t, tensor) in self.tensors.iter().enumerate() {
            if flat < tensor.data.len() {
                return (t, flat);
            }
            flat -= tensor.data.len();
        }
        panic!("flat parameter index out of range");
    }

    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.tensors.iter().flat_map(|t| t.data.iter().copied())
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> T {
        self.values()
            .map(|v| v * v)
            .fold(T::zero(), |a, b| a + b)
            .sqrt()
    }

    pub fn add_scaled(&mut self, other: &Self, s: T) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x += s * y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for t in &mut self.tensors {
            for v in &mut t.data {
                *v *= s;
            }
        }
    }

    /// Checks that the tensor shapes are exactly those `config` requires.
    pub fn check_shapes(&self, config: &ModelConfig) -> Result<()> {
        config.validate()?;
        let layout = Layout::new(config);
        if layout.shapes.len() != self.tensors.len() {
            return contract("parameter tensor count does not match the config");
        }
        for ((name, r, c), t) in layout.shapes.iter().zip(&self.tensors) {
            if (*r, *c) != (t.rows, t.cols) || t.data.len() != r * c {
                return contract(format!(
                    "tensor {name}: expected {r}x{c}, found {}x{}",
                    t.rows, t.cols
                ));
            }
        }
        if !self.is_finite() {
            return contract("parameters contain non-finite values");
        }
        Ok(())
    }
}

pub const CHECKPOINT_FORMAT: &str = "leafwood-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointRecord {
    format: String,
    version: u32,
    scalar: String,
    config: ModelConfig,
    tensors: Vec<TensorRecord>,
}

/// Serializes config and parameters as JSON. Values pass through `f64`,
/// which is exact for both scalar types, so loading is bit-exact.
pub fn checkpoint_to_string<T: Real>(
    config: &ModelConfig,
    params: &ModelParams<T>,
) -> Result<String> {
    params.check_shapes(config)?;
    let rec = CheckpointRecord {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        scalar: T::NAME.into(),
        config: config.clone(),
        tensors: params
            .tensors
            .iter()
            .map(|t| TensorRecord {
                name: t.name.clone(),
                shape: [t.rows, t.cols],
                data: t.data.iter().map(|v| v.to_f64_lossless()).collect(),
            })
            .collect(),
    };
    serde_json::to_string(&rec).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn checkpoint_from_str<T: Real>(text: &str) -> Result<(ModelConfig, ModelParams<T>)> {
    let rec: CheckpointRecord =
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if rec.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!(
            "not a checkpoint: `{}`",
            rec.format
        )));
    }
    if rec.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {}",
            rec.version
        )));
    }
    if rec.scalar != T::NAME && !(rec.scalar == "f32" && T::NAME == "f64") {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {} values, cannot load as {}",
            rec.scalar,
            T::NAME
        )));
    }
    let params = ModelParams {
        tensors: rec
            .tensors
            .into_iter()
            .map(|t| Tensor {
                name: t.name,
                rows: t.shape[0],
                cols: t.shape[1],
                data: t.data.into_iter().map(T::lit).collect(),
            })
            .collect(),
    };
    params
        .check_shapes(&rec.config)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok((rec.config, params))
}

pub fn save_checkpoint<T: Real>(
    config: &ModelConfig,
    params: &ModelParams<T>,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_atomic(
        path.as_ref(),
        checkpoint_to_string(config, params)?.as_bytes(),
    )
}

pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<(ModelConfig, ModelParams<T>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    checkpoint_from_str(&text)
}
