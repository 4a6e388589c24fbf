//! Wood-leaf classification for terrestrial-laser-scanning tree point clouds.
//!
//! The pipeline: per-point linearity from neighborhood PCA ([`features`]),
//! splitting large clouds into normalized chunks ([`split`]), a small
//! multi-scale set-abstraction segmentation network ([`model`]) whose
//! centroids come from [`sampling`], and the usual accuracy metrics
//! ([`eval`]). [`synth`] produces labeled synthetic trees for testing.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the common double-precision instantiations.

pub mod cloud;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod sampling;
pub mod scalar;
pub mod spatial;
pub mod split;
pub mod synth;

pub use cloud::{ClassLabel, PlyEncoding};
pub use error::{Error, Result};
pub use scalar::Real;

pub type Point3 = cloud::Point3<f64>;
pub type LabeledCloud = cloud::LabeledCloud<f64>;
pub type SpatialIndex = spatial::SpatialIndex<f64>;
pub type LinearityField = features::LinearityField<f64>;
pub type ChunkTransform = split::ChunkTransform<f64>;
pub type Chunk = split::Chunk<f64>;
pub type ModelParams = model::ModelParams<f64>;

pub type Point3f = cloud::Point3<f32>;
pub type LabeledCloudf = cloud::LabeledCloud<f32>;
pub type ModelParamsf = model::ModelParams<f32>;
