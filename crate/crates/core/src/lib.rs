//! Neurite reconstruction from voxel embeddings.
//!
//! * [`swc`]: SWC skeleton files, forests, terminals and components.
//! * [`volume`]: dense grids, their on-disk format, rasterization and the
//!   distance transform.
//! * [`loss`]: the discriminative embedding loss and its gradient.
//! * [`postprocess`]: mask + embeddings to SWC trees.
//! * [`conn_eval`]: terminal-based connectivity errors and segmentation
//!   metrics.
//! * [`phantom`]: synthetic crossing-tube volumes with known answers.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`).

pub mod conn_eval;
pub mod loss;
pub mod phantom;
pub mod postprocess;
pub mod scalar;
pub mod swc;
pub mod union_find;
pub mod volume;

pub use scalar::Scalar;

pub type EmbeddingField32 = volume::EmbeddingField<f32>;
pub type EmbeddingField64 = volume::EmbeddingField<f64>;
pub type LossBreakdown64 = loss::LossBreakdown<f64>;
pub type LossGradient64 = loss::LossGradient<f64>;
