//! Unsupervised camouflaged object segmentation by adapting a frozen
//! self-supervised vision transformer to the target domain without labels.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the bottom of this module fix the scalar for common types.

// Validation checks are written `!(x > 0)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod mask;
pub mod resize;
pub mod scalar;
pub mod io;
pub mod metrics;
pub mod backbone;
pub mod datasets;
pub mod pseudolabel;
pub mod segmenter;
pub mod fba;
pub mod losses;
pub mod optim;
pub mod trainer;
pub mod toy;

pub use error::{Error, Result};
pub use scalar::Real;

pub type ImageTensorF32 = mask::ImageTensor<f32>;
pub type ImageTensorF64 = mask::ImageTensor<f64>;
pub type SoftMaskF32 = mask::SoftMask<f32>;
pub type SoftMaskF64 = mask::SoftMask<f64>;
pub type BinaryMaskF32 = mask::BinaryMask<f32>;
pub type BinaryMaskF64 = mask::BinaryMask<f64>;
pub type PatchFeatureGridF32 = backbone::PatchFeatureGrid<f32>;
pub type PatchFeatureGridF64 = backbone::PatchFeatureGrid<f64>;
pub type LinearHeadF32 = segmenter::LinearHead<f32>;
pub type LinearHeadF64 = segmenter::LinearHead<f64>;
pub type FbaStackF32 = fba::FbaStack<f32>;
pub type FbaStackF64 = fba::FbaStack<f64>;
pub type CheckpointF32 = trainer::Checkpoint<f32>;
pub type CheckpointF64 = trainer::Checkpoint<f64>;
