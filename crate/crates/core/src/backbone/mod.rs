//! The frozen source model: patch-level features from a self-supervised ViT.

mod cache;
mod patch_stats;
mod vit;

pub use cache::{extract_with, FeatureCache};
pub use patch_stats::PatchStatsExtractor;
pub use vit::{load_source_model, ViTConfig, VisionTransformer, IMAGENET_MEAN, IMAGENET_STD};

use ndarray::{Array2, Array3, ArrayView2};

use crate::error::{Error, Result};
use crate::mask::ImageTensor;
use crate::scalar::Real;

/// `h×w×d` grid of patch features for an `H×W` image.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchFeatureGrid<F: Real> {
    data: Array3<F>,
    patch_size: usize,
    source_image_size: (usize, usize),
}

impl<F: Real> PatchFeatureGrid<F> {
    pub fn new(data: Array3<F>, patch_size: usize, source_image_size: (usize, usize)) -> Result<Self> {
        let (h, w, _) = data.dim();
        if patch_size == 0
            || source_image_size.0 != h * patch_size
            || source_image_size.1 != w * patch_size
        {
            return Err(Error::shape(
                format!("{}×{} grid for patch {patch_size}", h, w),
                format!("{source_image_size:?} image"),
            ));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            data,
            patch_size,
            source_image_size,
        })
    }

    pub fn data(&self) -> &Array3<F> {
        &self.data
    }

    /// `(h, w)`.
    pub fn grid_dims(&self) -> (usize, usize) {
        let (h, w, _) = self.data.dim();
        (h, w)
    }

    pub fn dim(&self) -> usize {
        self.data.dim().2
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn source_image_size(&self) -> (usize, usize) {
        self.source_image_size
    }

    pub fn n_patches(&self) -> usize {
        let (h, w) = self.grid_dims();
        h * w
    }

    /// Features as an `(h·w)×d` matrix in row-major patch order.
    pub fn as_matrix(&self) -> ArrayView2<'_, F> {
        let (h, w, d) = self.data.dim();
        self.data
            .view()
            .into_shape_with_order((h * w, d))
            .expect("contiguous feature grid")
    }

    /// Copy with each patch vector scaled to unit L2 norm.
    pub fn l2_normalized(&self) -> Result<Self> {
        let mut m: Array2<F> = self.as_matrix().to_owned();
        for (patch, mut row) in m.rows_mut().into_iter().enumerate() {
            let norm = row.iter().map(|v| *v * *v).sum::<F>().sqrt();
            if !(norm > F::zero()) {
                return Err(Error::ZeroNormFeature { patch });
            }
            row.mapv_inplace(|v| v / norm);
        }
        let (h, w, d) = self.data.dim();
        Ok(Self {
            data: m.into_shape_with_order((h, w, d)).expect("same length"),
            patch_size: self.patch_size,
            source_image_size: self.source_image_size,
        })
    }

    pub fn cast<G: Real>(&self) -> PatchFeatureGrid<G> {
        PatchFeatureGrid {
            data: self.data.mapv(|v| G::c(v.to_f64_lossy())),
            patch_size: self.patch_size,
            source_image_size: self.source_image_size,
        }
    }
}

/// A frozen patch-feature extractor.
pub trait FeatureExtractor<F: Real>: Send + Sync {
    /// Identifier used in cache keys (e.g. `vit_small_8`).
    fn arch_id(&self) -> &str;

    fn patch_size(&self) -> usize;

    fn feature_dim(&self) -> usize;

    /// Hex SHA-256 over all parameters; unchanged for the lifetime of the model.
    fn parameter_digest(&self) -> String;

    fn extract(&self, image: &ImageTensor<F>) -> Result<PatchFeatureGrid<F>>;
}

pub(crate) fn check_divisible<F: Real>(image: &ImageTensor<F>, patch: usize) -> Result<(usize, usize)> {
    let (h, w) = image.size();
    if h == 0 || w == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::InvalidArgument(format!(
            "image {h}×{w} not divisible by patch size {patch}; resize first"
        )));
    }
    Ok((h / patch, w / patch))
}
