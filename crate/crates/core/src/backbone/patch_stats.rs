//! Parameter-free stand-in extractor built from per-patch colour statistics.
//!
//! Each patch is split into 1×1, 2×2 and 4×4 grids of cells; every cell yields
//! its per-channel mean and standard deviation. The statistics are
//! standardized across the patches of the image, a constant unit component is
//! appended, and the result is mapped through a fixed seeded random projection
//! to the width of a small ViT. Used for smoke tests and toy pipelines where no
//! pretrained weights are available.

use ndarray::{s, Array2, Array3, ArrayView3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{check_divisible, FeatureExtractor, PatchFeatureGrid};
use crate::error::{Error, Result};
use crate::mask::ImageTensor;
use crate::scalar::Real;

const SPLITS: [usize; 3] = [1, 2, 4];
/// 21 cells × 3 channels × (mean, std) + 1.
pub const STATS_DIM: usize = 127;
/// Output width, matching `vit_small_8`.
pub const PATCH_STATS_DIM: usize = 384;
const PROJECTION_SEED: u64 = 0x5741_7453;

#[derive(Debug, Clone)]
pub struct PatchStatsExtractor {
    patch_size: usize,
    arch_id: String,
    /// STATS_DIM × PATCH_STATS_DIM, entries uniform with unit-variance outputs.
    projection: Array2<f64>,
}

impl PatchStatsExtractor {
    /// `patch_size` must be a positive multiple of 4.
    pub fn new(patch_size: usize) -> Self {
        assert!(patch_size > 0 && patch_size.is_multiple_of(4), "patch size must be a positive multiple of 4");
        let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED);
        let bound = (3.0 / STATS_DIM as f64).sqrt();
        let projection = Array2::from_shape_fn((STATS_DIM, PATCH_STATS_DIM), |_| rng.random_range(-bound..bound));
        Self {
            patch_size,
            arch_id: format!("patch_stats_{patch_size}"),
            projection,
        }
    }
}

impl<F: Real> FeatureExtractor<F> for PatchStatsExtractor {
    fn arch_id(&self) -> &str {
        &self.arch_id
    }

    fn patch_size(&self) -> usize {
        self.patch_size
    }

    fn feature_dim(&self) -> usize {
        PATCH_STATS_DIM
    }

    fn parameter_digest(&self) -> String {
        hex::encode(Sha256::digest(self.arch_id.as_bytes()))
    }

    fn extract(&self, image: &ImageTensor<F>) -> Result<PatchFeatureGrid<F>> {
        let p = self.patch_size;
        if !p.is_multiple_of(4) {
            return Err(Error::InvalidArgument(format!(
                "patch statistics need a patch size divisible by 4, got {p}"
            )));
        }
        let (rows, cols) = check_divisible(image, p)?;
        let data = image.data();
        let mut feats = Array3::<F>::zeros((rows, cols, STATS_DIM));
        for pi in 0..rows {
            for pj in 0..cols {
                let mut k = 0;
                for split in SPLITS {
                    let cell = p / split;
                    for ci in 0..split {
                        for cj in 0..split {
                            let (r0, c0) = (pi * p + ci * cell, pj * p + cj * cell);
                            let (mean, std) = channel_stats(&data.slice(s![r0..r0 + cell, c0..c0 + cell, ..]));
                            for c in 0..3 {
                                feats[[pi, pj, 6 * k + c]] = mean[c];
                                feats[[pi, pj, 6 * k + 3 + c]] = std[c];
                            }
                            k += 1;
                        }
                    }
                }
            }
        }
        let n = F::from_usize_lossy(rows * cols);
        for k in 0..STATS_DIM - 1 {
            let mut lane = feats.index_axis_mut(Axis(2), k);
            let mean = lane.sum() / n;
            let var = lane.iter().map(|v| (*v - mean) * (*v - mean)).sum::<F>() / n;
            let std = var.sqrt();
            lane.mapv_inplace(|v| if std > F::c(1e-12) { (v - mean) / std } else { F::zero() });
        }
        feats.index_axis_mut(Axis(2), STATS_DIM - 1).fill(F::one());
        let stats = feats.into_shape_with_order((rows * cols, STATS_DIM)).expect("contiguous");
        let projected = stats.dot(&self.projection.mapv(F::c));
        let data = projected
            .into_shape_with_order((rows, cols, PATCH_STATS_DIM))
            .expect("grid sized");
        PatchFeatureGrid::new(data, p, (rows * p, cols * p))
    }
}

fn channel_stats<F: Real>(region: &ArrayView3<'_, F>) -> ([F; 3], [F; 3]) {
    let area = F::from_usize_lossy(region.len() / 3);
    let mut mean = [F::zero(); 3];
    let mut std = [F::zero(); 3];
    for c in 0..3 {
        let lane = region.index_axis(Axis(2), c);
        let m = lane.sum() / area;
        let var = lane.iter().map(|v| (*v - m) * (*v - m)).sum::<F>() / area;
        mean[c] = m;
        std[c] = var.sqrt();
    }
    (mean, std)
}
