use log::debug;

use super::affinity::{build_affinity, AffinityGraph};
use super::ncut::{argmax_abs, normalized_cut_bipartition, CutResult};
use crate::backbone::PatchFeatureGrid;
use crate::error::{Error, Result};
use crate::mask::{binarize, BinaryMask, SoftMask};
use crate::resize::{Kernel, Resize2d};
use crate::scalar::Real;

pub const DEFAULT_ITERATIONS: usize = 3;
/// Labels with less foreground than this are not used for training.
pub const MIN_FOREGROUND_FRACTION: f64 = 0.005;
/// Labels with more foreground than this are not used for training.
pub const MAX_FOREGROUND_FRACTION: f64 = 0.95;
/// A later round that claims more than this share of the still-unselected
/// patches is treated as a background cut and ends the loop.
const MAX_ROUND_SHARE: f64 = 0.8;

/// Picks the partition side holding the largest-magnitude eigenvector entry,
/// flipping to the other side when the chosen one covers 3 or more grid corners.
pub fn select_foreground<F: Real>(cut: &CutResult<F>, grid_dims: (usize, usize)) -> Result<BinaryMask<F>> {
    let (h, w) = grid_dims;
    if h * w != cut.partition.len() {
        return Err(Error::shape(format!("{h}×{w} patches"), cut.partition.len()));
    }
    let peak = argmax_abs(&cut.eigenvector);
    let side = cut.partition[peak];
    let corners = [0, w - 1, (h - 1) * w, h * w - 1];
    let on_side = corners.iter().filter(|&&c| cut.partition[c] == side).count();
    let fg_side = if on_side >= 3 { !side } else { side };
    let bits: Vec<bool> = cut.partition.iter().map(|p| *p == fg_side).collect();
    BinaryMask::from_bools(grid_dims, &bits)
}

/// Iterated normalized cuts; returns the union of every accepted round's foreground.
pub fn maskcut<F: Real>(features: &PatchFeatureGrid<F>, iterations: usize, tau: F, eps: F) -> Result<BinaryMask<F>> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("maskcut needs at least one iteration".into()));
    }
    let graph = build_affinity(features, tau, eps)?;
    maskcut_graph(graph, features.grid_dims(), iterations)
}

pub(crate) fn maskcut_graph<F: Real>(
    mut graph: AffinityGraph<F>,
    grid_dims: (usize, usize),
    iterations: usize,
) -> Result<BinaryMask<F>> {
    let n = graph.len();
    let mut selected = vec![false; n];
    let mut n_selected = 0;
    for round in 0..iterations {
        let cut = normalized_cut_bipartition(&graph)?;
        let fg = select_foreground(&cut, grid_dims)?.to_bools();
        let fresh: Vec<usize> = (0..n).filter(|&i| fg[i] && !selected[i]).collect();
        let remaining = n - n_selected;
        // The first cut is always kept so a single iteration is exactly one cut.
        if round > 0 && (fresh.len() < 2 || fresh.len() as f64 > MAX_ROUND_SHARE * remaining as f64) {
            debug!("maskcut stopped at round {} ({} new of {} remaining)", round + 1, fresh.len(), remaining);
            break;
        }
        for &i in &fresh {
            selected[i] = true;
        }
        n_selected += fresh.len();
        if n_selected == n {
            break;
        }
        graph.isolate(&fresh);
    }
    BinaryMask::from_bools(grid_dims, &selected)
}

/// Bilinear upsampling of a patch mask to pixels, re-thresholded at 0.5.
pub fn upsample_pseudo_label<F: Real>(patch_mask: &BinaryMask<F>, target_size: (usize, usize)) -> Result<BinaryMask<F>> {
    let (h, w) = patch_mask.size();
    if h == 0 || w == 0 || target_size.0 == 0 || target_size.1 == 0 {
        return Err(Error::InvalidArgument("empty mask or target size".into()));
    }
    let up = Resize2d::new((h, w), target_size, Kernel::Bilinear).apply(patch_mask.view());
    // Bilinear weights are convex, so values stay in [0, 1] up to rounding.
    let soft = SoftMask::new(up.mapv(|v| v.max(F::zero()).min(F::one())))?;
    binarize(&soft, F::c(0.5))
}

/// True when the label is too empty or too full to supervise training.
pub fn is_degenerate<F: Real>(label: &BinaryMask<F>) -> bool {
    let f = label.foreground_fraction();
    !(MIN_FOREGROUND_FRACTION..=MAX_FOREGROUND_FRACTION).contains(&f)
}
