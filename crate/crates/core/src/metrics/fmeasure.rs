use crate::error::{Error, Result};
use crate::mask::{BinaryMask, SoftMask};
use crate::metrics::basic::{check_aligned, threshold_counts, N_THRESHOLDS};
use crate::scalar::Real;

/// β² weighting precision over recall in the thresholded F-measure.
pub const BETA_SQ: f64 = 0.3;

/// Precision and recall at each integral threshold τ/255, τ ∈ 0..=255.
#[derive(Debug, Clone, PartialEq)]
pub struct FbetaCurve<F: Real> {
    pub precision: Vec<F>,
    pub recall: Vec<F>,
}

/// Precision/recall curve for one image. Precision is 0 when nothing is predicted;
/// an empty ground truth has no defined recall and is rejected.
pub fn fbeta_curve<F: Real>(p: &SoftMask<F>, g: &BinaryMask<F>) -> Result<FbetaCurve<F>> {
    check_aligned(p, g)?;
    let counts = threshold_counts(p, g);
    if counts.gt_pos == 0 {
        return Err(Error::InvalidArgument(
            "F-measure undefined for empty ground truth".into(),
        ));
    }
    let gt = F::from_usize_lossy(counts.gt_pos);
    let mut precision = Vec::with_capacity(N_THRESHOLDS);
    let mut recall = Vec::with_capacity(N_THRESHOLDS);
    for tau in 0..N_THRESHOLDS {
        let tp = F::from_usize_lossy(counts.tp[tau]);
        precision.push(if counts.pp[tau] == 0 {
            F::zero()
        } else {
            tp / F::from_usize_lossy(counts.pp[tau])
        });
        recall.push(tp / gt);
    }
    Ok(FbetaCurve { precision, recall })
}

pub(crate) fn f_beta<F: Real>(precision: F, recall: F, beta_sq: F) -> F {
    let den = beta_sq * precision + recall;
    if den == F::zero() {
        F::zero()
    } else {
        (F::one() + beta_sq) * precision * recall / den
    }
}

/// Per-threshold F curve from precision/recall averaged across images.
pub fn mean_f_curve<F: Real>(curves: &[FbetaCurve<F>]) -> Result<Vec<F>> {
    if curves.is_empty() {
        return Err(Error::InvalidArgument("no curves to aggregate".into()));
    }
    let n = F::from_usize_lossy(curves.len());
    let beta_sq = F::c(BETA_SQ);
    Ok((0..N_THRESHOLDS)
        .map(|tau| {
            let pr = curves.iter().map(|c| c.precision[tau]).sum::<F>() / n;
            let re = curves.iter().map(|c| c.recall[tau]).sum::<F>() / n;
            f_beta(pr, re, beta_sq)
        })
        .collect())
}

/// `(f_max, f_mean)` over thresholds of the dataset-averaged F curve.
pub fn f_measures<F: Real>(curves: &[FbetaCurve<F>]) -> Result<(F, F)> {
    let f = mean_f_curve(curves)?;
    let max = f.iter().copied().fold(F::zero(), F::max);
    let mean = f.iter().copied().sum::<F>() / F::from_usize_lossy(f.len());
    Ok((max, mean))
}
