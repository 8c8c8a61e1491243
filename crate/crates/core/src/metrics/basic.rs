use ndarray::Zip;

use crate::error::{Error, Result};
use crate::mask::{BinaryMask, SoftMask};
use crate::scalar::Real;

pub(crate) fn check_aligned<F: Real>(p: &SoftMask<F>, g: &BinaryMask<F>) -> Result<()> {
    if p.size() != g.size() {
        return Err(Error::shape(format!("{:?}", g.size()), format!("{:?}", p.size())));
    }
    if p.size().0 == 0 || p.size().1 == 0 {
        return Err(Error::InvalidArgument("empty map".into()));
    }
    Ok(())
}

/// Number of thresholds: τ ∈ {0, …, 255}.
pub const N_THRESHOLDS: usize = 256;

#[inline]
pub(crate) fn threshold<F: Real>(tau: usize) -> F {
    F::from_usize_lossy(tau) / F::c(255.0)
}

/// Largest τ such that `p >= τ/255`, i.e. `p` is foreground for all thresholds `0..=τ`.
#[inline]
pub(crate) fn top_threshold<F: Real>(p: F) -> usize {
    let mut k = (p * F::c(255.0)).floor().to_f64_lossy().clamp(0.0, 255.0) as usize;
    while k < 255 && p >= threshold::<F>(k + 1) {
        k += 1;
    }
    while k > 0 && p < threshold::<F>(k) {
        k -= 1;
    }
    k
}

/// Mean absolute error.
pub fn mae<F: Real>(p: &SoftMask<F>, g: &BinaryMask<F>) -> Result<F> {
    check_aligned(p, g)?;
    let mut acc = F::zero();
    Zip::from(p.data()).and(g.data()).for_each(|&a, &b| acc += (a - b).abs());
    Ok(acc / F::from_usize_lossy(p.data().len()))
}

/// `(iou, accuracy)` after binarizing `p` at `threshold` (inclusive).
/// IoU is 1 when prediction and ground truth are both empty.
pub fn miou_acc<F: Real>(p: &SoftMask<F>, g: &BinaryMask<F>, threshold: F) -> Result<(F, F)> {
    check_aligned(p, g)?;
    let mut inter = 0usize;
    let mut union = 0usize;
    let mut agree = 0usize;
    Zip::from(p.data()).and(g.data()).for_each(|&a, &b| {
        let pa = a >= threshold;
        let gb = b == F::one();
        inter += (pa && gb) as usize;
        union += (pa || gb) as usize;
        agree += (pa == gb) as usize;
    });
    let iou = if union == 0 {
        F::one()
    } else {
        F::from_usize_lossy(inter) / F::from_usize_lossy(union)
    };
    let acc = F::from_usize_lossy(agree) / F::from_usize_lossy(p.data().len());
    Ok((iou, acc))
}

/// Per-threshold confusion counts: `tp[τ]` and `pp[τ]` (predicted positives) for τ ∈ 0..=255.
pub(crate) struct ThresholdCounts {
    pub tp: Vec<usize>,
    pub pp: Vec<usize>,
    pub gt_pos: usize,
    pub total: usize,
}

pub(crate) fn threshold_counts<F: Real>(p: &SoftMask<F>, g: &BinaryMask<F>) -> ThresholdCounts {
    let mut fg_hist = [0usize; N_THRESHOLDS];
    let mut bg_hist = [0usize; N_THRESHOLDS];
    let mut gt_pos = 0;
    Zip::from(p.data()).and(g.data()).for_each(|&a, &b| {
        let k = top_threshold(a);
        if b == F::one() {
            fg_hist[k] += 1;
            gt_pos += 1;
        } else {
            bg_hist[k] += 1;
        }
    });
    let mut tp = vec![0; N_THRESHOLDS];
    let mut pp = vec![0; N_THRESHOLDS];
    let (mut cf, mut cb) = (0, 0);
    for tau in (0..N_THRESHOLDS).rev() {
        cf += fg_hist[tau];
        cb += bg_hist[tau];
        tp[tau] = cf;
        pp[tau] = cf + cb;
    }
    ThresholdCounts {
        tp,
        pp,
        gt_pos,
        total: p.data().len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn top_threshold_is_consistent_with_comparison() {
        for i in 0..=1000 {
            let p = i as f64 / 1000.0;
            let k = top_threshold(p);
            assert!(p >= threshold::<f64>(k));
            if k < 255 {
                assert!(p < threshold::<f64>(k + 1));
            }
        }
        for tau in 0..256 {
            assert_eq!(top_threshold(threshold::<f32>(tau)), tau);
        }
    }

    #[test]
    fn mae_examples() {
        let g = BinaryMask::new(array![[1.0_f64, 0.0], [0.0, 0.0]]).unwrap();
        assert_eq!(mae(&g.to_soft(), &g).unwrap(), 0.0);
        let inv = crate::mask::complement(&g.to_soft());
        assert_eq!(mae(&inv, &g).unwrap(), 1.0);
        let p = SoftMask::new(array![[1.0, 0.0], [0.5, 0.0]]).unwrap();
        assert!((mae(&p, &g).unwrap() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn miou_acc_examples() {
        let g = BinaryMask::new(array![[1.0_f64, 1.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(miou_acc(&g.to_soft(), &g, 0.5).unwrap(), (1.0, 1.0));
        let z = BinaryMask::<f64>::zeros((2, 4));
        assert_eq!(miou_acc(&z.to_soft(), &z, 0.5).unwrap(), (1.0, 1.0));
        // half of G covered, no false positives
        let p = SoftMask::new(array![[1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]]).unwrap();
        let (iou, acc) = miou_acc(&p, &g, 0.5).unwrap();
        assert_eq!(iou, 0.5);
        assert!((acc - (1.0 - 4.0 / (2.0 * 8.0))).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = SoftMask::filled((2, 2), 0.5_f64).unwrap();
        let g = BinaryMask::zeros((2, 3));
        assert!(mae(&p, &g).is_err());
        assert!(miou_acc(&p, &g, 0.5).is_err());
    }
}
