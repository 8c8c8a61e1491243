//! Enhanced-alignment measure swept over the 256 integral thresholds.

use crate::error::Result;
use crate::mask::{BinaryMask, SoftMask};
use crate::metrics::basic::{check_aligned, threshold_counts, N_THRESHOLDS};
use crate::scalar::Real;

/// Enhanced alignment `(ξ + 1)² / 4` for bias values `a` (ground truth) and `b` (prediction).
pub(crate) fn enhanced<F: Real>(a: F, b: F) -> F {
    let den = a * a + b * b;
    let xi = if den == F::zero() {
        F::one()
    } else {
        F::c(2.0) * a * b / den
    };
    (xi + F::one()) * (xi + F::one()) / F::c(4.0)
}

/// Per-threshold enhanced-alignment scores, normalized by the pixel count.
///
/// An all-background ground truth scores the fraction of pixels predicted
/// background; an all-foreground one scores the fraction predicted foreground.
pub fn e_measure_curve<F: Real>(p: &SoftMask<F>, g: &BinaryMask<F>) -> Result<Vec<F>> {
    check_aligned(p, g)?;
    let c = threshold_counts(p, g);
    let n = F::from_usize_lossy(c.total);
    let gt_pos = c.gt_pos;
    let mu_g = F::from_usize_lossy(gt_pos) / n;
    let curve = (0..N_THRESHOLDS)
        .map(|tau| {
            let pp = c.pp[tau];
            if gt_pos == 0 {
                return F::from_usize_lossy(c.total - pp) / n;
            }
            if gt_pos == c.total {
                return F::from_usize_lossy(pp) / n;
            }
            let tp = c.tp[tau];
            let fp = pp - tp;
            let fnn = gt_pos - tp;
            let tn = c.total - pp - fnn;
            let mu_p = F::from_usize_lossy(pp) / n;
            let (g1, g0) = (F::one() - mu_g, -mu_g);
            let (p1, p0) = (F::one() - mu_p, -mu_p);
            let sum = F::from_usize_lossy(tp) * enhanced(g1, p1)
                + F::from_usize_lossy(fnn) * enhanced(g1, p0)
                + F::from_usize_lossy(fp) * enhanced(g0, p1)
                + F::from_usize_lossy(tn) * enhanced(g0, p0);
            sum / n
        })
        .collect();
    Ok(curve)
}

/// `(e_max, e_mean)` over thresholds for a single image.
pub fn e_measure<F: Real>(p: &SoftMask<F>, g: &BinaryMask<F>) -> Result<(F, F)> {
    let curve = e_measure_curve(p, g)?;
    Ok(curve_max_mean(&curve))
}

pub(crate) fn curve_max_mean<F: Real>(curve: &[F]) -> (F, F) {
    let max = curve.iter().copied().fold(F::neg_infinity(), F::max);
    let mean = curve.iter().copied().sum::<F>() / F::from_usize_lossy(curve.len());
    (max, mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn half(n: usize) -> BinaryMask<f64> {
        BinaryMask::new(Array2::from_shape_fn((n, n), |(i, _)| if i < n / 2 { 1.0 } else { 0.0 })).unwrap()
    }

    #[test]
    fn perfect_alignment() {
        let g = half(8);
        let (emax, emean) = e_measure(&g.to_soft(), &g).unwrap();
        assert!((emax - 1.0).abs() < 1e-12);
        assert!(emean <= emax);
    }

    #[test]
    fn inverted_prediction_peaks_at_all_ones_threshold() {
        // At τ = 0 the binarized map is all ones, its bias map is zero and every
        // pixel scores (0 + 1)² / 4; at every other τ the map is 1 - G and scores 0.
        let g = half(8);
        let inv = crate::mask::complement(&g.to_soft());
        let curve = e_measure_curve(&inv, &g).unwrap();
        assert!((curve[0] - 0.25).abs() < 1e-15);
        assert!(curve[1..].iter().all(|v| v.abs() < 1e-15));
        let (emax, _) = e_measure(&inv, &g).unwrap();
        assert!((emax - 0.25).abs() < 1e-15);
    }

    #[test]
    fn degenerate_branches() {
        let g = BinaryMask::<f64>::zeros((2, 2));
        let p = SoftMask::new(ndarray::array![[0.0, 1.0], [0.0, 0.0]]).unwrap();
        let curve = e_measure_curve(&p, &g).unwrap();
        assert_eq!(curve[0], 0.0);
        assert_eq!(curve[1], 0.75);
        let g = BinaryMask::<f64>::ones((2, 2));
        let curve = e_measure_curve(&p, &g).unwrap();
        assert_eq!(curve[255], 0.25);
    }

    #[test]
    fn zero_over_zero_alignment_is_one() {
        assert_eq!(enhanced(0.0_f64, 0.0), 1.0);
        assert_eq!(enhanced(0.5_f64, 0.5), 1.0);
        assert_eq!(enhanced(0.5_f64, -0.5), 0.0);
    }
}
