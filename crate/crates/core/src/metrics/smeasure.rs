//! Structure measure: a blend of object-aware and region-aware similarity.

use ndarray::{s, ArrayView2};

use crate::error::Result;
use crate::mask::{BinaryMask, SoftMask};
use crate::metrics::basic::check_aligned;
use crate::scalar::{round_half_even, Real};

/// Weight of the object-aware term.
pub const ALPHA: f64 = 0.5;

fn eps<F: Real>() -> F {
    F::c(f64::EPSILON)
}

/// Sample variance with an `n - 1` denominator; zero for fewer than two samples.
fn sample_var<F: Real>(sum_sq_dev: F, n: usize) -> F {
    if n < 2 {
        F::zero()
    } else {
        sum_sq_dev / F::from_usize_lossy(n - 1)
    }
}

/// Similarity of the values of `x` inside the `region` pixels to an all-ones target.
fn object_similarity<F: Real>(x: ArrayView2<'_, F>, region: ArrayView2<'_, F>) -> F {
    let vals: Vec<F> = x
        .iter()
        .zip(region.iter())
        .filter(|(_, r)| **r == F::one())
        .map(|(v, _)| *v)
        .collect();
    if vals.is_empty() {
        return F::zero();
    }
    let n = vals.len();
    let mean = vals.iter().copied().sum::<F>() / F::from_usize_lossy(n);
    let ss = vals.iter().map(|v| (*v - mean) * (*v - mean)).sum::<F>();
    let std = sample_var(ss, n).sqrt();
    F::c(2.0) * mean / (mean * mean + F::one() + std + eps())
}

fn object_score<F: Real>(p: &SoftMask<F>, g: &BinaryMask<F>) -> F {
    let fg = p.data() * g.data();
    let bg = p.data().mapv(|v| F::one() - v) * g.data().mapv(|v| F::one() - v);
    let not_g = g.data().mapv(|v| F::one() - v);
    let u = g.data().mean().unwrap_or_else(F::zero);
    u * object_similarity(fg.view(), g.view()) + (F::one() - u) * object_similarity(bg.view(), not_g.view())
}

/// SSIM-style similarity of one block; an empty block scores 0.
fn block_ssim<F: Real>(p: ArrayView2<'_, F>, g: ArrayView2<'_, F>) -> F {
    let n = p.len();
    if n == 0 {
        return F::zero();
    }
    let nf = F::from_usize_lossy(n);
    let x = p.sum() / nf;
    let y = g.sum() / nf;
    let (mut sxx, mut syy, mut sxy) = (F::zero(), F::zero(), F::zero());
    for (a, b) in p.iter().zip(g.iter()) {
        let (dx, dy) = (*a - x, *b - y);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let (sxx, syy, sxy) = (sample_var(sxx, n), sample_var(syy, n), sample_var(sxy, n));
    let alpha = F::c(4.0) * x * y * sxy;
    let beta = (x * x + y * y) * (sxx + syy);
    if alpha != F::zero() {
        alpha / (beta + eps())
    } else if beta == F::zero() {
        F::one()
    } else {
        F::zero()
    }
}

/// Split point `(row, col)` at the rounded foreground centroid, shifted by one
/// so the centroid pixel falls in the top-left block.
pub(crate) fn centroid_split<F: Real>(g: &BinaryMask<F>) -> (usize, usize) {
    let (h, w) = g.size();
    let mut count = 0usize;
    let (mut sr, mut sc) = (0.0_f64, 0.0_f64);
    for ((i, j), v) in g.data().indexed_iter() {
        if *v == F::one() {
            count += 1;
            sr += i as f64;
            sc += j as f64;
        }
    }
    if count == 0 {
        return (round_half_even(h as f64 / 2.0) as usize + 1, round_half_even(w as f64 / 2.0) as usize + 1);
    }
    let row = round_half_even(sr / count as f64) as usize + 1;
    let col = round_half_even(sc / count as f64) as usize + 1;
    (row.min(h), col.min(w))
}

fn region_score<F: Real>(p: &SoftMask<F>, g: &BinaryMask<F>) -> F {
    let (h, w) = g.size();
    let (y, x) = centroid_split(g);
    let area = F::from_usize_lossy(h * w);
    let w1 = F::from_usize_lossy(x * y) / area;
    let w2 = F::from_usize_lossy(y * (w - x)) / area;
    let w3 = F::from_usize_lossy((h - y) * x) / area;
    let w4 = F::one() - w1 - w2 - w3;
    let (pd, gd) = (p.data(), g.data());
    let blocks = [
        (w1, s![0..y, 0..x]),
        (w2, s![0..y, x..w]),
        (w3, s![y..h, 0..x]),
        (w4, s![y..h, x..w]),
    ];
    blocks
        .into_iter()
        .map(|(wt, sl)| wt * block_ssim(pd.slice(sl), gd.slice(sl)))
        .sum()
}

/// Structure measure with α = 0.5; all-background ground truth scores
/// `1 - mean(P)` and all-foreground scores `mean(P)`.
pub fn s_measure<F: Real>(p: &SoftMask<F>, g: &BinaryMask<F>) -> Result<F> {
    check_aligned(p, g)?;
    let y = g.data().mean().unwrap_or_else(F::zero);
    let score = if y == F::zero() {
        F::one() - p.mean()
    } else if y == F::one() {
        p.mean()
    } else {
        let alpha = F::c(ALPHA);
        alpha * object_score(p, g) + (F::one() - alpha) * region_score(p, g)
    };
    Ok(score.max(F::zero()).min(F::one()))
}
