//! Dependency-weighted F-measure.
//!
//! Errors on background pixels borrow the error of their nearest foreground
//! pixel, foreground errors are smoothed by a 7×7 Gaussian (σ = 5) and may only
//! decrease, and background errors are amplified with distance to the object.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::mask::{BinaryMask, SoftMask};
use crate::metrics::basic::check_aligned;
use crate::metrics::edt::distance_transform;
use crate::scalar::Real;

pub const KERNEL_SIZE: usize = 7;
pub const KERNEL_SIGMA: f64 = 5.0;
/// Distance (in pixels) over which the background penalty reaches 1.5.
pub const DECAY_DISTANCE: f64 = 5.0;

/// Normalized Gaussian kernel built the same way as MATLAB's `fspecial('gaussian', 7, 5)`.
pub fn gaussian_kernel() -> [[f64; KERNEL_SIZE]; KERNEL_SIZE] {
    let r = (KERNEL_SIZE / 2) as i32;
    let mut k = [[0.0; KERNEL_SIZE]; KERNEL_SIZE];
    let mut max = 0.0_f64;
    for (a, row) in k.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            let (x, y) = ((b as i32 - r) as f64, (a as i32 - r) as f64);
            *v = (-(x * x + y * y) / (2.0 * KERNEL_SIGMA * KERNEL_SIGMA)).exp();
            max = max.max(*v);
        }
    }
    let mut sum = 0.0;
    for v in k.iter_mut().flatten() {
        if *v < f64::EPSILON * max {
            *v = 0.0;
        }
        sum += *v;
    }
    for v in k.iter_mut().flatten() {
        *v /= sum;
    }
    k
}

pub fn weighted_fbeta<F: Real>(p: &SoftMask<F>, g: &BinaryMask<F>) -> Result<F> {
    check_aligned(p, g)?;
    let (h, w) = g.size();
    let fg: Vec<bool> = g.to_bools();
    if !fg.iter().any(|&b| b) {
        return Err(Error::InvalidArgument(
            "weighted F-measure undefined for empty ground truth".into(),
        ));
    }
    let field = distance_transform(&fg, h, w);
    let err = Array2::from_shape_fn((h, w), |(i, j)| (p.data()[[i, j]] - g.data()[[i, j]]).abs());

    // Background pixels take the error of their nearest foreground pixel.
    let propagated = Array2::from_shape_fn((h, w), |(i, j)| {
        let (r, c) = field.nearest[i * w + j].expect("non-empty foreground");
        err[[r, c]]
    });

    let kernel = gaussian_kernel();
    let rad = (KERNEL_SIZE / 2) as isize;
    let smoothed = Array2::from_shape_fn((h, w), |(i, j)| {
        let mut acc = F::zero();
        for (a, row) in kernel.iter().enumerate() {
            let y = i as isize + a as isize - rad;
            if y < 0 || y >= h as isize {
                continue;
            }
            for (b, &kv) in row.iter().enumerate() {
                let x = j as isize + b as isize - rad;
                if x < 0 || x >= w as isize {
                    continue;
                }
                acc += F::c(kv) * propagated[[y as usize, x as usize]];
            }
        }
        acc
    });

    let decay = F::c(0.5_f64.ln() / DECAY_DISTANCE);
    let two = F::c(2.0);
    let mut fg_err = F::zero();
    let mut bg_err = F::zero();
    let mut n_fg = 0usize;
    for i in 0..h {
        for j in 0..w {
            let e = err[[i, j]];
            if fg[i * w + j] {
                let ea = smoothed[[i, j]];
                fg_err += if ea < e { ea } else { e };
                n_fg += 1;
            } else {
                let dist = F::c(field.distance(i, j).expect("non-empty foreground"));
                bg_err += e * (two - (decay * dist).exp());
            }
        }
    }
    let eps = F::c(f64::EPSILON);
    let n_fg_f = F::from_usize_lossy(n_fg);
    let tp = n_fg_f - fg_err;
    let recall = F::one() - fg_err / n_fg_f;
    let precision = tp / (tp + bg_err + eps);
    let q = two * recall * precision / (recall + precision + eps);
    Ok(q.max(F::zero()).min(F::one()))
}
