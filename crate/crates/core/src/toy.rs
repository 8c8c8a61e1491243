//! Synthetic datasets: a flat-coloured square on textured noise, with its
//! exact ground truth. Used by smoke tests and the toy pipeline.

use std::path::Path;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::io::{write_gray_png, write_rgb_png};

/// One RGB image and its 0/255 mask. The square covers a fifth to two fifths
/// of each side and sits at a random position; the backdrop is per-pixel noise.
pub fn square_on_noise(size: usize, seed: u64) -> (Array3<u8>, Array2<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = rng.random_range(size / 5..=2 * size / 5).max(1);
    let top = rng.random_range(0..=size - side);
    let left = rng.random_range(0..=size - side);
    let colour: [u8; 3] = [rng.random_range(150..=230), rng.random_range(40..=120), rng.random_range(40..=120)];
    let inside = |i: usize, j: usize| (top..top + side).contains(&i) && (left..left + side).contains(&j);
    let mut rgb = Array3::<u8>::zeros((size, size, 3));
    for i in 0..size {
        for j in 0..size {
            for c in 0..3 {
                rgb[[i, j, c]] = if inside(i, j) { colour[c] } else { rng.random_range(0..=255) };
            }
        }
    }
    let gt = Array2::from_shape_fn((size, size), |(i, j)| if inside(i, j) { 255 } else { 0 });
    (rgb, gt)
}

/// Two separated squares of different colours on noise.
pub fn two_squares_on_noise(size: usize, seed: u64) -> (Array3<u8>, Array2<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = (size / 4).max(1);
    let a = (size / 8, size / 8);
    let b = (size - size / 8 - side, size - size / 8 - side);
    let in_sq = |(t, l): (usize, usize), i: usize, j: usize| (t..t + side).contains(&i) && (l..l + side).contains(&j);
    let mut rgb = Array3::<u8>::zeros((size, size, 3));
    for i in 0..size {
        for j in 0..size {
            let px = if in_sq(a, i, j) {
                [220, 60, 60]
            } else if in_sq(b, i, j) {
                [60, 60, 220]
            } else {
                [rng.random_range(0..=255), rng.random_range(0..=255), rng.random_range(0..=255)]
            };
            for c in 0..3 {
                rgb[[i, j, c]] = px[c];
            }
        }
    }
    let gt = Array2::from_shape_fn((size, size), |(i, j)| if in_sq(a, i, j) || in_sq(b, i, j) { 255 } else { 0 });
    (rgb, gt)
}

/// Writes `<root>/images/toy_XX.png` and `<root>/gt/toy_XX.png` for `n` images.
pub fn write_square_dataset(root: &Path, n: usize, size: usize, seed: u64) -> Result<()> {
    for k in 0..n {
        let (rgb, gt) = square_on_noise(size, seed.wrapping_mul(1000).wrapping_add(k as u64));
        write_rgb_png(&root.join("images").join(format!("toy_{k:02}.png")), &rgb)?;
        write_gray_png(&root.join("gt").join(format!("toy_{k:02}.png")), &gt)?;
    }
    Ok(())
}
