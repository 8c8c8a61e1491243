//! PNG/JPEG decoding and atomic PNG writing for masks and predictions.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageReader};
use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::mask::{BinaryMask, SoftMask};
use crate::scalar::Real;

/// 8-bit level at or above which a ground-truth pixel counts as foreground.
pub const GT_THRESHOLD: u8 = 128;

pub fn read_rgb8(path: &Path) -> Result<Array3<u8>> {
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::image(path, e))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    Ok(Array3::from_shape_vec((h as usize, w as usize, 3), img.into_raw()).expect("rgb buffer length"))
}

pub fn read_gray8(path: &Path) -> Result<Array2<u8>> {
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::image(path, e))?
        .to_luma8();
    let (w, h) = img.dimensions();
    Ok(Array2::from_shape_vec((h as usize, w as usize), img.into_raw()).expect("gray buffer length"))
}

/// `(width, height)` read from the file header only.
pub fn image_dimensions(path: &Path) -> Result<(u32, u32)> {
    image::image_dimensions(path).map_err(|e| Error::image(path, e))
}

/// Thresholds an 8-bit mask at [`GT_THRESHOLD`]; logs a warning when it is not
/// nominally two-valued.
pub fn binary_from_gray<F: Real>(gray: &Array2<u8>, origin: &Path) -> BinaryMask<F> {
    let soft_values = gray.iter().filter(|&&v| v > 10 && v < 245).count();
    if soft_values * 100 > gray.len() {
        log::warn!(
            "{}: {soft_values} of {} pixels are not near 0/255; thresholding at {GT_THRESHOLD}",
            origin.display(),
            gray.len()
        );
    }
    BinaryMask::new(gray.mapv(|v| if v >= GT_THRESHOLD { F::one() } else { F::zero() }))
        .expect("two-valued by construction")
}

pub fn soft_from_gray<F: Real>(gray: &Array2<u8>) -> SoftMask<F> {
    SoftMask::from_trusted(gray.mapv(|v| F::from_u8(v).expect("u8 fits") / F::c(255.0)))
}

/// `round(255 · p)` per pixel.
pub fn gray_from_soft<F: Real>(mask: &SoftMask<F>) -> Array2<u8> {
    mask.data()
        .mapv(|v| (v.to_f64_lossy() * 255.0).round().clamp(0.0, 255.0) as u8)
}

pub fn gray_from_binary<F: Real>(mask: &BinaryMask<F>) -> Array2<u8> {
    mask.data().mapv(|v| if v == F::one() { 255 } else { 0 })
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.{}.tmp", std::process::id()))
}

/// Writes `bytes` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = temp_sibling(path);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn encode_gray_png(gray: &Array2<u8>) -> Result<Vec<u8>> {
    let (h, w) = gray.dim();
    let img = GrayImage::from_raw(w as u32, h as u32, gray.iter().copied().collect())
        .expect("gray buffer length");
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::image("<memory>", e))?;
    Ok(bytes)
}

pub fn write_gray_png(path: &Path, gray: &Array2<u8>) -> Result<()> {
    write_atomic(path, &encode_gray_png(gray)?)
}

pub fn write_rgb_png(path: &Path, rgb: &Array3<u8>) -> Result<()> {
    let (h, w, _) = rgb.dim();
    let img = image::RgbImage::from_raw(w as u32, h as u32, rgb.iter().copied().collect())
        .expect("rgb buffer length");
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::image(path, e))?;
    write_atomic(path, &bytes)
}

/// Files directly under `dir` whose extension matches one of `exts` (case-insensitive), sorted by name.
pub fn list_files(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ok = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| exts.iter().any(|x| x.eq_ignore_ascii_case(e)));
        if ok && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}
