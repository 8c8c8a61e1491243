//! Image and mask types shared across the pipeline, plus elementwise mask arithmetic.

use ndarray::{Array2, Array3, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Decision threshold used for binarizing soft predictions.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

fn check_unit_range<'a, F: Real>(values: impl Iterator<Item = &'a F>) -> Result<()> {
    for (index, &v) in values.enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { index });
        }
        if v < F::zero() || v > F::one() {
            return Err(Error::OutOfRange {
                index,
                value: v.to_f64_lossy(),
            });
        }
    }
    Ok(())
}

/// An `H×W×3` RGB image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor<F: Real> {
    data: Array3<F>,
    original_size: (usize, usize),
    id: String,
}

impl<F: Real> ImageTensor<F> {
    pub fn new(data: Array3<F>, original_size: (usize, usize), id: impl Into<String>) -> Result<Self> {
        if data.dim().2 != 3 {
            return Err(Error::shape("H×W×3", format!("{:?}", data.dim())));
        }
        check_unit_range(data.iter())?;
        Ok(Self {
            data,
            original_size,
            id: id.into(),
        })
    }

    pub fn data(&self) -> &Array3<F> {
        &self.data
    }

    /// `(height, width)` of the tensor.
    pub fn size(&self) -> (usize, usize) {
        let (h, w, _) = self.data.dim();
        (h, w)
    }

    /// `(height, width)` of the image before any resize.
    pub fn original_size(&self) -> (usize, usize) {
        self.original_size
    }

    pub fn id(&self) -> &str {
        &self.id
    }
}

/// A soft map with values in `[0, 1]`: predictions, scores, and their complements.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask<F: Real> {
    data: Array2<F>,
}

/// Per-pixel foreground/background class score map.
pub type ClassScoreMap<F> = SoftMask<F>;

impl<F: Real> SoftMask<F> {
    pub fn new(data: Array2<F>) -> Result<Self> {
        check_unit_range(data.iter())?;
        Ok(Self { data })
    }

    /// Wraps values already known to lie in `[0, 1]` (sigmoid outputs, binary masks).
    pub(crate) fn from_trusted(data: Array2<F>) -> Self {
        debug_assert!(data.iter().all(|v| *v >= F::zero() && *v <= F::one()));
        Self { data }
    }

    pub fn filled(size: (usize, usize), value: F) -> Result<Self> {
        Self::new(Array2::from_elem(size, value))
    }

    pub fn data(&self) -> &Array2<F> {
        &self.data
    }

    pub fn view(&self) -> ArrayView2<'_, F> {
        self.data.view()
    }

    pub fn into_inner(self) -> Array2<F> {
        self.data
    }

    pub fn size(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn mean(&self) -> F {
        self.data.mean().unwrap_or_else(F::zero)
    }
}

/// A strictly two-valued mask stored as exact `0.0` / `1.0` floats.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask<F: Real> {
    data: Array2<F>,
}

impl<F: Real> BinaryMask<F> {
    pub fn new(data: Array2<F>) -> Result<Self> {
        for (index, &v) in data.iter().enumerate() {
            if v != F::zero() && v != F::one() {
                return Err(Error::InvalidArgument(format!(
                    "binary mask value {} at index {index} is not 0 or 1",
                    v.to_f64_lossy()
                )));
            }
        }
        Ok(Self { data })
    }

    pub fn from_bools(size: (usize, usize), bits: &[bool]) -> Result<Self> {
        if bits.len() != size.0 * size.1 {
            return Err(Error::shape(size.0 * size.1, bits.len()));
        }
        let data = Array2::from_shape_fn(size, |(i, j)| {
            if bits[i * size.1 + j] {
                F::one()
            } else {
                F::zero()
            }
        });
        Ok(Self { data })
    }

    pub fn zeros(size: (usize, usize)) -> Self {
        Self {
            data: Array2::zeros(size),
        }
    }

    pub fn ones(size: (usize, usize)) -> Self {
        Self {
            data: Array2::ones(size),
        }
    }

    pub fn data(&self) -> &Array2<F> {
        &self.data
    }

    pub fn view(&self) -> ArrayView2<'_, F> {
        self.data.view()
    }

    pub fn size(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[[i, j]] == F::one()
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|v| **v == F::one()).count()
    }

    /// Fraction of pixels set to one.
    pub fn foreground_fraction(&self) -> f64 {
        let n = self.data.len();
        if n == 0 {
            0.0
        } else {
            self.count_ones() as f64 / n as f64
        }
    }

    pub fn to_soft(&self) -> SoftMask<F> {
        SoftMask::from_trusted(self.data.clone())
    }

    pub fn to_bools(&self) -> Vec<bool> {
        self.data.iter().map(|v| *v == F::one()).collect()
    }
}

/// A scalar class score with its binary label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScore<F: Real> {
    value: F,
    label: u8,
}

impl<F: Real> ClassScore<F> {
    pub fn new(value: F, label: u8) -> Result<Self> {
        if !(value >= F::zero() && value <= F::one()) {
            return Err(Error::InvalidArgument(format!(
                "class score {} outside [0, 1]",
                value.to_f64_lossy()
            )));
        }
        if label > 1 {
            return Err(Error::InvalidArgument(format!("class label {label} not in {{0, 1}}")));
        }
        Ok(Self { value, label })
    }

    pub fn value(&self) -> F {
        self.value
    }

    pub fn label(&self) -> u8 {
        self.label
    }
}

/// `output[i,j] = 1` iff `mask[i,j] >= threshold`.
pub fn binarize<F: Real>(mask: &SoftMask<F>, threshold: F) -> Result<BinaryMask<F>> {
    if !(threshold >= F::zero() && threshold <= F::one()) {
        return Err(Error::InvalidArgument(format!(
            "threshold {} outside [0, 1]",
            threshold.to_f64_lossy()
        )));
    }
    if let Some(index) = mask.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let data = mask
        .data
        .mapv(|v| if v >= threshold { F::one() } else { F::zero() });
    Ok(BinaryMask { data })
}

/// Elementwise `1 - mask`.
pub fn complement<F: Real>(mask: &SoftMask<F>) -> SoftMask<F> {
    SoftMask::from_trusted(mask.data.mapv(|v| F::one() - v))
}

pub fn complement_binary<F: Real>(mask: &BinaryMask<F>) -> BinaryMask<F> {
    BinaryMask {
        data: mask.data.mapv(|v| F::one() - v),
    }
}

/// Intersection-over-union of two binary masks; defined as 1 when both are empty.
pub fn iou<F: Real>(a: &BinaryMask<F>, b: &BinaryMask<F>) -> Result<f64> {
    if a.size() != b.size() {
        return Err(Error::shape(format!("{:?}", a.size()), format!("{:?}", b.size())));
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    Zip::from(&a.data).and(&b.data).for_each(|&x, &y| {
        let (x, y) = (x == F::one(), y == F::one());
        inter += (x && y) as usize;
        union += (x || y) as usize;
    });
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}
