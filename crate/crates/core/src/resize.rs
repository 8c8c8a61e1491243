//! Separable 1-D resampling operators applied along each spatial axis.
//!
//! Coordinates follow the half-pixel convention (`align_corners = false`), so
//! resizing to the same size is an exact identity for every kernel.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Nearest,
    Bilinear,
    /// Cubic convolution with `a = -0.75`.
    Bicubic,
}

/// A linear map from `input` samples to `output` samples along one axis.
#[derive(Debug, Clone)]
pub struct Resampler1d {
    input: usize,
    taps: Vec<Vec<(usize, f64)>>,
}

const CUBIC_A: f64 = -0.75;

fn cubic_weights(t: f64) -> [f64; 4] {
    let a = CUBIC_A;
    let near = |x: f64| ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    let far = |x: f64| ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    [far(t + 1.0), near(t), near(1.0 - t), far(2.0 - t)]
}

impl Resampler1d {
    pub fn new(input: usize, output: usize, kernel: Kernel) -> Self {
        let scale = output as f64 / input as f64;
        Self::with_scale(input, output, kernel, scale)
    }

    /// Resampler whose coordinate mapping uses an explicit `scale` rather than
    /// `output / input`; needed when the output size was derived from a fractional scale.
    pub fn with_scale(input: usize, output: usize, kernel: Kernel, scale: f64) -> Self {
        assert!(input > 0, "resampler input length must be positive");
        let last = input as isize - 1;
        let clamp = |i: isize| i.clamp(0, last) as usize;
        let taps = (0..output)
            .map(|o| {
                if input == output && (scale - 1.0).abs() < f64::EPSILON {
                    return vec![(o, 1.0)];
                }
                match kernel {
                    Kernel::Nearest => {
                        let src = ((o as f64) / scale).floor() as isize;
                        vec![(clamp(src), 1.0)]
                    }
                    Kernel::Bilinear => {
                        let src = ((o as f64 + 0.5) / scale - 0.5).max(0.0);
                        let i0 = (src.floor() as isize).min(last);
                        let i1 = (i0 + 1).min(last);
                        let lambda = if i0 == last { 0.0 } else { src - i0 as f64 };
                        if i0 == i1 || lambda == 0.0 {
                            vec![(clamp(i0), 1.0)]
                        } else {
                            vec![(clamp(i0), 1.0 - lambda), (clamp(i1), lambda)]
                        }
                    }
                    Kernel::Bicubic => {
                        let src = (o as f64 + 0.5) / scale - 0.5;
                        let base = src.floor();
                        let w = cubic_weights(src - base);
                        let base = base as isize;
                        (0..4).map(|k| (clamp(base - 1 + k as isize), w[k])).collect()
                    }
                }
            })
            .collect();
        Self { input, taps }
    }

    pub fn input_len(&self) -> usize {
        self.input
    }

    pub fn output_len(&self) -> usize {
        self.taps.len()
    }

    pub fn taps(&self, o: usize) -> &[(usize, f64)] {
        &self.taps[o]
    }
}

/// A separable 2-D resampler (rows then columns).
#[derive(Debug, Clone)]
pub struct Resize2d {
    rows: Resampler1d,
    cols: Resampler1d,
}

impl Resize2d {
    pub fn new(input: (usize, usize), output: (usize, usize), kernel: Kernel) -> Self {
        Self {
            rows: Resampler1d::new(input.0, output.0, kernel),
            cols: Resampler1d::new(input.1, output.1, kernel),
        }
    }

    pub fn from_axes(rows: Resampler1d, cols: Resampler1d) -> Self {
        Self { rows, cols }
    }

    pub fn input_size(&self) -> (usize, usize) {
        (self.rows.input_len(), self.cols.input_len())
    }

    pub fn output_size(&self) -> (usize, usize) {
        (self.rows.output_len(), self.cols.output_len())
    }

    /// `A_rows · x · A_colsᵀ`.
    pub fn apply<F: Real>(&self, x: ArrayView2<'_, F>) -> Array2<F> {
        assert_eq!(x.dim(), self.input_size(), "resize input shape");
        let (oh, ow) = self.output_size();
        let ih = self.rows.input_len();
        let mut tmp = Array2::<F>::zeros((ih, ow));
        for i in 0..ih {
            for o in 0..ow {
                let mut acc = F::zero();
                for &(s, w) in self.cols.taps(o) {
                    acc += x[[i, s]] * F::c(w);
                }
                tmp[[i, o]] = acc;
            }
        }
        let mut out = Array2::<F>::zeros((oh, ow));
        for o in 0..oh {
            for &(s, w) in self.rows.taps(o) {
                let w = F::c(w);
                let src = tmp.row(s);
                out.row_mut(o).zip_mut_with(&src, |d, &v| *d += v * w);
            }
        }
        out
    }

    /// Adjoint `A_rowsᵀ · g · A_cols`, used to back-propagate through [`Resize2d::apply`].
    pub fn apply_adjoint<F: Real>(&self, g: ArrayView2<'_, F>) -> Array2<F> {
        assert_eq!(g.dim(), self.output_size(), "resize adjoint input shape");
        let (ih, iw) = self.input_size();
        let (oh, ow) = self.output_size();
        let mut tmp = Array2::<F>::zeros((ih, ow));
        for o in 0..oh {
            for &(s, w) in self.rows.taps(o) {
                let w = F::c(w);
                let src = g.row(o);
                tmp.row_mut(s).zip_mut_with(&src, |d, &v| *d += v * w);
            }
        }
        let mut out = Array2::<F>::zeros((ih, iw));
        for i in 0..ih {
            for o in 0..ow {
                let v = tmp[[i, o]];
                for &(s, w) in self.cols.taps(o) {
                    out[[i, s]] += v * F::c(w);
                }
            }
        }
        out
    }

    /// Resizes each channel of an `H×W×C` array.
    pub fn apply_channels<F: Real>(&self, x: ArrayView3<'_, F>) -> Array3<F> {
        let (oh, ow) = self.output_size();
        let c = x.dim().2;
        let mut out = Array3::<F>::zeros((oh, ow, c));
        for ch in 0..c {
            let plane = self.apply(x.index_axis(Axis(2), ch));
            out.index_axis_mut(Axis(2), ch).assign(&plane);
        }
        out
    }
}

pub fn resize<F: Real>(x: ArrayView2<'_, F>, output: (usize, usize), kernel: Kernel) -> Array2<F> {
    Resize2d::new(x.dim(), output, kernel).apply(x)
}
