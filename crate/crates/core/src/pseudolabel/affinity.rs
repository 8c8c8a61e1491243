use ndarray::Array2;

use crate::backbone::PatchFeatureGrid;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const DEFAULT_TAU: f64 = 0.2;
pub const DEFAULT_EPS: f64 = 1e-5;

/// Binarized patch affinity: 1 where cosine similarity reaches `tau`, `eps` elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph<F: Real> {
    weights: Array2<F>,
    tau: F,
    eps: F,
}

impl<F: Real> AffinityGraph<F> {
    /// Wraps an explicit weight matrix; it must be square, symmetric and
    /// strictly positive.
    pub fn from_weights(weights: Array2<F>, tau: F, eps: F) -> Result<Self> {
        let n = weights.nrows();
        if weights.ncols() != n {
            return Err(Error::shape("square matrix", format!("{:?}", weights.dim())));
        }
        for i in 0..n {
            for j in 0..n {
                let w = weights[[i, j]];
                if !(w > F::zero()) || !w.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "affinity ({i},{j}) = {} is not strictly positive",
                        w.to_f64_lossy()
                    )));
                }
                if w != weights[[j, i]] {
                    return Err(Error::InvalidArgument(format!("affinity not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { weights, tau, eps })
    }

    pub fn weights(&self) -> &Array2<F> {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.nrows() == 0
    }

    pub fn tau(&self) -> F {
        self.tau
    }

    pub fn eps(&self) -> F {
        self.eps
    }

    /// Row sums.
    pub fn degrees(&self) -> Vec<F> {
        self.weights.rows().into_iter().map(|r| r.sum()).collect()
    }

    /// Sets every row and column of the given nodes (diagonal included) to `eps`.
    pub fn isolate(&mut self, nodes: &[usize]) {
        for &i in nodes {
            self.weights.row_mut(i).fill(self.eps);
            self.weights.column_mut(i).fill(self.eps);
        }
    }

    /// Scaled copy; used to check scale invariance of the cut.
    pub fn scaled(&self, factor: F) -> Self {
        Self {
            weights: &self.weights * factor,
            tau: self.tau,
            eps: self.eps * factor,
        }
    }
}

pub fn build_affinity<F: Real>(features: &PatchFeatureGrid<F>, tau: F, eps: F) -> Result<AffinityGraph<F>> {
    if !(eps > F::zero() && eps < F::one()) {
        return Err(Error::InvalidArgument(format!("eps {} not in (0, 1)", eps.to_f64_lossy())));
    }
    if !(tau > -F::one() && tau < F::one()) {
        return Err(Error::InvalidArgument(format!("tau {} not in (-1, 1)", tau.to_f64_lossy())));
    }
    let normalized = features.l2_normalized()?;
    let m = normalized.as_matrix();
    let cos = m.dot(&m.t());
    let n = cos.nrows();
    let weights = Array2::from_shape_fn((n, n), |(i, j)| {
        // Symmetrize explicitly so W is bit-exactly symmetric.
        let c = if i <= j { cos[[i, j]] } else { cos[[j, i]] };
        if c >= tau {
            F::one()
        } else {
            eps
        }
    });
    Ok(AffinityGraph { weights, tau, eps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn grid(rows: &[[f64; 3]]) -> PatchFeatureGrid<f64> {
        let data = Array3::from_shape_fn((1, rows.len(), 3), |(_, j, k)| rows[j][k]);
        PatchFeatureGrid::new(data, 1, (1, rows.len())).unwrap()
    }

    #[test]
    fn identical_and_orthogonal_patches() {
        let g = grid(&[[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let a = build_affinity(&g, 0.2, 1e-5).unwrap();
        assert_eq!(a.weights()[[0, 1]], 1.0);
        assert_eq!(a.weights()[[0, 2]], 1e-5);
        assert_eq!(a.weights()[[2, 2]], 1.0);
    }

    #[test]
    fn thresholds_hand_computed_cosines() {
        // cos(0,1) = 0.9, cos(0,2) = 0.1, cos(1,2) = 0.9·0.1 + √0.19·x chosen to give 0.3.
        let s19 = 0.19_f64.sqrt();
        let x = (0.3 - 0.09) / s19;
        let zc = (1.0 - 0.01 - x * x).sqrt();
        let g = grid(&[[1.0, 0.0, 0.0], [0.9, s19, 0.0], [0.1, x, zc]]);
        let m = g.l2_normalized().unwrap();
        let mm = m.as_matrix();
        assert!((mm.row(0).dot(&mm.row(1)) - 0.9).abs() < 1e-12);
        assert!((mm.row(0).dot(&mm.row(2)) - 0.1).abs() < 1e-12);
        assert!((mm.row(1).dot(&mm.row(2)) - 0.3).abs() < 1e-12);
        let a = build_affinity(&g, 0.2, 1e-5).unwrap();
        let w = a.weights();
        assert_eq!((w[[0, 1]], w[[0, 2]], w[[1, 2]]), (1.0, 1e-5, 1.0));
        assert_eq!(w, &w.t());
    }

    #[test]
    fn zero_feature_is_an_error() {
        let g = grid(&[[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        let err = build_affinity(&g, 0.2, 1e-5).unwrap_err();
        assert!(matches!(err, Error::ZeroNormFeature { patch: 1 }));
    }

    #[test]
    fn isolate_sets_rows_and_columns() {
        let g = grid(&[[1.0, 0.0, 0.0], [1.0, 0.1, 0.0], [1.0, 0.0, 0.1]]);
        let mut a = build_affinity(&g, 0.2, 1e-5).unwrap();
        a.isolate(&[1]);
        assert!(a.weights().row(1).iter().all(|v| *v == 1e-5));
        assert!(a.weights().column(1).iter().all(|v| *v == 1e-5));
        assert_eq!(a.weights()[[0, 2]], 1.0);
    }
}
