//! Two-way normalized cut via the relaxed generalized eigenproblem
//! `(D - W) y = λ D y`, discretized by sweeping thresholds over `y`.

use ndarray::{Array1, Array2};

use super::affinity::AffinityGraph;
use super::eigen::{symmetric_eigen, top_eigen_deflated};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Graphs up to this size are solved densely.
pub const DENSE_LIMIT: usize = 96;
const KRYLOV_DIM: usize = 96;
const LANCZOS_TOL: f64 = 1e-9;
const MAX_RESTARTS: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct CutResult<F: Real> {
    /// `true` for nodes on the high side of the chosen eigenvector threshold.
    pub partition: Vec<bool>,
    /// Generalized eigenvector of the second-smallest eigenvalue.
    pub eigenvector: Vec<F>,
    pub ncut_value: F,
}

/// `cut(A,B)/assoc(A,V) + cut(A,B)/assoc(B,V)` evaluated directly.
pub fn ncut_value<F: Real>(weights: &Array2<F>, partition: &[bool]) -> F {
    let n = weights.nrows();
    let (mut cut, mut assoc_a, mut assoc_b) = (F::zero(), F::zero(), F::zero());
    for i in 0..n {
        for j in 0..n {
            let w = weights[[i, j]];
            if partition[i] {
                assoc_a += w;
            } else {
                assoc_b += w;
            }
            if partition[i] && !partition[j] {
                cut += w;
            }
        }
    }
    cut / assoc_a + cut / assoc_b
}

/// Second-smallest generalized eigenvector `y = D^{-1/2} z`, where `z` is the
/// second-largest eigenvector of `D^{-1/2} W D^{-1/2}`. Sign fixed so the
/// largest-magnitude entry is positive.
pub fn fiedler_vector<F: Real>(graph: &AffinityGraph<F>) -> Result<Vec<F>> {
    let n = graph.len();
    let deg = graph.degrees();
    let inv_sqrt: Vec<F> = deg.iter().map(|d| F::one() / d.sqrt()).collect();
    let w = graph.weights();
    let m = Array2::from_shape_fn((n, n), |(i, j)| inv_sqrt[i] * w[[i, j]] * inv_sqrt[j]);
    let z: Array1<F> = if n <= DENSE_LIMIT {
        let (_, vecs) = symmetric_eigen(m.view())?;
        vecs.column(n - 2).to_owned()
    } else {
        let total: F = deg.iter().copied().sum();
        let known = Array1::from_iter(deg.iter().map(|d| (*d / total).sqrt()));
        top_eigen_deflated(m.view(), known.view(), KRYLOV_DIM, LANCZOS_TOL, MAX_RESTARTS)?.1
    };
    let mut y: Vec<F> = z.iter().zip(&inv_sqrt).map(|(a, b)| *a * *b).collect();
    let peak = argmax_abs(&y);
    if y[peak] < F::zero() {
        y.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(y)
}

/// Index of the first entry with maximum absolute value.
pub fn argmax_abs<F: Real>(v: &[F]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    best
}

/// Splits `y` at each gap between distinct sorted values and returns the split
/// minimizing the normalized cut as `(partition, value)`. `partition[i]` is true
/// when `y[i]` lies above the threshold.
pub fn best_threshold_split<F: Real>(weights: &Array2<F>, y: &[F]) -> Option<(Vec<bool>, F)> {
    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].partial_cmp(&y[b]).expect("finite eigenvector").then(a.cmp(&b)));
    let deg: Vec<F> = weights.rows().into_iter().map(|r| r.sum()).collect();
    let total: F = deg.iter().copied().sum();
    // conn[u] = Σ_{a ∈ low side} W[u, a]
    let mut conn = vec![F::zero(); n];
    let (mut cut, mut assoc_low) = (F::zero(), F::zero());
    let mut best: Option<(usize, F)> = None;
    for k in 1..n {
        let v = order[k - 1];
        let to_rest = deg[v] - weights[[v, v]] - conn[v];
        cut += to_rest - conn[v];
        assoc_low += deg[v];
        for (u, c) in conn.iter_mut().enumerate() {
            *c += weights[[u, v]];
        }
        if y[order[k - 1]] >= y[order[k]] {
            continue;
        }
        let value = cut / assoc_low + cut / (total - assoc_low);
        if best.is_none_or(|(_, b)| value < b) {
            best = Some((k, value));
        }
    }
    let (k, _) = best?;
    let mut partition = vec![true; n];
    for &i in &order[..k] {
        partition[i] = false;
    }
    let value = ncut_value(weights, &partition);
    Some((partition, value))
}

pub fn normalized_cut_bipartition<F: Real>(graph: &AffinityGraph<F>) -> Result<CutResult<F>> {
    let n = graph.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("normalized cut needs at least 2 nodes, got {n}")));
    }
    let eigenvector = fiedler_vector(graph)?;
    let (partition, ncut_value) = best_threshold_split(graph.weights(), &eigenvector).ok_or_else(|| {
        Error::EigenNoConvergence {
            residual: f64::NAN,
        }
    })?;
    Ok(CutResult {
        partition,
        eigenvector,
        ncut_value,
    })
}
