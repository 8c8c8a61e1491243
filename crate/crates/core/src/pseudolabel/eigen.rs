//! Symmetric eigen-solvers used by the normalized cut.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in ascending order with matching eigenvector columns.
pub fn symmetric_eigen<F: Real>(a: ArrayView2<'_, F>) -> Result<(Vec<F>, Array2<F>)> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "square matrix");
    let mut a = a.to_owned();
    let mut v = Array2::<F>::eye(n);
    let scale = a.iter().map(|x| *x * *x).sum::<F>().sqrt().max(F::min_positive_value());
    let tol = F::epsilon() * scale;
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        let off = off_diagonal_norm(&a);
        if off <= tol {
            converged = true;
            break;
        }
        let mut rotations = 0usize;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                // Negligible next to the diagonal: rotating would only stir rounding noise.
                let diag = (a[[p, p]].abs() + a[[q, q]].abs()).max(scale * F::epsilon());
                if apq.abs() <= F::epsilon() * F::c(0.5) * diag {
                    continue;
                }
                rotations += 1;
                let theta = (a[[q, q]] - a[[p, p]]) / (F::c(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + F::one()).sqrt());
                let t = if theta == F::zero() { F::one() } else { t };
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
        if rotations == 0 {
            converged = true;
            break;
        }
    }
    if !converged {
        let off = off_diagonal_norm(&a);
        if off > F::c(1e3) * tol {
            return Err(Error::EigenNoConvergence {
                residual: off.to_f64_lossy(),
            });
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[i, i]].partial_cmp(&a[[j, j]]).expect("finite eigenvalues").then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[[i, i]]).collect();
    let mut vectors = Array2::<F>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    Ok((values, vectors))
}

fn off_diagonal_norm<F: Real>(a: &Array2<F>) -> F {
    let mut s = F::zero();
    for ((i, j), x) in a.indexed_iter() {
        if i != j {
            s += *x * *x;
        }
    }
    s.sqrt()
}

/// Largest eigenpair of the symmetric matrix `m` restricted to the orthogonal
/// complement of the unit vector `known`, by restarted Lanczos with full
/// re-orthogonalization.
pub fn top_eigen_deflated<F: Real>(
    m: ArrayView2<'_, F>,
    known: ArrayView1<'_, F>,
    krylov_dim: usize,
    tol: f64,
    max_restarts: usize,
) -> Result<(F, Array1<F>)> {
    let n = m.nrows();
    let dim = krylov_dim.min(n.saturating_sub(1)).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut start: Array1<F> = Array1::from_shape_fn(n, |_| F::c(rng.random::<f64>() - 0.5));
    let mut last_residual = f64::INFINITY;
    for _ in 0..max_restarts {
        let mut basis: Vec<Array1<F>> = Vec::with_capacity(dim);
        let mut alpha: Vec<F> = Vec::with_capacity(dim);
        let mut beta: Vec<F> = Vec::with_capacity(dim);
        let mut q = start.clone();
        orthogonalize(&mut q, known, &basis);
        let norm = q.dot(&q).sqrt();
        if !(norm > F::zero()) {
            return Err(Error::EigenNoConvergence { residual: f64::NAN });
        }
        q /= norm;
        for j in 0..dim {
            let mut w = m.dot(&q);
            let a = q.dot(&w);
            basis.push(q.clone());
            alpha.push(a);
            orthogonalize(&mut w, known, &basis);
            orthogonalize(&mut w, known, &basis);
            let b = w.dot(&w).sqrt();
            if j + 1 == dim || b <= F::c(1e-12) * a.abs().max(F::one()) {
                break;
            }
            beta.push(b);
            q = w / b;
        }
        let k = alpha.len();
        let mut t = Array2::<F>::zeros((k, k));
        for i in 0..k {
            t[[i, i]] = alpha[i];
            if i + 1 < k {
                t[[i, i + 1]] = beta[i];
                t[[i + 1, i]] = beta[i];
            }
        }
        let (vals, vecs) = symmetric_eigen(t.view())?;
        let theta = vals[k - 1];
        let s = vecs.column(k - 1);
        let mut z = Array1::<F>::zeros(n);
        for (i, b) in basis.iter().enumerate() {
            z.scaled_add(s[i], b);
        }
        orthogonalize(&mut z, known, &[]);
        let zn = z.dot(&z).sqrt();
        z /= zn;
        let r = &m.dot(&z) - &(&z * theta);
        let residual = r.dot(&r).sqrt().to_f64_lossy();
        last_residual = residual;
        if residual <= tol * theta.abs().to_f64_lossy().max(1.0) {
            return Ok((theta, z));
        }
        start = z;
    }
    Err(Error::EigenNoConvergence {
        residual: last_residual,
    })
}

fn orthogonalize<F: Real>(v: &mut Array1<F>, known: ArrayView1<'_, F>, basis: &[Array1<F>]) {
    let c = known.dot(v);
    v.scaled_add(-c, &known);
    for b in basis {
        let c = b.dot(v);
        v.scaled_add(-c, b);
    }
}
