//! Exact Euclidean distance transform with nearest-feature indices.
//!
//! Two separable passes: nearest feature per column, then the lower envelope of
//! parabolas along each row. All comparisons are done in integer arithmetic so
//! the nearest-feature choice is fully deterministic: among equidistant feature
//! pixels the one with the smallest column wins, then the smallest row.

/// Squared distance and nearest feature pixel for every position.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub height: usize,
    pub width: usize,
    /// Squared Euclidean distance, row-major; `None` when there is no feature pixel.
    pub sq_dist: Vec<Option<u64>>,
    /// `(row, col)` of the nearest feature pixel, row-major.
    pub nearest: Vec<Option<(usize, usize)>>,
}

impl DistanceField {
    pub fn distance(&self, i: usize, j: usize) -> Option<f64> {
        self.sq_dist[i * self.width + j].map(|d| (d as f64).sqrt())
    }
}

/// Fraction `num / den` with `den > 0`.
#[derive(Clone, Copy)]
struct Frac {
    num: i128,
    den: i128,
}

impl Frac {
    fn le(self, other: Frac) -> bool {
        self.num * other.den <= other.num * self.den
    }

    fn lt_int(self, j: i128) -> bool {
        self.num < j * self.den
    }
}

/// `feature[i * width + j]` marks feature (foreground) pixels.
pub fn distance_transform(feature: &[bool], height: usize, width: usize) -> DistanceField {
    assert_eq!(feature.len(), height * width, "feature mask length");
    let n = height * width;

    // Column pass: nearest feature row within each column, ties to the upper row.
    let mut col_dist: Vec<Option<u64>> = vec![None; n];
    let mut col_row: Vec<usize> = vec![0; n];
    for j in 0..width {
        let mut above: Option<usize> = None;
        let mut up = vec![None; height];
        for i in 0..height {
            if feature[i * width + j] {
                above = Some(i);
            }
            up[i] = above;
        }
        let mut below: Option<usize> = None;
        for i in (0..height).rev() {
            if feature[i * width + j] {
                below = Some(i);
            }
            let best = match (up[i], below) {
                (Some(a), Some(b)) => {
                    if i - a <= b - i {
                        Some(a)
                    } else {
                        Some(b)
                    }
                }
                (Some(a), None) => Some(a),
                (None, Some(b)) => Some(b),
                (None, None) => None,
            };
            if let Some(r) = best {
                let d = r.abs_diff(i) as u64;
                col_dist[i * width + j] = Some(d * d);
                col_row[i * width + j] = r;
            }
        }
    }

    let mut sq_dist = vec![None; n];
    let mut nearest = vec![None; n];
    let mut hull: Vec<usize> = Vec::with_capacity(width);
    let mut bounds: Vec<Option<Frac>> = Vec::with_capacity(width);
    for i in 0..height {
        hull.clear();
        bounds.clear();
        let g = |k: usize| col_dist[i * width + k];
        for k in 0..width {
            let Some(gk) = g(k) else { continue };
            loop {
                let Some(&q) = hull.last() else {
                    hull.push(k);
                    bounds.push(None);
                    break;
                };
                let gq = g(q).expect("hull holds finite columns");
                let s = Frac {
                    num: (gk as i128 + (k * k) as i128) - (gq as i128 + (q * q) as i128),
                    den: 2 * (k as i128 - q as i128),
                };
                match bounds.last().copied().flatten() {
                    Some(z) if s.le(z) => {
                        hull.pop();
                        bounds.pop();
                    }
                    _ => {
                        hull.push(k);
                        bounds.push(Some(s));
                        break;
                    }
                }
            }
        }
        if hull.is_empty() {
            continue;
        }
        let mut p = 0;
        for j in 0..width {
            while p + 1 < hull.len() && bounds[p + 1].expect("interior bound").lt_int(j as i128) {
                p += 1;
            }
            let k = hull[p];
            let dj = k.abs_diff(j) as u64;
            let idx = i * width + j;
            sq_dist[idx] = Some(dj * dj + g(k).expect("finite"));
            nearest[idx] = Some((col_row[i * width + k], k));
        }
    }
    DistanceField {
        height,
        width,
        sq_dist,
        nearest,
    }
}
