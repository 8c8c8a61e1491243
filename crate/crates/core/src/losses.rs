//! Segmentation (structure) loss and adversarial BCE, each returned with its
//! gradient with respect to the soft input.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::mask::{BinaryMask, ClassScoreMap, SoftMask};
use crate::scalar::Real;

pub const PROB_CLAMP: f64 = 1e-7;
/// Side of the square averaging window in the boundary weight map.
pub const POOL_WINDOW: usize = 31;
pub const BOUNDARY_GAIN: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue<F: Real> {
    pub total: F,
    pub seg_term: F,
    pub adv_term: F,
}

impl<F: Real> LossValue<F> {
    pub fn new(seg_term: F, adv_term: F) -> Self {
        Self {
            total: seg_term + adv_term,
            seg_term,
            adv_term,
        }
    }
}

/// A scalar loss together with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Graded<F: Real, G> {
    pub value: F,
    pub grad: G,
}

/// `1 + 5·|avgpool(Y) − Y|` with a 31×31 stride-1 window; out-of-image cells
/// count as zeros and the divisor is always 31².
pub fn boundary_weights<F: Real>(y: &BinaryMask<F>) -> Array2<F> {
    let (h, w) = y.size();
    let r = POOL_WINDOW / 2;
    // integral[i][j] = Σ y[..i, ..j]
    let mut integral = Array2::<F>::zeros((h + 1, w + 1));
    for i in 0..h {
        let mut row = F::zero();
        for j in 0..w {
            row += y.data()[[i, j]];
            integral[[i + 1, j + 1]] = integral[[i, j + 1]] + row;
        }
    }
    let area = F::from_usize_lossy(POOL_WINDOW * POOL_WINDOW);
    let gain = F::c(BOUNDARY_GAIN);
    Array2::from_shape_fn((h, w), |(i, j)| {
        let (i0, i1) = (i.saturating_sub(r), (i + r + 1).min(h));
        let (j0, j1) = (j.saturating_sub(r), (j + r + 1).min(w));
        let sum = integral[[i1, j1]] - integral[[i0, j1]] - integral[[i1, j0]] + integral[[i0, j0]];
        F::one() + gain * (sum / area - y.data()[[i, j]]).abs()
    })
}

fn check_same(p: (usize, usize), y: (usize, usize)) -> Result<()> {
    if p != y {
        return Err(Error::shape(format!("{y:?}"), format!("{p:?}")));
    }
    Ok(())
}

/// BCE of a clamped probability and its derivative (zero where clamped).
fn bce<F: Real>(p: F, y: F) -> (F, F) {
    let lo = F::c(PROB_CLAMP);
    let hi = F::one() - lo;
    let pc = p.max(lo).min(hi);
    let value = -(y * pc.ln() + (F::one() - y) * (F::one() - pc).ln());
    let grad = if p < lo || p > hi {
        F::zero()
    } else {
        -y / pc + (F::one() - y) / (F::one() - pc)
    };
    (value, grad)
}

/// Weighted BCE plus weighted IoU against a binary target.
pub fn structure_loss<F: Real>(p: &SoftMask<F>, y: &BinaryMask<F>) -> Result<Graded<F, Array2<F>>> {
    check_same(p.size(), y.size())?;
    let wmap = boundary_weights(y);
    let w_sum: F = wmap.iter().copied().sum();
    let (mut wbce, mut inter, mut union) = (F::zero(), F::zero(), F::zero());
    let mut bce_grad = Array2::zeros(p.size());
    for ((idx, &pv), &yv) in p.data().indexed_iter().zip(y.data()) {
        let wv = wmap[idx];
        let (b, db) = bce(pv, yv);
        wbce += wv * b;
        bce_grad[idx] = wv * db;
        inter += wv * pv * yv;
        union += wv * (pv + yv - pv * yv);
    }
    let one = F::one();
    let value = wbce / w_sum + one - (inter + one) / (union + one);
    let denom = (union + one) * (union + one);
    let mut grad = bce_grad / w_sum;
    for ((idx, g), &yv) in grad.indexed_iter_mut().zip(y.data()) {
        let wv = wmap[idx];
        *g -= (wv * yv * (union + one) - (inter + one) * wv * (one - yv)) / denom;
    }
    Ok(Graded { value, grad })
}

/// Mean over maps of per-pixel BCE against each map's scalar label.
pub fn adversarial_loss<F: Real>(scores: &[&ClassScoreMap<F>], labels: &[u8]) -> Result<Graded<F, Vec<Array2<F>>>> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("adversarial loss needs at least one score map".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::shape(format!("{} labels", scores.len()), labels.len()));
    }
    let n_maps = F::from_usize_lossy(scores.len());
    let mut value = F::zero();
    let mut grads = Vec::with_capacity(scores.len());
    for (s, &label) in scores.iter().zip(labels) {
        if label > 1 {
            return Err(Error::InvalidArgument(format!("label {label} is not 0 or 1")));
        }
        let c = F::from_u8(label).expect("0 or 1");
        let n_px = F::from_usize_lossy(s.data().len());
        let mut map_sum = F::zero();
        let g = s.data().mapv(|sv| {
            let (b, db) = bce(sv, c);
            map_sum += b;
            db / (n_px * n_maps)
        });
        value += map_sum / n_px;
        grads.push(g);
    }
    Ok(Graded {
        value: value / n_maps,
        grad: grads,
    })
}

/// Unweighted sum of the segmentation and adversarial terms.
pub fn total_loss<F: Real>(
    p: &SoftMask<F>,
    y: &BinaryMask<F>,
    scores: &[&ClassScoreMap<F>],
    labels: &[u8],
) -> Result<LossValue<F>> {
    let seg = structure_loss(p, y)?.value;
    let adv = adversarial_loss(scores, labels)?.value;
    Ok(LossValue::new(seg, adv))
}
