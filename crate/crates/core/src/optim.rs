//! Adam with independent parameter groups. Moments are kept in `f64`
//! regardless of the model scalar.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const ADAM_ID: &str = "adam";
pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub name: String,
    pub lr: f64,
    /// Number of updates applied so far.
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    groups: Vec<ParamGroup>,
}

impl Adam {
    /// One group per `(name, lr, n_params)`.
    pub fn new(groups: &[(&str, f64, usize)]) -> Result<Self> {
        let groups = groups
            .iter()
            .map(|&(name, lr, n)| {
                if !(lr > 0.0 && lr.is_finite()) {
                    return Err(Error::InvalidArgument(format!("learning rate for {name} must be positive, got {lr}")));
                }
                Ok(ParamGroup {
                    name: name.to_string(),
                    lr,
                    step: 0,
                    m: vec![0.0; n],
                    v: vec![0.0; n],
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            beta1: BETA1,
            beta2: BETA2,
            eps: EPSILON,
            groups,
        })
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    /// Applies one bias-corrected update to `params` of group `index`.
    pub fn step<F: Real>(&mut self, index: usize, params: &mut [F], grads: &[F]) -> Result<()> {
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let group = self
            .groups
            .get_mut(index)
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter group {index}")))?;
        if params.len() != group.m.len() || grads.len() != group.m.len() {
            return Err(Error::shape(
                format!("{} parameters in group {}", group.m.len(), group.name),
                format!("{} params / {} grads", params.len(), grads.len()),
            ));
        }
        group.step += 1;
        let t = group.step as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut group.m).zip(&mut group.v) {
            let g = g.to_f64_lossy();
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let update = group.lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            *p = F::c(p.to_f64_lossy() - update);
        }
        Ok(())
    }
}
