//! The target model: one linear projection of frozen patch features.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backbone::PatchFeatureGrid;
use crate::error::{Error, Result};
use crate::mask::SoftMask;
use crate::resize::{Kernel, Resize2d};
use crate::scalar::{sigmoid, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead<F: Real> {
    weight: Array1<F>,
    bias: F,
}

/// Gradient of a scalar objective with respect to the head parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrad<F: Real> {
    pub weight: Array1<F>,
    pub bias: F,
}

/// Intermediate values kept from `forward` for the backward pass.
#[derive(Debug, Clone)]
pub struct HeadForward<F: Real> {
    pub prob: SoftMask<F>,
    upsample: Resize2d,
}

impl<F: Real> LinearHead<F> {
    pub fn new(weight: Array1<F>, bias: F) -> Result<Self> {
        if weight.is_empty() {
            return Err(Error::InvalidArgument("head weight must not be empty".into()));
        }
        if let Some(index) = weight.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if !bias.is_finite() {
            return Err(Error::NonFinite { index: weight.len() });
        }
        Ok(Self { weight, bias })
    }

    /// Weights uniform in `(-1/√d, 1/√d)` from a seeded stream; zero bias.
    pub fn init(d: usize, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("feature dimension must be positive".into()));
        }
        let bound = 1.0 / (d as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weight = Array1::from_shape_fn(d, |_| F::c(rng.random_range(-bound..bound)));
        Ok(Self {
            weight,
            bias: F::zero(),
        })
    }

    pub fn weight(&self) -> &Array1<F> {
        &self.weight
    }

    pub fn bias(&self) -> F {
        self.bias
    }

    pub fn dim(&self) -> usize {
        self.weight.len()
    }

    /// Parameters as `[weight..., bias]`.
    pub fn to_flat(&self) -> Vec<F> {
        self.weight.iter().copied().chain(std::iter::once(self.bias)).collect()
    }

    pub fn set_flat(&mut self, values: &[F]) -> Result<()> {
        let d = self.dim();
        if values.len() != d + 1 {
            return Err(Error::shape(d + 1, values.len()));
        }
        self.weight.iter_mut().zip(values).for_each(|(w, v)| *w = *v);
        self.bias = values[d];
        Ok(())
    }

    /// `w·f + b` for every patch, on the patch grid.
    pub fn patch_logits(&self, features: &PatchFeatureGrid<F>) -> Result<Array2<F>> {
        if features.dim() != self.dim() {
            return Err(Error::shape(format!("feature dim {}", self.dim()), features.dim()));
        }
        let (h, w) = features.grid_dims();
        let flat = features.as_matrix().dot(&self.weight) + self.bias;
        Ok(flat.into_shape_with_order((h, w)).expect("grid sized"))
    }

    pub fn forward(&self, features: &PatchFeatureGrid<F>, output_size: (usize, usize)) -> Result<HeadForward<F>> {
        if output_size.0 == 0 || output_size.1 == 0 {
            return Err(Error::InvalidArgument("output size must be non-empty".into()));
        }
        let logits = self.patch_logits(features)?;
        let upsample = Resize2d::new(logits.dim(), output_size, Kernel::Bilinear);
        let prob = upsample.apply(logits.view()).mapv(sigmoid);
        Ok(HeadForward {
            prob: SoftMask::from_trusted(prob),
            upsample,
        })
    }

    /// Backpropagates `grad_prob = ∂L/∂P` to the parameters.
    pub fn backward(
        &self,
        features: &PatchFeatureGrid<F>,
        forward: &HeadForward<F>,
        grad_prob: &Array2<F>,
    ) -> Result<HeadGrad<F>> {
        let p = forward.prob.data();
        if grad_prob.dim() != p.dim() {
            return Err(Error::shape(format!("{:?}", p.dim()), format!("{:?}", grad_prob.dim())));
        }
        let grad_logit = grad_prob * &p.mapv(|v| v * (F::one() - v));
        let grad_patch = forward.upsample.apply_adjoint(grad_logit.view());
        let n = grad_patch.len();
        let g = grad_patch.into_shape_with_order(n).expect("contiguous");
        Ok(HeadGrad {
            weight: features.as_matrix().t().dot(&g),
            bias: g.sum(),
        })
    }
}

/// Soft foreground map: patch logits upsampled bilinearly, then the sigmoid.
pub fn predict<F: Real>(
    head: &LinearHead<F>,
    features: &PatchFeatureGrid<F>,
    output_size: (usize, usize),
) -> Result<SoftMask<F>> {
    Ok(head.forward(features, output_size)?.prob)
}

pub fn init_head<F: Real>(d: usize, seed: u64) -> Result<LinearHead<F>> {
    LinearHead::init(d, seed)
}

impl<F: Real> HeadGrad<F> {
    pub fn zeros(d: usize) -> Self {
        Self {
            weight: Array1::zeros(d),
            bias: F::zero(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.weight += &other.weight;
        self.bias += other.bias;
    }

    pub fn to_flat(&self) -> Vec<F> {
        self.weight.iter().copied().chain(std::iter::once(self.bias)).collect()
    }
}
