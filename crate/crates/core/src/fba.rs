//! Foreground/background adversarial head: a per-pixel three-layer perceptron
//! over `[R, G, B, mask]` that scores whether the mask is a foreground map.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mask::{binarize, complement, ClassScoreMap, ImageTensor, SoftMask, DEFAULT_THRESHOLD};
use crate::scalar::{sigmoid, Real};

pub const DEFAULT_CHANNELS: (usize, usize) = (16, 8);
pub const NEGATIVE_SLOPE: f64 = 0.01;
const INPUT_CHANNELS: usize = 4;

/// Fully connected layer `y = W x + b` with `W` stored as (out × in).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F: Real> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Real> Dense<F> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// Uniform `(-1/√in, 1/√in)` for weight and bias alike.
    fn init(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weight = Array2::from_shape_fn((outputs, inputs), |_| F::c(rng.random_range(-bound..bound)));
        let bias = Array1::from_shape_fn(outputs, |_| F::c(rng.random_range(-bound..bound)));
        Self { weight, bias }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    fn apply(&self, x: ArrayView2<'_, F>) -> Array2<F> {
        x.dot(&self.weight.t()) + &self.bias
    }

    fn n_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FbaStack<F: Real> {
    layers: [Dense<F>; 3],
    negative_slope: F,
}

/// Gradients for the three layers, same shapes as the stack.
#[derive(Debug, Clone, PartialEq)]
pub struct FbaGrad<F: Real> {
    pub layers: [Dense<F>; 3],
}

/// Activations retained by `forward`.
#[derive(Debug, Clone)]
pub struct FbaForward<F: Real> {
    input: Array2<F>,
    z1: Array2<F>,
    a1: Array2<F>,
    z2: Array2<F>,
    a2: Array2<F>,
    pub score: ClassScoreMap<F>,
}

fn leaky<F: Real>(z: &Array2<F>, slope: F) -> Array2<F> {
    z.mapv(|v| if v > F::zero() { v } else { v * slope })
}

fn leaky_grad<F: Real>(g: &Array2<F>, z: &Array2<F>, slope: F) -> Array2<F> {
    let mut out = g.clone();
    out.zip_mut_with(z, |gv, zv| {
        if *zv <= F::zero() {
            *gv *= slope;
        }
    });
    out
}

impl<F: Real> FbaStack<F> {
    pub fn new(layers: [Dense<F>; 3], negative_slope: F) -> Result<Self> {
        let chain = [
            (layers[0].inputs(), INPUT_CHANNELS),
            (layers[1].inputs(), layers[0].outputs()),
            (layers[2].inputs(), layers[1].outputs()),
            (layers[2].outputs(), 1),
        ];
        for (got, want) in chain {
            if got != want {
                return Err(Error::shape(format!("channel chain 4→C1→C2→1 (expected {want})"), got));
            }
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.outputs() {
                return Err(Error::shape(format!("layer {l} bias of {}", layer.outputs()), layer.bias.len()));
            }
            if layer.weight.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("layer {l} has non-finite parameters")));
            }
        }
        Ok(Self { layers, negative_slope })
    }

    pub fn init(c1: usize, c2: usize, seed: u64) -> Result<Self> {
        if c1 == 0 || c2 == 0 {
            return Err(Error::InvalidArgument(format!("FBA channels must be positive, got {c1},{c2}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = [
            Dense::init(INPUT_CHANNELS, c1, &mut rng),
            Dense::init(c1, c2, &mut rng),
            Dense::init(c2, 1, &mut rng),
        ];
        Self::new(layers, F::c(NEGATIVE_SLOPE))
    }

    pub fn layers(&self) -> &[Dense<F>; 3] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<F>; 3] {
        &mut self.layers
    }

    pub fn channels(&self) -> (usize, usize) {
        (self.layers[0].outputs(), self.layers[1].outputs())
    }

    pub fn negative_slope(&self) -> F {
        self.negative_slope
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    pub fn forward(&self, image: &ImageTensor<F>, mask: &SoftMask<F>) -> Result<FbaForward<F>> {
        let (h, w) = image.size();
        if mask.size() != (h, w) {
            return Err(Error::shape(format!("{h}×{w} mask"), format!("{:?}", mask.size())));
        }
        let n = h * w;
        let mut input = Array2::zeros((n, INPUT_CHANNELS));
        input
            .slice_mut(s![.., 0..3])
            .assign(&image.data().to_shape((n, 3)).expect("H×W×3 image"));
        input
            .column_mut(3)
            .assign(&mask.data().to_shape(n).expect("H×W mask"));
        let slope = self.negative_slope;
        let z1 = self.layers[0].apply(input.view());
        let a1 = leaky(&z1, slope);
        let z2 = self.layers[1].apply(a1.view());
        let a2 = leaky(&z2, slope);
        let z3 = self.layers[2].apply(a2.view());
        let score = z3
            .index_axis(Axis(1), 0)
            .mapv(sigmoid)
            .into_shape_with_order((h, w))
            .expect("n = h·w");
        Ok(FbaForward {
            input,
            z1,
            a1,
            z2,
            a2,
            score: SoftMask::from_trusted(score),
        })
    }

    /// Backpropagates `∂L/∂S`; returns parameter gradients and `∂L/∂mask`.
    pub fn backward(&self, fwd: &FbaForward<F>, grad_score: &Array2<F>) -> Result<(FbaGrad<F>, Array2<F>)> {
        let (h, w) = fwd.score.size();
        if grad_score.dim() != (h, w) {
            return Err(Error::shape(format!("{h}×{w}"), format!("{:?}", grad_score.dim())));
        }
        let n = h * w;
        let slope = self.negative_slope;
        let s_flat = fwd.score.data().to_shape(n).expect("contiguous");
        let g_flat = grad_score.to_shape(n).expect("contiguous");
        let g3 = Array1::from_iter(s_flat.iter().zip(g_flat.iter()).map(|(s, g)| *g * *s * (F::one() - *s)))
            .insert_axis(Axis(1));
        let d3 = Dense {
            weight: g3.t().dot(&fwd.a2),
            bias: g3.sum_axis(Axis(0)),
        };
        let gz2 = leaky_grad(&g3.dot(&self.layers[2].weight), &fwd.z2, slope);
        let d2 = Dense {
            weight: gz2.t().dot(&fwd.a1),
            bias: gz2.sum_axis(Axis(0)),
        };
        let gz1 = leaky_grad(&gz2.dot(&self.layers[1].weight), &fwd.z1, slope);
        let d1 = Dense {
            weight: gz1.t().dot(&fwd.input),
            bias: gz1.sum_axis(Axis(0)),
        };
        let grad_mask = gz1
            .dot(&self.layers[0].weight.column(3))
            .into_shape_with_order((h, w))
            .expect("n = h·w");
        Ok((FbaGrad { layers: [d1, d2, d3] }, grad_mask))
    }

    /// Parameters flattened layer by layer (weight row-major, then bias).
    pub fn to_flat(&self) -> Vec<F> {
        flatten(&self.layers)
    }

    pub fn set_flat(&mut self, values: &[F]) -> Result<()> {
        if values.len() != self.n_params() {
            return Err(Error::shape(self.n_params(), values.len()));
        }
        let mut it = values.iter().copied();
        for layer in &mut self.layers {
            layer.weight.iter_mut().chain(layer.bias.iter_mut()).for_each(|p| *p = it.next().expect("sized"));
        }
        Ok(())
    }
}

fn flatten<F: Real>(layers: &[Dense<F>; 3]) -> Vec<F> {
    layers
        .iter()
        .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
        .collect()
}

impl<F: Real> FbaGrad<F> {
    pub fn zeros_like(stack: &FbaStack<F>) -> Self {
        Self {
            layers: stack.layers.clone().map(|l| Dense::zeros(l.inputs(), l.outputs())),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn to_flat(&self) -> Vec<F> {
        flatten(&self.layers)
    }
}

/// Per-pixel class score `σ(FC₃(LR(FC₂(LR(FC₁([X; mask]))))))`.
pub fn fba_score<F: Real>(stack: &FbaStack<F>, image: &ImageTensor<F>, mask: &SoftMask<F>) -> Result<ClassScoreMap<F>> {
    Ok(stack.forward(image, mask)?.score)
}

/// An (image, mask, label) sample for the adversarial sub-task.
#[derive(Debug, Clone)]
pub struct AdversarialPair<'a, F: Real> {
    pub image: &'a ImageTensor<F>,
    pub mask: SoftMask<F>,
    pub label: u8,
}

/// `[(X, P', 1), (X, 1 − P', 0)]` with `P'` the prediction binarized at 0.5.
pub fn make_adversarial_pairs<'a, F: Real>(
    image: &'a ImageTensor<F>,
    prediction: &SoftMask<F>,
) -> Result<[AdversarialPair<'a, F>; 2]> {
    if prediction.size() != image.size() {
        return Err(Error::shape(format!("{:?}", image.size()), format!("{:?}", prediction.size())));
    }
    let fg = binarize(prediction, F::c(DEFAULT_THRESHOLD))?.to_soft();
    let bg = complement(&fg);
    Ok([
        AdversarialPair { image, mask: fg, label: 1 },
        AdversarialPair { image, mask: bg, label: 0 },
    ])
}
