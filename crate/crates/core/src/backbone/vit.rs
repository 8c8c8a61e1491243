//! Vision transformer forward pass in the DINO layout, loaded from safetensors.
//!
//! Only inference is supported. The exposed features are the attention keys of
//! the final block, one vector per patch (the class token is dropped).

use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, Array3, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use safetensors::{tensor::TensorView, Dtype, SafeTensors};
use sha2::{Digest, Sha256};

use super::{check_divisible, FeatureExtractor, PatchFeatureGrid};
use crate::error::{Error, Result};
use crate::mask::ImageTensor;
use crate::resize::{Kernel, Resampler1d, Resize2d};
use crate::scalar::Real;

pub const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];
const LN_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViTConfig {
    pub arch_id: String,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub num_heads: usize,
    pub mlp_hidden: usize,
    /// Side of the square position-embedding grid the weights were trained with.
    pub pos_grid: usize,
}

impl ViTConfig {
    pub fn vit_small_8() -> Self {
        Self {
            arch_id: "vit_small_8".into(),
            patch_size: 8,
            embed_dim: 384,
            depth: 12,
            num_heads: 6,
            mlp_hidden: 1536,
            pos_grid: 28,
        }
    }

    pub fn vit_base_8() -> Self {
        Self {
            arch_id: "vit_base_8".into(),
            patch_size: 8,
            embed_dim: 768,
            depth: 12,
            num_heads: 12,
            mlp_hidden: 3072,
            pos_grid: 28,
        }
    }

    pub fn from_arch_id(id: &str) -> Result<Self> {
        match id {
            "vit_small_8" => Ok(Self::vit_small_8()),
            "vit_base_8" => Ok(Self::vit_base_8()),
            other => Err(Error::InvalidArgument(format!(
                "unknown architecture {other}; expected vit_small_8 or vit_base_8"
            ))),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.patch_size == 0
            || self.depth == 0
            || self.num_heads == 0
            || !self.embed_dim.is_multiple_of(self.num_heads)
            || self.pos_grid == 0
        {
            return Err(Error::InvalidArgument(format!("invalid ViT configuration {self:?}")));
        }
        Ok(())
    }

    /// Every parameter tensor with its expected shape, in canonical order.
    pub fn expected_tensors(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.embed_dim;
        let p = self.patch_size;
        let mut out = vec![
            ("cls_token".to_string(), vec![1, 1, d]),
            ("pos_embed".to_string(), vec![1, 1 + self.pos_grid * self.pos_grid, d]),
            ("patch_embed.proj.weight".to_string(), vec![d, 3, p, p]),
            ("patch_embed.proj.bias".to_string(), vec![d]),
        ];
        for i in 0..self.depth {
            let b = format!("blocks.{i}");
            out.extend([
                (format!("{b}.norm1.weight"), vec![d]),
                (format!("{b}.norm1.bias"), vec![d]),
                (format!("{b}.attn.qkv.weight"), vec![3 * d, d]),
                (format!("{b}.attn.qkv.bias"), vec![3 * d]),
                (format!("{b}.attn.proj.weight"), vec![d, d]),
                (format!("{b}.attn.proj.bias"), vec![d]),
                (format!("{b}.norm2.weight"), vec![d]),
                (format!("{b}.norm2.bias"), vec![d]),
                (format!("{b}.mlp.fc1.weight"), vec![self.mlp_hidden, d]),
                (format!("{b}.mlp.fc1.bias"), vec![self.mlp_hidden]),
                (format!("{b}.mlp.fc2.weight"), vec![d, self.mlp_hidden]),
                (format!("{b}.mlp.fc2.bias"), vec![d]),
            ]);
        }
        out.push(("norm.weight".to_string(), vec![d]));
        out.push(("norm.bias".to_string(), vec![d]));
        out
    }
}

#[derive(Debug, Clone)]
struct Linear<F: Real> {
    weight: Array2<F>,
    bias: Array1<F>,
}

impl<F: Real> Linear<F> {
    fn forward(&self, x: ArrayView2<'_, F>) -> Array2<F> {
        x.dot(&self.weight.t()) + &self.bias
    }
}

#[derive(Debug, Clone)]
struct LayerNorm<F: Real> {
    weight: Array1<F>,
    bias: Array1<F>,
}

impl<F: Real> LayerNorm<F> {
    fn forward(&self, x: ArrayView2<'_, F>) -> Array2<F> {
        let d = F::from_usize_lossy(x.ncols());
        let eps = F::c(LN_EPS);
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            let mean = row.sum() / d;
            let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<F>() / d;
            let inv = F::one() / (var + eps).sqrt();
            row.iter_mut()
                .zip(self.weight.iter().zip(self.bias.iter()))
                .for_each(|(v, (g, b))| *v = (*v - mean) * inv * *g + *b);
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Block<F: Real> {
    norm1: LayerNorm<F>,
    qkv: Linear<F>,
    proj: Linear<F>,
    norm2: LayerNorm<F>,
    fc1: Linear<F>,
    fc2: Linear<F>,
}

fn gelu<F: Real>(x: F) -> F {
    F::c(0.5) * x * (F::one() + (x / F::c(std::f64::consts::SQRT_2)).erf())
}

fn softmax_rows<F: Real>(a: &mut Array2<F>) {
    for mut row in a.rows_mut() {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

impl<F: Real> Block<F> {
    fn attention(&self, y: ArrayView2<'_, F>, heads: usize) -> Array2<F> {
        let qkv = self.qkv.forward(y);
        let d = qkv.ncols() / 3;
        let hd = d / heads;
        let scale = F::one() / F::from_usize_lossy(hd).sqrt();
        let outs: Vec<Array2<F>> = (0..heads)
            .into_par_iter()
            .map(|h| {
                let q = qkv.slice(s![.., h * hd..(h + 1) * hd]);
                let k = qkv.slice(s![.., d + h * hd..d + (h + 1) * hd]);
                let v = qkv.slice(s![.., 2 * d + h * hd..2 * d + (h + 1) * hd]);
                let mut a = q.dot(&k.t()) * scale;
                softmax_rows(&mut a);
                a.dot(&v)
            })
            .collect();
        let views: Vec<_> = outs.iter().map(|o| o.view()).collect();
        let merged = concatenate(Axis(1), &views).expect("head outputs share rows");
        self.proj.forward(merged.view())
    }

    fn forward(&self, x: Array2<F>, heads: usize) -> Array2<F> {
        let x = &x + &self.attention(self.norm1.forward(x.view()).view(), heads);
        let hidden = self.fc1.forward(self.norm2.forward(x.view()).view()).mapv(gelu);
        &x + &self.fc2.forward(hidden.view())
    }

    /// Keys of this block's attention for input tokens `x`.
    fn keys(&self, x: ArrayView2<'_, F>) -> Array2<F> {
        let d = self.qkv.weight.ncols();
        let y = self.norm1.forward(x);
        let wk = self.qkv.weight.slice(s![d..2 * d, ..]);
        let bk = self.qkv.bias.slice(s![d..2 * d]);
        y.dot(&wk.t()) + bk
    }
}

/// Inference-only vision transformer. Parameters are private and never mutated
/// after construction.
#[derive(Debug, Clone)]
pub struct VisionTransformer<F: Real> {
    config: ViTConfig,
    cls_token: Array1<F>,
    pos_embed: Array2<F>,
    patch_proj: Linear<F>,
    blocks: Vec<Block<F>>,
    norm: LayerNorm<F>,
    digest: String,
}

/// Raw tensors keyed by canonical name, in canonical order.
type NamedTensors<F> = Vec<(String, Vec<usize>, Vec<F>)>;

impl<F: Real> VisionTransformer<F> {
    fn from_named(config: ViTConfig, tensors: NamedTensors<F>) -> Result<Self> {
        let mut it = tensors.into_iter().map(|(_, shape, data)| (shape, data));
        let mut next = || it.next().expect("tensor count matches configuration");
        let vec1 = |(_, d): (Vec<usize>, Vec<F>)| Array1::from_vec(d);
        let mat = |(shape, d): (Vec<usize>, Vec<F>)| {
            let rows = shape[0];
            let cols = d.len() / rows.max(1);
            Array2::from_shape_vec((rows, cols), d).expect("shape checked")
        };
        let d = config.embed_dim;
        let cls_token = vec1(next());
        let pos = next();
        let pos_embed = Array2::from_shape_vec((pos.0[1], d), pos.1).expect("shape checked");
        let patch_proj = Linear {
            weight: mat(next()),
            bias: vec1(next()),
        };
        let mut blocks = Vec::with_capacity(config.depth);
        for _ in 0..config.depth {
            blocks.push(Block {
                norm1: LayerNorm {
                    weight: vec1(next()),
                    bias: vec1(next()),
                },
                qkv: Linear {
                    weight: mat(next()),
                    bias: vec1(next()),
                },
                proj: Linear {
                    weight: mat(next()),
                    bias: vec1(next()),
                },
                norm2: LayerNorm {
                    weight: vec1(next()),
                    bias: vec1(next()),
                },
                fc1: Linear {
                    weight: mat(next()),
                    bias: vec1(next()),
                },
                fc2: Linear {
                    weight: mat(next()),
                    bias: vec1(next()),
                },
            });
        }
        let norm = LayerNorm {
            weight: vec1(next()),
            bias: vec1(next()),
        };
        let mut model = Self {
            config,
            cls_token,
            pos_embed,
            patch_proj,
            blocks,
            norm,
            digest: String::new(),
        };
        model.digest = model.compute_digest();
        Ok(model)
    }

    /// Parameters in canonical order with their shapes.
    pub fn named_tensors(&self) -> NamedTensors<F> {
        let expected = self.config.expected_tensors();
        let mut data: Vec<Vec<F>> = vec![
            self.cls_token.to_vec(),
            self.pos_embed.iter().copied().collect(),
            self.patch_proj.weight.iter().copied().collect(),
            self.patch_proj.bias.to_vec(),
        ];
        for b in &self.blocks {
            data.extend([
                b.norm1.weight.to_vec(),
                b.norm1.bias.to_vec(),
                b.qkv.weight.iter().copied().collect(),
                b.qkv.bias.to_vec(),
                b.proj.weight.iter().copied().collect(),
                b.proj.bias.to_vec(),
                b.norm2.weight.to_vec(),
                b.norm2.bias.to_vec(),
                b.fc1.weight.iter().copied().collect(),
                b.fc1.bias.to_vec(),
                b.fc2.weight.iter().copied().collect(),
                b.fc2.bias.to_vec(),
            ]);
        }
        data.push(self.norm.weight.to_vec());
        data.push(self.norm.bias.to_vec());
        expected
            .into_iter()
            .zip(data)
            .map(|((name, shape), d)| (name, shape, d))
            .collect()
    }

    /// Digest recomputed from the current parameter values (the cached
    /// `parameter_digest` is taken at construction).
    pub fn compute_digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.config.arch_id.as_bytes());
        for (name, shape, data) in self.named_tensors() {
            hasher.update(name.as_bytes());
            for s in shape {
                hasher.update((s as u64).to_le_bytes());
            }
            for v in data {
                hasher.update(v.to_f64_lossy().to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }

    /// Randomly initialized model (truncated-normal-like, σ = 0.02); for tests and smoke runs.
    pub fn random(config: ViTConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = config
            .expected_tensors()
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let data: Vec<F> = if name.ends_with("norm1.weight")
                    || name.ends_with("norm2.weight")
                    || name == "norm.weight"
                {
                    vec![F::one(); n]
                } else if name.ends_with(".bias") && name.contains("norm") {
                    vec![F::zero(); n]
                } else {
                    (0..n)
                        .map(|_| {
                            let u: f64 = (0..4).map(|_| rng.random::<f64>() - 0.5).sum();
                            F::c(u * 0.02 * 3.0_f64.sqrt())
                        })
                        .collect()
                };
                (name, shape, data)
            })
            .collect();
        Self::from_named(config, tensors)
    }

    /// Writes the parameters as an `f32` safetensors file.
    pub fn save_safetensors(&self, path: &Path) -> Result<()> {
        let named = self.named_tensors();
        let bytes: Vec<(String, Vec<usize>, Vec<u8>)> = named
            .into_iter()
            .map(|(name, shape, data)| {
                let raw = data
                    .iter()
                    .flat_map(|v| (v.to_f64_lossy() as f32).to_le_bytes())
                    .collect();
                (name, shape, raw)
            })
            .collect();
        let views = bytes
            .iter()
            .map(|(name, shape, raw)| {
                TensorView::new(Dtype::F32, shape.clone(), raw)
                    .map(|v| (name.clone(), v))
                    .map_err(|e| Error::WeightMismatch(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let out = safetensors::serialize(views, None).map_err(|e| Error::WeightMismatch(e.to_string()))?;
        crate::io::write_atomic(path, &out)
    }

    pub fn config(&self) -> &ViTConfig {
        &self.config
    }

    /// Position embeddings for an `rows×cols` patch grid, class token first.
    fn position_embedding(&self, rows: usize, cols: usize) -> Array2<F> {
        let g = self.config.pos_grid;
        if rows == g && cols == g {
            return self.pos_embed.clone();
        }
        let d = self.config.embed_dim;
        let grid: Array3<F> = self
            .pos_embed
            .slice(s![1.., ..])
            .to_owned()
            .into_shape_with_order((g, g, d))
            .expect("pos grid");
        let op = Resize2d::from_axes(
            Resampler1d::with_scale(g, rows, Kernel::Bicubic, (rows as f64 + 0.1) / g as f64),
            Resampler1d::with_scale(g, cols, Kernel::Bicubic, (cols as f64 + 0.1) / g as f64),
        );
        let patch = op
            .apply_channels(grid.view())
            .into_shape_with_order((rows * cols, d))
            .expect("resized pos grid");
        concatenate(Axis(0), &[self.pos_embed.slice(s![0..1, ..]), patch.view()]).expect("same width")
    }

    fn embed(&self, image: &ImageTensor<F>) -> Result<(Array2<F>, usize, usize)> {
        let p = self.config.patch_size;
        let (rows, cols) = check_divisible(image, p)?;
        let data = image.data();
        let mean = IMAGENET_MEAN.map(F::c);
        let std = IMAGENET_STD.map(F::c);
        let n = rows * cols;
        let mut patches = Array2::<F>::zeros((n, 3 * p * p));
        for pi in 0..rows {
            for pj in 0..cols {
                let mut row = patches.row_mut(pi * cols + pj);
                for c in 0..3 {
                    for ky in 0..p {
                        for kx in 0..p {
                            let v = data[[pi * p + ky, pj * p + kx, c]];
                            row[c * p * p + ky * p + kx] = (v - mean[c]) / std[c];
                        }
                    }
                }
            }
        }
        let tokens = self.patch_proj.forward(patches.view());
        let cls = self.cls_token.view().insert_axis(Axis(0));
        let mut x = concatenate(Axis(0), &[cls, tokens.view()]).expect("same width");
        x += &self.position_embedding(rows, cols);
        Ok((x, rows, cols))
    }
}

impl<F: Real> FeatureExtractor<F> for VisionTransformer<F> {
    fn arch_id(&self) -> &str {
        &self.config.arch_id
    }

    fn patch_size(&self) -> usize {
        self.config.patch_size
    }

    fn feature_dim(&self) -> usize {
        self.config.embed_dim
    }

    fn parameter_digest(&self) -> String {
        self.digest.clone()
    }

    fn extract(&self, image: &ImageTensor<F>) -> Result<PatchFeatureGrid<F>> {
        let (mut x, rows, cols) = self.embed(image)?;
        let (last, body) = self.blocks.split_last().expect("depth >= 1");
        for block in body {
            x = block.forward(x, self.config.num_heads);
        }
        let keys = last.keys(x.view());
        let d = self.config.embed_dim;
        let grid = keys
            .slice(s![1.., ..])
            .to_owned()
            .into_shape_with_order((rows, cols, d))
            .expect("patch tokens");
        let p = self.config.patch_size;
        PatchFeatureGrid::new(grid, p, (rows * p, cols * p))
    }
}

fn decode_tensor<F: Real>(view: &TensorView<'_>) -> std::result::Result<Vec<F>, String> {
    let raw = view.data();
    match view.dtype() {
        Dtype::F32 => Ok(raw
            .chunks_exact(4)
            .map(|c| F::c(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
            .collect()),
        Dtype::F64 => Ok(raw
            .chunks_exact(8)
            .map(|c| F::c(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect()),
        other => Err(format!("unsupported dtype {other:?}")),
    }
}

/// Loads a frozen source model from a safetensors file whose tensor names and
/// shapes follow the DINO / timm ViT layout for `config`.
pub fn load_source_model<F: Real>(weights_path: &Path, config: &ViTConfig) -> Result<VisionTransformer<F>> {
    config.validate()?;
    let bytes = std::fs::read(weights_path).map_err(|e| Error::io(weights_path, e))?;
    let st = SafeTensors::deserialize(&bytes)
        .map_err(|e| Error::WeightMismatch(format!("{}: {e}", weights_path.display())))?;
    let mut problems = Vec::new();
    let mut tensors = Vec::new();
    for (name, shape) in config.expected_tensors() {
        match st.tensor(&name) {
            Err(_) => problems.push(format!("{name}: missing (expected {shape:?})")),
            Ok(view) if view.shape() != shape.as_slice() => {
                problems.push(format!("{name}: shape {:?}, expected {shape:?}", view.shape()))
            }
            Ok(view) => match decode_tensor::<F>(&view) {
                Ok(data) => tensors.push((name, shape, data)),
                Err(e) => problems.push(format!("{name}: {e}")),
            },
        }
    }
    if !problems.is_empty() {
        return Err(Error::WeightMismatch(format!(
            "{} for {}: {}",
            weights_path.display(),
            config.arch_id,
            problems.join("; ")
        )));
    }
    VisionTransformer::from_named(config.clone(), tensors)
}
