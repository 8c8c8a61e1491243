use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::affinity::{DEFAULT_EPS, DEFAULT_TAU};
use super::maskcut::{is_degenerate, maskcut, upsample_pseudo_label, DEFAULT_ITERATIONS};
use crate::backbone::{extract_with, FeatureCache, FeatureExtractor};
use crate::datasets::{load_image, SplitManifest, DEFAULT_IMAGE_SIZE};
use crate::error::{Error, Result};
use crate::io::{binary_from_gray, encode_gray_png, gray_from_binary, read_gray8, write_atomic};
use crate::mask::BinaryMask;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelParams {
    pub tau: f64,
    pub eps: f64,
    pub iterations: usize,
    /// Pixel size (rows, cols) of images fed to the backbone and of the stored labels.
    pub image_size: (usize, usize),
}

impl Default for PseudoLabelParams {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            eps: DEFAULT_EPS,
            iterations: DEFAULT_ITERATIONS,
            image_size: DEFAULT_IMAGE_SIZE,
        }
    }
}

/// Short hex key identifying a (params, backbone) combination.
pub fn param_hash(params: &PseudoLabelParams, arch_id: &str, parameter_digest: &str) -> String {
    let key = format!(
        "{:?};{:?};{};{};{};{}x{}",
        params.tau, params.eps, params.iterations, arch_id, parameter_digest, params.image_size.0, params.image_size.1
    );
    hex::encode(Sha256::digest(key.as_bytes()))[..16].to_string()
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    tau: f64,
    eps: f64,
    iterations: usize,
    image_size: (usize, usize),
    arch_id: String,
    parameter_digest: String,
}

/// One parameter-hash directory of cached pseudo-label PNGs.
#[derive(Debug, Clone)]
pub struct PseudoLabelCache {
    dir: PathBuf,
}

impl PseudoLabelCache {
    pub fn new(root: &Path, params: &PseudoLabelParams, arch_id: &str, parameter_digest: &str) -> Self {
        Self {
            dir: root.join(param_hash(params, arch_id, parameter_digest)),
        }
    }

    /// Opens an existing hash directory directly.
    pub fn at(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, image_id: &str) -> PathBuf {
        self.dir.join(format!("{image_id}.png"))
    }

    pub fn contains(&self, image_id: &str) -> bool {
        self.path_for(image_id).is_file()
    }

    pub fn load<F: Real>(&self, image_id: &str) -> Result<BinaryMask<F>> {
        let path = self.path_for(image_id);
        Ok(binary_from_gray(&read_gray8(&path)?, &path))
    }
}

#[derive(Debug, Clone, Default)]
pub struct PseudoLabelOutcome {
    /// image id → pseudo-label PNG path.
    pub labels: BTreeMap<String, PathBuf>,
    pub generated: usize,
    pub reused: usize,
    /// Ids whose label is nearly empty or nearly full.
    pub degenerate: Vec<String>,
}

/// Produces (or reuses) one pseudo-label PNG per manifest record under
/// `<root>/<param_hash>/`. Images are processed in parallel; each file is
/// written atomically so concurrent runs cannot observe partial outputs.
pub fn generate_and_cache<F: Real, E: FeatureExtractor<F> + ?Sized>(
    manifest: &SplitManifest,
    extractor: &E,
    feature_cache: Option<&FeatureCache>,
    params: &PseudoLabelParams,
    root: &Path,
) -> Result<PseudoLabelOutcome> {
    if manifest.is_empty() {
        return Ok(PseudoLabelOutcome::default());
    }
    let digest = extractor.parameter_digest();
    let cache = PseudoLabelCache::new(root, params, extractor.arch_id(), &digest);
    let sidecar = Sidecar {
        tau: params.tau,
        eps: params.eps,
        iterations: params.iterations,
        image_size: params.image_size,
        arch_id: extractor.arch_id().to_string(),
        parameter_digest: digest,
    };
    let json = serde_json::to_vec_pretty(&sidecar).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    write_atomic(&cache.dir().join("params.json"), &json)?;

    let results: Vec<Result<(String, PathBuf, bool, bool)>> = manifest
        .records()
        .par_iter()
        .map(|record| {
            let id = record.image_id();
            let path = cache.path_for(&id);
            if path.is_file() {
                let label: BinaryMask<F> = cache.load(&id)?;
                return Ok((id, path, false, is_degenerate(&label)));
            }
            let image = load_image::<F>(&record.image_path, &id, params.image_size)?;
            let features = extract_with(extractor, feature_cache, &image)?;
            let patches = maskcut(&features, params.iterations, F::c(params.tau), F::c(params.eps))?;
            let label = upsample_pseudo_label(&patches, params.image_size)?;
            write_atomic(&path, &encode_gray_png(&gray_from_binary(&label))?)?;
            Ok((id, path, true, is_degenerate(&label)))
        })
        .collect();

    let mut outcome = PseudoLabelOutcome::default();
    for result in results {
        let (id, path, fresh, degenerate) = result?;
        if fresh {
            outcome.generated += 1;
        } else {
            outcome.reused += 1;
        }
        if degenerate {
            warn!("pseudo-label for {id} is degenerate and will be skipped in training");
            outcome.degenerate.push(id.clone());
        }
        outcome.labels.insert(id, path);
    }
    info!(
        "pseudo-labels in {}: {} generated, {} reused",
        cache.dir().display(),
        outcome.generated,
        outcome.reused
    );
    Ok(outcome)
}
