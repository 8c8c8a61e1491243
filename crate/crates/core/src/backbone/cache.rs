//! On-disk cache of raw feature grids keyed by image id, architecture and image size.
//!
//! File layout: one ASCII header line
//! `UCFEAT1 <h> <w> <d> <patch> <H> <W> <dtype> <arch digest>\n`
//! followed by `h·w·d` little-endian values in row-major order.

use std::path::{Path, PathBuf};

use ndarray::Array3;

use super::{FeatureExtractor, PatchFeatureGrid};
use crate::error::Result;
use crate::io::write_atomic;
use crate::mask::ImageTensor;
use crate::scalar::Real;

const MAGIC: &str = "UCFEAT1";

#[derive(Debug, Clone)]
pub struct FeatureCache {
    root: PathBuf,
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

impl FeatureCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path_for(&self, image_id: &str, arch_id: &str, size: (usize, usize)) -> PathBuf {
        self.root
            .join(sanitize(arch_id))
            .join(format!("{}x{}", size.0, size.1))
            .join(format!("{}.feat", sanitize(image_id)))
    }

    pub fn encode<F: Real>(grid: &PatchFeatureGrid<F>, arch_digest: &str) -> Vec<u8> {
        let (h, w, d) = grid.data().dim();
        let (sh, sw) = grid.source_image_size();
        let mut out = format!(
            "{MAGIC} {h} {w} {d} {} {sh} {sw} {} {arch_digest}\n",
            grid.patch_size(),
            F::DTYPE
        )
        .into_bytes();
        out.reserve(h * w * d * F::BYTES);
        for v in grid.data().iter() {
            v.write_le(&mut out);
        }
        out
    }

    /// Decodes a cache file; `None` when the header does not match `arch_digest` or `F`.
    pub fn decode<F: Real>(bytes: &[u8], arch_digest: &str) -> Option<PatchFeatureGrid<F>> {
        let nl = bytes.iter().position(|b| *b == b'\n')?;
        let header = std::str::from_utf8(&bytes[..nl]).ok()?;
        let fields: Vec<&str> = header.split(' ').collect();
        if fields.len() != 9 || fields[0] != MAGIC || fields[7] != F::DTYPE || fields[8] != arch_digest {
            return None;
        }
        let nums: Vec<usize> = fields[1..7].iter().map(|f| f.parse().ok()).collect::<Option<_>>()?;
        let (h, w, d, patch, sh, sw) = (nums[0], nums[1], nums[2], nums[3], nums[4], nums[5]);
        let body = &bytes[nl + 1..];
        if body.len() != h * w * d * F::BYTES {
            return None;
        }
        let values: Vec<F> = body.chunks_exact(F::BYTES).map(F::read_le).collect();
        let data = Array3::from_shape_vec((h, w, d), values).ok()?;
        PatchFeatureGrid::new(data, patch, (sh, sw)).ok()
    }

    pub fn load<F: Real>(&self, image_id: &str, arch_id: &str, arch_digest: &str, size: (usize, usize)) -> Option<PatchFeatureGrid<F>> {
        let bytes = std::fs::read(self.path_for(image_id, arch_id, size)).ok()?;
        Self::decode(&bytes, arch_digest)
    }

    pub fn store<F: Real>(&self, image_id: &str, arch_id: &str, arch_digest: &str, grid: &PatchFeatureGrid<F>) -> Result<()> {
        let path = self.path_for(image_id, arch_id, grid.source_image_size());
        write_atomic(&path, &Self::encode(grid, arch_digest))
    }

    /// Cached features for `image`, extracting and storing them on a miss.
    pub fn get_or_extract<F: Real, E: FeatureExtractor<F> + ?Sized>(
        &self,
        extractor: &E,
        image: &ImageTensor<F>,
    ) -> Result<PatchFeatureGrid<F>> {
        let digest = extractor.parameter_digest();
        if let Some(grid) = self.load(image.id(), extractor.arch_id(), &digest, image.size()) {
            return Ok(grid);
        }
        let grid = extractor.extract(image)?;
        self.store(image.id(), extractor.arch_id(), &digest, &grid)?;
        Ok(grid)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

/// Extracts through the cache when one is configured.
pub fn extract_with<F: Real, E: FeatureExtractor<F> + ?Sized>(
    extractor: &E,
    cache: Option<&FeatureCache>,
    image: &ImageTensor<F>,
) -> Result<PatchFeatureGrid<F>> {
    match cache {
        Some(c) => c.get_or_extract(extractor, image),
        None => extractor.extract(image),
    }
}

impl From<&Path> for FeatureCache {
    fn from(p: &Path) -> Self {
        Self::new(p)
    }
}
