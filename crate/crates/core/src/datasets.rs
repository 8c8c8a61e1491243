//! Dataset discovery, the seeded training split, and resize-on-load.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io;
use crate::mask::{BinaryMask, ImageTensor};
use crate::resize::{Kernel, Resize2d};
use crate::scalar::Real;

pub const IMAGE_EXTENSIONS: [&str; 3] = ["jpg", "jpeg", "png"];
/// Images sampled from each training source.
pub const DEFAULT_PER_SOURCE: usize = 300;
pub const DEFAULT_IMAGE_SIZE: (usize, usize) = (512, 512);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetRecord {
    pub image_path: PathBuf,
    pub gt_path: Option<PathBuf>,
    pub dataset_name: String,
}

impl DatasetRecord {
    pub fn stem(&self) -> String {
        io::file_stem(&self.image_path)
    }

    /// Identifier unique across datasets, used for cache file names.
    pub fn image_id(&self) -> String {
        if self.dataset_name.is_empty() {
            self.stem()
        } else {
            format!("{}__{}", self.dataset_name, self.stem())
        }
    }
}

/// Lists `<root>/images/*.{jpg,jpeg,png}` sorted by file name and pairs each
/// with `<root>/gt/<stem>.png` when present.
pub fn scan_dataset(root: &Path, name: &str) -> Result<Vec<DatasetRecord>> {
    let images_dir = root.join("images");
    if !images_dir.is_dir() {
        return Err(Error::Dataset(format!("{} has no images/ directory", root.display())));
    }
    let images = io::list_files(&images_dir, &IMAGE_EXTENSIONS)?;
    let gt_dir = root.join("gt");
    let gts: HashMap<String, PathBuf> = if gt_dir.is_dir() {
        io::list_files(&gt_dir, &["png"])?
            .into_iter()
            .map(|p| (io::file_stem(&p), p))
            .collect()
    } else {
        HashMap::new()
    };
    images
        .into_iter()
        .map(|image_path| {
            let gt_path = gts.get(&io::file_stem(&image_path)).cloned();
            if let Some(gt) = &gt_path {
                let (img_w, img_h) = io::image_dimensions(&image_path)?;
                let (gt_w, gt_h) = io::image_dimensions(gt)?;
                if (img_w, img_h) != (gt_w, gt_h) {
                    return Err(Error::GtSizeMismatch {
                        path: gt.clone(),
                        gt_w,
                        gt_h,
                        img_w,
                        img_h,
                    });
                }
            }
            Ok(DatasetRecord {
                image_path,
                gt_path,
                dataset_name: name.to_string(),
            })
        })
        .collect()
}

/// The training split: seed plus the ordered list of sampled records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitManifest {
    seed: u64,
    records: Vec<DatasetRecord>,
    source_counts: BTreeMap<String, usize>,
}

fn count_sources(records: &[DatasetRecord]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for r in records {
        *counts.entry(r.dataset_name.clone()).or_insert(0) += 1;
    }
    counts
}

fn path_field(p: &Path) -> Result<&str> {
    let s = p
        .to_str()
        .ok_or_else(|| Error::InvalidArgument(format!("path {} is not UTF-8", p.display())))?;
    if s.contains(['\t', '\n', '\r']) {
        return Err(Error::InvalidArgument(format!("path {s:?} contains a tab or newline")));
    }
    Ok(s)
}

impl SplitManifest {
    pub fn new(seed: u64, records: Vec<DatasetRecord>) -> Self {
        let source_counts = count_sources(&records);
        Self {
            seed,
            records,
            source_counts,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn records(&self) -> &[DatasetRecord] {
        &self.records
    }

    pub fn source_counts(&self) -> &BTreeMap<String, usize> {
        &self.source_counts
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Line-oriented text form: `seed=<n>` then `name\timage\tgt` per record.
    pub fn to_text(&self) -> Result<String> {
        let mut out = format!("seed={}\n", self.seed);
        for r in &self.records {
            if r.dataset_name.contains(['\t', '\n', '\r']) {
                return Err(Error::InvalidArgument(format!(
                    "dataset name {:?} contains a tab or newline",
                    r.dataset_name
                )));
            }
            let gt = match &r.gt_path {
                Some(p) => path_field(p)?,
                None => "",
            };
            let _ = writeln!(out, "{}\t{}\t{}", r.dataset_name, path_field(&r.image_path)?, gt);
        }
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Manifest {
            line: 1,
            msg: "empty manifest".into(),
        })?;
        let seed = header
            .strip_prefix("seed=")
            .and_then(|s| s.trim().parse::<u64>().ok())
            .ok_or(Error::Manifest {
                line: 1,
                msg: format!("expected seed=<int>, found {header:?}"),
            })?;
        let mut records = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 || fields[1].is_empty() {
                return Err(Error::Manifest {
                    line: i + 1,
                    msg: format!("expected name<TAB>image<TAB>gt, found {line:?}"),
                });
            }
            records.push(DatasetRecord {
                dataset_name: fields[0].to_string(),
                image_path: PathBuf::from(fields[1]),
                gt_path: (!fields[2].is_empty()).then(|| PathBuf::from(fields[2])),
            });
        }
        Ok(Self::new(seed, records))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, self.to_text()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Hex SHA-256 of the text form.
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_text()?.as_bytes())))
    }
}

fn sample_source(
    records: &[DatasetRecord],
    per_source: usize,
    rng: &mut ChaCha8Rng,
    fallback_name: &str,
) -> Result<Vec<DatasetRecord>> {
    if records.len() < per_source {
        return Err(Error::InsufficientSource {
            name: records
                .first()
                .map(|r| r.dataset_name.clone())
                .unwrap_or_else(|| fallback_name.to_string()),
            available: records.len(),
            requested: per_source,
        });
    }
    Ok(rand::seq::index::sample(rng, records.len(), per_source)
        .into_iter()
        .map(|i| records[i].clone())
        .collect())
}

/// Samples `per_source` records without replacement from each source with a
/// seeded generator (camouflage source first, then the salient source).
pub fn build_training_split(
    cod_records: &[DatasetRecord],
    sod_records: &[DatasetRecord],
    seed: u64,
    per_source: usize,
) -> Result<SplitManifest> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = sample_source(cod_records, per_source, &mut rng, "cod")?;
    records.extend(sample_source(sod_records, per_source, &mut rng, "sod")?);
    Ok(SplitManifest::new(seed, records))
}

/// Decodes an 8-bit RGB image into `[0, 1]` and resizes it bilinearly.
pub fn load_image<F: Real>(path: &Path, id: &str, target_size: (usize, usize)) -> Result<ImageTensor<F>> {
    let rgb = io::read_rgb8(path)?;
    let (h0, w0, _) = rgb.dim();
    let scaled: Array3<F> = rgb.mapv(|v| F::from_u8(v).expect("u8 fits") / F::c(255.0));
    let data = if (h0, w0) == target_size {
        scaled
    } else {
        Resize2d::new((h0, w0), target_size, Kernel::Bilinear)
            .apply_channels(scaled.view())
            .mapv(|v| v.max(F::zero()).min(F::one()))
    };
    ImageTensor::new(data, (h0, w0), id)
}

/// Decodes a ground-truth mask, resizes with nearest neighbour and thresholds at 128/255.
pub fn load_gt<F: Real>(path: &Path, target_size: (usize, usize)) -> Result<BinaryMask<F>> {
    let gray = io::read_gray8(path)?;
    let gray = if gray.dim() == target_size {
        gray
    } else {
        let op = Resize2d::new(gray.dim(), target_size, Kernel::Nearest);
        op.apply(gray.mapv(f64::from).view()).mapv(|v| v as u8)
    };
    Ok(io::binary_from_gray(&gray, path))
}

pub fn load_and_resize<F: Real>(
    record: &DatasetRecord,
    target_size: (usize, usize),
) -> Result<(ImageTensor<F>, Option<BinaryMask<F>>)> {
    let image = load_image(&record.image_path, &record.image_id(), target_size)?;
    let gt = record
        .gt_path
        .as_deref()
        .map(|p| load_gt(p, target_size))
        .transpose()?;
    Ok((image, gt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn write_dataset(root: &Path, n_images: usize, n_gts: usize) {
        for i in 0..n_images {
            let rgb = Array3::from_elem((8, 8, 3), (i * 20) as u8);
            io::write_rgb_png(&root.join("images").join(format!("im{i}.png")), &rgb).unwrap();
        }
        for i in 0..n_gts {
            let g = Array2::from_elem((8, 8), 255u8);
            io::write_gray_png(&root.join("gt").join(format!("im{i}.png")), &g).unwrap();
        }
    }

    fn records(name: &str, n: usize) -> Vec<DatasetRecord> {
        (0..n)
            .map(|i| DatasetRecord {
                image_path: PathBuf::from(format!("/data/{name}/images/{i:03}.jpg")),
                gt_path: None,
                dataset_name: name.into(),
            })
            .collect()
    }

    #[test]
    fn scan_pairs_by_stem() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("images")).unwrap();
        assert!(scan_dataset(dir.path(), "x").unwrap().is_empty());
        write_dataset(dir.path(), 3, 2);
        let recs = scan_dataset(dir.path(), "x").unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs.iter().filter(|r| r.gt_path.is_some()).count(), 2);
        assert!(recs[2].gt_path.is_none());
        assert_eq!(recs[0].image_id(), "x__im0");
    }

    #[test]
    fn scan_rejects_missing_images_and_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        assert!(scan_dataset(dir.path(), "x").is_err());
        write_dataset(dir.path(), 1, 0);
        io::write_gray_png(&dir.path().join("gt/im0.png"), &Array2::zeros((4, 8))).unwrap();
        let err = scan_dataset(dir.path(), "x").unwrap_err();
        assert!(matches!(err, Error::GtSizeMismatch { .. }));
        assert!(err.to_string().contains("im0.png"));
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let cod = records("cod", 10);
        let sod = records("sod", 10);
        let a = build_training_split(&cod, &sod, 1, 5).unwrap();
        assert_eq!(a, build_training_split(&cod, &sod, 1, 5).unwrap());
        assert_ne!(a, build_training_split(&cod, &sod, 2, 5).unwrap());
        assert_eq!(a.source_counts().get("cod"), Some(&5));
        assert_eq!(a.len(), 10);
    }

    #[test]
    fn full_source_is_a_permutation() {
        let cod = records("cod", 6);
        let sod = records("sod", 4);
        let m = build_training_split(&cod, &sod, 7, 4).unwrap();
        let mut sod_part: Vec<_> = m.records()[4..].to_vec();
        sod_part.sort_by(|a, b| a.image_path.cmp(&b.image_path));
        assert_eq!(sod_part, sod);
    }

    #[test]
    fn insufficient_source_reports_counts() {
        let err = build_training_split(&records("cod", 3), &records("sod", 10), 0, 5).unwrap_err();
        assert!(matches!(err, Error::InsufficientSource { available: 3, requested: 5, .. }));
    }

    #[test]
    fn manifest_text_round_trip() {
        let mut recs = records("cod", 2);
        recs[1].gt_path = Some(PathBuf::from("/data/cod/gt/001.png"));
        let m = SplitManifest::new(42, recs);
        let text = m.to_text().unwrap();
        assert!(text.starts_with("seed=42\ncod\t/data/cod/images/000.jpg\t\n"));
        assert_eq!(SplitManifest::parse(&text).unwrap(), m);
        assert!(SplitManifest::parse("seed=x\n").is_err());
        assert!(SplitManifest::parse("seed=1\nonly\tone\n").is_err());
    }

    #[test]
    fn gray_gt_below_threshold_is_background() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        io::write_gray_png(&p, &Array2::from_elem((6, 6), 100u8)).unwrap();
        let g: BinaryMask<f64> = load_gt(&p, (6, 6)).unwrap();
        assert_eq!(g.count_ones(), 0);
    }

    #[test]
    fn checkerboard_gt_survives_nearest_downsample() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.png");
        let cell = 8;
        let big = Array2::from_shape_fn((64, 64), |(i, j)| if (i / cell + j / cell) % 2 == 0 { 255u8 } else { 0 });
        io::write_gray_png(&p, &big).unwrap();
        let g: BinaryMask<f64> = load_gt(&p, (32, 32)).unwrap();
        // Oracle: plain subsampling at even coordinates.
        for i in 0..32 {
            for j in 0..32 {
                assert_eq!(g.get(i, j), big[[2 * i, 2 * j]] == 255);
            }
        }
    }

    #[test]
    fn identity_resize_keeps_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("i.png");
        let rgb = Array3::from_shape_fn((16, 16, 3), |(i, j, c)| (i * 16 + j + c) as u8);
        io::write_rgb_png(&p, &rgb).unwrap();
        let img: ImageTensor<f64> = load_image(&p, "i", (16, 16)).unwrap();
        assert_eq!(img.data(), &rgb.mapv(|v| v as f64 / 255.0));
        let small: ImageTensor<f64> = load_image(&p, "i", (8, 8)).unwrap();
        assert_eq!(small.size(), (8, 8));
        assert_eq!(small.original_size(), (16, 16));
    }
}
