use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io;
use crate::mask::{BinaryMask, SoftMask, DEFAULT_THRESHOLD};
use crate::metrics::basic::{mae, miou_acc};
use crate::metrics::emeasure::{curve_max_mean, e_measure_curve};
use crate::metrics::fmeasure::{f_measures, fbeta_curve, FbetaCurve};
use crate::metrics::smeasure::s_measure;
use crate::metrics::wfmeasure::weighted_fbeta;
use crate::resize::{resize, Kernel};
use crate::scalar::Real;

/// Column labels in table order.
pub const COLUMNS: [&str; 9] = ["mIoU", "Acc", "F_max", "F_mean", "F_W", "S", "E_max", "E_mean", "M"];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub dataset_name: String,
    pub n_images: usize,
    pub miou: f64,
    pub acc: f64,
    pub f_max: f64,
    pub f_mean: f64,
    pub f_weighted: f64,
    pub s_measure: f64,
    pub e_max: f64,
    pub e_mean: f64,
    pub mae: f64,
    /// Images whose ground truth is empty; excluded from the F-measure family.
    pub n_empty_gt: usize,
}

impl MetricReport {
    /// Values in [`COLUMNS`] order.
    pub fn values(&self) -> [f64; 9] {
        [
            self.miou,
            self.acc,
            self.f_max,
            self.f_mean,
            self.f_weighted,
            self.s_measure,
            self.e_max,
            self.e_mean,
            self.mae,
        ]
    }
}

/// Everything computed for a single prediction/ground-truth pair.
#[derive(Debug, Clone)]
pub struct ImageMetrics<F: Real> {
    pub mae: F,
    pub iou: F,
    pub acc: F,
    pub s_measure: F,
    /// `None` when the ground truth is empty.
    pub f_weighted: Option<F>,
    pub f_curve: Option<FbetaCurve<F>>,
    pub e_curve: Vec<F>,
}

pub fn image_metrics<F: Real>(p: &SoftMask<F>, g: &BinaryMask<F>) -> Result<ImageMetrics<F>> {
    let (iou, acc) = miou_acc(p, g, F::c(DEFAULT_THRESHOLD))?;
    let has_fg = g.count_ones() > 0;
    Ok(ImageMetrics {
        mae: mae(p, g)?,
        iou,
        acc,
        s_measure: s_measure(p, g)?,
        f_weighted: if has_fg { Some(weighted_fbeta(p, g)?) } else { None },
        f_curve: if has_fg { Some(fbeta_curve(p, g)?) } else { None },
        e_curve: e_measure_curve(p, g)?,
    })
}

fn mean<F: Real>(xs: impl Iterator<Item = F>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for x in xs {
        sum += x.to_f64_lossy();
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Dataset-level reduction. MAE, IoU, accuracy, S and F_W are per-image means;
/// the F curve averages precision/recall per threshold before combining; the
/// E curve is averaged per threshold before taking max and mean.
pub fn aggregate<F: Real>(dataset_name: &str, images: &[ImageMetrics<F>]) -> Result<MetricReport> {
    if images.is_empty() {
        return Err(Error::InvalidArgument(format!("dataset {dataset_name} has no images")));
    }
    let curves: Vec<FbetaCurve<F>> = images.iter().filter_map(|m| m.f_curve.clone()).collect();
    let n_empty_gt = images.len() - curves.len();
    if curves.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "dataset {dataset_name}: every ground truth is empty; F-measure undefined"
        )));
    }
    if n_empty_gt > 0 {
        log::warn!("{dataset_name}: {n_empty_gt} images with empty ground truth excluded from F-measures");
    }
    let (f_max, f_mean) = f_measures(&curves)?;
    let n = F::from_usize_lossy(images.len());
    let e_curve: Vec<F> = (0..images[0].e_curve.len())
        .map(|t| images.iter().map(|m| m.e_curve[t]).sum::<F>() / n)
        .collect();
    let (e_max, e_mean) = curve_max_mean(&e_curve);
    Ok(MetricReport {
        dataset_name: dataset_name.to_string(),
        n_images: images.len(),
        miou: mean(images.iter().map(|m| m.iou)),
        acc: mean(images.iter().map(|m| m.acc)),
        f_max: f_max.to_f64_lossy(),
        f_mean: f_mean.to_f64_lossy(),
        f_weighted: mean(images.iter().filter_map(|m| m.f_weighted)),
        s_measure: mean(images.iter().map(|m| m.s_measure)),
        e_max: e_max.to_f64_lossy(),
        e_mean: e_mean.to_f64_lossy(),
        mae: mean(images.iter().map(|m| m.mae)),
        n_empty_gt,
    })
}

/// Loads a prediction and brings it to the ground truth's native size (bilinear).
pub fn load_prediction<F: Real>(path: &Path, size: (usize, usize)) -> Result<SoftMask<F>> {
    let pred: SoftMask<F> = io::soft_from_gray(&io::read_gray8(path)?);
    if pred.size() == size {
        return Ok(pred);
    }
    let up = resize(pred.view(), size, Kernel::Bilinear).mapv(|v| v.max(F::zero()).min(F::one()));
    SoftMask::new(up)
}

/// Evaluates every `*.png` ground truth in `gt_dir` against the stem-matched
/// prediction PNG in `pred_dir`.
pub fn evaluate_dataset<F: Real>(pred_dir: &Path, gt_dir: &Path, dataset_name: &str) -> Result<MetricReport> {
    let gts = io::list_files(gt_dir, &["png"])?;
    let mut missing = Vec::new();
    let pairs: Vec<_> = gts
        .iter()
        .filter_map(|gt| {
            let stem = io::file_stem(gt);
            let pred = pred_dir.join(format!("{stem}.png"));
            if pred.is_file() {
                Some((pred, gt.clone()))
            } else {
                missing.push(stem);
                None
            }
        })
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingPredictions(missing.join(", ")));
    }
    let images: Vec<ImageMetrics<F>> = pairs
        .par_iter()
        .map(|(pred, gt)| {
            let g: BinaryMask<F> = io::binary_from_gray(&io::read_gray8(gt)?, gt);
            let p = load_prediction(pred, g.size())?;
            image_metrics(&p, &g)
        })
        .collect::<Result<_>>()?;
    aggregate(dataset_name, &images)
}

pub fn render_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from("dataset,n_images");
    for c in COLUMNS {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for r in reports {
        let _ = write!(out, "{},{}", r.dataset_name, r.n_images);
        for v in r.values() {
            let _ = write!(out, ",{v:.6}");
        }
        out.push('\n');
    }
    out
}

/// Aligned text table, one row per dataset, with a footer of evaluation conventions.
pub fn render_table(reports: &[MetricReport]) -> String {
    let name_w = reports
        .iter()
        .map(|r| r.dataset_name.len())
        .max()
        .unwrap_or(0)
        .max("Dataset".len());
    let mut out = format!("{:<name_w$}  {:>6}", "Dataset", "N");
    for c in COLUMNS {
        let _ = write!(out, "  {c:>6}");
    }
    out.push('\n');
    for r in reports {
        let _ = write!(out, "{:<name_w$}  {:>6}", r.dataset_name, r.n_images);
        for v in r.values() {
            let _ = write!(out, "  {v:>6.3}");
        }
        out.push('\n');
    }
    out.push_str("\nNotes: thresholds τ/255 for τ in 0..=255 (inclusive); F uses β²=0.3 with precision/recall averaged per threshold; ");
    out.push_str("E-measure normalized by W·H; mIoU/Acc binarize at 0.5; predictions resized bilinearly to ground-truth size.\n");
    let excluded: usize = reports.iter().map(|r| r.n_empty_gt).sum();
    if excluded > 0 {
        let _ = writeln!(out, "{excluded} images with empty ground truth excluded from F_max/F_mean/F_W.");
    }
    out
}
