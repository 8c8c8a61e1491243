//! Benchmark metrics: MAE, mIoU/accuracy, thresholded and weighted F-measure,
//! S-measure and E-measure, plus dataset-level aggregation.

mod basic;
pub mod edt;
mod emeasure;
mod fmeasure;
mod report;
mod smeasure;
mod wfmeasure;

pub use basic::{mae, miou_acc, N_THRESHOLDS};
pub use emeasure::{e_measure, e_measure_curve};
pub use fmeasure::{f_measures, fbeta_curve, mean_f_curve, FbetaCurve, BETA_SQ};
pub use report::{
    aggregate, evaluate_dataset, image_metrics, load_prediction, render_csv, render_table, ImageMetrics,
    MetricReport, COLUMNS,
};
pub use smeasure::{s_measure, ALPHA};
pub use wfmeasure::{gaussian_kernel, weighted_fbeta};
