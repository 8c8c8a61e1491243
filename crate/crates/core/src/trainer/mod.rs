//! Epoch loop over pseudo-labelled images: the linear head and the FBA stack
//! are updated jointly on `structure loss + adversarial BCE`.

mod checkpoint;
mod config;

use std::fmt::Write as _;
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{
    parse_channels, TrainConfig, DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS, DEFAULT_LR_FBA, DEFAULT_LR_TARGET,
};

use crate::backbone::{extract_with, FeatureCache, FeatureExtractor, PatchFeatureGrid};
use crate::datasets::{load_image, DatasetRecord, SplitManifest};
use crate::error::{Error, Result};
use crate::fba::{make_adversarial_pairs, FbaStack};
use crate::io::write_atomic;
use crate::losses::{adversarial_loss, structure_loss, LossValue};
use crate::mask::{BinaryMask, ImageTensor};
use crate::optim::Adam;
use crate::pseudolabel::{is_degenerate, PseudoLabelCache};
use crate::resize::{Kernel, Resize2d};
use crate::scalar::Real;
use crate::segmenter::LinearHead;

pub const TARGET_GROUP: &str = "target";
pub const FBA_GROUP: &str = "fba";

/// One training example: an image and its pseudo-label at the training size.
#[derive(Debug, Clone)]
pub struct SamplePair<F: Real> {
    pub image: ImageTensor<F>,
    pub pseudo_label: BinaryMask<F>,
}

/// Batch-mean losses of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    /// 1-based epoch.
    pub epoch: usize,
    /// 1-based step counted across all epochs.
    pub step: usize,
    pub seg: f64,
    pub adv: f64,
    pub total: f64,
}

pub const LOSS_CSV_HEADER: &str = "epoch,step,seg,adv,total";

pub fn render_loss_csv(records: &[LossRecord], header: bool) -> String {
    let mut out = String::new();
    if header {
        out.push_str(LOSS_CSV_HEADER);
        out.push('\n');
    }
    for r in records {
        let _ = writeln!(out, "{},{},{},{},{}", r.epoch, r.step, r.seg, r.adv, r.total);
    }
    out
}

pub fn parse_loss_csv(text: &str) -> Result<Vec<LossRecord>> {
    let bad = |line: usize| Error::InvalidArgument(format!("loss log line {line} is malformed"));
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with("epoch"))
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad(i + 1));
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|_| bad(i + 1));
            Ok(LossRecord {
                epoch: f[0].parse().map_err(|_| bad(i + 1))?,
                step: f[1].parse().map_err(|_| bad(i + 1))?,
                seg: num(2)?,
                adv: num(3)?,
                total: num(4)?,
            })
        })
        .collect()
}

/// Losses and flattened parameter gradients for one sample.
#[derive(Debug, Clone)]
pub struct SampleStep<F: Real> {
    pub loss: LossValue<F>,
    pub head_grad: Vec<F>,
    pub fba_grad: Vec<F>,
}

/// Forward and backward pass for one sample. The adversarial gradient reaches
/// the head through the binarized mask by treating binarization as identity,
/// so `∂L/∂P = ∂L/∂P' − ∂L/∂(1 − P')`.
pub fn sample_step<F: Real>(
    head: &LinearHead<F>,
    fba: &FbaStack<F>,
    features: &PatchFeatureGrid<F>,
    sample: &SamplePair<F>,
) -> Result<SampleStep<F>> {
    let size = sample.image.size();
    if sample.pseudo_label.size() != size {
        return Err(Error::shape(format!("{size:?}"), format!("{:?}", sample.pseudo_label.size())));
    }
    let fwd = head.forward(features, size)?;
    let seg = structure_loss(&fwd.prob, &sample.pseudo_label)?;
    let mut grad_p = seg.grad;
    let mut fba_grad: Option<Vec<F>> = None;
    let mut adv_value = F::zero();
    let half = F::c(0.5);
    for pair in make_adversarial_pairs(&sample.image, &fwd.prob)? {
        let f = fba.forward(pair.image, &pair.mask)?;
        let adv = adversarial_loss(&[&f.score], &[pair.label])?;
        adv_value += adv.value * half;
        let g_score = &adv.grad[0] * half;
        let (g, g_mask) = fba.backward(&f, &g_score)?;
        if pair.label == 1 {
            grad_p += &g_mask;
        } else {
            grad_p -= &g_mask;
        }
        let flat = g.to_flat();
        fba_grad = Some(match fba_grad {
            None => flat,
            Some(acc) => acc.iter().zip(&flat).map(|(a, b)| *a + *b).collect(),
        });
    }
    let head_grad = head.backward(features, &fwd, &grad_p)?.to_flat();
    Ok(SampleStep {
        loss: LossValue::new(seg.value, adv_value),
        head_grad,
        fba_grad: fba_grad.expect("two adversarial pairs"),
    })
}

#[derive(Default)]
pub struct TrainOptions<'a, F: Real> {
    pub feature_cache: Option<&'a FeatureCache>,
    /// Continue from this checkpoint instead of a fresh initialization.
    pub resume: Option<Checkpoint<F>>,
    /// Accept a resume checkpoint whose config or manifest hash differs.
    pub force: bool,
    /// Where to write the checkpoint after every epoch.
    pub checkpoint_path: Option<&'a Path>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F: Real> {
    pub checkpoint: Checkpoint<F>,
    /// Records of the steps run in this call only.
    pub log: Vec<LossRecord>,
    pub epochs_run: usize,
    /// Image ids left out because their pseudo-label is degenerate.
    pub skipped: Vec<String>,
}

fn load_label<F: Real>(labels: &PseudoLabelCache, id: &str, size: (usize, usize)) -> Result<BinaryMask<F>> {
    let label: BinaryMask<F> = labels.load(id)?;
    if label.size() == size {
        return Ok(label);
    }
    let resized = Resize2d::new(label.size(), size, Kernel::Nearest).apply(label.view());
    BinaryMask::new(resized)
}

fn load_sample<F: Real>(record: &DatasetRecord, labels: &PseudoLabelCache, size: (usize, usize)) -> Result<SamplePair<F>> {
    let id = record.image_id();
    Ok(SamplePair {
        image: load_image(&record.image_path, &id, size)?,
        pseudo_label: load_label(labels, &id, size)?,
    })
}

fn fresh_checkpoint<F: Real>(
    config: &TrainConfig,
    manifest_hash: String,
    arch_id: &str,
    feature_dim: usize,
) -> Result<Checkpoint<F>> {
    let head = LinearHead::init(feature_dim, config.seed)?;
    let fba = FbaStack::init(config.fba_channels.0, config.fba_channels.1, config.seed.wrapping_add(1))?;
    let optimizer = Adam::new(&[
        (TARGET_GROUP, config.lr_target, feature_dim + 1),
        (FBA_GROUP, config.lr_fba, fba.n_params()),
    ])?;
    Ok(Checkpoint {
        head,
        fba,
        optimizer,
        epoch: 0,
        config_hash: config.hash(),
        manifest_hash,
        arch_id: arch_id.to_string(),
        image_size: config.image_size,
    })
}

fn check_resume<F: Real>(ck: &Checkpoint<F>, config: &TrainConfig, manifest_hash: &str, force: bool) -> Result<()> {
    if ck.config_hash != config.hash() || ck.manifest_hash != manifest_hash {
        let what = if ck.config_hash != config.hash() { "config" } else { "split manifest" };
        if !force {
            return Err(Error::Checkpoint(format!(
                "{what} differs from the one the checkpoint was trained with; pass --force to resume anyway"
            )));
        }
        warn!("resuming despite {what} mismatch (forced)");
    }
    if ck.fba.channels() != config.fba_channels {
        return Err(Error::Checkpoint(format!(
            "checkpoint FBA channels {:?} differ from configured {:?}",
            ck.fba.channels(),
            config.fba_channels
        )));
    }
    Ok(())
}

/// Runs the remaining epochs (all of them unless resuming) and returns the
/// final checkpoint together with the per-step loss log.
pub fn train<F: Real, E: FeatureExtractor<F> + ?Sized>(
    config: &TrainConfig,
    manifest: &SplitManifest,
    extractor: &E,
    labels: &PseudoLabelCache,
    options: TrainOptions<'_, F>,
) -> Result<TrainOutcome<F>> {
    config.validate()?;
    let size = config.image_size;
    let mut usable = Vec::new();
    let mut skipped = Vec::new();
    for record in manifest.records() {
        let id = record.image_id();
        if !labels.contains(&id) {
            return Err(Error::Training(format!(
                "no pseudo-label for {id} in {}; run pseudo-labelling first",
                labels.dir().display()
            )));
        }
        if is_degenerate(&load_label::<F>(labels, &id, size)?) {
            warn!("skipping {id}: degenerate pseudo-label");
            skipped.push(id);
        } else {
            usable.push(record);
        }
    }
    if usable.is_empty() {
        return Err(Error::Training("no usable training images (empty split or all pseudo-labels degenerate)".into()));
    }

    let manifest_hash = manifest.digest()?;
    let mut ck = match options.resume {
        Some(ck) => {
            check_resume(&ck, config, &manifest_hash, options.force)?;
            ck
        }
        None => fresh_checkpoint(config, manifest_hash, extractor.arch_id(), extractor.feature_dim())?,
    };
    if ck.arch_id != extractor.arch_id() {
        return Err(Error::Checkpoint(format!(
            "checkpoint was trained on {} features, backbone is {}",
            ck.arch_id,
            extractor.arch_id()
        )));
    }
    ck.check_feature_dim(extractor.feature_dim())?;
    ck.config_hash = config.hash();
    ck.manifest_hash = manifest.digest()?;

    let batches_per_epoch = usable.len().div_ceil(config.batch_size);
    let start = ck.epoch;
    let mut log = Vec::new();
    for epoch in start..config.epochs {
        let mut order: Vec<usize> = (0..usable.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let (head, fba) = (&ck.head, &ck.fba);
            let steps: Vec<SampleStep<F>> = batch
                .par_iter()
                .map(|&i| {
                    let sample = load_sample::<F>(usable[i], labels, size)?;
                    let features = extract_with(extractor, options.feature_cache, &sample.image)?;
                    sample_step(head, fba, &features, &sample)
                })
                .collect::<Result<_>>()?;
            let n = F::from_usize_lossy(steps.len());
            let mut head_grad = vec![F::zero(); ck.head.dim() + 1];
            let mut fba_grad = vec![F::zero(); ck.fba.n_params()];
            let (mut seg, mut adv) = (0.0, 0.0);
            for s in &steps {
                seg += s.loss.seg_term.to_f64_lossy();
                adv += s.loss.adv_term.to_f64_lossy();
                head_grad.iter_mut().zip(&s.head_grad).for_each(|(a, g)| *a += *g / n);
                fba_grad.iter_mut().zip(&s.fba_grad).for_each(|(a, g)| *a += *g / n);
            }
            let n = steps.len() as f64;
            let (seg, adv) = (seg / n, adv / n);
            let total = seg + adv;
            let grads_finite = head_grad.iter().chain(&fba_grad).all(|g| g.is_finite());
            if !total.is_finite() || !grads_finite {
                return Err(Error::Training(format!(
                    "non-finite loss or gradient at epoch {} batch {}",
                    epoch + 1,
                    b + 1
                )));
            }
            let mut params = ck.head.to_flat();
            ck.optimizer.step(0, &mut params, &head_grad)?;
            ck.head.set_flat(&params)?;
            let mut params = ck.fba.to_flat();
            ck.optimizer.step(1, &mut params, &fba_grad)?;
            ck.fba.set_flat(&params)?;
            log.push(LossRecord {
                epoch: epoch + 1,
                step: epoch * batches_per_epoch + b + 1,
                seg,
                adv,
                total,
            });
        }
        ck.epoch = epoch + 1;
        let epoch_mean = mean_total(&log, epoch + 1);
        info!("epoch {}/{}: mean loss {epoch_mean:.5}", epoch + 1, config.epochs);
        if let Some(path) = options.checkpoint_path {
            save_checkpoint(&ck, path)?;
        }
    }
    Ok(TrainOutcome {
        epochs_run: config.epochs.saturating_sub(start),
        checkpoint: ck,
        log,
        skipped,
    })
}

/// Mean `total` over the records of one epoch (NaN when there are none).
pub fn mean_total(log: &[LossRecord], epoch: usize) -> f64 {
    let v: Vec<f64> = log.iter().filter(|r| r.epoch == epoch).map(|r| r.total).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Writes the loss log, appending to an existing file when `append` is set.
pub fn write_loss_csv(path: &Path, records: &[LossRecord], append: bool) -> Result<()> {
    let mut text = if append && path.is_file() {
        std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?
    } else {
        String::new()
    };
    text.push_str(&render_loss_csv(records, text.is_empty()));
    write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::PatchStatsExtractor;
    use crate::mask::SoftMask;
    use ndarray::Array3;

    fn toy_sample() -> (SamplePair<f64>, PatchFeatureGrid<f64>) {
        let image = ImageTensor::new(
            Array3::from_shape_fn((16, 16, 3), |(i, j, c)| if (4..12).contains(&i) && (4..12).contains(&j) { 0.9 } else { ((i * 7 + j * 3 + c) % 5) as f64 / 10.0 }),
            (16, 16),
            "toy",
        )
        .unwrap();
        let bits: Vec<bool> = (0..256).map(|k| (4..12).contains(&(k / 16)) && (4..12).contains(&(k % 16))).collect();
        let label = BinaryMask::from_bools((16, 16), &bits).unwrap();
        let features = FeatureExtractor::<f64>::extract(&PatchStatsExtractor::new(4), &image).unwrap();
        (SamplePair { image, pseudo_label: label }, features)
    }

    fn seg_only(head: &LinearHead<f64>, f: &PatchFeatureGrid<f64>, s: &SamplePair<f64>) -> f64 {
        let p = head.forward(f, (16, 16)).unwrap().prob;
        structure_loss(&p, &s.pseudo_label).unwrap().value
    }

    #[test]
    fn sample_step_head_gradient_matches_segmentation_only_path() {
        let (s, f) = toy_sample();
        let head = LinearHead::<f64>::init(f.dim(), 1).unwrap();
        let mut fba = FbaStack::<f64>::init(4, 2, 2).unwrap();
        // With the last FBA layer zeroed the adversarial term has no gradient
        // w.r.t. the mask, so the head gradient is the structure-loss gradient.
        fba.layers_mut()[2] = crate::fba::Dense::zeros(2, 1);
        let step = sample_step(&head, &fba, &f, &s).unwrap();
        assert!((step.loss.adv_term - std::f64::consts::LN_2).abs() < 1e-12);
        let eps = 1e-6;
        let base = head.to_flat();
        for k in 0..base.len() {
            let mut plus = head.clone();
            let mut minus = head.clone();
            let mut v = base.clone();
            v[k] += eps;
            plus.set_flat(&v).unwrap();
            v[k] -= 2.0 * eps;
            minus.set_flat(&v).unwrap();
            let num = (seg_only(&plus, &f, &s) - seg_only(&minus, &f, &s)) / (2.0 * eps);
            let rel = (num - step.head_grad[k]).abs() / num.abs().max(1e-8);
            assert!(rel < 1e-4, "param {k}: {num} vs {}", step.head_grad[k]);
        }
    }

    #[test]
    fn loss_csv_round_trip() {
        let recs = vec![
            LossRecord { epoch: 1, step: 1, seg: 0.1, adv: 0.2, total: 0.1 + 0.2 },
            LossRecord { epoch: 1, step: 2, seg: 1.0 / 3.0, adv: 0.7, total: 1.0 / 3.0 + 0.7 },
        ];
        let text = render_loss_csv(&recs, true);
        assert!(text.starts_with(LOSS_CSV_HEADER));
        assert_eq!(parse_loss_csv(&text).unwrap(), recs);
    }

    #[test]
    fn adversarial_gradient_enters_with_opposite_signs_for_the_two_pairs() {
        let (s, f) = toy_sample();
        let head = LinearHead::<f64>::init(f.dim(), 5).unwrap();
        let fba = FbaStack::<f64>::init(4, 3, 6).unwrap();
        let fwd = head.forward(&f, (16, 16)).unwrap();
        let [fg, bg] = make_adversarial_pairs(&s.image, &fwd.prob).unwrap();
        let mask_grad = |mask: &SoftMask<f64>, label: u8| {
            let out = fba.forward(&s.image, mask).unwrap();
            let adv = adversarial_loss(&[&out.score], &[label]).unwrap();
            fba.backward(&out, &(&adv.grad[0] * 0.5)).unwrap().1
        };
        let expected_grad_p = mask_grad(&fg.mask, 1) - mask_grad(&bg.mask, 0);
        let seg = structure_loss(&fwd.prob, &s.pseudo_label).unwrap();
        let expected = head.backward(&f, &fwd, &(&seg.grad + &expected_grad_p)).unwrap().to_flat();
        let step = sample_step(&head, &fba, &f, &s).unwrap();
        for (a, b) in step.head_grad.iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        assert!(expected_grad_p.iter().any(|g| g.abs() > 1e-9));
    }
}
