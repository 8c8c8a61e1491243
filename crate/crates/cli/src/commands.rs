use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use rayon::prelude::*;
use ucosda_core::backbone::{
    extract_with, load_source_model, FeatureCache, FeatureExtractor, PatchStatsExtractor, ViTConfig,
};
use ucosda_core::datasets::{build_training_split, load_image, scan_dataset, SplitManifest, IMAGE_EXTENSIONS};
use ucosda_core::io::{file_stem, gray_from_soft, list_files, write_gray_png};
use ucosda_core::mask::SoftMask;
use ucosda_core::metrics::{evaluate_dataset, render_csv, render_table};
use ucosda_core::pseudolabel::{generate_and_cache, PseudoLabelCache, PseudoLabelParams, DEFAULT_EPS};
use ucosda_core::resize::{resize, Kernel};
use ucosda_core::segmenter::predict;
use ucosda_core::trainer::{
    load_checkpoint, parse_channels, save_checkpoint, train, write_loss_csv, TrainConfig, TrainOptions,
};

use crate::args::{BackboneArgs, EvalArgs, LabelArgs, PredictArgs, PseudoLabelArgs, SplitArgs, TrainArgs};

/// The CLI runs everything in single precision.
type S = f32;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const LOSS_FILE: &str = "loss.csv";
pub const CONFIG_FILE: &str = "config.txt";

/// Bad input from the user; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

fn require_dir(path: &Path, what: &str) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} is not a directory", path.display())))
    }
}

fn dataset_name(root: &Path) -> String {
    root.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| root.display().to_string())
}

fn scan_all(roots: &[PathBuf]) -> Result<Vec<ucosda_core::datasets::DatasetRecord>> {
    let mut out = Vec::new();
    for root in roots {
        require_dir(root, "dataset root")?;
        out.extend(scan_dataset(root, &dataset_name(root))?);
    }
    Ok(out)
}

pub fn run_split(args: &SplitArgs) -> Result<()> {
    let cod = scan_all(&args.cod)?;
    let sod = scan_all(&args.sod)?;
    let manifest = build_training_split(&cod, &sod, args.seed, args.per_source)?;
    manifest.save(&args.out)?;
    info!("wrote {} records to {}", manifest.len(), args.out.display());
    for (name, n) in manifest.source_counts() {
        info!("  {name}: {n}");
    }
    Ok(())
}

/// Builds the frozen feature extractor named by `--arch`.
pub fn build_backbone(args: &BackboneArgs) -> Result<Box<dyn FeatureExtractor<S>>> {
    if let Some(patch) = args.arch.strip_prefix("patch_stats_") {
        let patch: usize = patch
            .parse()
            .map_err(|_| usage(format!("bad patch size in --arch {}", args.arch)))?;
        if patch == 0 || !patch.is_multiple_of(4) {
            return Err(usage(format!("--arch {}: patch size must be a positive multiple of 4", args.arch)));
        }
        return Ok(Box::new(PatchStatsExtractor::new(patch)));
    }
    let config = ViTConfig::from_arch_id(&args.arch)?;
    let weights = args
        .backbone_weights
        .as_deref()
        .ok_or_else(|| usage(format!("--arch {} needs --backbone-weights", args.arch)))?;
    require_file(weights, "backbone weights")?;
    Ok(Box::new(load_source_model::<S>(weights, &config)?))
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        Some(p) => {
            require_file(p, "config")?;
            Ok(TrainConfig::load(p)?)
        }
        None => Ok(TrainConfig::default()),
    }
}

fn load_manifest(path: &Path) -> Result<SplitManifest> {
    require_file(path, "split manifest")?;
    Ok(SplitManifest::load(path)?)
}

fn label_params(args: &LabelArgs, image_size: (usize, usize)) -> Result<PseudoLabelParams> {
    if args.ncut_iters == 0 {
        return Err(usage("--ncut-iters must be at least 1"));
    }
    Ok(PseudoLabelParams {
        tau: args.tau,
        eps: DEFAULT_EPS,
        iterations: args.ncut_iters,
        image_size,
    })
}

pub fn run_pseudo_label(args: &PseudoLabelArgs) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    let manifest = load_manifest(&args.split)?;
    let backbone = build_backbone(&args.backbone)?;
    let params = label_params(&args.labels, config.image_size)?;
    let cache = args.backbone.feature_cache.as_ref().map(FeatureCache::new);
    let outcome = generate_and_cache(&manifest, backbone.as_ref(), cache.as_ref(), &params, &args.labels.pl_cache)?;
    let dir = PseudoLabelCache::new(&args.labels.pl_cache, &params, backbone.arch_id(), &backbone.parameter_digest());
    println!("{}", dir.dir().display());
    info!(
        "{} generated, {} reused, {} degenerate",
        outcome.generated,
        outcome.reused,
        outcome.degenerate.len()
    );
    Ok(())
}

pub fn run_train(args: &TrainArgs) -> Result<()> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(ch) = &args.fba_channels {
        config.fba_channels = parse_channels(ch)?;
    }
    config.validate()?;
    let manifest = load_manifest(&args.split)?;
    let backbone = build_backbone(&args.backbone)?;
    let params = label_params(&args.labels, config.image_size)?;
    let labels = PseudoLabelCache::new(&args.labels.pl_cache, &params, backbone.arch_id(), &backbone.parameter_digest());
    require_dir(labels.dir(), "pseudo-label cache (run `pseudo-label` with the same flags first)")?;

    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let ck_path = args.out.join(CHECKPOINT_FILE);
    let resume = if args.resume {
        require_file(&ck_path, "checkpoint to resume from")?;
        Some(load_checkpoint::<S>(&ck_path)?)
    } else {
        None
    };
    let feature_cache = args.backbone.feature_cache.as_ref().map(FeatureCache::new);
    let outcome = train(
        &config,
        &manifest,
        backbone.as_ref(),
        &labels,
        TrainOptions {
            feature_cache: feature_cache.as_ref(),
            resume,
            force: args.force,
            checkpoint_path: Some(&ck_path),
        },
    )?;
    // Also covers a resume that had no epochs left to run.
    save_checkpoint(&outcome.checkpoint, &ck_path)?;
    write_loss_csv(&args.out.join(LOSS_FILE), &outcome.log, args.resume)?;
    std::fs::write(args.out.join(CONFIG_FILE), config.to_text())
        .with_context(|| format!("writing config to {}", args.out.display()))?;
    info!(
        "ran {} epoch(s), now at epoch {}; {} image(s) skipped; outputs in {}",
        outcome.epochs_run,
        outcome.checkpoint.epoch,
        outcome.skipped.len(),
        args.out.display()
    );
    Ok(())
}

pub fn run_predict(args: &PredictArgs) -> Result<()> {
    require_file(&args.checkpoint, "checkpoint")?;
    require_dir(&args.images, "image directory")?;
    let ck = load_checkpoint::<S>(&args.checkpoint)?;
    let backbone = build_backbone(&args.backbone)?;
    if ck.arch_id != backbone.arch_id() {
        return Err(usage(format!(
            "checkpoint was trained on {} features but --arch is {}",
            ck.arch_id,
            backbone.arch_id()
        )));
    }
    ck.check_feature_dim(backbone.feature_dim())?;
    let feature_cache = args.backbone.feature_cache.as_ref().map(FeatureCache::new);
    let images = list_files(&args.images, &IMAGE_EXTENSIONS)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    images.par_iter().try_for_each(|path| -> Result<()> {
        let stem = file_stem(path);
        let image = load_image::<S>(path, &stem, ck.image_size)?;
        let features = extract_with(backbone.as_ref(), feature_cache.as_ref(), &image)?;
        let p = predict(&ck.head, &features, ck.image_size)?;
        let native = image.original_size();
        let p = if p.size() == native {
            p
        } else {
            SoftMask::new(resize(p.view(), native, Kernel::Bilinear).mapv(|v| v.clamp(0.0, 1.0)))?
        };
        write_gray_png(&args.out.join(format!("{stem}.png")), &gray_from_soft(&p))?;
        Ok(())
    })?;
    info!("wrote {} prediction(s) to {}", images.len(), args.out.display());
    Ok(())
}

pub fn run_eval(args: &EvalArgs) -> Result<()> {
    let jobs: Vec<(String, PathBuf, PathBuf)> = if args.datasets.is_empty() {
        vec![(dataset_name(&args.gt), args.pred.clone(), args.gt.clone())]
    } else {
        args.datasets
            .iter()
            .map(|d| (d.clone(), args.pred.join(d), args.gt.join(d)))
            .collect()
    };
    let mut reports = Vec::with_capacity(jobs.len());
    for (name, pred, gt) in &jobs {
        require_dir(pred, "prediction directory")?;
        require_dir(gt, "ground-truth directory")?;
        reports.push(evaluate_dataset::<f64>(pred, gt, name)?);
    }
    std::fs::write(&args.out, render_csv(&reports)).with_context(|| format!("writing {}", args.out.display()))?;
    print!("{}", render_table(&reports));
    Ok(())
}
