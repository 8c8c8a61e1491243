use std::path::Path;

use ucosda_core::backbone::{FeatureExtractor, PatchStatsExtractor, ViTConfig, VisionTransformer};
use ucosda_core::datasets::{load_gt, load_image, scan_dataset, SplitManifest};
use ucosda_core::error::Error;
use ucosda_core::io::{read_gray8, write_gray_png};
use ucosda_core::mask::{binarize, iou};
use ucosda_core::pseudolabel::PseudoLabelCache;
use ucosda_core::segmenter::predict;
use ucosda_core::toy::write_square_dataset;
use ucosda_core::trainer::{load_checkpoint, mean_total, train, TrainConfig, TrainOptions};

/// Toy squares with their exact masks installed as pseudo-labels.
fn setup(root: &Path, n: usize, size: usize) -> (SplitManifest, PseudoLabelCache) {
    write_square_dataset(&root.join("toy"), n, size, 7).unwrap();
    let records = scan_dataset(&root.join("toy"), "toy").unwrap();
    let labels = PseudoLabelCache::at(root.join("pl"));
    for r in &records {
        let gt = read_gray8(r.gt_path.as_ref().unwrap()).unwrap();
        write_gray_png(&labels.path_for(&r.image_id()), &gt).unwrap();
    }
    (SplitManifest::new(0, records), labels)
}

fn toy_config(size: usize, epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        image_size: (size, size),
        batch_size: 1,
        ..TrainConfig::default()
    }
}

#[test]
fn toy_training_reduces_loss_and_segments_squares() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, labels) = setup(dir.path(), 10, 128);
    let extractor = PatchStatsExtractor::new(8);
    let out = train::<f32, _>(&toy_config(128, 5), &manifest, &extractor, &labels, TrainOptions::default()).unwrap();
    let (first, last) = (mean_total(&out.log, 1), mean_total(&out.log, 5));
    assert!(last <= 0.7 * first, "{first} -> {last}");

    let mut ious = Vec::new();
    for r in manifest.records() {
        let img = load_image::<f32>(&r.image_path, "x", (128, 128)).unwrap();
        let f = FeatureExtractor::<f32>::extract(&extractor, &img).unwrap();
        let p = predict(&out.checkpoint.head, &f, (128, 128)).unwrap();
        let gt = load_gt::<f32>(r.gt_path.as_ref().unwrap(), (128, 128)).unwrap();
        ious.push(iou(&binarize(&p, 0.5).unwrap(), &gt).unwrap());
    }
    let miou = ious.iter().sum::<f64>() / ious.len() as f64;
    assert!(miou >= 0.5, "mIoU {miou}");
}

#[test]
fn identical_seeds_replay_exactly_and_resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, labels) = setup(dir.path(), 5, 64);
    let ex = PatchStatsExtractor::new(8);
    let cfg = TrainConfig {
        batch_size: 2,
        ..toy_config(64, 5)
    };
    let a = train::<f64, _>(&cfg, &manifest, &ex, &labels, TrainOptions::default()).unwrap();
    let b = train::<f64, _>(&cfg, &manifest, &ex, &labels, TrainOptions::default()).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.checkpoint.to_bytes().unwrap(), b.checkpoint.to_bytes().unwrap());
    assert_eq!(a.log.len(), 5 * 3);

    let ck_path = dir.path().join("ck.json");
    let short = TrainConfig { epochs: 3, ..cfg.clone() };
    let opts = TrainOptions {
        checkpoint_path: Some(&ck_path),
        ..TrainOptions::default()
    };
    let part = train::<f64, _>(&short, &manifest, &ex, &labels, opts).unwrap();
    assert_eq!(part.epochs_run, 3);
    let resume = load_checkpoint::<f64>(&ck_path).unwrap();
    assert_eq!(resume.epoch, 3);
    let rest = train::<f64, _>(
        &cfg,
        &manifest,
        &ex,
        &labels,
        TrainOptions {
            resume: Some(resume),
            ..TrainOptions::default()
        },
    )
    .unwrap();
    assert_eq!(rest.epochs_run, 2);
    assert!(rest.log.iter().all(|r| r.epoch > 3));
    let stitched: Vec<_> = part.log.iter().chain(&rest.log).copied().collect();
    assert_eq!(stitched, a.log);
    assert_eq!(rest.checkpoint.to_bytes().unwrap(), a.checkpoint.to_bytes().unwrap());
}

#[test]
fn config_mismatch_on_resume_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, labels) = setup(dir.path(), 2, 32);
    let ex = PatchStatsExtractor::new(8);
    let cfg = toy_config(32, 1);
    let ck = train::<f64, _>(&cfg, &manifest, &ex, &labels, TrainOptions::default()).unwrap().checkpoint;
    let other = TrainConfig {
        lr_target: 1e-3,
        epochs: 2,
        ..cfg
    };
    let err = train::<f64, _>(
        &other,
        &manifest,
        &ex,
        &labels,
        TrainOptions {
            resume: Some(ck.clone()),
            ..TrainOptions::default()
        },
    )
    .unwrap_err();
    assert!(matches!(err, Error::Checkpoint(_)), "{err}");
    let forced = train::<f64, _>(
        &other,
        &manifest,
        &ex,
        &labels,
        TrainOptions {
            resume: Some(ck),
            force: true,
            ..TrainOptions::default()
        },
    )
    .unwrap();
    assert_eq!(forced.epochs_run, 1);
}

#[test]
fn degenerate_labels_are_skipped_and_empty_sets_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, labels) = setup(dir.path(), 3, 32);
    let blank = ndarray::Array2::<u8>::zeros((32, 32));
    let first = manifest.records()[0].image_id();
    write_gray_png(&labels.path_for(&first), &blank).unwrap();
    let ex = PatchStatsExtractor::new(8);
    let out = train::<f64, _>(&toy_config(32, 1), &manifest, &ex, &labels, TrainOptions::default()).unwrap();
    assert_eq!(out.skipped, vec![first]);
    for r in manifest.records() {
        write_gray_png(&labels.path_for(&r.image_id()), &blank).unwrap();
    }
    let err = train::<f64, _>(&toy_config(32, 1), &manifest, &ex, &labels, TrainOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Training(_)));
    let empty = SplitManifest::new(0, Vec::new());
    assert!(train::<f64, _>(&toy_config(32, 1), &empty, &ex, &labels, TrainOptions::default()).is_err());
}

#[test]
fn source_model_parameters_are_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, labels) = setup(dir.path(), 2, 32);
    let config = ViTConfig {
        arch_id: "vit_tiny_test".into(),
        patch_size: 8,
        embed_dim: 12,
        depth: 2,
        num_heads: 2,
        mlp_hidden: 24,
        pos_grid: 4,
    };
    let vit = VisionTransformer::<f64>::random(config, 5).unwrap();
    let before = vit.compute_digest();
    let out = train::<f64, _>(&toy_config(32, 2), &manifest, &vit, &labels, TrainOptions::default()).unwrap();
    assert_eq!(vit.compute_digest(), before);
    assert_eq!(vit.parameter_digest(), before);
    for r in &out.log {
        assert!((r.total - (r.seg + r.adv)).abs() < 1e-9);
    }
    let groups = out.checkpoint.optimizer.groups();
    assert_eq!(groups.len(), 2);
    assert_eq!((groups[0].lr, groups[1].lr), (5e-3, 5e-4));
}
