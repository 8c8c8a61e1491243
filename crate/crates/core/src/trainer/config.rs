use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::datasets::DEFAULT_IMAGE_SIZE;
use crate::error::{Error, Result};
use crate::fba::DEFAULT_CHANNELS;
use crate::optim::ADAM_ID;

pub const DEFAULT_EPOCHS: usize = 5;
pub const DEFAULT_LR_TARGET: f64 = 5e-3;
pub const DEFAULT_LR_FBA: f64 = 5e-4;
pub const DEFAULT_BATCH_SIZE: usize = 8;

/// Training hyper-parameters; serialized as flat `key=value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// (rows, cols) every image and pseudo-label is resized to.
    pub image_size: (usize, usize),
    pub lr_target: f64,
    pub lr_fba: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer_id: String,
    pub fba_channels: (usize, usize),
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: DEFAULT_EPOCHS,
            image_size: DEFAULT_IMAGE_SIZE,
            lr_target: DEFAULT_LR_TARGET,
            lr_fba: DEFAULT_LR_FBA,
            batch_size: DEFAULT_BATCH_SIZE,
            seed: 0,
            optimizer_id: ADAM_ID.to_string(),
            fba_channels: DEFAULT_CHANNELS,
        }
    }
}

fn parse_pair(value: &str, sep: char, key: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidArgument(format!("{key}: expected two integers separated by '{sep}', got {value:?}"));
    let (a, b) = value.split_once(sep).ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn parse_num<T: std::str::FromStr>(value: &str, key: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("{key}: cannot parse {value:?}")))
}

/// Parses `C1,C2` channel widths.
pub fn parse_channels(value: &str) -> Result<(usize, usize)> {
    parse_pair(value, ',', "fba_channels")
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return fail(format!("image_size {:?} must be positive", self.image_size));
        }
        for (name, lr) in [("lr_target", self.lr_target), ("lr_fba", self.lr_fba)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return fail(format!("{name} must be a positive finite number, got {lr}"));
            }
        }
        if self.optimizer_id != ADAM_ID {
            return fail(format!("unsupported optimizer_id {:?} (only {ADAM_ID:?})", self.optimizer_id));
        }
        if self.fba_channels.0 == 0 || self.fba_channels.1 == 0 {
            return fail(format!("fba_channels {:?} must be positive", self.fba_channels));
        }
        Ok(())
    }

    /// Parses `key=value` lines over the defaults. Blank lines and `#`
    /// comments are ignored; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("config line {}: expected key=value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "epochs" => cfg.epochs = parse_num(value, key)?,
                "image_size" => cfg.image_size = parse_pair(value, 'x', key)?,
                "lr_target" => cfg.lr_target = parse_num(value, key)?,
                "lr_fba" => cfg.lr_fba = parse_num(value, key)?,
                "batch_size" => cfg.batch_size = parse_num(value, key)?,
                "seed" => cfg.seed = parse_num(value, key)?,
                "optimizer_id" => cfg.optimizer_id = value.to_string(),
                "fba_channels" => cfg.fba_channels = parse_channels(value)?,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "config line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "epochs={}", self.epochs);
        let _ = writeln!(s, "image_size={}x{}", self.image_size.0, self.image_size.1);
        let _ = writeln!(s, "lr_target={:?}", self.lr_target);
        let _ = writeln!(s, "lr_fba={:?}", self.lr_fba);
        let _ = writeln!(s, "batch_size={}", self.batch_size);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "optimizer_id={}", self.optimizer_id);
        let _ = writeln!(s, "fba_channels={},{}", self.fba_channels.0, self.fba_channels.1);
        s
    }

    /// Hash of every field except `epochs`, so a finished run can be
    /// resumed with a larger epoch budget.
    pub fn hash(&self) -> String {
        let text = Self { epochs: 1, ..self.clone() }.to_text();
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
