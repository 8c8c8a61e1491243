//! JSON checkpoints: `{"body": {...}, "digest": "<sha256 of body JSON>"}`.
//! Floats are written with shortest round-trip formatting, so loading and
//! re-saving reproduces the file byte for byte.

use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fba::{Dense, FbaStack};
use crate::io::write_atomic;
use crate::optim::Adam;
use crate::scalar::Real;
use crate::segmenter::LinearHead;

const FORMAT: &str = "ucosda-checkpoint-1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<F: Real> {
    pub head: LinearHead<F>,
    pub fba: FbaStack<F>,
    pub optimizer: Adam,
    /// Number of completed epochs.
    pub epoch: usize,
    pub config_hash: String,
    pub manifest_hash: String,
    pub arch_id: String,
    pub image_size: (usize, usize),
}

#[derive(Serialize, Deserialize)]
struct HeadBody {
    weight: Vec<f64>,
    bias: f64,
}

#[derive(Serialize, Deserialize)]
struct FbaBody {
    channels: (usize, usize),
    negative_slope: f64,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Body {
    format: String,
    epoch: usize,
    config_hash: String,
    manifest_hash: String,
    arch_id: String,
    image_size: (usize, usize),
    head: HeadBody,
    fba: FbaBody,
    optimizer: Adam,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    body: Body,
    digest: String,
}

fn to_f64<F: Real>(v: impl IntoIterator<Item = F>) -> Vec<f64> {
    v.into_iter().map(Real::to_f64_lossy).collect()
}

fn body_digest(body: &Body) -> Result<String> {
    let json = serde_json::to_string(body).map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(json.as_bytes())))
}

impl<F: Real> Checkpoint<F> {
    fn body(&self) -> Body {
        Body {
            format: FORMAT.to_string(),
            epoch: self.epoch,
            config_hash: self.config_hash.clone(),
            manifest_hash: self.manifest_hash.clone(),
            arch_id: self.arch_id.clone(),
            image_size: self.image_size,
            head: HeadBody {
                weight: to_f64(self.head.weight().iter().copied()),
                bias: self.head.bias().to_f64_lossy(),
            },
            fba: FbaBody {
                channels: self.fba.channels(),
                negative_slope: self.fba.negative_slope().to_f64_lossy(),
                params: to_f64(self.fba.to_flat()),
            },
            optimizer: self.optimizer.clone(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let body = self.body();
        let digest = body_digest(&body)?;
        let mut bytes =
            serde_json::to_vec(&Envelope { body, digest }).map_err(|e| Error::Checkpoint(e.to_string()))?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let env: Envelope =
            serde_json::from_slice(bytes).map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;
        if body_digest(&env.body)? != env.digest {
            return Err(Error::Checkpoint("digest mismatch: checkpoint is corrupted".into()));
        }
        let b = env.body;
        if b.format != FORMAT {
            return Err(Error::Checkpoint(format!("unsupported checkpoint format {:?}", b.format)));
        }
        let head = LinearHead::new(Array1::from_iter(b.head.weight.iter().map(|v| F::c(*v))), F::c(b.head.bias))?;
        let (c1, c2) = b.fba.channels;
        let mut fba = FbaStack::new(
            [Dense::zeros(4, c1), Dense::zeros(c1, c2), Dense::zeros(c2, 1)],
            F::c(b.fba.negative_slope),
        )?;
        let params: Vec<F> = b.fba.params.iter().map(|v| F::c(*v)).collect();
        fba.set_flat(&params)?;
        let expected = [head.dim() + 1, fba.n_params()];
        let groups = b.optimizer.groups();
        if groups.len() != 2 || groups.iter().zip(expected).any(|(g, n)| g.m.len() != n || g.v.len() != n) {
            return Err(Error::Checkpoint("optimizer state does not match model shapes".into()));
        }
        Ok(Self {
            head,
            fba,
            optimizer: b.optimizer,
            epoch: b.epoch,
            config_hash: b.config_hash,
            manifest_hash: b.manifest_hash,
            arch_id: b.arch_id,
            image_size: b.image_size,
        })
    }

    /// Errors unless the head matches a backbone with `feature_dim` outputs.
    pub fn check_feature_dim(&self, feature_dim: usize) -> Result<()> {
        if self.head.dim() != feature_dim {
            return Err(Error::shape(
                format!("feature dim {feature_dim} from the backbone"),
                format!("head of dim {} in checkpoint", self.head.dim()),
            ));
        }
        Ok(())
    }
}

pub fn save_checkpoint<F: Real>(checkpoint: &Checkpoint<F>, path: &Path) -> Result<()> {
    write_atomic(path, &checkpoint.to_bytes()?)
}

pub fn load_checkpoint<F: Real>(path: &Path) -> Result<Checkpoint<F>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample<F: Real>() -> Checkpoint<F> {
        let head = LinearHead::init(7, 3).unwrap();
        let fba = FbaStack::init(16, 8, 4).unwrap();
        let mut optimizer = Adam::new(&[("target", 5e-3, 8), ("fba", 5e-4, fba.n_params())]).unwrap();
        let mut p = head.to_flat();
        optimizer.step(0, &mut p, &[F::c(0.3); 8]).unwrap();
        Checkpoint {
            head,
            fba,
            optimizer,
            epoch: 2,
            config_hash: "c".into(),
            manifest_hash: "m".into(),
            arch_id: "patch_stats_8".into(),
            image_size: (64, 64),
        }
    }

    #[test]
    fn save_load_save_is_a_fixpoint() {
        let dir = tempfile::tempdir().unwrap();
        for ck in [sample::<f64>().to_bytes().unwrap(), sample::<f32>().to_bytes().unwrap()] {
            let a = dir.path().join("a.json");
            std::fs::write(&a, &ck).unwrap();
            let loaded: Checkpoint<f64> = load_checkpoint(&a).unwrap();
            let b = dir.path().join("b.json");
            save_checkpoint(&loaded, &b).unwrap();
            assert_eq!(std::fs::read(&b).unwrap(), ck);
        }
        let c32 = sample::<f32>();
        assert_eq!(Checkpoint::<f32>::from_bytes(&c32.to_bytes().unwrap()).unwrap(), c32);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = String::from_utf8(sample::<f64>().to_bytes().unwrap()).unwrap();
        let tampered = bytes.replacen("\"epoch\":2", "\"epoch\":3", 1);
        assert_ne!(tampered, bytes);
        let err = Checkpoint::<f64>::from_bytes(tampered.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("digest"));
        assert!(Checkpoint::<f64>::from_bytes(b"{not json").is_err());
    }

    #[test]
    fn feature_dim_mismatch_is_reported() {
        let ck = sample::<f64>();
        assert!(ck.check_feature_dim(7).is_ok());
        assert!(matches!(ck.check_feature_dim(384), Err(Error::ShapeMismatch { .. })));
    }
}
