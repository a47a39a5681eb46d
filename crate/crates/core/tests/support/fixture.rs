#![allow(dead_code)]

use std::path::{Path, PathBuf};

use candle_core::Device;
use maskedit::nets::{train_classifier, ClassifierKind, NetworkConfig, PretrainConfig};
use maskedit::synthdata::{generate_dataset, Dataset, DatasetConfig, Split};
use maskedit::trainer::TrainConfig;

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub data: PathBuf,
    pub identity: PathBuf,
}

/// Small dataset plus a briefly trained identity classifier.
pub fn fixture(identities: u64, per_identity: u64) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_dataset(&DatasetConfig {
        num_identities: identities,
        samples_per_identity: per_identity,
        size: 32,
        out_dir: dir.path().join("data"),
        seed: 3,
        test_fraction: 0.1,
    })
    .unwrap();
    let samples = Dataset::open(&data).unwrap().load(Split::Train).unwrap();
    let pretrain = PretrainConfig { epochs: 1, batch_size: 32, lr: 1e-3, seed: 0 };
    let identity = dir.path().join("id.safetensors");
    train_classifier(&samples, ClassifierKind::Identity, &NetworkConfig::default(), &pretrain, &Device::Cpu)
        .unwrap()
        .save(&identity)
        .unwrap();
    Fixture { dir, data, identity }
}

pub fn config(fx: &Fixture, checkpoints: &Path) -> TrainConfig {
    let mut c = TrainConfig::new(&fx.data, checkpoints);
    c.identity_classifier = Some(fx.identity.clone());
    c.batch_size = 8;
    c.epochs = 1;
    c.validation_samples = 8;
    c
}
