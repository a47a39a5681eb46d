use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::render::{render_sample, Sample};
use super::scene::{Attribute, AttributeFlags, SceneSpec};
use crate::error::{Error, Result};
use crate::imageio;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DatasetConfig {
    pub num_identities: u64,
    pub samples_per_identity: u64,
    pub size: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
}

fn default_test_fraction() -> f64 {
    0.1
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_identities < 2 {
            return Err(Error::Config("numIdentities must be at least 2".into()));
        }
        if self.samples_per_identity < 1 {
            return Err(Error::Config("samplesPerIdentity must be at least 1".into()));
        }
        if self.size != 32 && self.size != 64 {
            return Err(Error::Config(format!("size must be 32 or 64, got {}", self.size)));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::Config(format!(
                "testFraction must lie in [0, 1), got {}",
                self.test_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One line of `manifest.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ManifestRecord {
    pub image: String,
    pub mask: String,
    pub attributes: AttributeFlags,
    pub identity_id: u64,
    pub split: Split,
    pub background_seed: u64,
    pub render_seed: u64,
}

impl ManifestRecord {
    pub fn scene(&self) -> SceneSpec {
        SceneSpec {
            identity_id: self.identity_id,
            attributes: self.attributes,
            background_seed: self.background_seed,
            render_seed: self.render_seed,
        }
    }
}

/// Exactly `n / 2` trues, shuffled.
fn balanced_flags(n: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut flags: Vec<bool> = (0..n).map(|i| i < n / 2).collect();
    flags.shuffle(rng);
    flags
}

/// Renders the dataset into `config.out_dir` and returns that directory.
pub fn generate_dataset(config: &DatasetConfig) -> Result<PathBuf> {
    config.validate()?;
    let root = &config.out_dir;
    for dir in [root.join("images"), root.join("masks")] {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let total = (config.num_identities * config.samples_per_identity) as usize;
    let columns: Vec<Vec<bool>> = Attribute::ALL
        .iter()
        .map(|_| balanced_flags(total, &mut rng))
        .collect();
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng);
    let n_test = ((total as f64 * config.test_fraction).round() as usize).min(total - 1);
    let mut is_test = vec![false; total];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }

    let manifest_path = root.join(MANIFEST_FILE);
    let mut manifest = Vec::new();
    let mut k = 0usize;
    for identity_id in 0..config.num_identities {
        for n in 0..config.samples_per_identity {
            let mut attributes = AttributeFlags::default();
            for a in Attribute::ALL {
                attributes.set(a, columns[a.index()][k]);
            }
            let spec = SceneSpec {
                identity_id,
                attributes,
                background_seed: rng.random(),
                render_seed: rng.random(),
            };
            let sample = render_sample(&spec, config.size)?;
            let image = format!("images/{identity_id}_{n}.png");
            let mask = format!("masks/{identity_id}_{n}.png");
            imageio::save_rgb(&root.join(&image), &sample.image, config.size, config.size)?;
            imageio::save_mask(&root.join(&mask), &sample.mask, config.size)?;
            let record = ManifestRecord {
                image,
                mask,
                attributes,
                identity_id,
                split: if is_test[k] { Split::Test } else { Split::Train },
                background_seed: spec.background_seed,
                render_seed: spec.render_seed,
            };
            serde_json::to_writer(&mut manifest, &record)?;
            manifest.push(b'\n');
            k += 1;
        }
    }
    let mut file = fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    file.write_all(&manifest)
        .map_err(|e| Error::io(&manifest_path, e))?;
    Ok(root.clone())
}

/// A dataset directory opened through its manifest.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl Dataset {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let path = root.join(MANIFEST_FILE);
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ManifestRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Dataset(format!("{}:{}: {e}", path.display(), i + 1)))?;
            records.push(record);
        }
        if records.is_empty() {
            return Err(Error::Dataset(format!("{} has no records", path.display())));
        }
        Ok(Self { root, records })
    }

    pub fn records(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn load_record(&self, record: &ManifestRecord) -> Result<Sample> {
        let (image, w, h) = imageio::load_rgb(&self.root.join(&record.image))?;
        let (mask, size) = imageio::load_mask(&self.root.join(&record.mask))?;
        if w != size || h != size {
            return Err(Error::Dataset(format!(
                "image {} is {w}x{h} but its mask is {size}x{size}",
                record.image
            )));
        }
        Ok(Sample {
            size,
            image,
            mask,
            attributes: record.attributes,
            identity_id: record.identity_id,
        })
    }

    pub fn load(&self, split: Split) -> Result<Vec<Sample>> {
        self.records(split).map(|r| self.load_record(r)).collect()
    }

    pub fn num_identities(&self) -> usize {
        self.records
            .iter()
            .map(|r| r.identity_id as usize + 1)
            .max()
            .unwrap_or(0)
    }
}

/// Uniform draws of `(with attribute, without attribute)` index pairs.
#[derive(Clone, Debug)]
pub struct PairSampler {
    attribute: Attribute,
    positives: Vec<usize>,
    negatives: Vec<usize>,
}

impl PairSampler {
    pub fn new(samples: &[Sample], attribute: Attribute) -> Result<Self> {
        let (positives, negatives): (Vec<usize>, Vec<usize>) =
            (0..samples.len()).partition(|&i| samples[i].attributes.get(attribute));
        if positives.is_empty() || negatives.is_empty() {
            return Err(Error::Dataset(format!(
                "attribute {attribute} needs both polarities ({} with, {} without)",
                positives.len(),
                negatives.len()
            )));
        }
        Ok(Self {
            attribute,
            positives,
            negatives,
        })
    }

    pub fn attribute(&self) -> Attribute {
        self.attribute
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> (usize, usize) {
        let x = self.positives[rng.random_range(0..self.positives.len())];
        let y = self.negatives[rng.random_range(0..self.negatives.len())];
        (x, y)
    }
}

/// Draws `x` with `attribute` set and `y` without it.
pub fn sample_pair<'a, R: Rng>(
    samples: &'a [Sample],
    attribute: &str,
    rng: &mut R,
) -> Result<(&'a Sample, &'a Sample)> {
    let sampler = PairSampler::new(samples, attribute.parse()?)?;
    let (x, y) = sampler.sample(rng);
    Ok((&samples[x], &samples[y]))
}
