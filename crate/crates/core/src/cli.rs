//! Command-line surface.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use candle_core::{Device, IndexOp};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::eval::{self, EvalReport};
use crate::imageio;
use crate::nets::{
    image_batch, train_classifier, Classifier, ClassifierKind, ImageEditor, NetworkConfig, PretrainConfig,
};
use crate::rfcover::Architecture;
use crate::synthdata::{generate_dataset, Attribute, AttributeFlags, Dataset, DatasetConfig, Sample, Split};
use crate::trainer::{self, DeltaCalibration, DeltaMode, TrainConfig, TrainedModel};

#[derive(Parser, Debug)]
#[command(name = "maskedit", version, about = "Mask-guided latent attribute editing on synthetic faces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a synthetic face dataset with masks and a manifest.
    GenerateData(GenerateArgs),
    /// Train the identity or attribute classifier used by training and evaluation.
    Pretrain(PretrainArgs),
    /// Train the editor.
    Train(TrainArgs),
    /// Edit one image.
    Manipulate(ManipulateArgs),
    /// Write a grid of edits over a range of strengths.
    Sweep(SweepArgs),
    /// Compute evaluation metrics and write them as JSON.
    Evaluate(EvaluateArgs),
    /// Print the minimal covering pixel set of an architecture.
    RfCover(RfCoverArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub identities: u64,
    #[arg(long, default_value_t = 20)]
    pub per_identity: u64,
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum KindArg {
    Identity,
    Attributes,
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 12)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// JSON training configuration; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Checkpoint directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "attribute")]
    pub attributes: Vec<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub identity_classifier: Option<PathBuf>,
    /// Use this δ instead of calibrating it.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub max_train_samples: Option<usize>,
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ManipulateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Attribute to edit; omit for a plain reconstruction.
    #[arg(long)]
    pub attribute: Option<String>,
    /// Signed strength; defaults to the checkpoint's δ.
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// One grid row per attribute; defaults to the trained attributes.
    #[arg(long = "attribute")]
    pub attributes: Vec<String>,
    /// Explicit sorted strengths, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub deltas: Vec<f64>,
    #[arg(long, default_value_t = 7)]
    pub points: usize,
    /// Largest |δ| of the evenly spaced sweep; defaults to the checkpoint's δ.
    #[arg(long)]
    pub max_delta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub attribute_classifier: PathBuf,
    #[arg(long)]
    pub identity_classifier: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "attribute")]
    pub attributes: Vec<String>,
    #[arg(long)]
    pub max_samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct RfCoverArgs {
    #[arg(long)]
    pub arch: PathBuf,
    #[arg(long)]
    pub input_size: Option<usize>,
    /// Print the receptive field and feature size too.
    #[arg(long)]
    pub full: bool,
}

fn parse_attributes(names: &[String]) -> Result<Vec<Attribute>> {
    names.iter().map(|n| n.parse()).collect()
}

fn load_image(path: &Path, size: usize) -> Result<Sample> {
    let (image, w, h) = imageio::load_rgb(path)?;
    if w != size || h != size {
        return Err(Error::shape(format!("{size}x{size} image"), format!("{w}x{h}")));
    }
    Ok(Sample {
        size,
        image,
        mask: vec![0; size * size],
        attributes: AttributeFlags::default(),
        identity_id: 0,
    })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut config = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text)?
        }
        None => {
            let data = args
                .data
                .clone()
                .ok_or_else(|| Error::Config("--data is required without --config".into()))?;
            TrainConfig::new(data, args.out.clone().unwrap_or_else(|| "ckpt".into()))
        }
    };
    if let Some(d) = &args.data {
        config.dataset_path = d.clone();
    }
    if let Some(o) = &args.out {
        config.checkpoint_dir = o.clone();
    }
    if !args.attributes.is_empty() {
        config.attributes = parse_attributes(&args.attributes)?;
    }
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    if let Some(b) = args.batch_size {
        config.batch_size = b;
    }
    if let Some(p) = &args.identity_classifier {
        config.identity_classifier = Some(p.clone());
    }
    if let Some(d) = args.delta {
        config.delta_calibration = DeltaCalibration {
            mode: DeltaMode::Fixed,
            value: Some(d),
            ..config.delta_calibration
        };
    }
    if args.max_train_samples.is_some() {
        config.max_train_samples = args.max_train_samples;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn run_command(command: Command) -> Result<()> {
    let device = Device::Cpu;
    match command {
        Command::GenerateData(a) => {
            let root = generate_dataset(&DatasetConfig {
                num_identities: a.identities,
                samples_per_identity: a.per_identity,
                size: a.size,
                out_dir: a.out,
                seed: a.seed,
                test_fraction: a.test_fraction,
            })?;
            println!("{}", root.display());
        }
        Command::Pretrain(a) => {
            let dataset = Dataset::open(&a.data)?;
            let train = dataset.load(Split::Train)?;
            let kind = match a.kind {
                KindArg::Identity => ClassifierKind::Identity,
                KindArg::Attributes => ClassifierKind::Attributes,
            };
            let network = NetworkConfig {
                input_size: train.first().map_or(32, |s| s.size),
                ..NetworkConfig::default()
            };
            let cfg = PretrainConfig {
                epochs: a.epochs,
                batch_size: a.batch_size,
                lr: a.lr,
                seed: a.seed,
            };
            let trained = train_classifier(&train, kind, &network, &cfg, &device)?;
            trained.save(&a.out)?;
            let frozen = trained.frozen(&device)?;
            let test = dataset.load(Split::Test)?;
            if !test.is_empty() {
                match kind {
                    ClassifierKind::Identity => {
                        log::info!("test identity accuracy {:.4}", eval::identity_accuracy(&frozen, &test, &device)?)
                    }
                    ClassifierKind::Attributes => {
                        log::info!("test attribute accuracy {:?}", eval::attribute_accuracy(&frozen, &test, &device)?)
                    }
                }
            }
            println!("{}", a.out.display());
        }
        Command::Train(a) => {
            let config = train_config(&a)?;
            let path = trainer::train(&config, a.resume, &device)?;
            println!("{}", path.display());
        }
        Command::Manipulate(a) => {
            let model = TrainedModel::load(&a.checkpoint, &device)?;
            let sample = load_image(&a.input, model.input_size())?;
            let x = image_batch([&sample], &device)?;
            let spec = match &a.attribute {
                Some(name) => {
                    let spec = model.spec(name.parse()?)?;
                    let delta = a.delta.unwrap_or(spec.delta);
                    Some(spec.with_delta(delta))
                }
                None if a.delta.is_some() => {
                    return Err(Error::Config("--delta needs --attribute".into()));
                }
                None => None,
            };
            let out = model.generate(&x, spec.as_ref())?;
            let hwc = eval::tensor_to_hwc(&out.i(0)?)?;
            imageio::save_rgb(&a.output, &hwc, sample.size, sample.size)?;
            println!("{}", a.output.display());
        }
        Command::Sweep(a) => {
            let model = TrainedModel::load(&a.checkpoint, &device)?;
            let sample = load_image(&a.input, model.input_size())?;
            let attributes = if a.attributes.is_empty() {
                model.config.attributes.clone()
            } else {
                parse_attributes(&a.attributes)?
            };
            let specs = attributes.iter().map(|&at| model.spec(at)).collect::<Result<Vec<_>>>()?;
            let deltas = if a.deltas.is_empty() {
                eval::sweep_deltas(a.max_delta.unwrap_or(model.delta), a.points)
            } else {
                a.deltas.clone()
            };
            let (w, h) = eval::sweep_grid(&model, &sample, &deltas, &specs, &a.output, &device)?;
            println!("{} ({w}x{h})", a.output.display());
        }
        Command::Evaluate(a) => {
            let model = TrainedModel::load(&a.checkpoint, &device)?;
            let oracle = Classifier::load(&a.attribute_classifier, &device)?;
            let extractor = Classifier::load(&a.identity_classifier, &device)?;
            let mut test = Dataset::open(&a.data)?.load(Split::Test)?;
            if let Some(n) = a.max_samples {
                test.truncate(n);
            }
            let attributes = if a.attributes.is_empty() {
                model.config.attributes.clone()
            } else {
                parse_attributes(&a.attributes)?
            };
            let per = attributes
                .iter()
                .map(|&at| eval::evaluate_attribute(&model, &oracle, &extractor, &test, &model.spec(at)?, &device))
                .collect::<Result<Vec<_>>>()?;
            let report = EvalReport::from_attributes(per)?;
            write_json(&a.out, &report)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::RfCover(a) => {
            let text = fs::read_to_string(&a.arch).map_err(|e| Error::io(&a.arch, e))?;
            let arch: Architecture = serde_json::from_str(&text)?;
            let size = a
                .input_size
                .or(arch.input_size)
                .ok_or_else(|| Error::Config("input size missing (--input-size or inputSize)".into()))?;
            let report = arch.cover(size)?;
            if a.full {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!("{}", serde_json::to_string(&report.pixel_set)?);
            }
        }
    }
    Ok(())
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run_command(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
