//! Quantitative edit metrics, δ sweeps and the sweep grid image.

use std::path::Path;

use candle_core::{DType, Device, IndexOp, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio;
use crate::nets::{image_batch, mask_batch, Classifier, ClassifierKind, ImageEditor, ManipulationSpec};
use crate::objective::{self, scalar};
use crate::synthdata::{Attribute, Sample};

/// Anything that scores attribute presence, `[batch, 4]` probabilities.
pub trait AttributeOracle {
    fn probabilities(&self, x: &Tensor) -> Result<Tensor>;
}

/// Anything that maps images to identity features.
pub trait FeatureExtractor {
    fn extract(&self, x: &Tensor) -> Result<Tensor>;
}

impl AttributeOracle for Classifier {
    fn probabilities(&self, x: &Tensor) -> Result<Tensor> {
        self.attribute_probabilities(x)
    }
}

impl FeatureExtractor for Classifier {
    fn extract(&self, x: &Tensor) -> Result<Tensor> {
        if self.kind() != ClassifierKind::Identity {
            return Err(Error::Config("identity features need an identity classifier".into()));
        }
        self.features(x)
    }
}

/// Per-attribute accuracy of `oracle` against the ground-truth flags.
pub fn attribute_accuracy(oracle: &impl AttributeOracle, samples: &[Sample], device: &Device) -> Result<[f64; Attribute::COUNT]> {
    if samples.is_empty() {
        return Err(Error::Dataset("no samples".into()));
    }
    let mut correct = [0usize; Attribute::COUNT];
    for chunk in samples.chunks(256) {
        let p = oracle.probabilities(&image_batch(chunk, device)?)?;
        for a in Attribute::ALL {
            for (s, v) in chunk.iter().zip(attribute_column(&p, a)?) {
                correct[a.index()] += ((v > 0.5) == s.attributes.get(a)) as usize;
            }
        }
    }
    Ok(correct.map(|c| c as f64 / samples.len() as f64))
}

/// Top-1 identity accuracy of an identity classifier.
pub fn identity_accuracy(classifier: &Classifier, samples: &[Sample], device: &Device) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Dataset("no samples".into()));
    }
    let mut correct = 0;
    for chunk in samples.chunks(256) {
        let pred = classifier.predict_identity(&image_batch(chunk, device)?)?;
        correct += chunk.iter().zip(pred).filter(|(s, p)| s.identity_id == *p as u64).count();
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Leave-one-out nearest-neighbour retrieval: fraction of samples whose
/// closest other sample in feature space (Euclidean) shares its identity.
pub fn retrieval_top1(extractor: &impl FeatureExtractor, samples: &[Sample], device: &Device) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::Dataset("retrieval needs at least two samples".into()));
    }
    let mut features: Vec<Vec<f32>> = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(256) {
        let f = extractor.extract(&image_batch(chunk, device)?)?.to_dtype(DType::F32)?;
        features.extend(f.flatten_from(1)?.to_vec2::<f32>()?);
    }
    let dist = |a: &[f32], b: &[f32]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f32>();
    let hits = (0..samples.len())
        .filter(|&i| {
            let nearest = (0..samples.len())
                .filter(|&j| j != i)
                .min_by(|&a, &b| dist(&features[i], &features[a]).total_cmp(&dist(&features[i], &features[b])))
                .expect("at least two samples");
            samples[nearest].identity_id == samples[i].identity_id
        })
        .count();
    Ok(hits as f64 / samples.len() as f64)
}

/// Returns its input unchanged.
#[derive(Clone, Copy, Debug)]
pub struct IdentityEditor {
    pub size: usize,
}

impl ImageEditor for IdentityEditor {
    fn input_size(&self) -> usize {
        self.size
    }

    fn generate(&self, x: &Tensor, _edit: Option<&ManipulationSpec>) -> Result<Tensor> {
        Ok(x.clone())
    }
}

/// Which way the edit pushes each image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EditSign {
    /// Toward the opposite of the image's current state.
    Correct,
    /// Toward the state the image is already in.
    Wrong,
    Zero,
}

fn attribute_column(p: &Tensor, attribute: Attribute) -> Result<Vec<f64>> {
    Ok(p.i((.., attribute.index()))?.to_dtype(DType::F64)?.to_vec1::<f64>()?)
}

/// Edits each row of `x` with `sign_of(row) * spec.delta`.
pub fn generate_signed(
    editor: &impl ImageEditor,
    x: &Tensor,
    spec: &ManipulationSpec,
    signs: &[f64],
) -> Result<Tensor> {
    let n = x.dim(0)?;
    if signs.len() != n {
        return Err(Error::shape(format!("{n} signs"), signs.len()));
    }
    let device = x.device();
    let mut out: Vec<Option<Tensor>> = vec![None; n];
    let mut distinct: Vec<f64> = signs.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    for s in distinct {
        let rows: Vec<u32> = (0..n as u32).filter(|&i| signs[i as usize] == s).collect();
        let idx = Tensor::from_vec(rows.clone(), rows.len(), device)?;
        let edited = editor.generate(&x.index_select(&idx, 0)?, Some(&spec.with_delta(s * spec.delta)))?;
        for (k, &r) in rows.iter().enumerate() {
            out[r as usize] = Some(edited.narrow(0, k, 1)?);
        }
    }
    let parts: Vec<Tensor> = out.into_iter().map(|t| t.expect("every row assigned")).collect();
    Ok(Tensor::cat(&parts, 0)?)
}

/// Per-row signs that push each image away from (`Correct`) or toward its current state.
pub fn edit_signs(present: &[bool], sign: EditSign) -> Vec<f64> {
    present
        .iter()
        .map(|&p| match (sign, p) {
            (EditSign::Zero, _) => 0.0,
            (EditSign::Correct, true) | (EditSign::Wrong, false) => -1.0,
            _ => 1.0,
        })
        .collect()
}

/// Fraction of images whose predicted attribute changes after the edit.
pub fn attribute_flip_rate(
    editor: &impl ImageEditor,
    oracle: &impl AttributeOracle,
    x: &Tensor,
    spec: &ManipulationSpec,
    sign: EditSign,
) -> Result<f64> {
    let n = x.dim(0)?;
    if n == 0 {
        return Err(Error::Dataset("no images to evaluate".into()));
    }
    let before: Vec<bool> = attribute_column(&oracle.probabilities(x)?, spec.attribute)?
        .into_iter()
        .map(|p| p > 0.5)
        .collect();
    let edited = generate_signed(editor, x, spec, &edit_signs(&before, sign))?;
    let after = attribute_column(&oracle.probabilities(&edited)?, spec.attribute)?;
    let flips = before.iter().zip(&after).filter(|(b, a)| **b != (**a > 0.5)).count();
    Ok(flips as f64 / n as f64)
}

/// Mean over images of the masked background L1 after the edit.
pub fn background_drift(editor: &impl ImageEditor, x: &Tensor, masks: &Tensor, spec: &ManipulationSpec, signs: &[f64]) -> Result<f64> {
    let edited = generate_signed(editor, x, spec, signs)?;
    let n = x.dim(0)?;
    let mut total = 0.0;
    for i in 0..n {
        total += scalar(&objective::mask_loss(
            &x.narrow(0, i, 1)?,
            &edited.narrow(0, i, 1)?.to_dtype(x.dtype())?,
            &masks.narrow(0, i, 1)?,
        )?)?;
    }
    Ok(total / n as f64)
}

/// Mean of `L1(x, G-(G+(x)))` and `L1(x, G+(G-(x)))`.
pub fn cycle_error(editor: &impl ImageEditor, x: &Tensor, spec: &ManipulationSpec) -> Result<f64> {
    let plus = spec.clone();
    let minus = spec.with_delta(-spec.delta);
    let a = editor.generate(&editor.generate(x, Some(&plus))?, Some(&minus))?;
    let b = editor.generate(&editor.generate(x, Some(&minus))?, Some(&plus))?;
    let x = x.to_dtype(DType::F32)?;
    let ea = scalar(&objective::l1(&x, &a.to_dtype(DType::F32)?)?)?;
    let eb = scalar(&objective::l1(&x, &b.to_dtype(DType::F32)?)?)?;
    Ok(0.5 * (ea + eb))
}

/// Mean feature MSE between `x` and its edit.
pub fn id_drift(
    editor: &impl ImageEditor,
    extractor: &impl FeatureExtractor,
    x: &Tensor,
    spec: &ManipulationSpec,
    signs: &[f64],
) -> Result<f64> {
    let edited = generate_signed(editor, x, spec, signs)?;
    let fx = extractor.extract(x)?;
    let fg = extractor.extract(&edited)?;
    scalar(&objective::id_loss(&fx, &fg.to_dtype(fx.dtype())?)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AttributeEval {
    pub attribute: Attribute,
    pub delta: f64,
    pub attribute_flip_rate: f64,
    pub flip_rate_at_zero: f64,
    pub background_drift: f64,
    pub cycle_error: f64,
    pub id_drift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalReport {
    pub attribute_flip_rate: f64,
    pub background_drift: f64,
    pub cycle_error: f64,
    pub id_drift: f64,
    pub per_attribute: Vec<AttributeEval>,
}

impl EvalReport {
    pub fn from_attributes(per_attribute: Vec<AttributeEval>) -> Result<Self> {
        if per_attribute.is_empty() {
            return Err(Error::Config("no attributes evaluated".into()));
        }
        let n = per_attribute.len() as f64;
        let mean = |f: fn(&AttributeEval) -> f64| per_attribute.iter().map(f).sum::<f64>() / n;
        let report = Self {
            attribute_flip_rate: mean(|a| a.attribute_flip_rate),
            background_drift: mean(|a| a.background_drift),
            cycle_error: mean(|a| a.cycle_error),
            id_drift: mean(|a| a.id_drift),
            per_attribute,
        };
        report.validate()?;
        Ok(report)
    }

    pub fn validate(&self) -> Result<()> {
        let values = [self.attribute_flip_rate, self.background_drift, self.cycle_error, self.id_drift];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("evaluation metric".into()));
        }
        if !(0.0..=1.0).contains(&self.attribute_flip_rate) {
            return Err(Error::Config(format!("flip rate {} outside [0, 1]", self.attribute_flip_rate)));
        }
        Ok(())
    }
}

/// All metrics for one attribute on `samples`.
pub fn evaluate_attribute(
    editor: &impl ImageEditor,
    oracle: &impl AttributeOracle,
    extractor: &impl FeatureExtractor,
    samples: &[Sample],
    spec: &ManipulationSpec,
    device: &Device,
) -> Result<AttributeEval> {
    if samples.is_empty() {
        return Err(Error::Dataset("no test samples".into()));
    }
    let x = image_batch(samples, device)?;
    let masks = mask_batch(samples, device)?;
    let present: Vec<bool> = samples.iter().map(|s| s.attributes.get(spec.attribute)).collect();
    let signs = edit_signs(&present, EditSign::Correct);
    Ok(AttributeEval {
        attribute: spec.attribute,
        delta: spec.delta,
        attribute_flip_rate: attribute_flip_rate(editor, oracle, &x, spec, EditSign::Correct)?,
        flip_rate_at_zero: attribute_flip_rate(editor, oracle, &x, spec, EditSign::Zero)?,
        background_drift: background_drift(editor, &x, &masks, spec, &signs)?,
        cycle_error: cycle_error(editor, &x, spec)?,
        id_drift: id_drift(editor, extractor, &x, spec, &signs)?,
    })
}

/// `points` evenly spaced values from `-max` to `max`.
pub fn sweep_deltas(max: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..points)
            .map(|i| -max + 2.0 * max * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// Oracle probability of `spec.attribute` for every image (rows) and δ (columns).
pub fn sweep_confidences(
    editor: &impl ImageEditor,
    oracle: &impl AttributeOracle,
    x: &Tensor,
    spec: &ManipulationSpec,
    deltas: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let n = x.dim(0)?;
    let mut rows = vec![Vec::with_capacity(deltas.len()); n];
    for &d in deltas {
        let edited = editor.generate(x, Some(&spec.with_delta(d)))?;
        for (row, p) in rows.iter_mut().zip(attribute_column(&oracle.probabilities(&edited)?, spec.attribute)?) {
            row.push(p);
        }
    }
    Ok(rows)
}

/// Fraction of rows that never decrease by more than `tolerance`.
pub fn monotone_fraction(rows: &[Vec<f64>], tolerance: f64) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let ok = rows
        .iter()
        .filter(|r| r.windows(2).all(|w| w[1] >= w[0] - tolerance))
        .count();
    ok as f64 / rows.len() as f64
}

/// Grid image: one row per attribute, the input in the first column and
/// `generate(x, δ)` for each δ after it. Returns `(width, height)`.
pub fn sweep_grid(
    editor: &impl ImageEditor,
    image: &Sample,
    deltas: &[f64],
    specs: &[ManipulationSpec],
    path: &Path,
    device: &Device,
) -> Result<(usize, usize)> {
    if deltas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("sweep deltas must be sorted".into()));
    }
    let cells = sweep_cells(editor, image, deltas, specs, device)?;
    let s = image.size;
    let (cols, rows) = (deltas.len() + 1, specs.len());
    let (width, height) = (cols * s, rows * s);
    let mut canvas = vec![0f32; width * height * 3];
    for (r, row) in cells.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            for y in 0..s {
                let dst = ((r * s + y) * width + c * s) * 3;
                canvas[dst..dst + s * 3].copy_from_slice(&cell[y * s * 3..(y + 1) * s * 3]);
            }
        }
    }
    imageio::save_rgb(path, &canvas, width, height)?;
    Ok((width, height))
}

/// Row-major HWC cells of the sweep grid, `[row][column]`.
pub fn sweep_cells(
    editor: &impl ImageEditor,
    image: &Sample,
    deltas: &[f64],
    specs: &[ManipulationSpec],
    device: &Device,
) -> Result<Vec<Vec<Vec<f32>>>> {
    let x = image_batch([image], device)?;
    specs
        .iter()
        .map(|spec| {
            let mut row = vec![image.image.clone()];
            for &d in deltas {
                let out = editor.generate(&x, Some(&spec.with_delta(d)))?;
                row.push(tensor_to_hwc(&out.i(0)?)?);
            }
            Ok(row)
        })
        .collect()
}

/// `[3, S, S]` tensor to row-major HWC floats.
pub fn tensor_to_hwc(chw: &Tensor) -> Result<Vec<f32>> {
    let t = chw.to_dtype(DType::F32)?.permute((1, 2, 0))?.flatten_all()?;
    Ok(t.to_vec1::<f32>()?)
}
