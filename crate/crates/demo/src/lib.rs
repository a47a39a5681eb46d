//! Browser bindings: receptive-field cover explorer, face renderer, and
//! latent edits from a trained checkpoint.

use candle_core::{Device, Tensor};
use maskedit::eval::tensor_to_hwc;
use maskedit::nets::{image_batch, ImageEditor};
use maskedit::rfcover::Architecture;
use maskedit::synthdata::{render_sample, Attribute, AttributeFlags, Sample, SceneSpec};
use maskedit::trainer::TrainedModel;
use wasm_bindgen::prelude::*;

fn js(e: maskedit::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Cover report as JSON for an architecture description.
pub fn cover_json(arch_json: &str, input_size: usize) -> maskedit::Result<String> {
    let arch: Architecture = serde_json::from_str(arch_json)?;
    Ok(serde_json::to_string(&arch.cover(input_size)?)?)
}

#[wasm_bindgen(js_name = rfCover)]
pub fn rf_cover(arch_json: &str, input_size: usize) -> Result<String, JsError> {
    cover_json(arch_json, input_size).map_err(js)
}

/// Bit `i` of `flags` sets `Attribute::ALL[i]`.
pub fn scene(identity: u32, flags: u8, background_seed: u32, render_seed: u32) -> SceneSpec {
    let mut attributes = AttributeFlags::default();
    for (i, a) in Attribute::ALL.into_iter().enumerate() {
        attributes.set(a, flags >> i & 1 == 1);
    }
    SceneSpec {
        identity_id: identity as u64,
        attributes,
        background_seed: background_seed as u64,
        render_seed: render_seed as u64,
    }
}

pub fn to_rgba(hwc: &[f32]) -> Vec<u8> {
    hwc.chunks(3)
        .flat_map(|p| {
            let c = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            [c(p[0]), c(p[1]), c(p[2]), 255]
        })
        .collect()
}

pub fn from_rgba(rgba: &[u8]) -> Vec<f32> {
    rgba.chunks(4)
        .flat_map(|p| p[..3].iter().map(|&v| v as f32 / 255.0).collect::<Vec<_>>())
        .collect()
}

/// RGBA pixels of a rendered face, `size × size`.
#[wasm_bindgen(js_name = renderFace)]
pub fn render_face(
    identity: u32,
    flags: u8,
    background_seed: u32,
    render_seed: u32,
    size: usize,
) -> Result<Vec<u8>, JsError> {
    let sample = render_sample(&scene(identity, flags, background_seed, render_seed), size).map_err(js)?;
    Ok(to_rgba(&sample.image))
}

#[wasm_bindgen]
pub struct Editor {
    model: TrainedModel,
}

impl Editor {
    pub fn from_bytes(bytes: &[u8]) -> maskedit::Result<Self> {
        Ok(Self {
            model: TrainedModel::from_bytes(bytes, &Device::Cpu)?,
        })
    }

    /// Edited HWC image; `attribute = None` reconstructs.
    pub fn apply(&self, hwc: Vec<f32>, attribute: Option<Attribute>, delta: f64) -> maskedit::Result<Vec<f32>> {
        let size = self.model.input_size();
        let sample = Sample {
            size,
            image: hwc,
            mask: vec![0; size * size],
            attributes: AttributeFlags::default(),
            identity_id: 0,
        };
        if sample.image.len() != 3 * size * size {
            return Err(maskedit::Error::Config(format!("expected a {size}x{size} image")));
        }
        let x = image_batch([&sample], &Device::Cpu)?;
        let spec = attribute.map(|a| self.model.spec(a).map(|s| s.with_delta(delta))).transpose()?;
        let out: Tensor = self.model.generate(&x, spec.as_ref())?;
        tensor_to_hwc(&out.get(0)?)
    }
}

#[wasm_bindgen]
impl Editor {
    #[wasm_bindgen(constructor)]
    pub fn new(bytes: &[u8]) -> Result<Editor, JsError> {
        Self::from_bytes(bytes).map_err(js)
    }

    /// Side length the checkpoint expects.
    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.model.input_size()
    }

    /// Calibrated attribute strength stored in the checkpoint.
    #[wasm_bindgen(getter)]
    pub fn delta(&self) -> f64 {
        self.model.delta
    }

    /// Edits an RGBA image; an empty `attribute` reconstructs it.
    pub fn edit(&self, rgba: &[u8], attribute: &str, delta: f64) -> Result<Vec<u8>, JsError> {
        let attribute = match attribute {
            "" => None,
            a => Some(a.parse::<Attribute>().map_err(js)?),
        };
        let out = self.apply(from_rgba(rgba), attribute, delta).map_err(js)?;
        Ok(to_rgba(&out))
    }
}
