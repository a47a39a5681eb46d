use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scene::{Attribute, AttributeFlags, IdentityParams, SceneSpec};
use crate::error::{Error, Result};

/// One rendered datum. `image` is row-major `size × size × 3` in `[0, 1]`,
/// `mask` is row-major `size × size` with 1 on the face.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub size: usize,
    pub image: Vec<f32>,
    pub mask: Vec<u8>,
    pub attributes: AttributeFlags,
    pub identity_id: u64,
}

impl Sample {
    pub fn foreground_fraction(&self) -> f64 {
        self.mask.iter().map(|&m| m as f64).sum::<f64>() / self.mask.len() as f64
    }

    /// Image in channel-major `3 × size × size` order.
    pub fn image_chw(&self) -> Vec<f32> {
        hwc_to_chw(&self.image, self.size)
    }

    pub fn mask_f32(&self) -> Vec<f32> {
        self.mask.iter().map(|&m| m as f32).collect()
    }
}

pub(crate) fn hwc_to_chw(hwc: &[f32], size: usize) -> Vec<f32> {
    let plane = size * size;
    let mut out = vec![0.0; 3 * plane];
    for (p, px) in hwc.chunks_exact(3).enumerate() {
        for c in 0..3 {
            out[c * plane + p] = px[c];
        }
    }
    out
}

/// Placement of the face ellipse, in fractions of the image size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceGeometry {
    pub center_x: f32,
    pub center_y: f32,
    pub radius_x: f32,
    pub radius_y: f32,
}

impl FaceGeometry {
    pub fn new(params: &IdentityParams, render_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(render_seed ^ 0x5eed_face);
        Self {
            center_x: 0.5 + rng.random_range(-0.04..0.04),
            center_y: 0.53 + rng.random_range(-0.04..0.04),
            radius_x: params.face_radius * params.aspect,
            radius_y: params.face_radius,
        }
    }
}

fn hsv(h: f32, s: f32, v: f32) -> [f32; 3] {
    let h = h.rem_euclid(1.0) * 6.0;
    let i = h.floor();
    let f = h - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i as u32 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

fn mix(a: [f32; 3], b: [f32; 3], t: f32) -> [f32; 3] {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

/// Linear two-colour gradient; a pure function of the background seed.
struct Background {
    from: [f32; 3],
    to: [f32; 3],
    dir: (f32, f32),
}

impl Background {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb4c6_0000);
        let mut color = || {
            [
                rng.random_range(0.05..0.95),
                rng.random_range(0.05..0.95),
                rng.random_range(0.05..0.95),
            ]
        };
        let from = color();
        let to = color();
        let angle: f32 = rng.random_range(0.0..std::f32::consts::TAU);
        Self {
            from,
            to,
            dir: (angle.cos(), angle.sin()),
        }
    }

    fn at(&self, u: f32, v: f32) -> [f32; 3] {
        let t = 0.5 + 0.7 * ((u - 0.5) * self.dir.0 + (v - 0.5) * self.dir.1);
        mix(self.from, self.to, t.clamp(0.0, 1.0))
    }
}

fn face_pixel(params: &IdentityParams, attrs: AttributeFlags, dx: f32, dy: f32) -> [f32; 3] {
    let (mut sat, mut val) = (params.skin_saturation, params.skin_value);
    if attrs.get(Attribute::PaleSkin) {
        sat *= 0.6;
        val = (val + 0.2).min(0.97);
    }
    let skin = hsv(params.skin_hue, sat, val);
    let mut px = skin;

    // nose
    let nose_top = params.eye_height + 0.05;
    if dx.abs() < 0.07 && dy > nose_top && dy < nose_top + params.nose_length {
        px = mix(skin, [0.0, 0.0, 0.0], 0.3);
    }

    // eyes
    let eh = params.eye_height;
    for side in [-1.0f32, 1.0] {
        let ex = dx - side * params.eye_spacing;
        let ey = dy - eh;
        if ex * ex + ey * ey < 0.19 * 0.19 {
            px = hsv(params.eye_hue, 0.75, 0.6);
            if ex * ex + ey * ey < 0.06 * 0.06 {
                px = [0.03, 0.03, 0.03];
            }
        }
    }

    if attrs.get(Attribute::Glasses) {
        let lens = |ex: f32| ex.abs() < 0.25 && (dy - eh).abs() < 0.17;
        let on_lens = lens(dx - params.eye_spacing) || lens(dx + params.eye_spacing);
        let on_bridge = dx.abs() < params.eye_spacing && (dy - eh).abs() < 0.05;
        if on_lens {
            px = mix(px, [0.08, 0.08, 0.12], 0.35);
        } else if on_bridge {
            px = [0.08, 0.08, 0.1];
        }
    }

    // mouth
    let my = 0.48;
    if attrs.get(Attribute::MouthOpen) {
        let (mx, mh) = (dx / 0.32, (dy - my) / 0.17);
        if mx * mx + mh * mh < 1.0 {
            px = [0.35, 0.04, 0.06];
        }
    } else if dx.abs() < 0.32 && (dy - my).abs() < 0.055 {
        px = [0.55, 0.15, 0.15];
    }

    if dy < params.hair_line {
        px = if attrs.get(Attribute::HairBlond) {
            [0.95, 0.85, 0.35]
        } else {
            hsv(params.hair_hue, 0.6, params.hair_value)
        };
    }
    px
}

/// Renders `spec` at `size × size`. Attribute paint is confined to the face
/// ellipse, and the background depends only on `spec.background_seed`.
pub fn render_sample(spec: &SceneSpec, size: usize) -> Result<Sample> {
    if size != 32 && size != 64 {
        return Err(Error::Config(format!(
            "render size must be 32 or 64, got {size}"
        )));
    }
    let params = spec.identity_params();
    let geom = FaceGeometry::new(&params, spec.render_seed);
    let background = Background::new(spec.background_seed);

    let mut image = Vec::with_capacity(size * size * 3);
    let mut mask = Vec::with_capacity(size * size);
    for row in 0..size {
        for col in 0..size {
            let u = (col as f32 + 0.5) / size as f32;
            let v = (row as f32 + 0.5) / size as f32;
            let dx = (u - geom.center_x) / geom.radius_x;
            let dy = (v - geom.center_y) / geom.radius_y;
            let inside = dx * dx + dy * dy <= 1.0;
            let px = if inside {
                face_pixel(&params, spec.attributes, dx, dy)
            } else {
                background.at(u, v)
            };
            image.extend(px.iter().map(|c| c.clamp(0.0, 1.0)));
            mask.push(inside as u8);
        }
    }
    Ok(Sample {
        size,
        image,
        mask,
        attributes: spec.attributes,
        identity_id: spec.identity_id,
    })
}
