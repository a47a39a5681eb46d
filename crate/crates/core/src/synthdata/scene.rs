use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The fixed, ordered attribute list every sample carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Attribute {
    HairBlond,
    Glasses,
    MouthOpen,
    PaleSkin,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [
        Attribute::HairBlond,
        Attribute::Glasses,
        Attribute::MouthOpen,
        Attribute::PaleSkin,
    ];
    pub const COUNT: usize = Self::ALL.len();

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Attribute::HairBlond => "hairBlond",
            Attribute::Glasses => "glasses",
            Attribute::MouthOpen => "mouthOpen",
            Attribute::PaleSkin => "paleSkin",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Attribute::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown attribute '{s}' (expected one of hairBlond, glasses, mouthOpen, paleSkin)"
                ))
            })
    }
}

/// One flag per entry of [`Attribute::ALL`], in order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeFlags(pub [bool; Attribute::COUNT]);

impl AttributeFlags {
    pub fn get(&self, attribute: Attribute) -> bool {
        self.0[attribute.index()]
    }

    pub fn set(&mut self, attribute: Attribute, value: bool) {
        self.0[attribute.index()] = value;
    }

    pub fn with(mut self, attribute: Attribute, value: bool) -> Self {
        self.set(attribute, value);
        self
    }

    pub fn toggled(self, attribute: Attribute) -> Self {
        let v = self.get(attribute);
        self.with(attribute, !v)
    }

    /// Builds flags from `(name, value)` pairs; unlisted attributes are false.
    pub fn from_names<'a>(pairs: impl IntoIterator<Item = (&'a str, bool)>) -> Result<Self> {
        let mut flags = Self::default();
        for (name, value) in pairs {
            flags.set(name.parse()?, value);
        }
        Ok(flags)
    }

    /// All 16 combinations, enumerated as a bit pattern.
    pub fn all_combinations() -> impl Iterator<Item = Self> {
        (0u8..1 << Attribute::COUNT).map(|bits| {
            let mut flags = Self::default();
            for a in Attribute::ALL {
                flags.set(a, bits & (1 << a.index()) != 0);
            }
            flags
        })
    }
}

/// Face geometry and colouring that make up one identity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityParams {
    /// Horizontal / vertical face radius ratio.
    pub aspect: f32,
    /// Vertical face radius as a fraction of the image size.
    pub face_radius: f32,
    pub skin_hue: f32,
    pub skin_saturation: f32,
    pub skin_value: f32,
    /// Half distance between the eyes, in face-radius units.
    pub eye_spacing: f32,
    pub eye_height: f32,
    pub nose_length: f32,
    pub hair_line: f32,
    pub hair_value: f32,
    pub hair_hue: f32,
    pub eye_hue: f32,
}

impl IdentityParams {
    pub fn for_identity(identity_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(identity_id.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x1d);
        Self {
            aspect: rng.random_range(0.70..0.95),
            face_radius: rng.random_range(0.29..0.37),
            skin_hue: rng.random_range(-0.04..0.16),
            skin_saturation: rng.random_range(0.30..0.65),
            skin_value: rng.random_range(0.50..0.78),
            eye_spacing: rng.random_range(0.28..0.50),
            eye_height: rng.random_range(-0.25..-0.02),
            nose_length: rng.random_range(0.10..0.35),
            hair_line: rng.random_range(-0.62..-0.38),
            hair_value: rng.random_range(0.08..0.40),
            eye_hue: rng.random_range(0.0..1.0),
            hair_hue: rng.random_range(-0.05..0.15),
        }
    }
}

/// Everything needed to render one sample deterministically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SceneSpec {
    pub identity_id: u64,
    pub attributes: AttributeFlags,
    pub background_seed: u64,
    pub render_seed: u64,
}

impl SceneSpec {
    pub fn identity_params(&self) -> IdentityParams {
        IdentityParams::for_identity(self.identity_id)
    }
}
