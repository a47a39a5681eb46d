//! Procedural toy-face dataset: images, exact foreground masks, attribute
//! flags and identities.

mod dataset;
mod render;
mod scene;

pub use dataset::{
    generate_dataset, sample_pair, Dataset, DatasetConfig, ManifestRecord, PairSampler, Split,
    MANIFEST_FILE,
};
pub use render::{render_sample, FaceGeometry, Sample};
pub use scene::{Attribute, AttributeFlags, IdentityParams, SceneSpec};
