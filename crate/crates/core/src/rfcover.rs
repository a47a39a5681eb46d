//! Receptive-field geometry of a convolution stack and the minimal set of
//! top-layer pixels whose receptive fields jointly cover the input image.
//!
//! Geometry is tracked per axis as `(size, jump, start)`: one top pixel spans
//! `size` input pixels, neighbouring top pixels are `jump` input pixels apart,
//! and top pixel 0 starts at input coordinate `start` (negative inside the
//! padding). Layers are square, so the 2-D selection is the Cartesian product
//! of the 1-D selection with itself.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of one square convolution-like layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl LayerSpec {
    pub const fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            kernel,
            stride,
            padding,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::Config(format!(
                "layer {self:?} must have kernel >= 1 and stride >= 1"
            )));
        }
        Ok(())
    }

    /// Output size for an input of `n` pixels, `None` when the layer would
    /// produce an empty map.
    pub fn output_size(&self, n: usize) -> Option<usize> {
        let padded = n + 2 * self.padding;
        if self.stride == 0 || padded < self.kernel {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }
}

/// Composed receptive field of a top-layer pixel, in input coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RFParams {
    pub size: i64,
    pub jump: i64,
    pub start: i64,
}

impl RFParams {
    /// Clipped input interval `[lo, hi]` seen by top pixel `index`, or `None`
    /// if it lies entirely in the padding.
    pub fn interval(&self, index: usize, input_size: usize) -> Option<(usize, usize)> {
        let lo = index as i64 * self.jump + self.start;
        let hi = lo + self.size - 1;
        let lo = lo.max(0);
        let hi = hi.min(input_size as i64 - 1);
        (lo <= hi).then_some((lo as usize, hi as usize))
    }
}

/// Composes receptive-field parameters bottom-up through `layers`.
pub fn compose_receptive_field(layers: &[LayerSpec]) -> Result<RFParams> {
    if layers.is_empty() {
        return Err(Error::Config("layer stack is empty".into()));
    }
    let mut rf = RFParams {
        size: 1,
        jump: 1,
        start: 0,
    };
    for layer in layers {
        layer.validate()?;
        let (k, s, p) = (layer.kernel as i64, layer.stride as i64, layer.padding as i64);
        rf = RFParams {
            size: rf.size + (k - 1) * rf.jump,
            jump: rf.jump * s,
            start: rf.start - p * rf.jump,
        };
    }
    Ok(rf)
}

/// Spatial size of the top feature map for an `input_size` input.
pub fn feature_size(layers: &[LayerSpec], input_size: usize) -> Result<usize> {
    if layers.is_empty() {
        return Err(Error::Config("layer stack is empty".into()));
    }
    if input_size == 0 {
        return Err(Error::Geometry("input size must be positive".into()));
    }
    layers.iter().enumerate().try_fold(input_size, |n, (i, layer)| {
        layer.validate()?;
        layer.output_size(n).ok_or_else(|| {
            Error::Geometry(format!(
                "layer {i} ({layer:?}) produces an empty map from input size {n}"
            ))
        })
    })
}

/// Selected top-layer positions; the same index list is used on both axes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PixelSet {
    axis_positions: Vec<usize>,
    positions2d: Vec<(usize, usize)>,
    feature_size: usize,
}

impl PixelSet {
    pub fn new(mut axis_positions: Vec<usize>, feature_size: usize) -> Result<Self> {
        axis_positions.sort_unstable();
        if axis_positions.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config(format!(
                "duplicate pixel positions in {axis_positions:?}"
            )));
        }
        if let Some(&bad) = axis_positions.iter().find(|&&p| p >= feature_size) {
            return Err(Error::Geometry(format!(
                "pixel position {bad} outside feature map of size {feature_size}"
            )));
        }
        let positions2d = axis_positions
            .iter()
            .flat_map(|&r| axis_positions.iter().map(move |&c| (r, c)))
            .collect();
        Ok(Self {
            axis_positions,
            positions2d,
            feature_size,
        })
    }

    /// Every position of the feature map (the "modify everything" baseline).
    pub fn full(feature_size: usize) -> Self {
        Self::new((0..feature_size).collect(), feature_size).expect("full grid is valid")
    }

    pub fn axis_positions(&self) -> &[usize] {
        &self.axis_positions
    }

    pub fn positions2d(&self) -> &[(usize, usize)] {
        &self.positions2d
    }

    pub fn feature_size(&self) -> usize {
        self.feature_size
    }

    pub fn len(&self) -> usize {
        self.positions2d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions2d.is_empty()
    }
}

/// Greedy minimum interval cover of `[0, input_size - 1]` by the clipped
/// receptive fields of top pixels `0..feature_size`.
///
/// Among intervals starting at or before the first uncovered coordinate the
/// one reaching furthest right wins; equal right edges go to the larger index.
pub fn minimal_covering_set(
    rf: RFParams,
    input_size: usize,
    feature_size: usize,
) -> Result<PixelSet> {
    if input_size == 0 || feature_size == 0 {
        return Err(Error::Geometry(format!(
            "degenerate sizes: input {input_size}, feature {feature_size}"
        )));
    }
    let intervals: Vec<(usize, (usize, usize))> = (0..feature_size)
        .filter_map(|i| rf.interval(i, input_size).map(|iv| (i, iv)))
        .collect();

    let mut chosen = Vec::new();
    let mut uncovered = 0usize;
    while uncovered < input_size {
        let best = intervals
            .iter()
            .filter(|(_, (lo, hi))| *lo <= uncovered && *hi >= uncovered)
            .fold(None::<(usize, usize)>, |best, &(i, (_, hi))| match best {
                Some((_, best_hi)) if best_hi > hi => best,
                _ => Some((i, hi)),
            });
        let Some((index, hi)) = best else {
            return Err(Error::Geometry(format!(
                "input coordinate {uncovered} is not covered by any top-layer pixel"
            )));
        };
        chosen.push(index);
        uncovered = hi + 1;
    }
    PixelSet::new(chosen, feature_size)
}

/// True iff every input coordinate lies in some selected pixel's clipped field.
pub fn verify_coverage(pixel_set: &PixelSet, rf: RFParams, input_size: usize) -> bool {
    axis_covered(pixel_set.axis_positions(), rf, input_size)
}

pub(crate) fn axis_covered(positions: &[usize], rf: RFParams, input_size: usize) -> bool {
    if input_size == 0 {
        return true;
    }
    let mut covered = vec![false; input_size];
    for &p in positions {
        if let Some((lo, hi)) = rf.interval(p, input_size) {
            covered[lo..=hi].iter_mut().for_each(|c| *c = true);
        }
    }
    covered.into_iter().all(|c| c)
}

/// Architecture description file: a layer stack plus the input size.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Architecture {
    pub layers: Vec<LayerSpec>,
    #[serde(default)]
    pub input_size: Option<usize>,
}

/// What `rf-cover` reports for an architecture.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CoverReport {
    pub input_size: usize,
    pub feature_size: usize,
    pub rf: RFParams,
    pub pixel_set: PixelSet,
}

impl Architecture {
    pub fn cover(&self, input_size: usize) -> Result<CoverReport> {
        let rf = compose_receptive_field(&self.layers)?;
        let feature_size = feature_size(&self.layers, input_size)?;
        let pixel_set = minimal_covering_set(rf, input_size, feature_size)?;
        Ok(CoverReport {
            input_size,
            feature_size,
            rf,
            pixel_set,
        })
    }
}
