//! The segmentation model boundary.
//!
//! A [`Segmenter`] maps a multi-channel volume (Cartesian or a spherical
//! grid stored as a volume) to a label volume on the same grid. Two are
//! provided: a [`ThresholdOracle`] for synthetic data and an
//! [`ExternalCommand`] adapter that runs a user-supplied program.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SegmenterError};
use crate::spherical::{Origin, SphericalGrid};
use crate::volume::{LabelVolume, MultiChannelVolume};

mod external;
mod oracle;

pub use external::{ExchangeMeta, ExternalCommand, GridMeta, WorkdirPolicy, PRED_FILE};
pub use oracle::ThresholdOracle;

pub const DEFAULT_CHANNEL_NAMES: [&str; 4] = ["t1", "t1ce", "t2", "flair"];

/// What a segmenter is told about the call besides the voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentContext {
    /// 1-3 for cascade passes, 0 for the Cartesian filter model.
    pub pass: usize,
    pub origin: Option<Origin>,
    pub grid: Option<SphericalGrid>,
    pub channel_names: Vec<String>,
}

impl SegmentContext {
    pub fn cartesian(channels: usize) -> Self {
        SegmentContext {
            pass: 0,
            origin: None,
            grid: None,
            channel_names: channel_names(channels),
        }
    }

    pub fn spherical(pass: usize, grid: SphericalGrid, channels: usize) -> Self {
        SegmentContext {
            pass,
            origin: Some(grid.origin),
            grid: Some(grid),
            channel_names: channel_names(channels),
        }
    }
}

/// BraTS modality names for the first four channels, `ch{i}` beyond.
pub fn channel_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| DEFAULT_CHANNEL_NAMES.get(i).map_or_else(|| format!("ch{i}"), |s| s.to_string()))
        .collect()
}

pub trait Segmenter: Send + Sync {
    fn segment(
        &self,
        input: &MultiChannelVolume,
        ctx: &SegmentContext,
    ) -> std::result::Result<LabelVolume, SegmenterError>;
}

/// Serializable segmenter choice, as found in pipeline config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmenterSpec {
    ThresholdOracle(ThresholdOracle),
    ExternalCommand(ExternalCommand),
}

impl Default for SegmenterSpec {
    fn default() -> Self {
        SegmenterSpec::ThresholdOracle(ThresholdOracle::default())
    }
}

impl SegmenterSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            SegmenterSpec::ThresholdOracle(o) => o.validate(),
            SegmenterSpec::ExternalCommand(e) => e.validate(),
        }
    }
}

impl Segmenter for SegmenterSpec {
    fn segment(
        &self,
        input: &MultiChannelVolume,
        ctx: &SegmentContext,
    ) -> std::result::Result<LabelVolume, SegmenterError> {
        match self {
            SegmenterSpec::ThresholdOracle(o) => o.segment(input, ctx),
            SegmenterSpec::ExternalCommand(e) => e.segment(input, ctx),
        }
    }
}
