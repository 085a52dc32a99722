use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{SegmentContext, Segmenter};
use crate::error::{Error, Result, SegmenterError};
use crate::volume::{LabelVolume, MultiChannelVolume, Volume};

/// Labels channel 0 by nested thresholds: 2 above `t_wt`, 1 above `t_tc`,
/// 4 above `t_et`.
///
/// The pipeline hands segmenters z-scored data, while the thresholds are in
/// phantom intensity units. With `tissue_level` set, channel 0 is first
/// mapped back affinely so that its most frequent non-zero value lands on
/// `tissue_level` and its maximum on 1.0. Z-scoring is itself affine, so on
/// the noise-free phantom channel this recovers the original intensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdOracle {
    pub t_wt: f32,
    pub t_tc: f32,
    pub t_et: f32,
    pub tissue_level: Option<f32>,
}

impl Default for ThresholdOracle {
    fn default() -> Self {
        ThresholdOracle {
            t_wt: 0.45,
            t_tc: 0.70,
            t_et: 0.90,
            tissue_level: Some(0.3),
        }
    }
}

impl ThresholdOracle {
    /// Thresholds applied to the raw channel, without any remapping.
    pub fn raw(t_wt: f32, t_tc: f32, t_et: f32) -> Self {
        ThresholdOracle {
            t_wt,
            t_tc,
            t_et,
            tissue_level: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_wt < self.t_tc && self.t_tc < self.t_et) || !self.t_et.is_finite() || !self.t_wt.is_finite() {
            return Err(Error::Config(format!(
                "oracle thresholds must be strictly increasing, got {}, {}, {}",
                self.t_wt, self.t_tc, self.t_et
            )));
        }
        if let Some(t) = self.tissue_level {
            if !(t.is_finite() && t < 1.0) {
                return Err(Error::Config(format!("tissue_level must be finite and below 1, got {t}")));
            }
        }
        Ok(())
    }

    pub fn label_of(&self, v: f32) -> u8 {
        if v > self.t_et {
            4
        } else if v > self.t_tc {
            1
        } else if v > self.t_wt {
            2
        } else {
            0
        }
    }

    /// `(scale, offset)` taking the mode of the non-zero values to
    /// `tissue_level` and the maximum to 1.0, or `None` when undefined.
    fn remap(&self, data: &[f32]) -> Option<(f64, f64)> {
        let tissue = self.tissue_level? as f64;
        let mut counts: HashMap<u32, usize> = HashMap::new();
        let mut max = f32::NEG_INFINITY;
        for &v in data.iter().filter(|&&v| v != 0.0) {
            *counts.entry(v.to_bits()).or_default() += 1;
            max = max.max(v);
        }
        // most frequent value; ties go to the smaller value
        let mode = counts
            .into_iter()
            .map(|(bits, n)| (n, f32::from_bits(bits)))
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)))?
            .1;
        if !(max > mode) {
            return None;
        }
        let scale = (1.0 - tissue) / (max as f64 - mode as f64);
        Some((scale, tissue - scale * mode as f64))
    }
}

impl Segmenter for ThresholdOracle {
    fn segment(
        &self,
        input: &MultiChannelVolume,
        _ctx: &SegmentContext,
    ) -> std::result::Result<LabelVolume, SegmenterError> {
        let ch0 = input
            .channel(0)
            .ok_or_else(|| SegmenterError::InvalidInput("no channels".into()))?;
        let labels = match self.remap(ch0.data()) {
            Some((s, o)) => ch0.map(|v| if v == 0.0 { 0 } else { self.label_of((v as f64 * s + o) as f32) }),
            None => ch0.map(|v| self.label_of(v)),
        };
        let labels: Volume<u8> = labels;
        LabelVolume::new(labels).map_err(|e| SegmenterError::InvalidOutput(e.to_string()))
    }
}
