use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::origins::SelectionConfig;
use crate::segmenter::SegmenterSpec;
use crate::spherical::{GridShape, Interpolation, RMaxMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostprocessConfig {
    pub min_object_mm3: f64,
    pub open_iters: usize,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        PostprocessConfig {
            min_object_mm3: 30.0,
            open_iters: 1,
        }
    }
}

/// Segmenter per stage. Unset later passes reuse `pass1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmenterSpecs {
    pub pass1: SegmenterSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass2: Option<SegmenterSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass3: Option<SegmenterSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cartesian: Option<SegmenterSpec>,
}

impl SegmenterSpecs {
    pub fn uniform(spec: SegmenterSpec) -> Self {
        SegmenterSpecs {
            pass1: spec,
            pass2: None,
            pass3: None,
            cartesian: None,
        }
    }

    pub fn pass(&self, index: usize) -> &SegmenterSpec {
        let chosen = match index {
            2 => self.pass2.as_ref(),
            3 => self.pass3.as_ref(),
            _ => None,
        };
        chosen.unwrap_or(&self.pass1)
    }

    pub fn cartesian(&self) -> &SegmenterSpec {
        self.cartesian.as_ref().unwrap_or(&self.pass1)
    }
}

/// Everything a cascade run depends on. In JSON, `rng_seed` and
/// `segmenters.pass1` are required; everything else has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub rng_seed: u64,
    pub segmenters: SegmenterSpecs,
    #[serde(default)]
    pub grid: GridShape,
    #[serde(default)]
    pub r_max_mode: RMaxMode,
    #[serde(default)]
    pub interpolation: Interpolation,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub postprocess: PostprocessConfig,
    #[serde(default = "yes")]
    pub enable_cartesian_filter: bool,
    /// Upper bound on concurrent per-origin segmenter calls.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

fn yes() -> bool {
    true
}

fn default_parallelism() -> usize {
    4
}

impl PipelineConfig {
    pub fn new(rng_seed: u64, segmenter: SegmenterSpec) -> Self {
        PipelineConfig {
            rng_seed,
            segmenters: SegmenterSpecs::uniform(segmenter),
            grid: GridShape::default(),
            r_max_mode: RMaxMode::default(),
            interpolation: Interpolation::default(),
            selection: SelectionConfig::default(),
            postprocess: PostprocessConfig::default(),
            enable_cartesian_filter: true,
            parallelism: default_parallelism(),
        }
    }

    /// Threshold oracles everywhere; the synthetic-phantom setup.
    pub fn oracle(rng_seed: u64) -> Self {
        Self::new(rng_seed, SegmenterSpec::default())
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.selection.validate()?;
        if !(self.postprocess.min_object_mm3 >= 0.0 && self.postprocess.min_object_mm3.is_finite()) {
            return Err(Error::Config("postprocess.min_object_mm3 must be >= 0".into()));
        }
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        self.segmenters.pass1.validate()?;
        for s in [&self.segmenters.pass2, &self.segmenters.pass3, &self.segmenters.cartesian]
            .into_iter()
            .flatten()
        {
            s.validate()?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
