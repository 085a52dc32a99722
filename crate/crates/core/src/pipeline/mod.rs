//! The segmentation cascade: three spherical passes, an optional Cartesian
//! whole-tumor filter, and morphological clean-up.

use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::morphology::{connected_components, open, remove_small_objects};
use crate::origins::{first_pass_origins, second_pass_origins, third_pass_origins, FirstPassMode, OriginSet, Pass};
use crate::segmenter::{SegmentContext, Segmenter};
use crate::spherical::{
    adaptive_r_max, corner_r_max, forward_transform_scalar, inverse_project_labels, GridShape, Interpolation,
    Origin, RMaxMode, SphericalGrid, SphericalVolume,
};
use crate::volume::{zscore_normalize, BinaryMask, LabelVolume, MultiChannelVolume, Region, RegionMasks};

mod config;

pub use config::{PipelineConfig, PostprocessConfig, SegmenterSpecs};

/// Radius for a transform about `o`: the farthest brain voxel, or the
/// farthest volume corner when the brain mask is empty or `mode` says so.
pub fn choose_r_max(brain: &BinaryMask, o: Origin, mode: RMaxMode) -> (f64, RMaxMode) {
    match mode {
        RMaxMode::Corners => (corner_r_max(brain, o), RMaxMode::Corners),
        RMaxMode::Surface => match adaptive_r_max(brain, o) {
            // a lone brain voxel at the origin gives a zero radius
            (r, RMaxMode::Surface) if r <= 0.0 => (corner_r_max(brain, o), RMaxMode::Corners),
            other => other,
        },
    }
}

/// Z-scores every channel. Channels without enough non-zero variance are
/// passed through unchanged, with a warning.
pub fn normalize_channels(m: &MultiChannelVolume) -> Result<(MultiChannelVolume, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut out = Vec::with_capacity(m.num_channels());
    for (i, ch) in m.channels().iter().enumerate() {
        match zscore_normalize(ch) {
            Ok(z) => out.push(z),
            Err(Error::Degenerate(msg)) => {
                let w = format!("channel {i} left unnormalized: {msg}");
                warn!("{w}");
                warnings.push(w);
                out.push(ch.clone());
            }
            Err(e) => return Err(e),
        }
    }
    Ok((MultiChannelVolume::new(out)?, warnings))
}

/// A multi-channel volume resampled about one origin, normalized and ready
/// for a segmenter. Channel volumes are laid out `(n_r, n_theta, n_phi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalInput {
    pub grid: SphericalGrid,
    pub r_max_mode: RMaxMode,
    pub volume: MultiChannelVolume,
    pub warnings: Vec<String>,
}

/// Transform first, then normalize in the spherical domain.
pub fn to_spherical(
    input: &MultiChannelVolume,
    brain: &BinaryMask,
    origin: Origin,
    shape: GridShape,
    mode: RMaxMode,
    interp: Interpolation,
) -> Result<SphericalInput> {
    let (r_max, used) = choose_r_max(brain, origin, mode);
    let grid = SphericalGrid::new(shape, r_max, origin)?;
    let channels = input
        .channels()
        .iter()
        .map(|ch| forward_transform_scalar(ch, &grid, interp).to_volume())
        .collect();
    let (volume, warnings) = normalize_channels(&MultiChannelVolume::new(channels)?)?;
    Ok(SphericalInput {
        grid,
        r_max_mode: used,
        volume,
        warnings,
    })
}

/// Segments one origin's spherical input and projects the labels back.
pub fn segment_spherical(
    input: &MultiChannelVolume,
    brain: &BinaryMask,
    origin: Origin,
    pass: usize,
    segmenter: &dyn Segmenter,
    cfg: &PipelineConfig,
) -> Result<(SphericalInput, RegionMasks)> {
    let sph = to_spherical(input, brain, origin, cfg.grid, cfg.r_max_mode, cfg.interpolation)?;
    let ctx = SegmentContext::spherical(pass, sph.grid, sph.volume.num_channels());
    let labels = segmenter.segment(&sph.volume, &ctx)?;
    let spherical = SphericalVolume::from_volume(sph.grid, labels.into_volume())?;
    let back = inverse_project_labels(&spherical, input.dims(), input.spacing())?;
    Ok((sph, RegionMasks::from_labels(&back)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OriginOutcome {
    pub origin: Origin,
    pub r_max: Option<f64>,
    pub r_max_mode: Option<RMaxMode>,
    #[serde(skip)]
    pub masks: Option<RegionMasks>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassResult {
    pub pass: Pass,
    pub origins: OriginSet,
    pub outcomes: Vec<OriginOutcome>,
    pub merged: RegionMasks,
    pub warnings: Vec<String>,
}

/// Runs one pass over `origins`, at most `cfg.parallelism` origins at a
/// time, and unions the successful predictions.
pub fn run_pass(
    input: &MultiChannelVolume,
    origins: &OriginSet,
    segmenter: &dyn Segmenter,
    cfg: &PipelineConfig,
) -> Result<PassResult> {
    if origins.is_empty() {
        return Err(Error::InvalidArgument("run_pass needs at least one origin".into()));
    }
    let brain = input.brain_mask();
    let pass = origins.pass.index();
    let mut results: Vec<Result<(SphericalInput, RegionMasks)>> = Vec::with_capacity(origins.len());
    for chunk in origins.origins.chunks(cfg.parallelism) {
        let part: Vec<_> = chunk
            .par_iter()
            .map(|&o| segment_spherical(input, &brain, o, pass, segmenter, cfg))
            .collect();
        results.extend(part);
    }

    let mut outcomes = Vec::with_capacity(results.len());
    let mut warnings = Vec::new();
    let mut first_error = None;
    for (&origin, r) in origins.origins.iter().zip(results) {
        match r {
            Ok((sph, masks)) => {
                warnings.extend(sph.warnings.iter().map(|w| format!("pass {pass} origin {:?}: {w}", origin.as_array())));
                outcomes.push(OriginOutcome {
                    origin,
                    r_max: Some(sph.grid.r_max),
                    r_max_mode: Some(sph.r_max_mode),
                    masks: Some(masks),
                    error: None,
                });
            }
            Err(e) => {
                let w = format!("pass {pass} origin {:?} failed: {e}", origin.as_array());
                warn!("{w}");
                warnings.push(w);
                outcomes.push(OriginOutcome {
                    origin,
                    r_max: None,
                    r_max_mode: None,
                    masks: None,
                    error: Some(e.to_string()),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    let ok: Vec<&RegionMasks> = outcomes.iter().filter_map(|o| o.masks.as_ref()).collect();
    if ok.is_empty() {
        return Err(Error::PassFailed(outcomes.len(), Box::new(first_error.expect("all failed"))));
    }
    let merged = merge_ensemble(&ok)?;
    Ok(PassResult {
        pass: origins.pass,
        origins: origins.clone(),
        outcomes,
        merged,
        warnings,
    })
}

/// Voxelwise union per region, then union closure so ET ⊆ TC ⊆ WT.
pub fn merge_ensemble(masks: &[&RegionMasks]) -> Result<RegionMasks> {
    let (first, rest) = masks
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("merge_ensemble needs at least one prediction".into()))?;
    let mut out = (*first).clone();
    for m in rest {
        out.check_geometry(m)?;
        for region in Region::ALL {
            *out.get_mut(region) = out.get(region).or(m.get(region))?;
        }
    }
    out.close_upward();
    Ok(out)
}

/// Intersects every region with the Cartesian model's whole tumor.
pub fn apply_cartesian_filter(spherical: &RegionMasks, cartesian_wt: &BinaryMask) -> Result<RegionMasks> {
    spherical.wt.check_geometry(cartesian_wt)?;
    RegionMasks::new(
        spherical.wt.and(cartesian_wt)?,
        spherical.tc.and(cartesian_wt)?,
        spherical.et.and(cartesian_wt)?,
    )
}

/// Per region: opening, then small-object removal; then intersection
/// closure so no inner region outlives its container.
pub fn postprocess(masks: &RegionMasks, cfg: &PostprocessConfig) -> RegionMasks {
    let clean = |m: &BinaryMask| remove_small_objects(&open(m, cfg.open_iters), cfg.min_object_mm3);
    let mut out = RegionMasks::new(clean(&masks.wt), clean(&masks.tc), clean(&masks.et)).expect("same geometry");
    out.close_downward();
    out
}

/// Segments the untransformed, z-scored volume and keeps its whole tumor.
pub fn cartesian_whole_tumor(input: &MultiChannelVolume, segmenter: &dyn Segmenter) -> Result<(BinaryMask, Vec<String>)> {
    let (norm, warnings) = normalize_channels(input)?;
    let labels = segmenter.segment(&norm, &SegmentContext::cartesian(norm.num_channels()))?;
    if labels.dims() != input.dims() {
        return Err(Error::DimensionMismatch(format!(
            "Cartesian segmenter returned {:?} for input {:?}",
            labels.dims(),
            input.dims()
        )));
    }
    Ok((RegionMasks::from_labels(&labels).wt, warnings))
}

/// Borrowed segmenters for each stage.
#[derive(Clone, Copy)]
pub struct SegmenterSet<'a> {
    pub passes: [&'a dyn Segmenter; 3],
    pub cartesian: &'a dyn Segmenter,
}

impl<'a> SegmenterSet<'a> {
    pub fn from_specs(specs: &'a SegmenterSpecs) -> Self {
        SegmenterSet {
            passes: [specs.pass(1), specs.pass(2), specs.pass(3)],
            cartesian: specs.cartesian(),
        }
    }

    pub fn uniform(s: &'a dyn Segmenter) -> Self {
        SegmenterSet {
            passes: [s; 3],
            cartesian: s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaskStats {
    pub components: [usize; 3],
    pub volumes_mm3: [f64; 3],
}

impl MaskStats {
    pub fn of(m: &RegionMasks) -> Self {
        MaskStats {
            components: Region::ALL.map(|r| connected_components(m.get(r)).count()),
            volumes_mm3: m.volumes_mm3(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassSummary {
    pub pass: Pass,
    pub origins: OriginSet,
    pub outcomes: Vec<OriginOutcome>,
    pub merged: MaskStats,
}

impl PassSummary {
    fn of(r: &PassResult) -> Self {
        PassSummary {
            pass: r.pass,
            origins: r.origins.clone(),
            outcomes: r.outcomes.clone(),
            merged: MaskStats::of(&r.merged),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Deterministic part of a cascade run; identical for identical inputs,
/// configuration and seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub rng_seed: u64,
    pub passes: Vec<PassSummary>,
    pub cartesian_wt_volume_mm3: Option<f64>,
    pub spherical: MaskStats,
    pub filtered: MaskStats,
    pub final_masks: MaskStats,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub summary: ReportSummary,
    pub labels: LabelVolume,
    /// Named label maps for each stage: `pass1`..`pass3`, `cartesian_wt`,
    /// `filtered`.
    pub intermediates: Vec<(String, LabelVolume)>,
    /// Wall-clock per stage; kept apart from the deterministic summary.
    pub timings: Vec<StageTiming>,
}

fn seed_for(base: u64, pass: Pass) -> u64 {
    base.wrapping_add(pass.index() as u64)
}

/// Runs the full cascade with the segmenters named in `cfg`.
pub fn run_cascade(input: &MultiChannelVolume, cfg: &PipelineConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    run_cascade_with(input, cfg, SegmenterSet::from_specs(&cfg.segmenters))
}

/// Runs the full cascade with explicit segmenters (`cfg.segmenters` unused).
pub fn run_cascade_with(
    input: &MultiChannelVolume,
    cfg: &PipelineConfig,
    segmenters: SegmenterSet<'_>,
) -> Result<PipelineReport> {
    let mut timings = Vec::new();
    let mut timed = |stage: &str, start: Instant| {
        let seconds = start.elapsed().as_secs_f64();
        info!("{stage}: {seconds:.2} s");
        timings.push(StageTiming {
            stage: stage.to_string(),
            seconds,
        });
    };
    let brain = input.brain_mask();
    let mut passes = Vec::new();
    let mut intermediates = Vec::new();
    let mut warnings = Vec::new();

    let mut previous: Option<RegionMasks> = None;
    for pass in Pass::ALL {
        let start = Instant::now();
        let seed = seed_for(cfg.rng_seed, pass);
        let origins = match (pass, &previous) {
            (Pass::First, _) => first_pass_origins(&brain, &cfg.selection, FirstPassMode::Infer, seed)?,
            (Pass::Second, Some(p)) => second_pass_origins(&p.wt, &p.tc, &cfg.selection, seed)?,
            (Pass::Third, Some(p)) => third_pass_origins(&p.wt, &p.tc, &cfg.selection, seed)?,
            _ => unreachable!("passes run in order"),
        };
        if let Some(f) = origins.fallback {
            warnings.push(format!("pass {} used fallback origin ({f:?})", pass.index()));
        } else if origins.is_short() {
            warnings.push(format!(
                "pass {} found {} of {} origins",
                pass.index(),
                origins.len(),
                origins.requested
            ));
        }
        let result = run_pass(input, &origins, segmenters.passes[pass.index() - 1], cfg)?;
        warnings.extend(result.warnings.iter().cloned());
        passes.push(PassSummary::of(&result));
        intermediates.push((format!("pass{}", pass.index()), result.merged.to_labels()));
        previous = Some(result.merged);
        timed(&format!("pass{}", pass.index()), start);
    }
    let spherical = previous.expect("three passes ran");

    let (filtered, cartesian_wt_volume_mm3) = if cfg.enable_cartesian_filter {
        let start = Instant::now();
        let (wt, w) = cartesian_whole_tumor(input, segmenters.cartesian)?;
        warnings.extend(w.into_iter().map(|m| format!("cartesian: {m}")));
        let filtered = apply_cartesian_filter(&spherical, &wt)?;
        let vol = wt.volume_mm3();
        intermediates.push(("cartesian_wt".to_string(), LabelVolume::new(wt.map(|b| if b { 2 } else { 0 }))?));
        intermediates.push(("filtered".to_string(), filtered.to_labels()));
        timed("cartesian", start);
        (filtered, Some(vol))
    } else {
        (spherical.clone(), None)
    };

    let start = Instant::now();
    let final_masks = postprocess(&filtered, &cfg.postprocess);
    let labels = final_masks.to_labels();
    timed("postprocess", start);

    Ok(PipelineReport {
        summary: ReportSummary {
            rng_seed: cfg.rng_seed,
            passes,
            cartesian_wt_volume_mm3,
            spherical: MaskStats::of(&spherical),
            filtered: MaskStats::of(&filtered),
            final_masks: MaskStats::of(&final_masks),
            warnings,
        },
        labels,
        intermediates,
        timings,
    })
}
