//! Origin selection for the three cascade passes.
//!
//! All randomness comes from one `ChaCha8Rng` stream per call, consumed in a
//! fixed order, so results depend only on the inputs and the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{connected_components, erode, fill_holes, open, remove_small_objects};
use crate::spherical::Origin;
use crate::volume::{BinaryMask, Region};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EscalationStep {
    pub region: Region,
    pub threshold_mm3: f64,
}

impl EscalationStep {
    pub const fn new(region: Region, threshold_mm3: f64) -> Self {
        EscalationStep { region, threshold_mm3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub n_origins: usize,
    /// Full edge length of the exclusion cube around each pick.
    pub exclusion_box_mm: f64,
    pub border_erosion_iters: usize,
    pub escalation: Vec<EscalationStep>,
    /// Third-pass objects wider than this on any axis get extra origins.
    pub large_object_mm: f64,
    pub open_iters: usize,
    pub hole_fill_mm3: f64,
    /// Objects below this are ignored when taking third-pass centroids.
    pub third_pass_min_object_mm3: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        use Region::{TumorCore as TC, WholeTumor as WT};
        SelectionConfig {
            n_origins: 4,
            exclusion_box_mm: 50.0,
            border_erosion_iters: 2,
            escalation: vec![
                EscalationStep::new(TC, 30.0),
                EscalationStep::new(TC, 100.0),
                EscalationStep::new(TC, 1000.0),
                EscalationStep::new(WT, 30.0),
                EscalationStep::new(WT, 100.0),
                EscalationStep::new(WT, 1000.0),
            ],
            large_object_mm: 50.0,
            open_iters: 1,
            hole_fill_mm3: 30.0,
            third_pass_min_object_mm3: 30.0,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.n_origins == 0 {
            return bad("n_origins must be at least 1");
        }
        if !(self.exclusion_box_mm > 0.0 && self.exclusion_box_mm.is_finite()) {
            return bad("exclusion_box_mm must be positive");
        }
        if self.escalation.is_empty() {
            return bad("escalation must not be empty");
        }
        for s in &self.escalation {
            if s.region == Region::EnhancingTumor {
                return bad("escalation regions must be TC or WT");
            }
            if !(s.threshold_mm3 >= 0.0 && s.threshold_mm3.is_finite()) {
                return bad("escalation thresholds must be non-negative");
            }
        }
        if !(self.large_object_mm >= 0.0 && self.hole_fill_mm3 >= 0.0 && self.third_pass_min_object_mm3 >= 0.0) {
            return bad("size thresholds must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pass {
    First,
    Second,
    Third,
}

impl Pass {
    pub const ALL: [Pass; 3] = [Pass::First, Pass::Second, Pass::Third];

    pub fn index(self) -> usize {
        match self {
            Pass::First => 1,
            Pass::Second => 2,
            Pass::Third => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FirstPassMode {
    Train,
    Infer,
}

/// Which fallback produced the origins, if the regular procedure found none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    LargestWtCentroid,
    VolumeCenter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginSet {
    pub origins: Vec<Origin>,
    pub pass: Pass,
    pub seed: u64,
    /// How many origins the procedure aimed for.
    pub requested: usize,
    pub fallback: Option<Fallback>,
}

impl OriginSet {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    /// Fewer origins than requested were found (fallbacks excluded).
    pub fn is_short(&self) -> bool {
        self.fallback.is_none() && self.origins.len() < self.requested
    }
}

fn volume_center(mask: &BinaryMask) -> Origin {
    Origin::from(mask.center_mm())
}

/// Pass 1: the volume center, plus `n_origins` seeded uniform picks among
/// the brain voxels in training mode.
pub fn first_pass_origins(
    brain_mask: &BinaryMask,
    cfg: &SelectionConfig,
    mode: FirstPassMode,
    seed: u64,
) -> Result<OriginSet> {
    cfg.validate()?;
    let mut origins = vec![volume_center(brain_mask)];
    if mode == FirstPassMode::Train {
        let members = set_indices(brain_mask);
        if members.is_empty() {
            return Err(Error::Degenerate("training-mode origins need a non-empty brain mask".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..cfg.n_origins {
            let l = members[rng.random_range(0..members.len())];
            origins.push(Origin::from(brain_mask.mm_of(l)));
        }
    }
    Ok(OriginSet {
        requested: origins.len(),
        origins,
        pass: Pass::First,
        seed,
        fallback: None,
    })
}

fn set_indices(mask: &BinaryMask) -> Vec<usize> {
    mask.data().iter().enumerate().filter(|(_, &m)| m).map(|(l, _)| l).collect()
}

/// Random picks with exclusion cubes; state shared across escalation steps.
struct Picker<'a> {
    cfg: &'a SelectionConfig,
    rng: ChaCha8Rng,
    /// Centers of exclusion cubes.
    boxes: Vec<[f64; 3]>,
}

impl Picker<'_> {
    /// Clears every voxel within `exclusion_box_mm / 2` (L∞) of a box center.
    fn apply_boxes(&self, mask: &mut BinaryMask) {
        let half = self.cfg.exclusion_box_mm / 2.0;
        let dims = mask.dims();
        let s = mask.spacing().as_array();
        for c in &self.boxes {
            let range = |ax: usize| {
                let lo = ((c[ax] - half) / s[ax]).floor().max(0.0) as usize;
                let hi = (((c[ax] + half) / s[ax]).ceil() as isize).clamp(-1, dims[ax] as isize - 1);
                (lo..=hi.max(0) as usize).filter(move |&i| (i as f64 * s[ax] - c[ax]).abs() <= half)
            };
            if (0..3).any(|ax| range(ax).next().is_none()) {
                continue;
            }
            for i in range(0) {
                for j in range(1) {
                    for k in range(2) {
                        mask.set([i, j, k], false);
                    }
                }
            }
        }
    }

    /// Runs the escalation list over `wt`/`tc`, appending up to `need` picks.
    fn escalate(&mut self, wt: &BinaryMask, tc: &BinaryMask, need: usize, out: &mut Vec<Origin>) {
        let start = out.len();
        for step in &self.cfg.escalation {
            if out.len() - start >= need {
                return;
            }
            let region = if step.region == Region::WholeTumor { wt } else { tc };
            if region.count() == 0 {
                continue;
            }
            let thr = step.threshold_mm3;
            let mut cand = remove_small_objects(region, thr);
            cand = open(&cand, self.cfg.open_iters);
            cand = fill_holes(&cand, self.cfg.hole_fill_mm3);
            while out.len() - start < need {
                self.apply_boxes(&mut cand);
                // box cuts can leave slivers below the step's threshold
                cand = remove_small_objects(&cand, thr);
                let labeling = connected_components(&cand);
                let Some(id) = labeling.largest() else { break };
                let component = labeling.mask_of(id);
                let mut pool = set_indices(&erode(&component, self.cfg.border_erosion_iters));
                if pool.is_empty() {
                    pool = set_indices(&component);
                }
                let l = pool[self.rng.random_range(0..pool.len())];
                let p = cand.mm_of(l);
                self.boxes.push(p);
                out.push(Origin::from(p));
            }
        }
    }
}

/// Centroid of the largest WT component, else the volume center.
fn fallback_origin(wt: &BinaryMask) -> (Origin, Fallback) {
    let labeling = connected_components(wt);
    match labeling.largest() {
        Some(id) => {
            let c = labeling.component(id).expect("id from labeling");
            (Origin::from(c.centroid_mm(wt.spacing())), Fallback::LargestWtCentroid)
        }
        None => (volume_center(wt), Fallback::VolumeCenter),
    }
}

fn finish(mut origins: Vec<Origin>, pass: Pass, seed: u64, cfg: &SelectionConfig, wt: &BinaryMask) -> OriginSet {
    let mut fallback = None;
    if origins.is_empty() {
        let (o, f) = fallback_origin(wt);
        origins.push(o);
        fallback = Some(f);
    }
    origins.truncate(cfg.n_origins);
    OriginSet {
        origins,
        pass,
        seed,
        requested: cfg.n_origins,
        fallback,
    }
}

/// Pass 2: seeded picks inside the largest remaining candidate objects,
/// escalating from tumor core to whole tumor and from small to large size
/// thresholds.
pub fn second_pass_origins(
    wt: &BinaryMask,
    tc: &BinaryMask,
    cfg: &SelectionConfig,
    seed: u64,
) -> Result<OriginSet> {
    cfg.validate()?;
    wt.check_geometry(tc)?;
    let mut picker = Picker {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(seed),
        boxes: Vec::new(),
    };
    let mut origins = Vec::new();
    picker.escalate(wt, tc, cfg.n_origins, &mut origins);
    Ok(finish(origins, Pass::Second, seed, cfg, wt))
}

/// Pass 3: centroids of the whole-tumor objects, largest first, topped up
/// with pass-2 style picks inside objects wider than `large_object_mm`.
pub fn third_pass_origins(
    wt: &BinaryMask,
    tc: &BinaryMask,
    cfg: &SelectionConfig,
    seed: u64,
) -> Result<OriginSet> {
    cfg.validate()?;
    wt.check_geometry(tc)?;
    let filtered = remove_small_objects(wt, cfg.third_pass_min_object_mm3);
    let labeling = connected_components(&filtered);
    let spacing = wt.spacing();
    let ids = labeling.ids_by_volume();
    let mut origins: Vec<Origin> = ids
        .iter()
        .take(cfg.n_origins)
        .map(|&id| Origin::from(labeling.component(id).expect("id").centroid_mm(spacing)))
        .collect();
    if origins.len() < cfg.n_origins {
        let mut picker = Picker {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            boxes: origins.iter().map(|o| o.as_array()).collect(),
        };
        for &id in &ids {
            let need = cfg.n_origins - origins.len();
            if need == 0 {
                break;
            }
            let c = labeling.component(id).expect("id");
            if !c.bounding_box_mm(spacing).iter().any(|&e| e > cfg.large_object_mm) {
                continue;
            }
            let inside = labeling.mask_of(id);
            let wt_c = wt.and(&inside)?;
            let tc_c = tc.and(&inside)?;
            picker.escalate(&wt_c, &tc_c, need, &mut origins);
        }
    }
    Ok(finish(origins, Pass::Third, seed, cfg, wt))
}
