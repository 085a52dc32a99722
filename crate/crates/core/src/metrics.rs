//! Per-region overlap and surface-distance metrics.
//!
//! Conventions: Dice of two empty masks is 1; sensitivity is undefined for an
//! empty truth, specificity for a full-volume truth; HD95 is undefined when
//! either surface is empty. Undefined values are `None` (written as `nan`).

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, LabelVolume, Region, RegionMasks};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

pub fn confusion(pred: &BinaryMask, truth: &BinaryMask) -> Result<Confusion> {
    pred.check_geometry(truth)?;
    let mut c = Confusion::default();
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

impl Confusion {
    pub fn dice(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }

    pub fn sensitivity(&self) -> Option<f64> {
        let pos = self.tp + self.fn_;
        (pos > 0).then(|| self.tp as f64 / pos as f64)
    }

    pub fn specificity(&self) -> Option<f64> {
        let neg = self.tn + self.fp;
        (neg > 0).then(|| self.tn as f64 / neg as f64)
    }
}

pub fn dice(pred: &BinaryMask, truth: &BinaryMask) -> Result<f64> {
    Ok(confusion(pred, truth)?.dice())
}

pub fn sensitivity(pred: &BinaryMask, truth: &BinaryMask) -> Result<Option<f64>> {
    Ok(confusion(pred, truth)?.sensitivity())
}

pub fn specificity(pred: &BinaryMask, truth: &BinaryMask) -> Result<Option<f64>> {
    Ok(confusion(pred, truth)?.specificity())
}

/// Foreground voxels with at least one background face neighbor; outside
/// the grid counts as background.
pub fn surface(mask: &BinaryMask) -> BinaryMask {
    let [nx, ny, nz] = mask.dims();
    let d = mask.data();
    BinaryMask::from_fn(mask.dims(), mask.spacing(), |[i, j, k]| {
        let at = |i: usize, j: usize, k: usize| d[(i * ny + j) * nz + k];
        at(i, j, k)
            && (i == 0
                || j == 0
                || k == 0
                || i + 1 == nx
                || j + 1 == ny
                || k + 1 == nz
                || !at(i - 1, j, k)
                || !at(i + 1, j, k)
                || !at(i, j - 1, k)
                || !at(i, j + 1, k)
                || !at(i, j, k - 1)
                || !at(i, j, k + 1))
    })
    .expect("same geometry")
}

/// Linear interpolation between order statistics at rank `q · (n − 1)`.
pub fn percentile_linear(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * w)
}

/// Exact 1D squared distance transform (lower envelope of parabolas) over
/// sample positions `x_q = q · s`. `f` holds squared distances, `INF` for
/// non-sites.
fn edt_1d(f: &mut [f64], s: f64, v: &mut Vec<usize>, z: &mut Vec<f64>) {
    v.clear();
    z.clear();
    let pos = |q: usize| q as f64 * s;
    for q in 0..f.len() {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let (xq, xp) = (pos(q), pos(p));
                    let boundary = ((f[q] + xq * xq) - (f[p] + xp * xp)) / (2.0 * (xq - xp));
                    if boundary <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                    } else {
                        v.push(q);
                        z.push(boundary);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        return;
    }
    let sites: Vec<(usize, f64)> = v.iter().map(|&p| (p, f[p])).collect();
    let mut k = 0;
    for (q, out) in f.iter_mut().enumerate() {
        let x = pos(q);
        while k + 1 < sites.len() && z[k + 1] < x {
            k += 1;
        }
        let (p, fp) = sites[k];
        let d = x - pos(p);
        *out = fp + d * d;
    }
}

/// Squared Euclidean distance (mm²) from every voxel to the nearest `true`
/// voxel of `sites`, on a row-major grid of `dims` with spacing `s`.
fn squared_edt(sites: &[bool], dims: [usize; 3], s: [f64; 3]) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let mut g: Vec<f64> = sites.iter().map(|&b| if b { 0.0 } else { f64::INFINITY }).collect();
    // z lines are contiguous
    g.par_chunks_mut(nz).for_each_init(
        || (Vec::new(), Vec::new()),
        |(v, z), line| edt_1d(line, s[2], v, z),
    );
    // y lines: strided within each x slab
    g.par_chunks_mut(ny * nz).for_each_init(
        || (Vec::new(), Vec::new(), vec![0f64; ny]),
        |(v, z, buf), slab| {
            for k in 0..nz {
                for j in 0..ny {
                    buf[j] = slab[j * nz + k];
                }
                edt_1d(buf, s[1], v, z);
                for j in 0..ny {
                    slab[j * nz + k] = buf[j];
                }
            }
        },
    );
    // x lines: gather each (j, k) column
    let columns: Vec<Vec<f64>> = (0..ny * nz)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(v, z), jk| {
                let mut buf: Vec<f64> = (0..nx).map(|i| g[i * ny * nz + jk]).collect();
                edt_1d(&mut buf, s[0], v, z);
                buf
            },
        )
        .collect();
    for (jk, col) in columns.iter().enumerate() {
        for (i, &val) in col.iter().enumerate() {
            g[i * ny * nz + jk] = val;
        }
    }
    g
}

/// Inclusive index box around the `true` voxels of both masks.
fn joint_bbox(a: &BinaryMask, b: &BinaryMask) -> Option<([usize; 3], [usize; 3])> {
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for m in [a, b] {
        for (l, _) in m.data().iter().enumerate().filter(|(_, &v)| v) {
            any = true;
            let idx = m.index_of(l);
            for ax in 0..3 {
                lo[ax] = lo[ax].min(idx[ax]);
                hi[ax] = hi[ax].max(idx[ax]);
            }
        }
    }
    any.then_some((lo, hi))
}

fn crop(mask: &BinaryMask, lo: [usize; 3], dims: [usize; 3]) -> Vec<bool> {
    let mut out = Vec::with_capacity(dims.iter().product());
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                out.push(*mask.get([lo[0] + i, lo[1] + j, lo[2] + k]));
            }
        }
    }
    out
}

/// Sorted distances (mm) from each `from` voxel to the nearest `to` voxel.
fn directed(from: &[bool], to: &[bool], dims: [usize; 3], s: [f64; 3]) -> Vec<f64> {
    let edt = squared_edt(to, dims, s);
    let mut d: Vec<f64> = from.iter().zip(&edt).filter(|(&f, _)| f).map(|(_, &e)| e.sqrt()).collect();
    d.sort_by(f64::total_cmp);
    d
}

/// 95th-percentile symmetric Hausdorff distance between the surfaces, in mm.
pub fn hausdorff95(pred: &BinaryMask, truth: &BinaryMask) -> Result<Option<f64>> {
    pred.check_geometry(truth)?;
    let (sp, st) = (surface(pred), surface(truth));
    if sp.count() == 0 || st.count() == 0 {
        return Ok(None);
    }
    // every site and query lies in the joint box, so the cropped transform is exact
    let (lo, hi) = joint_bbox(&sp, &st).expect("non-empty surfaces");
    let dims = [0, 1, 2].map(|a| hi[a] - lo[a] + 1);
    let (cp, ct) = (crop(&sp, lo, dims), crop(&st, lo, dims));
    let s = pred.spacing().as_array();
    let p95 = |d: Vec<f64>| percentile_linear(&d, 0.95).expect("non-empty");
    Ok(Some(p95(directed(&cp, &ct, dims, s)).max(p95(directed(&ct, &cp, dims, s)))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionMetrics {
    pub dice: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub hd95: Option<f64>,
}

pub fn evaluate_region(pred: &BinaryMask, truth: &BinaryMask) -> Result<RegionMetrics> {
    let c = confusion(pred, truth)?;
    Ok(RegionMetrics {
        dice: c.dice(),
        sensitivity: c.sensitivity(),
        specificity: c.specificity(),
        hd95: hausdorff95(pred, truth)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaseMetrics {
    #[serde(rename = "WT")]
    pub wt: RegionMetrics,
    #[serde(rename = "TC")]
    pub tc: RegionMetrics,
    #[serde(rename = "ET")]
    pub et: RegionMetrics,
}

impl CaseMetrics {
    pub fn get(&self, region: Region) -> &RegionMetrics {
        match region {
            Region::WholeTumor => &self.wt,
            Region::TumorCore => &self.tc,
            Region::EnhancingTumor => &self.et,
        }
    }
}

pub fn evaluate_masks(pred: &RegionMasks, truth: &RegionMasks) -> Result<CaseMetrics> {
    Ok(CaseMetrics {
        wt: evaluate_region(&pred.wt, &truth.wt)?,
        tc: evaluate_region(&pred.tc, &truth.tc)?,
        et: evaluate_region(&pred.et, &truth.et)?,
    })
}

pub fn evaluate_case(pred: &LabelVolume, truth: &LabelVolume) -> Result<CaseMetrics> {
    if pred.dims() != truth.dims() {
        return Err(Error::DimensionMismatch(format!(
            "prediction {:?} vs truth {:?}",
            pred.dims(),
            truth.dims()
        )));
    }
    pred.check_geometry(truth.as_volume())?;
    evaluate_masks(&RegionMasks::from_labels(pred), &RegionMasks::from_labels(truth))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:.6}"))
}

/// CSV with columns `case_id, region, dice, sensitivity, specificity, hd95`.
pub fn write_csv<W: Write>(out: W, rows: &[(String, CaseMetrics)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
    w.write_record(["case_id", "region", "dice", "sensitivity", "specificity", "hd95"])
        .map_err(csv_err)?;
    for (case, m) in rows {
        for region in Region::ALL {
            let r = m.get(region);
            w.write_record([
                case.as_str(),
                region.short_name(),
                &fmt_opt(Some(r.dice)),
                &fmt_opt(r.sensitivity),
                &fmt_opt(r.specificity),
                &fmt_opt(r.hd95),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

/// Fixed-width table for terminals.
pub fn format_table(rows: &[(String, CaseMetrics)]) -> String {
    let width = rows.iter().map(|(c, _)| c.len()).max().unwrap_or(0).max(4);
    let mut s = format!(
        "{:<width$}  {:<6} {:>8} {:>8} {:>8} {:>9}\n",
        "case", "region", "dice", "sens", "spec", "hd95(mm)"
    );
    for (case, m) in rows {
        for region in Region::ALL {
            let r = m.get(region);
            let f = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:.4}"));
            s.push_str(&format!(
                "{:<width$}  {:<6} {:>8} {:>8} {:>8} {:>9}\n",
                case,
                region.short_name(),
                f(Some(r.dice)),
                f(r.sensitivity),
                f(r.specificity),
                r.hd95.map_or_else(|| "nan".to_string(), |x| format!("{x:.2}")),
            ));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Spacing;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask(dims: [usize; 3], spacing: Spacing, on: &[[usize; 3]]) -> BinaryMask {
        let mut m = BinaryMask::filled(dims, spacing, false).unwrap();
        for &p in on {
            m.set(p, true);
        }
        m
    }

    /// Pairwise-distance reference implementation.
    fn brute_hd95(a: &BinaryMask, b: &BinaryMask) -> Option<f64> {
        let pts = |m: &BinaryMask| -> Vec<[f64; 3]> {
            let s = surface(m);
            (0..s.len()).filter(|&l| s.data()[l]).map(|l| s.mm_of(l)).collect()
        };
        let (pa, pb) = (pts(a), pts(b));
        if pa.is_empty() || pb.is_empty() {
            return None;
        }
        let dir = |x: &[[f64; 3]], y: &[[f64; 3]]| {
            let mut d: Vec<f64> = x
                .iter()
                .map(|p| {
                    y.iter()
                        .map(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt())
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            d.sort_by(f64::total_cmp);
            percentile_linear(&d, 0.95).unwrap()
        };
        Some(dir(&pa, &pb).max(dir(&pb, &pa)))
    }

    #[test]
    fn dice_examples() {
        let s = Spacing::default();
        let a = mask([4, 4, 4], s, &[[0, 0, 0], [1, 1, 1]]);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        let b = mask([4, 4, 4], s, &[[3, 3, 3]]);
        assert_eq!(dice(&a, &b).unwrap(), 0.0);
        let e = mask([4, 4, 4], s, &[]);
        assert_eq!(dice(&e, &e).unwrap(), 1.0);

        // |P| = |T| = 100, overlap 50
        let dims = [10, 10, 10];
        let p = BinaryMask::from_fn(dims, s, |[i, _, _]| i < 1).unwrap();
        let t = BinaryMask::from_fn(dims, s, |[i, j, _]| (i < 1 && j < 5) || (i == 1 && j < 5)).unwrap();
        assert_eq!((p.count(), t.count()), (100, 100));
        assert_eq!(dice(&p, &t).unwrap(), 0.5);
    }

    #[test]
    fn sensitivity_specificity_examples() {
        let s = Spacing::default();
        let dims = [10, 10, 10];
        let t = BinaryMask::from_fn(dims, s, |[i, _, _]| i == 0).unwrap();
        assert_eq!(sensitivity(&t, &t).unwrap(), Some(1.0));
        assert_eq!(specificity(&t, &t).unwrap(), Some(1.0));
        let empty = BinaryMask::filled(dims, s, false).unwrap();
        assert_eq!(sensitivity(&empty, &t).unwrap(), Some(0.0));
        assert_eq!(specificity(&empty, &t).unwrap(), Some(1.0));
        assert_eq!(sensitivity(&t, &empty).unwrap(), None);
        let full = BinaryMask::filled(dims, s, true).unwrap();
        assert_eq!(specificity(&t, &full).unwrap(), None);

        // |T| = 100, |P| = 120, TP = 80
        let p = BinaryMask::from_fn(dims, s, |[i, j, _]| (i == 0 && j < 8) || (i == 1 && j < 4)).unwrap();
        let c = confusion(&p, &t).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_, p.count()), (80, 40, 20, 120));
        assert_eq!(c.sensitivity(), Some(0.8));
        assert!((c.specificity().unwrap() - 860.0 / 900.0).abs() < 1e-15);
        assert!((c.specificity().unwrap() - 0.9556).abs() < 5e-5);
    }

    #[test]
    fn hd95_examples() {
        let s = Spacing::default();
        let a = mask([10, 10, 10], s, &[[1, 1, 1]]);
        let b = mask([10, 10, 10], s, &[[8, 1, 1]]);
        assert_eq!(hausdorff95(&a, &b).unwrap(), Some(7.0));
        assert_eq!(hausdorff95(&a, &a).unwrap(), Some(0.0));
        let e = mask([10, 10, 10], s, &[]);
        assert_eq!(hausdorff95(&a, &e).unwrap(), None);
        let aniso = Spacing::new(0.5, 2.0, 3.0).unwrap();
        let a = mask([10, 10, 10], aniso, &[[1, 1, 1]]);
        let b = mask([10, 10, 10], aniso, &[[3, 2, 3]]);
        assert!((hausdorff95(&a, &b).unwrap().unwrap() - (1.0f64 + 4.0 + 36.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn percentile_interpolates() {
        let v: Vec<f64> = (0..21).map(|x| x as f64).collect();
        assert_eq!(percentile_linear(&v, 0.95), Some(19.0));
        assert!((percentile_linear(&[0.0, 10.0], 0.95).unwrap() - 9.5).abs() < 1e-12);
        assert_eq!(percentile_linear(&[], 0.5), None);
    }

    #[test]
    fn surface_of_cube() {
        let m = BinaryMask::from_fn([7, 7, 7], Spacing::default(), |[i, j, k]| {
            (1..6).contains(&i) && (1..6).contains(&j) && (1..6).contains(&k)
        })
        .unwrap();
        assert_eq!(surface(&m).count(), 125 - 27);
        let full = BinaryMask::filled([3, 3, 3], Spacing::default(), true).unwrap();
        assert_eq!(surface(&full).count(), 26);
    }

    #[test]
    fn hd95_all_single_voxel_pairs_6cubed() {
        let s = Spacing::new(1.0, 1.5, 0.7).unwrap();
        let dims = [6, 6, 6];
        let at = |l: usize| [l / 36, (l / 6) % 6, l % 6];
        for a in 0..216 {
            let ma = mask(dims, s, &[at(a)]);
            for b in 0..216 {
                let mb = mask(dims, s, &[at(b)]);
                let fast = hausdorff95(&ma, &mb).unwrap().unwrap();
                let slow = brute_hd95(&ma, &mb).unwrap();
                assert!((fast - slow).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn evaluate_case_identity_and_empty() {
        let s = Spacing::default();
        let truth = cube_labels([8, 8, 8], s);
        let m = evaluate_case(&truth, &truth).unwrap();
        for r in Region::ALL {
            assert_eq!(m.get(r).dice, 1.0);
            assert_eq!(m.get(r).hd95, Some(0.0));
        }
        let zero = LabelVolume::zeros([8, 8, 8], s).unwrap();
        let m = evaluate_case(&zero, &truth).unwrap();
        for r in Region::ALL {
            assert_eq!(m.get(r).dice, 0.0);
            assert_eq!(m.get(r).hd95, None);
        }
        let other = LabelVolume::zeros([8, 8, 9], s).unwrap();
        assert!(evaluate_case(&other, &truth).is_err());
    }

    /// Concentric cubes: ET, TC and WT shells around (4, 4, 4).
    fn cube_labels(dims: [usize; 3], s: Spacing) -> LabelVolume {
        LabelVolume::new(
            crate::volume::Volume::from_fn(dims, s, |[i, j, k]| {
                let d = (i as i64 - 4).abs().max((j as i64 - 4).abs()).max((k as i64 - 4).abs());
                [4, 4, 1, 2, 0][d.min(4) as usize]
            })
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn csv_and_table() {
        let truth = cube_labels([8, 8, 8], Spacing::default());
        let zero = LabelVolume::zeros([8, 8, 8], Spacing::default()).unwrap();
        let rows = vec![
            ("a".to_string(), evaluate_case(&truth, &truth).unwrap()),
            ("b".to_string(), evaluate_case(&zero, &truth).unwrap()),
        ];
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "case_id,region,dice,sensitivity,specificity,hd95");
        assert_eq!(lines[1], "a,WT,1.000000,1.000000,1.000000,0.000000");
        assert_eq!(lines[4], "b,WT,0.000000,0.000000,1.000000,nan");
        assert_eq!(lines.len(), 7);
        assert!(format_table(&rows).contains("nan"));
    }

    #[test]
    fn random_small_masks_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let dims = [rng.random_range(1..=12), rng.random_range(1..=12), rng.random_range(1..=12)];
            let s = Spacing::new(rng.random_range(0.5..2.0), rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)).unwrap();
            let p = rng.random_range(0.02..0.5);
            let a = BinaryMask::from_fn(dims, s, |_| rng.random_bool(p)).unwrap();
            let b = BinaryMask::from_fn(dims, s, |_| rng.random_bool(p)).unwrap();
            match (hausdorff95(&a, &b).unwrap(), brute_hd95(&a, &b)) {
                (Some(x), Some(y)) => assert!((x - y).abs() < 1e-9, "{x} vs {y}"),
                (x, y) => assert_eq!(x, y),
            }
        }
    }

    proptest! {
        #[test]
        fn dice_symmetric_and_bounded(bits_a in proptest::collection::vec(any::<bool>(), 64),
                                      bits_b in proptest::collection::vec(any::<bool>(), 64)) {
            let s = Spacing::default();
            let a = BinaryMask::from_vec([4, 4, 4], s, bits_a).unwrap();
            let b = BinaryMask::from_vec([4, 4, 4], s, bits_b).unwrap();
            let d = dice(&a, &b).unwrap();
            prop_assert_eq!(d, dice(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(dice(&a, &a).unwrap(), 1.0);
            if a.count() > 0 {
                prop_assert_eq!(hausdorff95(&a, &a).unwrap(), Some(0.0));
            }
            prop_assert_eq!(hausdorff95(&a, &b).unwrap(), hausdorff95(&b, &a).unwrap());
        }
    }
}
