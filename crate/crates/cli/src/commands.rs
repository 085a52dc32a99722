use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sphereseg::io::nifti::Datatype;
use sphereseg::io::{generate_phantom, read_labels, read_nifti_header, read_scalar, read_svol, write_volume};
use sphereseg::io::{AnyVolume, FileFormat, PhantomSpec};
use sphereseg::metrics::{evaluate_case, format_table, write_csv, CaseMetrics};
use sphereseg::origins::{first_pass_origins, second_pass_origins, third_pass_origins, FirstPassMode};
use sphereseg::pipeline::{choose_r_max, run_cascade, PipelineConfig, ReportSummary};
use sphereseg::segmenter::channel_names;
use sphereseg::spherical::{
    forward_transform_labels, forward_transform_scalar, inverse_project_labels, GridShape, Interpolation, Origin,
    RMaxMode, SphericalGrid, SphericalVolume,
};
use sphereseg::volume::{LabelVolume, MultiChannelVolume, Region, RegionMasks, Spacing};
use sphereseg::{Error, Result};

use crate::{Cli, Command, GlobalOpts, InterpArg, OriginArg};

pub fn dispatch(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Transform { input, output, origin, labels, interpolation } => {
            transform(g, input, output, *origin, *labels, *interpolation)
        }
        Command::Inverse { input, output, sidecar } => inverse(input, output, sidecar.as_deref()),
        Command::Origins { input, pass, train, out } => origins(g, input, *pass, *train, out.as_deref()),
        Command::Run { case, out_dir, keep_intermediates, format } => {
            run(g, case, out_dir, *keep_intermediates, format)
        }
        Command::Eval { pred, truth, case_id, csv } => eval(pred, truth, case_id, csv.as_deref()),
        Command::Phantom { out_dir, small, spec, format } => phantom(g, out_dir, *small, spec.as_deref(), format),
        Command::DemoPolar { input, output, n_r, n_theta } => {
            crate::demo::demo_polar(input.as_deref(), output, *n_r, *n_theta)
        }
    }
}

/// Configuration file (or oracle defaults) with command-line overrides.
pub fn load_config(g: &GlobalOpts) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::oracle(0),
    };
    if let Some(seed) = g.seed {
        cfg.rng_seed = seed;
    }
    if let Some([n_r, n_theta, n_phi]) = g.grid {
        cfg.grid = GridShape { n_r, n_theta, n_phi };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

// ------------------------------------------------------------- transform

/// Everything `inverse` needs to undo a `transform`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub origin: Origin,
    pub grid: GridShape,
    pub r_max: f64,
    pub r_max_mode: RMaxMode,
    pub interpolation: Interpolation,
    pub labels: bool,
    pub source_dims: [usize; 3],
    pub source_spacing: [f64; 3],
}

fn sidecar_path(volume: &Path) -> PathBuf {
    let mut s = volume.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn looks_like_labels(path: &Path) -> Result<bool> {
    Ok(match FileFormat::from_path(path)? {
        FileFormat::Svol => matches!(read_svol(path)?, AnyVolume::Labels(_)),
        FileFormat::Nifti => read_nifti_header(path)?.datatype == Datatype::UInt8,
    })
}

fn transform(
    g: &GlobalOpts,
    input: &Path,
    output: &Path,
    origin: OriginArg,
    force_labels: bool,
    interp: Option<InterpArg>,
) -> Result<()> {
    let cfg = load_config(g)?;
    let labels = force_labels || looks_like_labels(input)?;
    let (dims, spacing, brain, data) = if labels {
        let l = read_labels(input)?;
        (l.dims(), l.spacing(), l.map(|v| v != 0), AnyVolume::Labels(l))
    } else {
        let m = read_scalar(input)?;
        (m.dims(), m.spacing(), m.brain_mask(), AnyVolume::Scalar(m))
    };

    let o = match origin {
        OriginArg::Center => Origin::from(brain.center_mm()),
        OriginArg::Mm(p) => {
            let extent = brain.extent_mm();
            if (0..3).any(|a| p[a] < 0.0 || p[a] > extent[a]) {
                log::warn!("origin {p:?} mm lies outside the volume (extent {extent:?} mm)");
            }
            Origin::from(p)
        }
    };
    let (r_max, mode) = choose_r_max(&brain, o, cfg.r_max_mode);
    if mode != cfg.r_max_mode {
        log::warn!("no foreground around the origin; r_max from the volume corners instead");
    }
    let grid = SphericalGrid::new(cfg.grid, r_max, o)?;

    let interpolation = if labels {
        if interp == Some(InterpArg::Trilinear) {
            log::warn!("label maps are always resampled with nearest-neighbor");
        }
        Interpolation::Nearest
    } else {
        interp.map_or(cfg.interpolation, Interpolation::from)
    };

    let out = match &data {
        AnyVolume::Labels(l) => {
            AnyVolume::Labels(LabelVolume::new(forward_transform_labels(l, &grid, interpolation)?.to_volume())?)
        }
        AnyVolume::Scalar(m) => AnyVolume::Scalar(MultiChannelVolume::new(
            m.channels()
                .iter()
                .map(|c| forward_transform_scalar(c, &grid, interpolation).to_volume())
                .collect(),
        )?),
    };
    write_volume(output, &out)?;
    let sidecar = Sidecar {
        origin: o,
        grid: cfg.grid,
        r_max,
        r_max_mode: mode,
        interpolation,
        labels,
        source_dims: dims,
        source_spacing: spacing.as_array(),
    };
    write_text(&sidecar_path(output), &to_json(&sidecar)?)?;
    log::info!("wrote {} (r_max {r_max:.3} mm)", output.display());
    Ok(())
}

fn inverse(input: &Path, output: &Path, sidecar: Option<&Path>) -> Result<()> {
    let sc_path = sidecar.map_or_else(|| sidecar_path(input), Path::to_path_buf);
    let text = fs::read_to_string(&sc_path).map_err(|e| Error::io(&sc_path, e))?;
    let sc: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", sc_path.display())))?;
    let grid = SphericalGrid::new(sc.grid, sc.r_max, sc.origin)?;
    let labels = read_labels(input)?;
    let s = SphericalVolume::from_volume(grid, labels.into_volume())?;
    let [sx, sy, sz] = sc.source_spacing;
    let back = inverse_project_labels(&s, sc.source_dims, Spacing::new(sx, sy, sz)?)?;
    write_volume(output, &AnyVolume::Labels(back))
}

// --------------------------------------------------------------- origins

fn origins(g: &GlobalOpts, input: &Path, pass: u8, train: bool, out: Option<&Path>) -> Result<()> {
    let cfg = load_config(g)?;
    if train && pass != 1 {
        return Err(Error::Config("--train only applies to pass 1".into()));
    }
    let seed = cfg.rng_seed.wrapping_add(pass as u64);
    let set = if pass == 1 {
        let mode = if train { FirstPassMode::Train } else { FirstPassMode::Infer };
        first_pass_origins(&read_scalar(input)?.brain_mask(), &cfg.selection, mode, seed)?
    } else {
        let m = RegionMasks::from_labels(&read_labels(input)?);
        let (wt, tc) = (m.get(Region::WholeTumor), m.get(Region::TumorCore));
        if pass == 2 {
            second_pass_origins(wt, tc, &cfg.selection, seed)?
        } else {
            third_pass_origins(wt, tc, &cfg.selection, seed)?
        }
    };
    if let Some(f) = set.fallback {
        log::warn!("no usable tumor mask; fell back to {f:?}");
    } else if set.is_short() {
        log::warn!("only {} of {} origins could be placed", set.len(), set.requested);
    }
    let json = to_json(&set)?;
    match out {
        Some(p) => write_text(p, &json),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

// ------------------------------------------------------------------- run

const VOLUME_SUFFIXES: [&str; 3] = [".nii.gz", ".nii", ".svol"];

fn volume_stem(path: &Path) -> Option<String> {
    let name = path.file_name()?.to_str()?.to_ascii_lowercase();
    VOLUME_SUFFIXES.iter().find_map(|s| name.strip_suffix(s).map(str::to_string))
}

fn stem_matches(stem: &str, key: &str) -> bool {
    stem == key || stem.ends_with(&format!("_{key}"))
}

/// Channel files and optional ground truth found in a case directory.
#[derive(Debug)]
struct CaseFiles {
    channels: Vec<PathBuf>,
    truth: Option<PathBuf>,
}

fn discover_case(dir: &Path) -> Result<CaseFiles> {
    let mut files: Vec<(String, PathBuf)> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| volume_stem(&p).map(|s| (s, p)))
        .collect();
    files.sort();
    let find = |key: &str| files.iter().find(|(s, _)| stem_matches(s, key)).map(|(_, p)| p.clone());
    let truth = find("seg");
    let names = channel_names(4);
    let found: Vec<Option<PathBuf>> = names.iter().map(|n| find(n)).collect();
    if found.iter().all(Option::is_some) {
        return Ok(CaseFiles { channels: found.into_iter().flatten().collect(), truth });
    }
    if found.iter().any(Option::is_some) {
        let missing: Vec<&str> =
            names.iter().zip(&found).filter(|(_, f)| f.is_none()).map(|(n, _)| n.as_str()).collect();
        return Err(Error::InvalidVolume(format!("{}: missing channel(s) {}", dir.display(), missing.join(", "))));
    }
    let others: Vec<PathBuf> = files.iter().filter(|(s, _)| !stem_matches(s, "seg")).map(|(_, p)| p.clone()).collect();
    match others.as_slice() {
        [single] => Ok(CaseFiles { channels: vec![single.clone()], truth }),
        [] => Err(Error::InvalidVolume(format!("{}: no volumes found", dir.display()))),
        _ => Err(Error::InvalidVolume(format!(
            "{}: cannot tell which of {} volumes are the t1/t1ce/t2/flair channels",
            dir.display(),
            others.len()
        ))),
    }
}

fn report_csv(s: &ReportSummary) -> String {
    let mut out = String::from("stage,region,volume_mm3,components\n");
    for (stage, m) in [("spherical", &s.spherical), ("filtered", &s.filtered), ("final", &s.final_masks)] {
        for (i, r) in Region::ALL.iter().enumerate() {
            out += &format!("{stage},{},{:.3},{}\n", r.short_name(), m.volumes_mm3[i], m.components[i]);
        }
    }
    out
}

fn run(g: &GlobalOpts, case: &Path, out_dir: &Path, keep: bool, format: &str) -> Result<()> {
    let cfg = load_config(g)?;
    let files = if case.is_dir() {
        discover_case(case)?
    } else {
        CaseFiles { channels: vec![case.to_path_buf()], truth: None }
    };
    let mut channels = Vec::new();
    for p in &files.channels {
        channels.extend(read_scalar(p)?.into_channels());
    }
    let input = MultiChannelVolume::new(channels)?;
    log::info!("case {}: {} channels, dims {:?}", case.display(), input.num_channels(), input.dims());

    let report = run_cascade(&input, &cfg)?;
    for w in &report.summary.warnings {
        log::warn!("{w}");
    }

    create_dir(out_dir)?;
    write_volume(out_dir.join(format!("labels.{format}")), &AnyVolume::Labels(report.labels.clone()))?;
    write_text(&out_dir.join("report.json"), &to_json(&report.summary)?)?;
    write_text(&out_dir.join("report.csv"), &report_csv(&report.summary))?;
    write_text(&out_dir.join("timings.json"), &to_json(&report.timings)?)?;
    if keep {
        let dir = out_dir.join("intermediates");
        create_dir(&dir)?;
        for (name, labels) in &report.intermediates {
            write_volume(dir.join(format!("{name}.{format}")), &AnyVolume::Labels(labels.clone()))?;
        }
    }
    if let Some(t) = &files.truth {
        let m = evaluate_case(&report.labels, &read_labels(t)?)?;
        let id = case.file_name().map_or_else(|| "case".into(), |s| s.to_string_lossy().into_owned());
        let rows = [(id, m)];
        let path = out_dir.join("metrics.csv");
        let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_csv(f, &rows)?;
        log::info!("\n{}", format_table(&rows));
    }
    Ok(())
}

// ------------------------------------------------------------------ eval

fn eval(pred: &Path, truth: &Path, case_id: &str, csv: Option<&Path>) -> Result<()> {
    let m: CaseMetrics = evaluate_case(&read_labels(pred)?, &read_labels(truth)?)?;
    let rows = [(case_id.to_string(), m)];
    match csv {
        Some(p) if p == Path::new("-") => write_csv(std::io::stdout().lock(), &rows),
        Some(p) => {
            let f = fs::File::create(p).map_err(|e| Error::io(p, e))?;
            write_csv(f, &rows)?;
            print!("{}", format_table(&rows));
            Ok(())
        }
        None => {
            print!("{}", format_table(&rows));
            std::io::stdout().flush().map_err(|e| Error::io("<stdout>", e))
        }
    }
}

// --------------------------------------------------------------- phantom

fn phantom(g: &GlobalOpts, out_dir: &Path, small: bool, spec: Option<&Path>, format: &str) -> Result<()> {
    let mut spec = match spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None if small => PhantomSpec::small(),
        None => PhantomSpec::default(),
    };
    if let Some(seed) = g.seed {
        spec.seed = seed;
    }
    let (input, truth) = generate_phantom(&spec)?;
    create_dir(out_dir)?;
    let names = channel_names(input.num_channels());
    for (name, c) in names.iter().zip(input.into_channels()) {
        let v = AnyVolume::Scalar(MultiChannelVolume::new(vec![c])?);
        write_volume(out_dir.join(format!("phantom_{name}.{format}")), &v)?;
    }
    write_volume(out_dir.join(format!("phantom_seg.{format}")), &AnyVolume::Labels(truth))?;
    write_text(&out_dir.join("phantom_spec.json"), &to_json(&spec)?)
}
