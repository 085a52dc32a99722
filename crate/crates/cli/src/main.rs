//! `sphereseg` command-line driver.

mod commands;
mod demo;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::LevelFilter;

use sphereseg::spherical::Interpolation;
use sphereseg::{Error, ErrorClass};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  configuration or usage error (bad flags, invalid config file)
  3  input error (missing, unreadable or inconsistent volumes)
  4  segmenter error (external command failed, timed out or returned bad output)
  5  internal error";

#[derive(Parser, Debug)]
#[command(name = "sphereseg", version, about = "Spherical-coordinate brain-tumor segmentation pipeline", after_help = EXIT_CODES)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalOpts {
    /// Pipeline configuration (JSON). Defaults: threshold oracles, seed 0.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides `rng_seed` from the configuration.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Spherical grid shape, overriding the configuration.
    #[arg(long, global = true, value_name = "NR,NT,NP", value_parser = parse_grid)]
    pub grid: Option<[usize; 3]>,
    /// Worker threads for the library's parallel sections.
    #[arg(long, global = true, env = "SPHERESEG_THREADS", value_name = "N")]
    pub threads: Option<usize>,
    /// Only report errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
    /// More logging; repeat for debug output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Resample a volume onto the spherical grid, writing a sidecar `<OUTPUT>.json`.
    Transform {
        /// Intensity or label volume (.nii, .nii.gz, .svol).
        input: PathBuf,
        output: PathBuf,
        /// Transform origin in mm, or `center` for the volume center.
        #[arg(long, default_value = "center", value_parser = parse_origin, allow_hyphen_values = true)]
        origin: OriginArg,
        /// Treat the input as a label map (implied by uint8 data).
        #[arg(long)]
        labels: bool,
        /// Overrides the configured interpolation; label maps always use nearest.
        #[arg(long, value_enum)]
        interpolation: Option<InterpArg>,
    },
    /// Project a spherical-domain label map back onto its Cartesian grid.
    Inverse {
        input: PathBuf,
        output: PathBuf,
        /// Sidecar written by `transform` (default: `<INPUT>.json`).
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
    /// Select transform origins for one pass and print them as JSON.
    Origins {
        /// Pass 1 reads an intensity volume; passes 2 and 3 read a label map.
        input: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        pass: u8,
        /// Pass 1 only: add random picks inside the brain, as during training.
        #[arg(long)]
        train: bool,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full cascade on one case.
    Run {
        /// Case directory with `*_t1`, `*_t1ce`, `*_t2`, `*_flair` volumes
        /// (optional `*_seg` truth), or a single multi-channel volume.
        case: PathBuf,
        out_dir: PathBuf,
        /// Also write each stage's label map under `OUT_DIR/intermediates`.
        #[arg(long)]
        keep_intermediates: bool,
        /// Extension for written volumes.
        #[arg(long, default_value = "nii.gz", value_parser = ["nii.gz", "nii", "svol"])]
        format: String,
    },
    /// Compare a prediction with the ground truth (Dice, sensitivity, specificity, HD95).
    Eval {
        pred: PathBuf,
        truth: PathBuf,
        #[arg(long, default_value = "case")]
        case_id: String,
        /// Write CSV here; `-` for stdout instead of the table.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write a synthetic multi-channel case with its ground truth.
    Phantom {
        out_dir: PathBuf,
        /// The reduced 96×96×80 preset.
        #[arg(long)]
        small: bool,
        /// Phantom parameters (JSON); unspecified fields take defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value = "nii.gz", value_parser = ["nii.gz", "nii", "svol"])]
        format: String,
    },
    /// Polar transforms of an image, a 45° rotation and a 2× zoom, side by side.
    DemoPolar {
        /// PNG/PGM image, whitespace/comma separated text grid, or a
        /// single-slice volume. A synthetic test image when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Composite output (.png or .pgm).
        output: PathBuf,
        #[arg(long, default_value_t = 128)]
        n_r: usize,
        #[arg(long, default_value_t = 256)]
        n_theta: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OriginArg {
    Center,
    Mm([f64; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InterpArg {
    Nearest,
    Trilinear,
}

impl From<InterpArg> for Interpolation {
    fn from(a: InterpArg) -> Self {
        match a {
            InterpArg::Nearest => Interpolation::Nearest,
            InterpArg::Trilinear => Interpolation::Trilinear,
        }
    }
}

fn parse_triple<T: std::str::FromStr>(s: &str) -> Result<[T; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b, c] = parts.as_slice() else {
        return Err(format!("expected three comma-separated values, got {s:?}"));
    };
    let p = |v: &str| v.parse::<T>().map_err(|_| format!("bad number {v:?}"));
    Ok([p(a)?, p(b)?, p(c)?])
}

fn parse_grid(s: &str) -> Result<[usize; 3], String> {
    parse_triple(s)
}

fn parse_origin(s: &str) -> Result<OriginArg, String> {
    if s.eq_ignore_ascii_case("center") {
        return Ok(OriginArg::Center);
    }
    let v: [f64; 3] = parse_triple(s)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(format!("origin must be finite, got {s:?}"));
    }
    Ok(OriginArg::Mm(v))
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Input => 3,
        ErrorClass::Segmenter => 4,
        ErrorClass::Internal => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.global.quiet, cli.global.verbose) {
        (true, _) => LevelFilter::Error,
        (false, 0) => LevelFilter::Warn,
        (false, 1) => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    if let Some(n) = cli.global.threads {
        let built = match n {
            0 => Err("--threads must be at least 1".to_string()),
            n => rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string()),
        };
        if let Err(e) = built {
            log::error!("{e}");
            return ExitCode::from(2);
        }
    }

    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
