use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use log::debug;
use serde::{Deserialize, Serialize};

use super::{SegmentContext, Segmenter};
use crate::error::{Error, Result, SegmenterError};
use crate::io::{decode_svol, write_svol, AnyVolume};
use crate::volume::{LabelVolume, MultiChannelVolume};

pub const PRED_FILE: &str = "pred.svol";
pub const META_FILE: &str = "meta.json";
const POLL: Duration = Duration::from_millis(10);

/// Where exchange directories live.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WorkdirPolicy {
    /// A fresh temporary directory per call, deleted afterwards.
    #[default]
    Temporary,
    /// A fresh directory per call under `root`, left in place.
    Keep { root: PathBuf },
}

/// Runs `command... <exchange-dir>` and reads the label volume it writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalCommand {
    /// Program followed by fixed arguments; the exchange directory is
    /// appended as the last argument.
    pub command: Vec<String>,
    #[serde(default)]
    pub workdir: WorkdirPolicy,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_output")]
    pub output_file: String,
}

fn default_timeout() -> u64 {
    3600
}

fn default_output() -> String {
    PRED_FILE.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub n_r: usize,
    pub n_theta: usize,
    pub n_phi: usize,
    pub r_max: f64,
}

/// Contents of `meta.json` in the exchange directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeMeta {
    pub pass: usize,
    pub origin_mm: Option<[f64; 3]>,
    pub grid: Option<GridMeta>,
    pub channel_names: Vec<String>,
    pub dims: [usize; 3],
}

impl ExchangeMeta {
    pub fn new(input: &MultiChannelVolume, ctx: &SegmentContext) -> Self {
        ExchangeMeta {
            pass: ctx.pass,
            origin_mm: ctx.origin.map(|o| o.as_array()),
            grid: ctx.grid.as_ref().map(|g| GridMeta {
                n_r: g.n_r,
                n_theta: g.n_theta,
                n_phi: g.n_phi,
                r_max: g.r_max,
            }),
            channel_names: ctx.channel_names.clone(),
            dims: input.dims(),
        }
    }
}

impl ExternalCommand {
    pub fn new(command: Vec<String>) -> Self {
        ExternalCommand {
            command,
            workdir: WorkdirPolicy::Temporary,
            timeout_secs: default_timeout(),
            output_file: default_output(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.command.is_empty() || self.command[0].is_empty() {
            return Err(Error::Config("external segmenter command is empty".into()));
        }
        if self.timeout_secs == 0 {
            return Err(Error::Config("timeout_secs must be positive".into()));
        }
        if self.output_file.is_empty() || Path::new(&self.output_file).components().count() != 1 {
            return Err(Error::Config(format!("output_file must be a plain file name, got {:?}", self.output_file)));
        }
        Ok(())
    }

    fn make_dir(&self, pass: usize) -> std::result::Result<(Option<tempfile::TempDir>, PathBuf), SegmenterError> {
        let prefix = format!("sphereseg-pass{pass}-");
        let mut builder = tempfile::Builder::new();
        builder.prefix(&prefix);
        let fail = |e: std::io::Error| SegmenterError::Spawn(format!("cannot create exchange dir: {e}"));
        Ok(match &self.workdir {
            WorkdirPolicy::Temporary => {
                let dir = builder.tempdir().map_err(fail)?;
                let path = dir.path().to_path_buf();
                (Some(dir), path)
            }
            WorkdirPolicy::Keep { root } => {
                std::fs::create_dir_all(root).map_err(fail)?;
                (None, builder.tempdir_in(root).map_err(fail)?.keep())
            }
        })
    }

    fn write_inputs(dir: &Path, input: &MultiChannelVolume, ctx: &SegmentContext) -> std::result::Result<(), SegmenterError> {
        let invalid = |e: Error| SegmenterError::InvalidInput(e.to_string());
        for (i, ch) in input.channels().iter().enumerate() {
            let single = MultiChannelVolume::new(vec![ch.clone()]).map_err(invalid)?;
            write_svol(dir.join(format!("input_ch{i}.svol")), &AnyVolume::Scalar(single)).map_err(invalid)?;
        }
        let meta = serde_json::to_vec_pretty(&ExchangeMeta::new(input, ctx))
            .map_err(|e| SegmenterError::InvalidInput(e.to_string()))?;
        std::fs::write(dir.join(META_FILE), meta)
            .map_err(|e| SegmenterError::InvalidInput(format!("cannot write {META_FILE}: {e}")))
    }

    fn run(&self, dir: &Path) -> std::result::Result<(), SegmenterError> {
        let log = |name: &str| {
            File::create(dir.join(name)).map_err(|e| SegmenterError::Spawn(format!("cannot create {name}: {e}")))
        };
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .arg(dir)
            .stdin(Stdio::null())
            .stdout(log("stdout.log")?)
            .stderr(log("stderr.log")?)
            .spawn()
            .map_err(|e| SegmenterError::Spawn(format!("{}: {e}", self.command[0])))?;
        let deadline = Instant::now() + Duration::from_secs(self.timeout_secs);
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(SegmenterError::Timeout(self.timeout_secs));
                }
                Ok(None) => std::thread::sleep(POLL),
                Err(e) => return Err(SegmenterError::Spawn(format!("wait failed: {e}"))),
            }
        };
        if !status.success() {
            let stderr = std::fs::read_to_string(dir.join("stderr.log")).unwrap_or_default();
            let lines: Vec<&str> = stderr.lines().collect();
            let tail = lines[lines.len().saturating_sub(20)..].join("\n");
            return Err(SegmenterError::ProcessFailed {
                code: status.code(),
                stderr: tail,
            });
        }
        Ok(())
    }

    fn read_output(&self, dir: &Path, input: &MultiChannelVolume) -> std::result::Result<LabelVolume, SegmenterError> {
        let path = dir.join(&self.output_file);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(SegmenterError::MissingOutput(path)),
            Err(e) => return Err(SegmenterError::InvalidOutput(format!("{}: {e}", path.display()))),
        };
        let labels = match decode_svol(&bytes) {
            Ok(AnyVolume::Labels(l)) => l,
            Ok(AnyVolume::Scalar(_)) => {
                return Err(SegmenterError::InvalidOutput("expected a u8 label volume, got f32 data".into()))
            }
            Err(e) => return Err(SegmenterError::InvalidOutput(e.to_string())),
        };
        if labels.dims() != input.dims() {
            return Err(SegmenterError::DimensionMismatch {
                expected: input.dims(),
                found: labels.dims(),
            });
        }
        // the output grid is the input grid; spacing from the file is not trusted
        LabelVolume::from_vec(input.dims(), input.spacing(), labels.into_volume().into_data())
            .map_err(|e| SegmenterError::InvalidOutput(e.to_string()))
    }
}

impl Segmenter for ExternalCommand {
    fn segment(
        &self,
        input: &MultiChannelVolume,
        ctx: &SegmentContext,
    ) -> std::result::Result<LabelVolume, SegmenterError> {
        let (_guard, dir) = self.make_dir(ctx.pass)?;
        debug!("segmenter exchange dir {}", dir.display());
        Self::write_inputs(&dir, input, ctx)?;
        self.run(&dir)?;
        self.read_output(&dir, input)
    }
}
