//! The detector boundary the pipeline calls into.

use std::collections::BTreeMap;
use std::io::Read;
use std::process::{Command, Stdio};
use std::thread;
use std::time::Duration;

use wait_timeout::ChildExt;

use asahi_core::detector::{oracle_detect, OracleError, OracleParams, OracleWindow};
use asahi_core::{Annotation, BBox, Detection, Raster};

use crate::interchange::{self, ParseError};
use crate::ppm;

/// Whether an adapter may be called from several threads at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Capability {
    Serial,
    Concurrent,
}

/// One detector call. `rect` is the covered region in source pixels and the
/// scales take source pixels to the detector's input pixels.
#[derive(Debug, Clone, Copy)]
pub struct PatchRequest<'a> {
    pub image_id: u64,
    pub rect: BBox,
    pub scale_x: f64,
    pub scale_y: f64,
    pub width: u32,
    pub height: u32,
    /// Present when the adapter asked for pixels.
    pub raster: Option<&'a Raster>,
}

#[derive(Debug, thiserror::Error)]
pub enum DetectorError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("no ground truth for image {0}")]
    UnknownImage(u64),
    #[error("adapter needs pixels but none were supplied")]
    NoRaster,
    #[error("could not stage the patch: {0}")]
    Stage(std::io::Error),
    #[error("could not start `{command}`: {source}")]
    Spawn {
        command: String,
        source: std::io::Error,
    },
    #[error("`{command}` exited with {status}: {stderr}")]
    Exit {
        command: String,
        status: String,
        stderr: String,
    },
    #[error("`{command}` printed malformed output: {source}")]
    Parse {
        command: String,
        source: ParseError,
    },
    #[error("`{command}` did not finish within {seconds} s")]
    Timeout { command: String, seconds: f64 },
}

pub trait Detector: Sync {
    fn capability(&self) -> Capability;

    /// Whether requests must carry the resampled patch.
    fn needs_raster(&self) -> bool;

    /// Detections in the patch frame (detector-input pixels).
    fn detect(&self, req: &PatchRequest<'_>) -> Result<Vec<Detection>, DetectorError>;
}

/// Simulated detector reading ground truth instead of pixels.
#[derive(Debug, Clone)]
pub struct OracleDetector {
    pub params: OracleParams,
    pub ground_truth: BTreeMap<u64, Vec<Annotation>>,
}

impl OracleDetector {
    pub fn new(params: OracleParams, ground_truth: BTreeMap<u64, Vec<Annotation>>) -> Self {
        Self {
            params,
            ground_truth,
        }
    }
}

impl Detector for OracleDetector {
    fn capability(&self) -> Capability {
        Capability::Concurrent
    }

    fn needs_raster(&self) -> bool {
        false
    }

    fn detect(&self, req: &PatchRequest<'_>) -> Result<Vec<Detection>, DetectorError> {
        let gt = self
            .ground_truth
            .get(&req.image_id)
            .ok_or(DetectorError::UnknownImage(req.image_id))?;
        let window = OracleWindow {
            image_id: req.image_id,
            rect: req.rect,
            scale_x: req.scale_x,
            scale_y: req.scale_y,
        };
        Ok(oracle_detect(gt, &self.params, &window)?)
    }
}

/// Runs a shell command per patch. `{input}` in the template is replaced by
/// the path of a P6 PPM holding the patch; the command prints interchange
/// lines with coordinates in that patch's pixels. The image id column is
/// ignored.
#[derive(Debug, Clone)]
pub struct ExternalDetector {
    pub template: String,
    pub timeout: Duration,
    pub capability: Capability,
}

impl ExternalDetector {
    pub fn new(template: impl Into<String>, timeout: Duration) -> Self {
        Self {
            template: template.into(),
            timeout,
            capability: Capability::Concurrent,
        }
    }

    pub fn detect_file(&self, path: &std::path::Path) -> Result<Vec<Detection>, DetectorError> {
        let quoted = format!("'{}'", path.display().to_string().replace('\'', r"'\''"));
        let command = self.template.replace("{input}", &quoted);
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&command)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|source| DetectorError::Spawn {
                command: command.clone(),
                source,
            })?;

        // drain both pipes so a chatty command cannot block on a full buffer
        let mut stdout = child.stdout.take().expect("piped");
        let mut stderr = child.stderr.take().expect("piped");
        let out_reader = thread::spawn(move || {
            let mut s = String::new();
            let _ = stdout.read_to_string(&mut s);
            s
        });
        let err_reader = thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            s
        });

        let status = match child.wait_timeout(self.timeout) {
            Ok(Some(status)) => status,
            Ok(None) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(DetectorError::Timeout {
                    command,
                    seconds: self.timeout.as_secs_f64(),
                });
            }
            Err(source) => return Err(DetectorError::Spawn { command, source }),
        };
        let out = out_reader.join().unwrap_or_default();
        let err = err_reader.join().unwrap_or_default();
        if !status.success() {
            return Err(DetectorError::Exit {
                command,
                status: status.to_string(),
                stderr: err.trim().to_string(),
            });
        }
        let records = interchange::parse(&out).map_err(|source| DetectorError::Parse { command, source })?;
        Ok(records.into_iter().map(|r| r.detection).collect())
    }
}

impl Detector for ExternalDetector {
    fn capability(&self) -> Capability {
        self.capability
    }

    fn needs_raster(&self) -> bool {
        true
    }

    fn detect(&self, req: &PatchRequest<'_>) -> Result<Vec<Detection>, DetectorError> {
        let raster = req.raster.ok_or(DetectorError::NoRaster)?;
        let file = tempfile::Builder::new()
            .prefix("asahi-patch-")
            .suffix(".ppm")
            .tempfile()
            .map_err(DetectorError::Stage)?;
        ppm::write_ppm(raster, std::io::BufWriter::new(file.as_file())).map_err(DetectorError::Stage)?;
        self.detect_file(file.path())
    }
}
