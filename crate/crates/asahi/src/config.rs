//! Run settings from a flat `key = value` file, overridden by flags.
//!
//! Blank lines and lines starting with `#` are ignored. Recognised keys:
//! `overlap`, `limit`, `target`, `suppressor`, `metric`, `threshold`,
//! `parallelism`, `seed`.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use asahi_core::nms::{Suppressor, SOFT_NMS_SCORE_FLOOR};
use asahi_core::slicing::SlicingError;
use asahi_core::{AsahiConfig, OverlapMetric, SuppressionConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

impl From<SlicingError> for ConfigError {
    fn from(e: SlicingError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

/// Post-processing family chosen by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SuppressorKind {
    /// Cluster suppression; with the default metric and threshold this is CDN.
    #[default]
    Cluster,
    Greedy,
    Soft,
    Wbf,
}

impl FromStr for SuppressorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cdn" | "cluster" => Ok(SuppressorKind::Cluster),
            "nms" | "greedy" => Ok(SuppressorKind::Greedy),
            "soft" | "soft-nms" => Ok(SuppressorKind::Soft),
            "wbf" => Ok(SuppressorKind::Wbf),
            _ => Err(format!("unknown suppressor `{s}` (expected cdn, cluster, nms, soft or wbf)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunConfig {
    pub overlap: Option<f64>,
    pub limit: Option<u32>,
    pub target: Option<u32>,
    pub suppressor: Option<SuppressorKind>,
    pub metric: Option<OverlapMetric>,
    pub threshold: Option<f64>,
    pub parallelism: Option<usize>,
    pub seed: Option<u64>,
}

fn parse_value<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError::Line {
        line,
        message: format!("bad value `{v}` for `{key}`"),
    })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Line {
                    line: n,
                    message: format!("expected key = value, got `{line}`"),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            match k {
                "overlap" => c.overlap = Some(parse_value(n, k, v)?),
                "limit" => c.limit = Some(parse_value(n, k, v)?),
                "target" => c.target = Some(parse_value(n, k, v)?),
                "suppressor" => {
                    c.suppressor = Some(v.parse().map_err(|message| ConfigError::Line { line: n, message })?)
                }
                "metric" => c.metric = Some(parse_value(n, k, v)?),
                "threshold" => c.threshold = Some(parse_value(n, k, v)?),
                "parallelism" => c.parallelism = Some(parse_value(n, k, v)?),
                "seed" => c.seed = Some(parse_value(n, k, v)?),
                _ => {
                    return Err(ConfigError::Line {
                        line: n,
                        message: format!("unknown key `{k}`"),
                    })
                }
            }
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Values set in `over` replace those in `self`.
    pub fn overridden_by(self, over: &RunConfig) -> RunConfig {
        RunConfig {
            overlap: over.overlap.or(self.overlap),
            limit: over.limit.or(self.limit),
            target: over.target.or(self.target),
            suppressor: over.suppressor.or(self.suppressor),
            metric: over.metric.or(self.metric),
            threshold: over.threshold.or(self.threshold),
            parallelism: over.parallelism.or(self.parallelism),
            seed: over.seed.or(self.seed),
        }
    }

    pub fn asahi(&self) -> Result<AsahiConfig, ConfigError> {
        let d = AsahiConfig::default();
        Ok(AsahiConfig::new(
            self.overlap.unwrap_or(d.overlap_ratio),
            self.limit.unwrap_or(d.limiting_dimension),
            self.target.unwrap_or(d.resize_target),
        )?)
    }

    pub fn suppressor(&self) -> Result<Suppressor, ConfigError> {
        let kind = self.suppressor.unwrap_or_default();
        let metric = self.metric.unwrap_or(match kind {
            SuppressorKind::Greedy => OverlapMetric::Iou,
            _ => OverlapMetric::Diou,
        });
        let s = match kind {
            SuppressorKind::Cluster | SuppressorKind::Greedy => {
                let cfg = SuppressionConfig::new(metric, self.threshold.unwrap_or(0.5), true)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                if kind == SuppressorKind::Cluster {
                    Suppressor::Cluster(cfg)
                } else {
                    Suppressor::Greedy(cfg)
                }
            }
            SuppressorKind::Soft => Suppressor::Soft {
                sigma: self.threshold.unwrap_or(0.5),
                score_floor: SOFT_NMS_SCORE_FLOOR,
            },
            SuppressorKind::Wbf => Suppressor::Wbf {
                threshold: self.threshold.unwrap_or(0.55),
            },
        };
        // surface bad sigma or threshold before any work starts
        s.apply(&[]).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(s)
    }

    pub fn parallelism(&self) -> Result<usize, ConfigError> {
        match self.parallelism {
            Some(0) => Err(ConfigError::Invalid("parallelism must be at least 1".into())),
            Some(n) => Ok(n),
            None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}
