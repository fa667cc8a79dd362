//! Optional TOML config file. Every key can also be given as a flag, and
//! flags win. Relative paths are resolved against the file's directory.
//!
//! ```toml
//! out = "out"
//!
//! [stream]
//! scenario = "p1-mindful-meal.scn"   # or: fixture = "frames.ambf"
//! sidecar = "sidecar.jsonl"          # scenario channel for a fixture
//! frame_interval_ms = 1000
//! tz_offset_min = 0
//! room = "kitchen"
//!
//! [pipeline]
//! pose_detector = "scenario"         # scenario | blob
//! object_detector = "scenario"
//! classifier = "geometric-baseline"
//! threshold = 90
//! speed_domain = "bbox"              # bbox | active
//!
//! [compare]
//! strategy = "by-index"              # by-index | by-weekday
//! per_hour_slot = false
//! min_coverage = 0.0
//! band = [0, 5]
//! ```

use std::path::{Path, PathBuf};

use ambientis::pipeline::PipelineSettings;
use ambientis::stats::PairingStrategy;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub stream: StreamSection,
    #[serde(default)]
    pub pipeline: PipelineSettings,
    #[serde(default)]
    pub compare: CompareSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSection {
    pub scenario: Option<PathBuf>,
    pub fixture: Option<PathBuf>,
    pub sidecar: Option<PathBuf>,
    pub frame_interval_ms: Option<u32>,
    pub tz_offset_min: Option<i32>,
    pub room: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub strategy: Option<PairingStrategy>,
    pub per_hour_slot: Option<bool>,
    pub min_coverage: Option<f64>,
    pub band: Option<(u8, u8)>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(v) = p {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        };
        fix(&mut cfg.out);
        fix(&mut cfg.stream.scenario);
        fix(&mut cfg.stream.fixture);
        fix(&mut cfg.stream.sidecar);
        Ok(cfg)
    }
}
