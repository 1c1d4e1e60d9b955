//! Pipeline configuration.
//!
//! The file is TOML with dotted keys, e.g. `filters.pcg.low_hz = 20`. Keys it
//! sets are laid over the defaults, so a partial file only changes what it
//! names. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiducials::FiducialParams;
use crate::ptt::PttParams;
use crate::segmentation::SegmentationParams;
use crate::signal::{design_filter, ChannelFilters, RECORDING_RATE_HZ};
use crate::synthgen::SynthParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Odd window, in samples, of the despiking median filter.
    pub median_window: usize,
    pub seed: u64,
    pub filters: ChannelFilters,
    pub segmentation: SegmentationParams,
    pub fiducials: FiducialParams,
    pub ptt: PttParams,
    pub synth: SynthParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            median_window: 5,
            seed: 1,
            filters: ChannelFilters::default(),
            segmentation: SegmentationParams::default(),
            fiducials: FiducialParams::default(),
            ptt: PttParams::default(),
            synth: SynthParams::default(),
        }
    }
}

fn overlay(base: &mut toml::Table, top: toml::Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => overlay(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        let mut merged = toml::Table::try_from(Self::default())
            .map_err(|e| Error::Internal(format!("default config does not serialize: {e}")))?;
        overlay(&mut merged, user);
        let cfg: Self = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Defaults when `path` is `None`.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(format!("config serialization: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.median_window == 0 || self.median_window % 2 == 0 {
            return Err(Error::Config(format!(
                "median_window must be a positive odd number, got {}",
                self.median_window
            )));
        }
        for (name, spec) in [
            ("fsr", &self.filters.fsr),
            ("ppg", &self.filters.ppg),
            ("pcg", &self.filters.pcg),
        ] {
            let coeffs = design_filter(spec, RECORDING_RATE_HZ)
                .map_err(|e| Error::Config(format!("filters.{name}: {e}")))?;
            if !coeffs.is_stable() {
                return Err(Error::Config(format!("filters.{name}: realized filter is unstable")));
            }
        }
        self.segmentation.validate()?;
        self.fiducials.validate()?;
        self.ptt.validate()?;
        self.synth.validate()
    }
}
