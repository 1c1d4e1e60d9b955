use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::Result;
use crate::signal::{design_filter, filtfilt, median_filter, z_normalize, FilterSpec, Recording, TimeSeries};

/// Per-channel frequency-selective filters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelFilters {
    pub fsr: FilterSpec,
    pub ppg: FilterSpec,
    pub pcg: FilterSpec,
}

impl Default for ChannelFilters {
    fn default() -> Self {
        Self {
            fsr: FilterSpec::low_pass(0.3, 3),
            ppg: FilterSpec::band_pass(0.5, 20.0, 3),
            pcg: FilterSpec::band_pass(20.0, 240.0, 3),
        }
    }
}

fn clean_channel(x: &TimeSeries, spec: &FilterSpec, median_window: usize) -> Result<TimeSeries> {
    let despiked = median_filter(x, median_window)?;
    let normalized = z_normalize(&despiked)?;
    let coeffs = design_filter(spec, x.sample_rate_hz())?;
    filtfilt(&coeffs, &normalized)
}

/// Median filter, z-score, then the channel's zero-phase filter, for each channel.
pub fn preprocess_recording(raw: &Recording, config: &PipelineConfig) -> Result<Recording> {
    raw.validate()?;
    let filters = &config.filters;
    let w = config.median_window;
    let pcg = clean_channel(&raw.pcg, &filters.pcg, w).map_err(|e| e.in_channel("pcg"))?;
    let ppg = clean_channel(&raw.ppg, &filters.ppg, w).map_err(|e| e.in_channel("ppg"))?;
    let fsr = clean_channel(&raw.fsr, &filters.fsr, w).map_err(|e| e.in_channel("fsr"))?;
    Ok(Recording {
        subject_id: raw.subject_id.clone(),
        pcg,
        ppg,
        fsr,
    })
}
