//! Uniformly sampled channels and the preprocessing chain applied to every
//! recording before any timing is measured.

mod iir;
mod median;
mod normalize;
mod preprocess;

pub use iir::{design_filter, filtfilt, lfilter_zi, FilterKind, FilterSpec, IirCoefficients};
pub use median::median_filter;
pub use normalize::z_normalize;
pub use preprocess::{preprocess_recording, ChannelFilters};

use crate::error::{Error, Result};

/// Sample rate of every ingested recording.
pub const RECORDING_RATE_HZ: f64 = 1000.0;

/// One uniformly sampled channel. Sample `i` sits at `start_time_s + i / sample_rate_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    samples: Vec<f64>,
    sample_rate_hz: f64,
    start_time_s: f64,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64, start_time_s: f64) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sample rate must be positive and finite, got {sample_rate_hz}"
            )));
        }
        if !start_time_s.is_finite() {
            return Err(Error::InvalidArgument("start time must be finite".into()));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            start_time_s,
        })
    }

    /// Same grid as `self`, new sample values.
    pub fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            samples,
            sample_rate_hz: self.sample_rate_hz,
            start_time_s: self.start_time_s,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn start_time_s(&self) -> f64 {
        self.start_time_s
    }

    pub fn time_of(&self, index: usize) -> f64 {
        self.start_time_s + index as f64 / self.sample_rate_hz
    }

    /// Time just past the last sample, i.e. the right edge of the recording span.
    pub fn end_time_s(&self) -> f64 {
        self.time_of(self.samples.len())
    }

    /// Nearest sample index for `time_s`, clamped to the series.
    pub fn index_at(&self, time_s: f64) -> usize {
        let raw = ((time_s - self.start_time_s) * self.sample_rate_hz).round();
        if raw <= 0.0 || self.samples.is_empty() {
            0
        } else {
            (raw as usize).min(self.samples.len() - 1)
        }
    }

    pub(crate) fn seconds_to_samples(&self, seconds: f64) -> usize {
        (seconds * self.sample_rate_hz).round().max(0.0) as usize
    }

    pub(crate) fn require_non_empty(&self) -> Result<()> {
        if self.samples.is_empty() {
            Err(Error::InvalidArgument("empty time series".into()))
        } else {
            Ok(())
        }
    }
}

/// Three synchronized channels of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject_id: String,
    pub pcg: TimeSeries,
    pub ppg: TimeSeries,
    pub fsr: TimeSeries,
}

impl Recording {
    pub fn new(subject_id: impl Into<String>, pcg: TimeSeries, ppg: TimeSeries, fsr: TimeSeries) -> Result<Self> {
        let rec = Self {
            subject_id: subject_id.into(),
            pcg,
            ppg,
            fsr,
        };
        rec.validate()?;
        Ok(rec)
    }

    /// All channels must share rate, start time and length.
    pub fn validate(&self) -> Result<()> {
        let channels = [("pcg", &self.pcg), ("ppg", &self.ppg), ("fsr", &self.fsr)];
        let (_, first) = channels[0];
        for (name, ch) in channels {
            if ch.is_empty() {
                return Err(Error::InvalidArgument(format!("channel `{name}` is empty")));
            }
            if ch.sample_rate_hz() != first.sample_rate_hz()
                || ch.len() != first.len()
                || ch.start_time_s() != first.start_time_s()
            {
                return Err(Error::InvalidArgument(format!(
                    "channel `{name}` does not share rate/length/start with `pcg`"
                )));
            }
        }
        Ok(())
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.pcg.sample_rate_hz()
    }

    pub fn len(&self) -> usize {
        self.pcg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pcg.is_empty()
    }

    /// `[begin, end)` of the recording in seconds.
    pub fn span(&self) -> (f64, f64) {
        (self.pcg.start_time_s(), self.pcg.end_time_s())
    }
}
