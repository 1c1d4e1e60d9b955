//! Pulse transit times per beat and their per-interval weighted average.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiducials::BeatPair;
use crate::segmentation::MeasurementInterval;

/// Normal-consistency factor turning a MAD into a standard deviation.
const MAD_SCALE: f64 = 1.4826;
/// Same for the mean absolute deviation, used when the MAD is zero.
const MEAN_AD_SCALE: f64 = 1.2533;

/// Which PPG fiducial ends the transit: foot, maximum slope or peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PttKind {
    Foot,
    Dslope,
    Peak,
}

impl PttKind {
    pub const ALL: [PttKind; 3] = [PttKind::Foot, PttKind::Dslope, PttKind::Peak];

    /// The distal fiducial time of `pair` for this kind.
    pub fn fiducial_time(self, pair: &BeatPair) -> f64 {
        match self {
            PttKind::Foot => pair.ppg.foot_s,
            PttKind::Dslope => pair.ppg.maxslope_s,
            PttKind::Peak => pair.ppg.peak_s,
        }
    }

    /// Report label, e.g. `PTT_p`.
    pub fn label(self) -> &'static str {
        match self {
            PttKind::Foot => "PTT_f",
            PttKind::Dslope => "PTT_d",
            PttKind::Peak => "PTT_p",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PttKind::Foot => "foot",
            PttKind::Dslope => "dslope",
            PttKind::Peak => "peak",
        }
    }
}

impl fmt::Display for PttKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PttKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "foot" => Ok(PttKind::Foot),
            "dslope" => Ok(PttKind::Dslope),
            "peak" => Ok(PttKind::Peak),
            other => Err(Error::Config(format!(
                "unknown PTT kind `{other}` (expected foot, dslope or peak)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PttParams {
    pub kind: PttKind,
    /// Width of the Gaussian emphasis around each reading moment.
    pub sigma_s: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub min_beats: usize,
    pub outlier_mads: f64,
}

impl Default for PttParams {
    fn default() -> Self {
        Self {
            kind: PttKind::Peak,
            sigma_s: 15.0,
            min_s: 0.05,
            max_s: 0.6,
            min_beats: 3,
            outlier_mads: 3.0,
        }
    }
}

impl PttParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma_s > 0.0
            && self.min_s > 0.0
            && self.min_s < self.max_s
            && self.min_beats >= 1
            && self.outlier_mads > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid PTT parameters: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PttSample {
    /// S1 time of the beat.
    pub time_s: f64,
    pub ptt_s: f64,
    pub kind: PttKind,
}

/// One PTT value per reference reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PttAggregate {
    pub interval_index: usize,
    pub kind: PttKind,
    pub ptt_s: f64,
    pub n_beats: usize,
    pub ref_sbp_mmhg: f64,
    pub ref_dbp_mmhg: f64,
}

/// Transit time from S1 to the kind's fiducial; values outside
/// `[params.min_s, params.max_s]` are dropped.
pub fn compute_ptt(pairs: &[BeatPair], kind: PttKind, params: &PttParams) -> Vec<PttSample> {
    pairs
        .iter()
        .map(|p| PttSample {
            time_s: p.s1.time_s,
            ptt_s: kind.fiducial_time(p) - p.s1.time_s,
            kind,
        })
        .filter(|s| s.ptt_s >= params.min_s && s.ptt_s <= params.max_s)
        .collect()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len();
    if m % 2 == 1 {
        s[m / 2]
    } else {
        0.5 * (s[m / 2 - 1] + s[m / 2])
    }
}

/// Robust spread estimate around the median: scaled MAD, or the scaled mean
/// absolute deviation when more than half the samples sit on the median.
fn spread(values: &[f64], center: f64) -> f64 {
    let dev: Vec<f64> = values.iter().map(|v| (v - center).abs()).collect();
    let mad = median(&dev);
    if mad > 0.0 {
        MAD_SCALE * mad
    } else {
        MEAN_AD_SCALE * dev.iter().sum::<f64>() / dev.len() as f64
    }
}

/// Drop samples further than `n_mads` robust deviations from the median,
/// repeating until nothing more is removed.
pub fn reject_outliers(samples: &[PttSample], n_mads: f64) -> Vec<PttSample> {
    let mut kept = samples.to_vec();
    loop {
        if kept.len() < 2 {
            return kept;
        }
        let values: Vec<f64> = kept.iter().map(|s| s.ptt_s).collect();
        let center = median(&values);
        let scale = spread(&values, center);
        if scale == 0.0 {
            return kept;
        }
        let before = kept.len();
        kept.retain(|s| (s.ptt_s - center).abs() <= n_mads * scale);
        if kept.len() == before {
            return kept;
        }
    }
}

/// Gaussian-weighted mean of `samples` around the interval's reading moment.
pub fn aggregate_interval(
    samples: &[PttSample],
    interval: &MeasurementInterval,
    kind: PttKind,
    params: &PttParams,
) -> Result<PttAggregate> {
    let used: Vec<&PttSample> = samples.iter().filter(|s| s.kind == kind).collect();
    if used.len() < params.min_beats {
        return Err(Error::SparseInterval {
            interval: interval.index,
            found: used.len(),
            required: params.min_beats,
        });
    }
    if let Some(s) = used.iter().find(|s| !interval.contains(s.time_s)) {
        return Err(Error::InvalidArgument(format!(
            "sample at {:.3} s lies outside interval {} [{:.3}, {:.3})",
            s.time_s, interval.index, interval.begin_s, interval.end_s
        )));
    }
    let t3 = interval.moments.t3_s;
    let two_var = 2.0 * params.sigma_s * params.sigma_s;
    let weights: Vec<f64> = used
        .iter()
        .map(|s| (-(s.time_s - t3).powi(2) / two_var).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::SparseInterval {
            interval: interval.index,
            found: 0,
            required: params.min_beats,
        });
    }
    // offsets from the first value keep equal samples exact; the clamp absorbs rounding
    let anchor = used[0].ptt_s;
    let offset: f64 = used
        .iter()
        .zip(&weights)
        .map(|(s, w)| (s.ptt_s - anchor) * w)
        .sum::<f64>()
        / total;
    let (lo, hi) = used.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
        (lo.min(s.ptt_s), hi.max(s.ptt_s))
    });
    let ptt_s = (anchor + offset).clamp(lo, hi);
    Ok(PttAggregate {
        interval_index: interval.index,
        kind,
        ptt_s,
        n_beats: used.len(),
        ref_sbp_mmhg: interval.ref_sbp_mmhg,
        ref_dbp_mmhg: interval.ref_dbp_mmhg,
    })
}
