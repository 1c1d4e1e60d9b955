//! Cuff episodes on the FSR channel and the measurement intervals they define.
//!
//! Each episode has three key moments: inflation start (`t1`), deflation start
//! (`t2`, the pressure maximum) and deflation end (`t3`, when the reference
//! reading is taken). Intervals are split at midpoints of consecutive `t3`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::TimeSeries;

/// Shortest run above the arming level accepted as a cuff episode.
const MIN_EPISODE_S: f64 = 1.0;

/// Arming level as a fraction of the global range above the global baseline.
const ARM_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentationParams {
    pub min_gap_s: f64,
    /// Crossing level as a fraction of the episode amplitude above baseline.
    pub threshold_fraction: f64,
    pub baseline_window_s: f64,
    pub baseline_percentile: f64,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            min_gap_s: 10.0,
            threshold_fraction: 0.1,
            baseline_window_s: 60.0,
            baseline_percentile: 5.0,
        }
    }
}

impl SegmentationParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.min_gap_s >= 0.0
            && self.threshold_fraction > 0.0
            && self.threshold_fraction < 1.0
            && self.baseline_window_s > 0.0
            && (0.0..=100.0).contains(&self.baseline_percentile);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid segmentation parameters: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyMoments {
    pub t1_s: f64,
    pub t2_s: f64,
    pub t3_s: f64,
}

impl KeyMoments {
    pub fn new(t1_s: f64, t2_s: f64, t3_s: f64) -> Result<Self> {
        if t1_s < t2_s && t2_s < t3_s {
            Ok(Self { t1_s, t2_s, t3_s })
        } else {
            Err(Error::InvalidArgument(format!(
                "key moments must satisfy t1 < t2 < t3, got ({t1_s}, {t2_s}, {t3_s})"
            )))
        }
    }
}

/// Window `[begin_s, end_s)` around one cuff reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementInterval {
    pub index: usize,
    pub begin_s: f64,
    pub end_s: f64,
    pub moments: KeyMoments,
    pub ref_sbp_mmhg: f64,
    pub ref_dbp_mmhg: f64,
}

impl MeasurementInterval {
    pub fn contains(&self, time_s: f64) -> bool {
        time_s >= self.begin_s && time_s < self.end_s
    }
}

/// Linear-interpolated percentile (0..=100) of `data`.
pub(crate) fn percentile(data: &[f64], p: f64) -> f64 {
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = p / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (rank - lo as f64)
}

/// Runs of consecutive indices where `x > level`, as half-open ranges.
fn runs_above(x: &[f64], level: f64) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &v) in x.iter().enumerate() {
        match (v > level, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, x.len()));
    }
    runs
}

/// Cuff episodes in chronological order. A flat signal has none.
///
/// Episodes are armed where the signal exceeds half its global range, then
/// refined: `t2` is the episode maximum, and `t1`/`t3` are the linearly
/// interpolated up- and down-crossings of `baseline + fraction * amplitude`,
/// with the baseline a low percentile of the window around `t2`. Episodes cut
/// off by either end of the recording are skipped.
pub fn detect_key_moments(fsr: &TimeSeries, params: &SegmentationParams) -> Vec<KeyMoments> {
    let x = fsr.samples();
    if x.len() < 2 {
        return Vec::new();
    }
    let global_base = percentile(x, params.baseline_percentile);
    let global_max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = global_max - global_base;
    let scale = global_max.abs().max(global_base.abs());
    if !(range > 1e-9 * scale.max(1e-300)) {
        return Vec::new();
    }

    let arm = global_base + ARM_FRACTION * range;
    let min_gap = fsr.seconds_to_samples(params.min_gap_s);
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for run in runs_above(x, arm) {
        match merged.last_mut() {
            Some(last) if run.0 - last.1 < min_gap => last.1 = run.1,
            _ => merged.push(run),
        }
    }

    let min_len = fsr.seconds_to_samples(MIN_EPISODE_S);
    let half_window = fsr.seconds_to_samples(params.baseline_window_s / 2.0);
    let mut moments = Vec::new();
    for (lo, hi) in merged.into_iter().filter(|(lo, hi)| hi - lo >= min_len) {
        let peak = (lo..hi).fold(lo, |best, i| if x[i] > x[best] { i } else { best });
        let win = &x[peak.saturating_sub(half_window)..(peak + half_window + 1).min(x.len())];
        let baseline = percentile(win, params.baseline_percentile);
        let amplitude = x[peak] - baseline;
        if !(amplitude > 0.0) {
            continue;
        }
        let level = baseline + params.threshold_fraction * amplitude;
        let crossing = |below: usize, above: usize| {
            let frac = (level - x[below]) / (x[above] - x[below]);
            fsr.time_of(below) + frac * (above as f64 - below as f64) / fsr.sample_rate_hz()
        };

        let Some(up) = (1..=peak).rev().find(|&i| x[i - 1] < level) else {
            log::debug!("cuff episode at {:.1} s has no inflation start", fsr.time_of(peak));
            continue;
        };
        let Some(down) = (peak + 1..x.len()).find(|&i| x[i] < level) else {
            log::debug!("cuff episode at {:.1} s has no deflation end", fsr.time_of(peak));
            continue;
        };
        let t1 = crossing(up - 1, up);
        let t3 = crossing(down, down - 1);
        if let Ok(m) = KeyMoments::new(t1, fsr.time_of(peak), t3) {
            moments.push(m);
        }
    }
    moments
}

/// Split `[span.0, span.1)` at midpoints of consecutive `t3` and attach the
/// reference readings positionally.
pub fn partition_intervals(
    moments: &[KeyMoments],
    recording_span: (f64, f64),
    refs: &[(f64, f64)],
) -> Result<Vec<MeasurementInterval>> {
    if moments.len() != refs.len() {
        return Err(Error::ManifestMismatch {
            subject: String::new(),
            detected: moments.len(),
            expected: refs.len(),
        });
    }
    if moments.is_empty() {
        return Err(Error::InvalidArgument("no cuff episodes to partition".into()));
    }
    if moments.windows(2).any(|w| w[0].t3_s >= w[1].t3_s) {
        return Err(Error::InvalidArgument("key moments are not chronological".into()));
    }
    let (span_begin, span_end) = recording_span;
    let last = moments.len() - 1;
    moments
        .iter()
        .zip(refs)
        .enumerate()
        .map(|(k, (m, &(sbp, dbp)))| {
            if !(sbp > dbp && dbp > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "reading {k}: need sbp > dbp > 0, got {sbp}/{dbp}"
                )));
            }
            let begin_s = if k == 0 {
                span_begin
            } else {
                0.5 * (moments[k - 1].t3_s + m.t3_s)
            };
            let end_s = if k == last {
                span_end
            } else {
                0.5 * (m.t3_s + moments[k + 1].t3_s)
            };
            if !(begin_s <= m.t1_s && m.t3_s <= end_s) {
                return Err(Error::InvalidArgument(format!(
                    "cuff episode {k} ({:.2}..{:.2} s) does not fit its interval [{begin_s:.2}, {end_s:.2})",
                    m.t1_s, m.t3_s
                )));
            }
            Ok(MeasurementInterval {
                index: k,
                begin_s,
                end_s,
                moments: *m,
                ref_sbp_mmhg: sbp,
                ref_dbp_mmhg: dbp,
            })
        })
        .collect()
}
