//! Per-beat timing references: PPG foot, maximum slope and peak (distal),
//! and the PCG S1 heart sound (proximal).
//!
//! PPG beats are found first. Each beat's S1 is then the strongest energy
//! peak in a bounded window before its foot; the window's lower bound of
//! 50 ms excludes the S2 of the same cycle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiducialParams {
    pub envelope_window_s: f64,
    pub min_peak_separation_s: f64,
    /// Peaks must reach this fraction of the median peak prominence.
    pub prominence_fraction: f64,
    pub maxslope_lookback_s: f64,
    /// Longest accepted PPG upstroke (foot to peak).
    pub max_upstroke_s: f64,
    /// S1 search window is `[foot - s1_search_max_s, foot - s1_search_min_s]`.
    pub s1_search_min_s: f64,
    pub s1_search_max_s: f64,
    /// S1 candidates below this fraction of the global envelope maximum are ignored.
    pub s1_min_relative_amplitude: f64,
    pub s1_refractory_s: f64,
}

impl Default for FiducialParams {
    fn default() -> Self {
        Self {
            envelope_window_s: 0.020,
            min_peak_separation_s: 0.3,
            prominence_fraction: 0.5,
            maxslope_lookback_s: 0.4,
            max_upstroke_s: 0.6,
            s1_search_min_s: 0.05,
            s1_search_max_s: 0.6,
            s1_min_relative_amplitude: 0.1,
            s1_refractory_s: 0.3,
        }
    }
}

impl FiducialParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.envelope_window_s > 0.0
            && self.min_peak_separation_s > 0.0
            && self.prominence_fraction >= 0.0
            && self.maxslope_lookback_s > 0.0
            && self.max_upstroke_s > 0.0
            && self.s1_search_min_s >= 0.0
            && self.s1_search_min_s < self.s1_search_max_s
            && (0.0..=1.0).contains(&self.s1_min_relative_amplitude)
            && self.s1_refractory_s >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid fiducial parameters: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpgBeat {
    pub foot_s: f64,
    pub maxslope_s: f64,
    pub peak_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct S1Event {
    pub time_s: f64,
    pub envelope_amplitude: f64,
}

/// One cardiac cycle: proximal S1 and the distal PPG fiducials it drives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatPair {
    pub s1: S1Event,
    pub ppg: PpgBeat,
}

/// Moving average of the squared signal, scaled to unit maximum.
///
/// The averaging window spans `envelope_window_s` centred on each sample;
/// with an even sample count the two end taps get half weight so the window
/// stays symmetric.
pub fn pcg_envelope(pcg: &TimeSeries, params: &FiducialParams) -> Result<TimeSeries> {
    pcg.require_non_empty()?;
    let x = pcg.samples();
    let n = x.len();
    let width = pcg.seconds_to_samples(params.envelope_window_s).max(1);
    let half = width / 2;
    let end_weight = if width % 2 == 0 { 0.5 } else { 1.0 };

    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in x {
        acc += v * v;
        prefix.push(acc);
    }
    let sq = |i: isize| -> f64 {
        if i < 0 || i as usize >= n {
            0.0
        } else {
            x[i as usize] * x[i as usize]
        }
    };
    let mut env: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            let mut s = prefix[hi] - prefix[lo];
            if end_weight != 1.0 {
                s -= (1.0 - end_weight)
                    * (sq(i as isize - half as isize) + sq((i + half) as isize));
            }
            s.max(0.0) / width as f64
        })
        .collect();

    let max = env.iter().copied().fold(0.0f64, f64::max);
    if !(max > 0.0) || !max.is_finite() {
        return Err(Error::DegenerateSignal("PCG has no energy".into()));
    }
    env.iter_mut().for_each(|v| *v /= max);
    Ok(pcg.with_samples(env))
}

/// Local maxima; a plateau reports its first sample.
fn local_maxima(x: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < x.len() {
        if x[i] > x[i - 1] {
            let mut j = i;
            while j + 1 < x.len() && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < x.len() && x[j + 1] < x[i] {
                peaks.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Topographic prominence of each peak.
fn prominences(x: &[f64], peaks: &[usize]) -> Vec<f64> {
    peaks
        .iter()
        .map(|&p| {
            let h = x[p];
            let mut left_min = h;
            for i in (0..p).rev() {
                if x[i] > h {
                    break;
                }
                left_min = left_min.min(x[i]);
            }
            let mut right_min = h;
            for &v in &x[p + 1..] {
                if v > h {
                    break;
                }
                right_min = right_min.min(v);
            }
            h - left_min.max(right_min)
        })
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

/// Systolic peaks: separated by at least `min_peak_separation_s` (taller
/// peaks win), then gated at `prominence_fraction` of the median prominence of
/// the surviving set, repeated until the set no longer changes.
fn ppg_peaks(x: &[f64], min_distance: usize, prominence_fraction: f64) -> Vec<usize> {
    let candidates = local_maxima(x);
    let prom = prominences(x, &candidates);

    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| x[candidates[b]].total_cmp(&x[candidates[a]]).then(a.cmp(&b)));
    let mut keep = vec![true; candidates.len()];
    for &k in &order {
        if !keep[k] {
            continue;
        }
        let p = candidates[k];
        for j in (0..k).rev() {
            if p - candidates[j] >= min_distance {
                break;
            }
            keep[j] = false;
        }
        for j in k + 1..candidates.len() {
            if candidates[j] - p >= min_distance {
                break;
            }
            keep[j] = false;
        }
    }
    let mut kept: Vec<(usize, f64)> = candidates
        .iter()
        .zip(&prom)
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|((&c, &p), _)| (c, p))
        .collect();

    loop {
        if kept.is_empty() {
            break;
        }
        let proms: Vec<f64> = kept.iter().map(|&(_, p)| p).collect();
        let gate = prominence_fraction * median(&proms);
        let before = kept.len();
        kept.retain(|&(_, p)| p >= gate);
        if kept.len() == before {
            break;
        }
    }
    kept.into_iter().map(|(c, _)| c).collect()
}

/// Foot, maximum-slope and peak of every PPG beat, in time order.
///
/// The maximum slope is the largest first difference within
/// `maxslope_lookback_s` before the peak (not reaching back past the previous
/// peak); the foot is the minimum between the previous peak and that point.
/// Ties go to the earliest sample.
pub fn detect_ppg_beats(ppg: &TimeSeries, params: &FiducialParams) -> Result<Vec<PpgBeat>> {
    let x = ppg.samples();
    let min_distance = ppg.seconds_to_samples(params.min_peak_separation_s).max(1);
    let peaks = ppg_peaks(x, min_distance, params.prominence_fraction);
    let lookback = ppg.seconds_to_samples(params.maxslope_lookback_s).max(1);

    let mut beats = Vec::with_capacity(peaks.len());
    for (k, &p) in peaks.iter().enumerate() {
        let prev = if k == 0 { 0 } else { peaks[k - 1] };
        let lo = p.saturating_sub(lookback).max(prev);
        if lo >= p {
            continue;
        }
        // diff[i] = x[i + 1] - x[i], attributed to sample i
        let maxslope = (lo..p).fold(lo, |best, i| {
            if x[i + 1] - x[i] > x[best + 1] - x[best] {
                i
            } else {
                best
            }
        });
        let foot = (prev..=maxslope).fold(prev, |best, i| if x[i] < x[best] { i } else { best });
        let beat = PpgBeat {
            foot_s: ppg.time_of(foot),
            maxslope_s: ppg.time_of(maxslope),
            peak_s: ppg.time_of(p),
        };
        if beat.peak_s - beat.foot_s < params.max_upstroke_s {
            beats.push(beat);
        }
    }
    if beats.len() < 2 {
        return Err(Error::InsufficientBeats {
            found: beats.len(),
            required: 2,
        });
    }
    Ok(beats)
}

/// Pair each PPG beat with the largest envelope peak in its S1 search window.
/// Beats whose window has no peak above the amplitude floor are dropped, as
/// is any beat whose S1 falls within the refractory period of the previous one.
pub fn detect_s1(
    envelope: &TimeSeries,
    beats: &[PpgBeat],
    params: &FiducialParams,
) -> Result<Vec<BeatPair>> {
    if beats.is_empty() {
        return Err(Error::InvalidArgument("no PPG beats to anchor S1 search".into()));
    }
    let e = envelope.samples();
    if e.len() < 3 {
        return Err(Error::InvalidArgument("envelope too short".into()));
    }
    let global_max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = params.s1_min_relative_amplitude * global_max;
    let is_local_max = |i: usize| {
        if i == 0 || i + 1 >= e.len() || !(e[i] > e[i - 1]) {
            return false;
        }
        // plateau: first sample counts if the plateau ends by falling
        let mut j = i;
        while j + 1 < e.len() && e[j + 1] == e[i] {
            j += 1;
        }
        j + 1 < e.len() && e[j + 1] < e[i]
    };

    let mut pairs: Vec<BeatPair> = Vec::with_capacity(beats.len());
    for beat in beats {
        let lo_t = beat.foot_s - params.s1_search_max_s;
        let hi_t = beat.foot_s - params.s1_search_min_s;
        if hi_t < envelope.start_time_s() {
            continue;
        }
        let lo = envelope.index_at(lo_t.max(envelope.start_time_s()));
        let hi = envelope.index_at(hi_t);
        // keep the window inside the transit bounds after rounding to samples
        let lo = if envelope.time_of(lo) < lo_t { lo + 1 } else { lo };
        let hi = if envelope.time_of(hi) > hi_t { hi.saturating_sub(1) } else { hi };
        if lo > hi {
            continue;
        }
        let best = (lo..=hi)
            .filter(|&i| is_local_max(i) && e[i] >= floor)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if e[b] >= e[i] => Some(b),
                _ => Some(i),
            });
        let Some(i) = best else {
            continue;
        };
        let s1 = S1Event {
            time_s: envelope.time_of(i),
            envelope_amplitude: e[i],
        };
        if let Some(prev) = pairs.last() {
            if s1.time_s - prev.s1.time_s < params.s1_refractory_s {
                continue;
            }
        }
        pairs.push(BeatPair { s1, ppg: *beat });
    }
    Ok(pairs)
}
