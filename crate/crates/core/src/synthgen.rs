//! Synthetic PCG/PPG/FSR recordings with exactly known timing and pressure.
//!
//! Each subject follows linear SBP, DBP and heart-rate trajectories. A beat at
//! time `t` has peak transit time `b1_sbp / (SBP(t) - b0_sbp)`; DBP
//! coefficients in cohort profiles are chosen so the same transit time also
//! yields the DBP trajectory.
//!
//! Waveforms:
//! - PCG: a 50 Hz Gaussian-windowed tone at S1 and a half-amplitude one 0.3 s later (S2).
//! - PPG: per cycle `(1 + sin psi) / 2`, with `psi` a smooth phase warp placing the
//!   foot, the steepest point and the peak at `0`, `U / 2` and `U` after the
//!   foot (`U` = 120 ms). The decay fills the rest of the cycle.
//! - FSR: one inflate/deflate episode per reading, centred in its share of the
//!   recording; the reading moment `t3` is where the deflation falls to 10 %.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::SubjectManifest;
use crate::segmentation::KeyMoments;
use crate::signal::{Recording, TimeSeries, RECORDING_RATE_HZ};

/// Foot to peak.
pub const UPSTROKE_S: f64 = 0.12;
pub const S2_DELAY_S: f64 = 0.3;
pub const S2_RELATIVE_AMPLITUDE: f64 = 0.5;
const TONE_HZ: f64 = 50.0;
const TONE_SIGMA_S: f64 = 0.010;
const TONE_HALF_SPAN_S: f64 = 5.0 * TONE_SIGMA_S;
const PPG_BASELINE: f64 = 0.5;
const FSR_BASELINE: f64 = 0.2;
const FSR_AMPLITUDE: f64 = 1.0;
/// Inflation reaches 90 % after this long, the peak after twice this long.
const INFLATE_STAGE_S: f64 = 5.0;
const DEFLATE_S: f64 = 15.0;
const CROSSING_FRACTION: f64 = 0.1;
/// Beats are generated from this time so the recording opens mid-rhythm.
const LEAD_IN_S: f64 = -2.0;
/// Shortest transit to the PPG foot the fiducial search can see.
const MIN_FOOT_PTT_S: f64 = 0.05;
const MAX_PTT_S: f64 = 0.6;
/// The previous S1 must be further back than this from any foot.
const S1_LOOKBACK_S: f64 = 0.62;

/// `t1`, `t2`, `t3` of an episode relative to its onset.
fn episode_offsets() -> (f64, f64, f64) {
    let t1 = INFLATE_STAGE_S * CROSSING_FRACTION / 0.9;
    let t2 = 2.0 * INFLATE_STAGE_S;
    (t1, t2, t2 + DEFLATE_S * (1.0 - CROSSING_FRACTION))
}

/// Shortest spacing between readings that keeps each episode inside its interval.
pub fn min_spacing_s() -> f64 {
    let (t1, _, t3) = episode_offsets();
    2.0 * (t3 - t1) + 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    /// Per-channel signal-to-noise ratio; `inf` disables noise.
    pub noise_snr_db: f64,
    pub n_measurements: usize,
    /// Time between consecutive readings.
    pub spacing_s: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            noise_snr_db: 30.0,
            n_measurements: 8,
            spacing_s: 50.0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.noise_snr_db.is_nan() {
            return Err(Error::Config("synth.noise_snr_db is NaN".into()));
        }
        if self.n_measurements < 3 {
            return Err(Error::Config(format!(
                "synth.n_measurements must be at least 3, got {}",
                self.n_measurements
            )));
        }
        if !(self.spacing_s >= min_spacing_s()) || !self.spacing_s.is_finite() {
            return Err(Error::Config(format!(
                "synth.spacing_s must be at least {:.2}, got {}",
                min_spacing_s(),
                self.spacing_s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectProfile {
    pub subject_id: String,
    pub b0_sbp: f64,
    pub b1_sbp: f64,
    pub b0_dbp: f64,
    pub b1_dbp: f64,
    pub hr_start_bpm: f64,
    pub hr_end_bpm: f64,
    pub sbp_start: f64,
    pub sbp_end: f64,
    pub dbp_start: f64,
    pub dbp_end: f64,
    pub n_measurements: usize,
    pub duration_s: f64,
    pub noise_snr_db: f64,
    pub rng_seed: u64,
}

fn lerp(a: f64, b: f64, frac: f64) -> f64 {
    a + (b - a) * frac.clamp(0.0, 1.0)
}

impl SubjectProfile {
    fn frac(&self, t: f64) -> f64 {
        t / self.duration_s
    }

    pub fn sbp_at(&self, t: f64) -> f64 {
        lerp(self.sbp_start, self.sbp_end, self.frac(t))
    }

    pub fn dbp_at(&self, t: f64) -> f64 {
        lerp(self.dbp_start, self.dbp_end, self.frac(t))
    }

    pub fn hr_at(&self, t: f64) -> f64 {
        lerp(self.hr_start_bpm, self.hr_end_bpm, self.frac(t))
    }

    /// Peak transit time implied by the SBP model at time `t`.
    pub fn ptt_p_at(&self, t: f64) -> f64 {
        self.b1_sbp / (self.sbp_at(t) - self.b0_sbp)
    }

    pub fn spacing_s(&self) -> f64 {
        self.duration_s / self.n_measurements as f64
    }

    /// Reading moments, each centred in an equal share of the recording.
    pub fn reading_times_s(&self) -> Vec<f64> {
        let spacing = self.spacing_s();
        (0..self.n_measurements)
            .map(|m| spacing * (m as f64 + 0.5))
            .collect()
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * RECORDING_RATE_HZ).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Profile(format!("`{}`: {m}", self.subject_id)));
        if self.subject_id.is_empty()
            || !self
                .subject_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return bad("subject id must be non-empty ASCII letters, digits, `_` or `-`".into());
        }
        let values = [
            self.b0_sbp,
            self.b1_sbp,
            self.b0_dbp,
            self.b1_dbp,
            self.hr_start_bpm,
            self.hr_end_bpm,
            self.sbp_start,
            self.sbp_end,
            self.dbp_start,
            self.dbp_end,
            self.duration_s,
        ];
        if values.iter().any(|v| !v.is_finite()) || self.noise_snr_db.is_nan() {
            return bad("non-finite parameter".into());
        }
        if !(self.b1_sbp > 0.0 && self.b1_dbp > 0.0) {
            return bad("b1 must be positive for both targets".into());
        }
        if !(self.sbp_start > self.dbp_start && self.sbp_end > self.dbp_end) {
            return bad("SBP must exceed DBP".into());
        }
        if !(self.hr_start_bpm > 0.0 && self.hr_end_bpm > 0.0) {
            return bad("heart rate must be positive".into());
        }
        if self.n_measurements < 3 {
            return bad(format!("{} measurements; need at least 3", self.n_measurements));
        }
        let n = self.duration_s * RECORDING_RATE_HZ;
        if !(self.duration_s > 0.0) || (n - n.round()).abs() > 1e-6 {
            return bad(format!("duration {} s is not a whole number of ms", self.duration_s));
        }
        if self.spacing_s() < min_spacing_s() {
            return bad(format!(
                "readings {:.2} s apart; need at least {:.2}",
                self.spacing_s(),
                min_spacing_s()
            ));
        }
        for &(lo, hi) in &[(self.sbp_start, self.dbp_start), (self.sbp_end, self.dbp_end)] {
            for v in [lo, hi] {
                if !(30.0..=300.0).contains(&v) {
                    return bad(format!("pressure {v} mmHg outside [30, 300]"));
                }
            }
        }
        // linear SBP makes PTT monotone, so the endpoints bound it
        for t in [0.0, self.duration_s] {
            if !(self.sbp_at(t) > self.b0_sbp) {
                return bad(format!("SBP {} does not exceed b0 {}", self.sbp_at(t), self.b0_sbp));
            }
            let p = self.ptt_p_at(t);
            if p - UPSTROKE_S < MIN_FOOT_PTT_S || p > MAX_PTT_S {
                return bad(format!(
                    "implied PTT {p:.4} s leaves [{:.2}, {MAX_PTT_S}]",
                    MIN_FOOT_PTT_S + UPSTROKE_S
                ));
            }
        }
        let min_period = 60.0 / self.hr_start_bpm.max(self.hr_end_bpm);
        let min_foot_ptt = self.ptt_p_at(0.0).min(self.ptt_p_at(self.duration_s)) - UPSTROKE_S;
        if min_period + min_foot_ptt <= S1_LOOKBACK_S {
            return bad(format!(
                "beat period {min_period:.3} s too short for transit {min_foot_ptt:.3} s"
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBeat {
    pub beat_index: usize,
    pub s1_s: f64,
    pub s2_s: f64,
    pub foot_s: f64,
    pub maxslope_s: f64,
    pub peak_s: f64,
    pub ptt_f_s: f64,
    pub ptt_d_s: f64,
    pub ptt_p_s: f64,
    pub sbp_mmhg: f64,
    pub dbp_mmhg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Beats whose S1 and peak both fall inside the recording.
    pub beats: Vec<GroundTruthBeat>,
    pub cuff_moments: Vec<KeyMoments>,
    /// `(sbp, dbp)` at each `t3`.
    pub readings: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct SyntheticSubject {
    pub profile: SubjectProfile,
    pub recording: Recording,
    pub truth: GroundTruth,
    pub manifest: SubjectManifest,
}

fn beat_schedule(p: &SubjectProfile) -> Vec<GroundTruthBeat> {
    let mut out = Vec::new();
    let mut t = LEAD_IN_S;
    let end = p.duration_s + 1.0;
    let mut k = 0;
    while t < end {
        let ptt_p = p.ptt_p_at(t);
        let peak = t + ptt_p;
        let foot = peak - UPSTROKE_S;
        out.push(GroundTruthBeat {
            beat_index: k,
            s1_s: t,
            s2_s: t + S2_DELAY_S,
            foot_s: foot,
            maxslope_s: foot + UPSTROKE_S / 2.0,
            peak_s: peak,
            ptt_f_s: ptt_p - UPSTROKE_S,
            ptt_d_s: ptt_p - UPSTROKE_S / 2.0,
            ptt_p_s: ptt_p,
            sbp_mmhg: p.sbp_at(t),
            dbp_mmhg: p.dbp_at(t),
        });
        t += 60.0 / p.hr_at(t);
        k += 1;
    }
    out
}

fn tone(dt: f64) -> f64 {
    (-0.5 * (dt / TONE_SIGMA_S).powi(2)).exp() * (2.0 * PI * TONE_HZ * dt).cos()
}

fn pcg_clean(beats: &[GroundTruthBeat], n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    let mut add = |center: f64, amp: f64| {
        let lo = ((center - TONE_HALF_SPAN_S) * RECORDING_RATE_HZ).ceil().max(0.0) as usize;
        let hi = ((center + TONE_HALF_SPAN_S) * RECORDING_RATE_HZ).floor();
        if hi < 0.0 {
            return;
        }
        for (i, v) in x.iter_mut().enumerate().take((hi as usize + 1).min(n)).skip(lo) {
            *v += amp * tone(i as f64 / RECORDING_RATE_HZ - center);
        }
    };
    for b in beats {
        add(b.s1_s, 1.0);
        add(b.s2_s, S2_RELATIVE_AMPLITUDE);
    }
    x
}

/// Unit pulse at `tau` seconds after a foot, in a cycle of length `period`.
fn pulse(tau: f64, period: f64) -> f64 {
    let theta = 2.0 * PI * (tau - UPSTROKE_S / 2.0) / period;
    let theta = theta - 2.0 * PI * ((theta + PI) / (2.0 * PI)).floor();
    let r = 1.0 / (PI * UPSTROKE_S / (2.0 * period)).tan();
    let psi = 2.0 * (r * (theta / 2.0).tan()).atan();
    0.5 * (1.0 + psi.sin())
}

fn ppg_clean(beats: &[GroundTruthBeat], n: usize) -> Vec<f64> {
    let mut x = vec![PPG_BASELINE; n];
    let mut k = 0;
    for (i, v) in x.iter_mut().enumerate() {
        let t = i as f64 / RECORDING_RATE_HZ;
        while k + 2 < beats.len() && beats[k + 1].foot_s <= t {
            k += 1;
        }
        let period = beats[k + 1].foot_s - beats[k].foot_s;
        *v += pulse(t - beats[k].foot_s, period);
    }
    x
}

fn fsr_clean(p: &SubjectProfile, n: usize) -> (Vec<f64>, Vec<KeyMoments>) {
    let (o1, o2, o3) = episode_offsets();
    let onsets: Vec<f64> = p.reading_times_s().iter().map(|t3| t3 - o3).collect();
    let shape = |u: f64| -> f64 {
        if u <= 0.0 {
            0.0
        } else if u <= INFLATE_STAGE_S {
            0.9 * u / INFLATE_STAGE_S
        } else if u <= o2 {
            0.9 + 0.1 * (u - INFLATE_STAGE_S) / INFLATE_STAGE_S
        } else if u <= o2 + DEFLATE_S {
            1.0 - (u - o2) / DEFLATE_S
        } else {
            0.0
        }
    };
    let x = (0..n)
        .map(|i| {
            let t = i as f64 / RECORDING_RATE_HZ;
            FSR_BASELINE + FSR_AMPLITUDE * onsets.iter().map(|s| shape(t - s)).sum::<f64>()
        })
        .collect();
    let moments = onsets
        .iter()
        .map(|s| KeyMoments::new(s + o1, s + o2, s + o3))
        .collect::<Result<Vec<_>>>()
        .expect("episode offsets are ordered");
    (x, moments)
}

fn add_noise(x: &mut [f64], snr_db: f64, rng: &mut ChaCha8Rng) -> Result<()> {
    if snr_db == f64::INFINITY {
        return Ok(());
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = (var / 10f64.powf(snr_db / 10.0)).sqrt();
    let dist = Normal::new(0.0, std).map_err(|e| Error::Profile(format!("noise level: {e}")))?;
    for v in x {
        *v += dist.sample(rng);
    }
    Ok(())
}

/// Render one subject. Deterministic in `profile`, including `rng_seed`.
pub fn generate(profile: &SubjectProfile) -> Result<SyntheticSubject> {
    profile.validate()?;
    let n = profile.n_samples();
    let schedule = beat_schedule(profile);
    let mut pcg = pcg_clean(&schedule, n);
    let mut ppg = ppg_clean(&schedule, n);
    let (mut fsr, cuff_moments) = fsr_clean(profile, n);

    let mut rng = ChaCha8Rng::seed_from_u64(profile.rng_seed);
    for ch in [&mut pcg, &mut ppg, &mut fsr] {
        add_noise(ch, profile.noise_snr_db, &mut rng)?;
    }

    let series = |v| TimeSeries::new(v, RECORDING_RATE_HZ, 0.0);
    let recording = Recording::new(profile.subject_id.clone(), series(pcg)?, series(ppg)?, series(fsr)?)?;

    let readings: Vec<(f64, f64)> = profile
        .reading_times_s()
        .iter()
        .map(|&t| (profile.sbp_at(t), profile.dbp_at(t)))
        .collect();
    let beats: Vec<GroundTruthBeat> = schedule
        .into_iter()
        .filter(|b| b.s1_s >= 0.0 && b.peak_s < profile.duration_s)
        .collect();
    let manifest = SubjectManifest {
        subject_id: profile.subject_id.clone(),
        recording_path: format!("{}.csv", profile.subject_id).into(),
        readings: readings.clone(),
    };
    Ok(SyntheticSubject {
        profile: profile.clone(),
        recording,
        truth: GroundTruth {
            beats,
            cuff_moments,
            readings,
        },
        manifest,
    })
}

/// `(b0, b1)` of `bp = b0 + b1 / ptt` through two `(ptt, bp)` points.
fn line_through(p_start: f64, bp_start: f64, p_end: f64, bp_end: f64) -> (f64, f64) {
    let b1 = (bp_start - bp_end) / (1.0 / p_start - 1.0 / p_end);
    (bp_start - b1 / p_start, b1)
}

/// Draw `n` subject profiles whose SBP and DBP trajectories are both exact
/// under the model. Falling pressure and heart rate over the session.
pub fn cohort_profiles(n: usize, seed: u64, params: &SynthParams) -> Result<Vec<SubjectProfile>> {
    if n == 0 {
        return Err(Error::InvalidArgument("cohort needs at least one subject".into()));
    }
    params.validate()?;
    let width = n.to_string().len().max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let p_start = rng.random_range(0.19..0.23);
            let p_end = rng.random_range(0.26..0.32);
            let sbp = (rng.random_range(150.0..170.0), rng.random_range(115.0..125.0));
            let dbp = (rng.random_range(90.0..100.0), rng.random_range(70.0..80.0));
            let hr = (rng.random_range(95.0..105.0), rng.random_range(70.0..80.0));
            let (b0_sbp, b1_sbp) = line_through(p_start, sbp.0, p_end, sbp.1);
            let (b0_dbp, b1_dbp) = line_through(p_start, dbp.0, p_end, dbp.1);
            let profile = SubjectProfile {
                subject_id: format!("S{:0width$}", i + 1),
                b0_sbp,
                b1_sbp,
                b0_dbp,
                b1_dbp,
                hr_start_bpm: hr.0,
                hr_end_bpm: hr.1,
                sbp_start: sbp.0,
                sbp_end: sbp.1,
                dbp_start: dbp.0,
                dbp_end: dbp.1,
                n_measurements: params.n_measurements,
                duration_s: params.spacing_s * params.n_measurements as f64,
                noise_snr_db: params.noise_snr_db,
                rng_seed: rng.random(),
            };
            profile.validate()?;
            Ok(profile)
        })
        .collect()
}
