//! Butterworth design via the bilinear transform (with prewarping) and
//! forward-backward application.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    LowPass,
    BandPass,
}

/// Frequency-selective filter request. A low-pass uses `low_cutoff_hz` as its
/// single cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub kind: FilterKind,
    #[serde(rename = "low_hz", default, skip_serializing_if = "Option::is_none")]
    pub low_cutoff_hz: Option<f64>,
    #[serde(rename = "high_hz", default, skip_serializing_if = "Option::is_none")]
    pub high_cutoff_hz: Option<f64>,
    pub order: u32,
}

impl FilterSpec {
    pub fn low_pass(cutoff_hz: f64, order: u32) -> Self {
        Self {
            kind: FilterKind::LowPass,
            low_cutoff_hz: Some(cutoff_hz),
            high_cutoff_hz: None,
            order,
        }
    }

    pub fn band_pass(low_hz: f64, high_hz: f64, order: u32) -> Self {
        Self {
            kind: FilterKind::BandPass,
            low_cutoff_hz: Some(low_hz),
            high_cutoff_hz: Some(high_hz),
            order,
        }
    }

    /// Cutoffs in Hz, checked against `sample_rate_hz`.
    pub fn validate(&self, sample_rate_hz: f64) -> Result<Vec<f64>> {
        let nyquist = sample_rate_hz / 2.0;
        if self.order == 0 {
            return Err(Error::InvalidArgument("filter order must be positive".into()));
        }
        let cutoffs = match (self.kind, self.low_cutoff_hz, self.high_cutoff_hz) {
            (FilterKind::LowPass, Some(fc), None) => vec![fc],
            (FilterKind::LowPass, _, _) => {
                return Err(Error::InvalidArgument(
                    "low-pass takes exactly one cutoff (low_hz)".into(),
                ))
            }
            (FilterKind::BandPass, Some(lo), Some(hi)) => {
                if !(lo < hi) {
                    return Err(Error::InvalidArgument(format!(
                        "band-pass needs low < high, got {lo} >= {hi}"
                    )));
                }
                vec![lo, hi]
            }
            (FilterKind::BandPass, _, _) => {
                return Err(Error::InvalidArgument(
                    "band-pass needs both low_hz and high_hz".into(),
                ))
            }
        };
        for &fc in &cutoffs {
            if !(fc.is_finite() && fc > 0.0) {
                return Err(Error::InvalidArgument(format!("cutoff must be positive, got {fc}")));
            }
            if fc >= nyquist {
                return Err(Error::InvalidArgument(format!(
                    "cutoff {fc} Hz is not below Nyquist ({nyquist} Hz)"
                )));
            }
        }
        Ok(cutoffs)
    }
}

/// One cascade stage `b(z) / a(z)`, ascending powers of `z^-1`, `a[0] == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    b: Vec<f64>,
    a: Vec<f64>,
}

impl Section {
    fn new(b: Vec<f64>, a: Vec<f64>) -> Result<Self> {
        let a0 = *a
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty denominator".into()))?;
        if b.is_empty() {
            return Err(Error::InvalidArgument("empty numerator".into()));
        }
        if a0 == 0.0 || !a0.is_finite() {
            return Err(Error::InvalidArgument("leading denominator coefficient must be nonzero".into()));
        }
        let n = b.len().max(a.len());
        let mut b: Vec<f64> = b.iter().map(|v| v / a0).collect();
        let mut a: Vec<f64> = a.iter().map(|v| v / a0).collect();
        b.resize(n, 0.0);
        a.resize(n, 0.0);
        Ok(Self { b, a })
    }

    pub fn numerator(&self) -> &[f64] {
        &self.b
    }

    pub fn denominator(&self) -> &[f64] {
        &self.a
    }

    fn state_len(&self) -> usize {
        self.b.len() - 1
    }

    /// Direct form II transposed, state updated in place.
    fn run(&self, x: &mut [f64], z: &mut [f64]) {
        let (b, a) = (&self.b, &self.a);
        let m = z.len();
        for v in x.iter_mut() {
            let xi = *v;
            let yi = b[0] * xi + z.first().copied().unwrap_or(0.0);
            for k in 0..m {
                let next = if k + 1 < m { z[k + 1] } else { 0.0 };
                z[k] = b[k + 1] * xi + next - a[k + 1] * yi;
            }
            *v = yi;
        }
    }

    /// State after an infinitely long unit input.
    fn steady_state(&self) -> Result<Vec<f64>> {
        let m = self.state_len();
        if m == 0 {
            return Ok(Vec::new());
        }
        let (b, a) = (&self.b, &self.a);
        // (I - companion(a)^T) zi = b[1:] - a[1:] * b[0]
        let lhs = DMatrix::from_fn(m, m, |r, c| {
            let companion_t = if c == 0 {
                -a[r + 1]
            } else if r + 1 == c {
                1.0
            } else {
                0.0
            };
            let identity = if r == c { 1.0 } else { 0.0 };
            identity - companion_t
        });
        let rhs = DVector::from_fn(m, |r, _| b[r + 1] - a[r + 1] * b[0]);
        lhs.lu()
            .solve(&rhs)
            .map(|v| v.iter().copied().collect())
            .ok_or_else(|| Error::InvalidArgument("filter has a pole at z = 1".into()))
    }

    fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }
}

/// Roots of `c[0] + c[1] x^-1 + ...`, i.e. of the polynomial with those
/// coefficients from the highest power down.
fn polynomial_roots(c: &[f64]) -> Vec<Complex64> {
    let mut c = c.to_vec();
    while c.len() > 1 && c[c.len() - 1] == 0.0 {
        c.pop();
    }
    match c.len() {
        0 | 1 => Vec::new(),
        2 => vec![Complex64::new(-c[1] / c[0], 0.0)],
        3 => {
            let (p, q) = (c[1] / c[0], c[2] / c[0]);
            let disc = Complex64::new(p * p / 4.0 - q, 0.0).sqrt();
            vec![-p / 2.0 + disc, -p / 2.0 - disc]
        }
        n => {
            let m = n - 1;
            let companion = DMatrix::from_fn(m, m, |r, col| {
                if r == 0 {
                    -c[col + 1] / c[0]
                } else if r == col + 1 {
                    1.0
                } else {
                    0.0
                }
            });
            companion
                .complex_eigenvalues()
                .iter()
                .map(|z| Complex64::new(z.re, z.im))
                .collect()
        }
    }
}

fn poly_mul(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + q.len() - 1];
    for (i, a) in p.iter().enumerate() {
        for (j, b) in q.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

/// Realized filter: a cascade of low-order sections plus the equivalent
/// transfer function `B(z) / A(z)` (ascending powers of `z^-1`, `A[0] == 1`).
///
/// Filtering runs through the cascade; the expanded polynomials lose
/// precision for very low normalized cutoffs.
#[derive(Debug, Clone, PartialEq)]
pub struct IirCoefficients {
    numerator: Vec<f64>,
    denominator: Vec<f64>,
    sections: Vec<Section>,
}

impl IirCoefficients {
    /// A single-section filter from transfer-function coefficients.
    pub fn new(numerator: Vec<f64>, denominator: Vec<f64>) -> Result<Self> {
        Self::from_sections(vec![(numerator, denominator)])
    }

    pub fn from_sections(sections: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        if sections.is_empty() {
            return Err(Error::InvalidArgument("filter needs at least one section".into()));
        }
        let sections = sections
            .into_iter()
            .map(|(b, a)| Section::new(b, a))
            .collect::<Result<Vec<_>>>()?;
        let trim = |mut v: Vec<f64>| {
            while v.len() > 1 && v[v.len() - 1] == 0.0 {
                v.pop();
            }
            v
        };
        let numerator = trim(sections.iter().fold(vec![1.0], |acc, s| poly_mul(&acc, &s.b)));
        let denominator = trim(sections.iter().fold(vec![1.0], |acc, s| poly_mul(&acc, &s.a)));
        Ok(Self {
            numerator,
            denominator,
            sections,
        })
    }

    pub fn numerator(&self) -> &[f64] {
        &self.numerator
    }

    pub fn denominator(&self) -> &[f64] {
        &self.denominator
    }

    pub fn sections(&self) -> &[Section] {
        &self.sections
    }

    fn padded_len(&self) -> usize {
        self.numerator.len().max(self.denominator.len())
    }

    /// Poles, collected section by section.
    pub fn poles(&self) -> Vec<Complex64> {
        self.sections
            .iter()
            .flat_map(|s| polynomial_roots(&s.a))
            .collect()
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }

    /// Single-pass complex response at `freq_hz`.
    pub fn response(&self, freq_hz: f64, sample_rate_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / sample_rate_hz;
        let eval = |c: &[f64]| {
            c.iter()
                .enumerate()
                .map(|(k, &ck)| Complex64::from_polar(ck, -w * k as f64))
                .sum::<Complex64>()
        };
        self.sections
            .iter()
            .map(|s| eval(&s.b) / eval(&s.a))
            .product()
    }
}

fn butterworth_prototype(order: u32) -> Vec<Complex64> {
    let n = order as f64;
    (0..order)
        .map(|k| {
            let theta = PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n);
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

/// Group real zeros and conjugate-paired poles into sections of order <= 2.
fn cascade(zeros: &[f64], poles: &[Complex64], gain: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let tol = 1e-12;
    let mut quads: Vec<Vec<f64>> = Vec::new();
    let mut reals: Vec<f64> = Vec::new();
    for p in poles {
        if p.im > tol {
            quads.push(vec![1.0, -2.0 * p.re, p.norm_sqr()]);
        } else if p.im.abs() <= tol {
            reals.push(p.re);
        }
    }
    for pair in reals.chunks(2) {
        match pair {
            [r1, r2] => quads.push(vec![1.0, -(r1 + r2), r1 * r2]),
            [r] => quads.push(vec![1.0, -r]),
            _ => unreachable!(),
        }
    }
    let mut zeros = zeros.iter();
    let mut out: Vec<(Vec<f64>, Vec<f64>)> = quads
        .into_iter()
        .map(|a| {
            let b = (1..a.len()).fold(vec![1.0], |acc, _| match zeros.next() {
                Some(z) => poly_mul(&acc, &[1.0, -z]),
                None => acc,
            });
            (b, a)
        })
        .collect();
    for v in out[0].0.iter_mut() {
        *v *= gain;
    }
    out
}

/// Butterworth filter of the requested order and cutoffs.
pub fn design_filter(spec: &FilterSpec, sample_rate_hz: f64) -> Result<IirCoefficients> {
    let cutoffs = spec.validate(sample_rate_hz)?;
    let fs2 = 2.0 * sample_rate_hz;
    let warp = |f: f64| fs2 * (PI * f / sample_rate_hz).tan();
    let proto = butterworth_prototype(spec.order);

    // analog zeros, poles, gain
    let (zeros, poles, gain): (Vec<Complex64>, Vec<Complex64>, f64) = match spec.kind {
        FilterKind::LowPass => {
            let wc = warp(cutoffs[0]);
            let poles = proto.iter().map(|p| p * wc).collect();
            (Vec::new(), poles, wc.powi(spec.order as i32))
        }
        FilterKind::BandPass => {
            let (w1, w2) = (warp(cutoffs[0]), warp(cutoffs[1]));
            let bw = w2 - w1;
            let w0_sq = w1 * w2;
            let mut poles = Vec::with_capacity(2 * proto.len());
            for p in &proto {
                let half = p * (bw / 2.0);
                let disc = (half * half - w0_sq).sqrt();
                poles.push(half + disc);
                poles.push(half - disc);
            }
            let zeros = vec![Complex64::new(0.0, 0.0); proto.len()];
            (zeros, poles, bw.powi(spec.order as i32))
        }
    };

    // bilinear transform; excess poles map their zeros to z = -1
    let map = |s: &Complex64| (fs2 + s) / (fs2 - s);
    let mut zd: Vec<f64> = zeros.iter().map(|z| map(z).re).collect();
    zd.resize(poles.len(), -1.0);
    // alternate +1 / -1 zeros so each band-pass section gets one of each
    zd.sort_by(f64::total_cmp);
    let half = zd.len() / 2;
    let zd: Vec<f64> = if zd.first() != zd.last() {
        (0..zd.len())
            .map(|i| if i % 2 == 0 { zd[half + i / 2] } else { zd[i / 2] })
            .collect()
    } else {
        zd
    };
    let pd: Vec<Complex64> = poles.iter().map(map).collect();
    let num: Complex64 = zeros.iter().map(|z| fs2 - z).product();
    let den: Complex64 = poles.iter().map(|p| fs2 - p).product();
    let kd = gain * (num / den).re;

    IirCoefficients::from_sections(cascade(&zd, &pd, kd))
}

/// Steady-state cascade state for a unit step input, one vector per section.
pub fn lfilter_zi(coeffs: &IirCoefficients) -> Result<Vec<Vec<f64>>> {
    let mut scale = 1.0;
    coeffs
        .sections
        .iter()
        .map(|s| {
            let zi: Vec<f64> = s.steady_state()?.iter().map(|z| z * scale).collect();
            scale *= s.dc_gain();
            Ok(zi)
        })
        .collect()
}

fn cascade_pass(coeffs: &IirCoefficients, x: &mut [f64], zi: &[Vec<f64>], x0: f64) {
    for (s, z) in coeffs.sections.iter().zip(zi) {
        let mut state: Vec<f64> = z.iter().map(|v| v * x0).collect();
        s.run(x, &mut state);
    }
}

/// Zero-phase filtering: forward pass, reverse, second pass, reverse.
///
/// The series is extended at both ends by odd reflection of
/// `3 * max(len(b), len(a))` samples and each pass starts from the steady
/// state matching its first sample, so constants pass through without an
/// edge transient.
pub fn filtfilt(coeffs: &IirCoefficients, x: &TimeSeries) -> Result<TimeSeries> {
    let pad = 3 * coeffs.padded_len();
    let data = x.samples();
    if data.len() <= pad {
        return Err(Error::InvalidArgument(format!(
            "series of {} samples too short for zero-phase filtering (needs > {pad})",
            data.len()
        )));
    }
    let n = data.len();
    let (first, last) = (data[0], data[n - 1]);
    let mut y = Vec::with_capacity(n + 2 * pad);
    y.extend((1..=pad).rev().map(|i| 2.0 * first - data[i]));
    y.extend_from_slice(data);
    y.extend((1..=pad).map(|i| 2.0 * last - data[n - 1 - i]));

    let zi = lfilter_zi(coeffs)?;
    let x0 = y[0];
    cascade_pass(coeffs, &mut y, &zi, x0);
    y.reverse();
    let x0 = y[0];
    cascade_pass(coeffs, &mut y, &zi, x0);
    y.reverse();
    Ok(x.with_samples(y[pad..pad + n].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: f64 = 1000.0;

    fn db(c: &IirCoefficients, f: f64) -> f64 {
        20.0 * c.response(f, FS).norm().log10()
    }

    #[test]
    fn low_pass_passes_dc() {
        let c = design_filter(&FilterSpec::low_pass(0.3, 3), FS).unwrap();
        assert!((c.response(0.0, FS).norm() - 1.0).abs() < 1e-6);
        assert_eq!(c.denominator()[0], 1.0);
        assert_eq!(c.denominator().len(), 4);
    }

    #[test]
    fn band_pass_edges_at_minus_3db() {
        let c = design_filter(&FilterSpec::band_pass(20.0, 240.0, 3), FS).unwrap();
        for f in [20.0, 240.0] {
            assert!((db(&c, f) + 3.0103).abs() < 0.2, "{f} Hz: {}", db(&c, f));
        }
        assert_eq!(c.denominator().len(), 7);
    }

    #[test]
    fn band_pass_stopband() {
        let c = design_filter(&FilterSpec::band_pass(0.5, 20.0, 3), FS).unwrap();
        let peak = (1..200)
            .map(|i| db(&c, i as f64 * 0.1))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(peak - db(&c, 100.0) >= 40.0);
    }

    #[test]
    fn rejects_cutoff_at_or_above_nyquist() {
        assert!(design_filter(&FilterSpec::low_pass(500.0, 3), FS).is_err());
        assert!(design_filter(&FilterSpec::band_pass(10.0, 600.0, 3), FS).is_err());
        assert!(design_filter(&FilterSpec::band_pass(30.0, 20.0, 3), FS).is_err());
        let mut bad = FilterSpec::low_pass(1.0, 3);
        bad.high_cutoff_hz = Some(4.0);
        assert!(design_filter(&bad, FS).is_err());
    }

    #[test]
    fn zi_gives_constant_output_for_constant_input() {
        let c = design_filter(&FilterSpec::low_pass(0.3, 3), FS).unwrap();
        let zi = lfilter_zi(&c).unwrap();
        let mut x = vec![2.5; 50];
        cascade_pass(&c, &mut x, &zi, 2.5);
        for y in x {
            assert!((y - 2.5).abs() < 1e-9);
        }
    }

    #[test]
    fn very_low_band_stays_stable() {
        let c = design_filter(&FilterSpec::band_pass(0.05, 1.0, 3), FS).unwrap();
        assert!(c.is_stable());
        assert_eq!(c.sections().len(), 3);
        for f in [0.05, 1.0] {
            assert!((db(&c, f) + 3.0103).abs() < 0.2, "{f} Hz: {}", db(&c, f));
        }
        let x = TimeSeries::new(vec![-1.5; 20_000], FS, 0.0).unwrap();
        let y = filtfilt(&c, &x).unwrap();
        assert!(y.samples().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn constant_through_low_pass() {
        let c = design_filter(&FilterSpec::low_pass(0.3, 3), FS).unwrap();
        let x = TimeSeries::new(vec![3.0; 5000], FS, 0.0).unwrap();
        let y = filtfilt(&c, &x).unwrap();
        for v in y.samples() {
            assert!((v - 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn too_short_rejected() {
        let c = design_filter(&FilterSpec::band_pass(0.5, 20.0, 3), FS).unwrap();
        let x = TimeSeries::new(vec![1.0; 21], FS, 0.0).unwrap();
        assert!(matches!(filtfilt(&c, &x), Err(Error::InvalidArgument(_))));
        let x = TimeSeries::new(vec![1.0; 22], FS, 0.0).unwrap();
        assert!(filtfilt(&c, &x).is_ok());
    }

    #[test]
    fn impulse_response_is_symmetric() {
        let specs = [
            (FilterSpec::low_pass(0.3, 3), 60_001usize),
            (FilterSpec::band_pass(0.5, 20.0, 3), 60_001),
            (FilterSpec::band_pass(20.0, 240.0, 3), 4_001),
        ];
        for (spec, n) in specs {
            let c = design_filter(&spec, FS).unwrap();
            let mut v = vec![0.0; n];
            v[n / 2] = 1.0;
            let y = filtfilt(&c, &TimeSeries::new(v, FS, 0.0).unwrap()).unwrap();
            let y = y.samples();
            let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for k in 0..n / 2 {
                assert!(
                    (y[n / 2 - k] - y[n / 2 + k]).abs() <= 1e-6 * peak,
                    "{spec:?} offset {k}"
                );
            }
        }
    }
}
