//! Leave-one-out evaluation and pooled agreement statistics.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::calibration::{fit, Target};
use crate::error::{Error, Result};
use crate::ptt::PttAggregate;

/// Plausible range for a cuff reference, mmHg.
pub const REFERENCE_RANGE_MMHG: (f64, f64) = (30.0, 300.0);

/// Bland-Altman limits are `mean ± LOA_Z * std`.
pub const LOA_Z: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub subject_id: String,
    pub interval_index: usize,
    pub target: Target,
    pub estimate_mmhg: f64,
    pub reference_mmhg: f64,
}

impl PredictionRecord {
    pub fn new(
        subject_id: impl Into<String>,
        interval_index: usize,
        target: Target,
        estimate_mmhg: f64,
        reference_mmhg: f64,
    ) -> Result<Self> {
        let r = Self {
            subject_id: subject_id.into(),
            interval_index,
            target,
            estimate_mmhg,
            reference_mmhg,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = REFERENCE_RANGE_MMHG;
        if !self.estimate_mmhg.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "subject `{}` interval {}: non-finite estimate",
                self.subject_id, self.interval_index
            )));
        }
        if !(lo..=hi).contains(&self.reference_mmhg) {
            return Err(Error::InvalidArgument(format!(
                "subject `{}` interval {}: reference {} mmHg outside [{lo}, {hi}]",
                self.subject_id, self.interval_index, self.reference_mmhg
            )));
        }
        Ok(())
    }

    pub fn error_mmhg(&self) -> f64 {
        self.estimate_mmhg - self.reference_mmhg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub target: Target,
    pub mae_mmhg: f64,
    pub std_mmhg: f64,
    pub r: f64,
    pub bland_mean_mmhg: f64,
    pub bland_loa_mmhg: (f64, f64),
    pub n: usize,
    #[serde(skip)]
    pub records: Vec<PredictionRecord>,
}

/// Pooled statistics plus one report per subject, in subject-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledReport {
    pub pooled: EvaluationReport,
    pub per_subject: Vec<(String, EvaluationReport)>,
}

/// Minimum points per subject so every training fold keeps two.
pub const MIN_LOOCV_POINTS: usize = 3;

fn reference(a: &PttAggregate, target: Target) -> f64 {
    match target {
        Target::Sbp => a.ref_sbp_mmhg,
        Target::Dbp => a.ref_dbp_mmhg,
    }
}

/// Predict each aggregate from a model fit on the subject's other aggregates.
pub fn loocv_subject(
    subject_id: &str,
    aggregates: &[PttAggregate],
    target: Target,
) -> Result<Vec<PredictionRecord>> {
    if aggregates.len() < MIN_LOOCV_POINTS {
        return Err(Error::InsufficientData {
            subject: subject_id.to_string(),
            found: aggregates.len(),
            required: MIN_LOOCV_POINTS,
        });
    }
    let points: Vec<(f64, f64)> = aggregates.iter().map(|a| (a.ptt_s, reference(a, target))).collect();
    let mut records = Vec::with_capacity(points.len());
    let mut train = Vec::with_capacity(points.len() - 1);
    for (k, agg) in aggregates.iter().enumerate() {
        train.clear();
        train.extend(
            points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, p)| *p),
        );
        let model = fit(&train, target)?;
        let estimate = model.predict(agg.ptt_s)?;
        records.push(PredictionRecord::new(
            subject_id,
            agg.interval_index,
            target,
            estimate,
            points[k].1,
        )?);
    }
    Ok(records)
}

/// MAE, population STD of signed error, Pearson r and Bland-Altman limits.
pub fn compute_metrics(records: &[PredictionRecord]) -> Result<EvaluationReport> {
    if records.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "{} records; need at least 2",
            records.len()
        )));
    }
    let target = records[0].target;
    if records.iter().any(|r| r.target != target) {
        return Err(Error::InvalidArgument("records mix SBP and DBP".into()));
    }
    for r in records {
        r.validate()?;
    }

    let n = records.len() as f64;
    let err_mean = records.iter().map(PredictionRecord::error_mmhg).sum::<f64>() / n;
    let mae = records.iter().map(|r| r.error_mmhg().abs()).sum::<f64>() / n;
    let std = (records
        .iter()
        .map(|r| (r.error_mmhg() - err_mean).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();

    let est_mean = records.iter().map(|r| r.estimate_mmhg).sum::<f64>() / n;
    let ref_mean = records.iter().map(|r| r.reference_mmhg).sum::<f64>() / n;
    let (mut see, mut srr, mut ser) = (0.0, 0.0, 0.0);
    for rec in records {
        let de = rec.estimate_mmhg - est_mean;
        let dr = rec.reference_mmhg - ref_mean;
        see += de * de;
        srr += dr * dr;
        ser += de * dr;
    }
    if !(see > 0.0) || !(srr > 0.0) {
        return Err(Error::DegenerateMetrics(
            "estimates or references have zero variance; r is undefined".into(),
        ));
    }
    let r = (ser / (see.sqrt() * srr.sqrt())).clamp(-1.0, 1.0);

    let half = LOA_Z * std;
    Ok(EvaluationReport {
        target,
        mae_mmhg: mae,
        std_mmhg: std,
        r,
        bland_mean_mmhg: err_mean,
        bland_loa_mmhg: (err_mean - half, err_mean + half),
        n: records.len(),
        records: records.to_vec(),
    })
}

/// Concatenate subjects in id order and compute pooled metrics.
///
/// Subjects whose own metrics are degenerate still contribute to the pool but
/// get no sub-report.
pub fn pooled_report(
    per_subject: &BTreeMap<String, Vec<PredictionRecord>>,
    target: Target,
) -> Result<PooledReport> {
    if per_subject.values().all(Vec::is_empty) {
        return Err(Error::InvalidArgument("no subjects with records".into()));
    }
    let mut all = Vec::new();
    let mut subs = Vec::new();
    for (id, recs) in per_subject {
        if let Some(r) = recs.iter().find(|r| r.target != target) {
            return Err(Error::InvalidArgument(format!(
                "subject `{id}`: {} record in {target} report",
                r.target
            )));
        }
        all.extend_from_slice(recs);
        if recs.is_empty() {
            continue;
        }
        match compute_metrics(recs) {
            Ok(rep) => subs.push((id.clone(), rep)),
            Err(e) => warn!("subject `{id}` {target}: no per-subject report ({e})"),
        }
    }
    Ok(PooledReport {
        pooled: compute_metrics(&all)?,
        per_subject: subs,
    })
}

/// `(mean of pair, estimate − reference)` per record.
pub fn bland_altman_points(records: &[PredictionRecord]) -> Vec<(f64, f64)> {
    records
        .iter()
        .map(|r| (0.5 * (r.estimate_mmhg + r.reference_mmhg), r.error_mmhg()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ptt::PttKind;
    use proptest::prelude::*;

    fn recs(refs: &[f64], ests: &[f64]) -> Vec<PredictionRecord> {
        refs.iter()
            .zip(ests)
            .enumerate()
            .map(|(i, (&r, &e))| PredictionRecord::new("s", i, Target::Sbp, e, r).unwrap())
            .collect()
    }

    fn agg(i: usize, ptt: f64, sbp: f64) -> PttAggregate {
        PttAggregate {
            interval_index: i,
            kind: PttKind::Peak,
            ptt_s: ptt,
            n_beats: 10,
            ref_sbp_mmhg: sbp,
            ref_dbp_mmhg: sbp * 0.6,
        }
    }

    #[test]
    fn hand_computed_metrics() {
        let m = compute_metrics(&recs(&[100.0, 110.0, 120.0], &[102.0, 108.0, 124.0])).unwrap();
        assert!((m.mae_mmhg - 8.0 / 3.0).abs() < 1e-12);
        assert!((m.bland_mean_mmhg - 4.0 / 3.0).abs() < 1e-12);
        // E[e^2] = 8 = 72/9, so the population variance is 72/9 - 16/9 = 56/9
        assert!((m.std_mmhg - 56f64.sqrt() / 3.0).abs() < 1e-12);
        // covariance form: cov(e, r) / (sd_e sd_r) with e-mean 111.333
        let em = 334.0 / 3.0;
        let ed = [102.0 - em, 108.0 - em, 124.0 - em];
        let rd = [-10.0, 0.0, 10.0];
        let cov: f64 = ed.iter().zip(&rd).map(|(a, b)| a * b).sum();
        let r = cov / (ed.iter().map(|a| a * a).sum::<f64>() * 200.0).sqrt();
        assert!((m.r - r).abs() < 1e-12);
        assert_eq!(m.n, 3);
    }

    #[test]
    fn perfect_and_biased_predictions() {
        let refs = [90.0, 120.0, 135.0, 101.0];
        let p = compute_metrics(&recs(&refs, &refs)).unwrap();
        assert_eq!((p.mae_mmhg, p.std_mmhg, p.bland_loa_mmhg), (0.0, 0.0, (0.0, 0.0)));
        assert!((p.r - 1.0).abs() < 1e-12);

        let ests: Vec<f64> = refs.iter().map(|r| r + 5.0).collect();
        let b = compute_metrics(&recs(&refs, &ests)).unwrap();
        assert!((b.mae_mmhg - 5.0).abs() < 1e-12);
        assert!(b.std_mmhg < 1e-12);
        assert!((b.r - 1.0).abs() < 1e-12);
        assert!((b.bland_mean_mmhg - 5.0).abs() < 1e-12);
        assert!((b.bland_loa_mmhg.0 - 5.0).abs() < 1e-12 && (b.bland_loa_mmhg.1 - 5.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_invalid() {
        assert!(matches!(
            compute_metrics(&recs(&[100.0, 100.0, 100.0], &[99.0, 101.0, 100.0])),
            Err(Error::DegenerateMetrics(_))
        ));
        assert!(matches!(
            compute_metrics(&recs(&[100.0], &[100.0])),
            Err(Error::InvalidArgument(_))
        ));
        assert!(PredictionRecord::new("s", 0, Target::Sbp, 120.0, 20.0).is_err());
        assert!(PredictionRecord::new("s", 0, Target::Sbp, f64::NAN, 120.0).is_err());
    }

    #[test]
    fn loocv_exact_curve() {
        let c = |p: f64| 50.0 + 20.0 / p;
        let aggs = [agg(0, 0.2, c(0.2)), agg(1, 0.25, c(0.25)), agg(2, 0.4, c(0.4))];
        let out = loocv_subject("a", &aggs, Target::Sbp).unwrap();
        assert_eq!(out.len(), 3);
        for (r, a) in out.iter().zip(&aggs) {
            assert_eq!(r.interval_index, a.interval_index);
            assert!((r.estimate_mmhg - r.reference_mmhg).abs() < 1e-9);
        }
    }

    #[test]
    fn loocv_needs_three_points() {
        let aggs = [agg(0, 0.2, 150.0), agg(1, 0.3, 120.0)];
        match loocv_subject("subj07", &aggs, Target::Dbp) {
            Err(Error::InsufficientData { subject, found, .. }) => {
                assert_eq!(subject, "subj07");
                assert_eq!(found, 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn held_out_reference_does_not_leak() {
        let aggs: Vec<_> = (0..6)
            .map(|i| {
                let p = 0.2 + 0.02 * i as f64;
                agg(i, p, 40.0 + 22.0 / p + if i % 2 == 0 { 1.5 } else { -1.0 })
            })
            .collect();
        let base = loocv_subject("s", &aggs, Target::Sbp).unwrap();
        for k in 0..aggs.len() {
            let mut moved = aggs.clone();
            moved[k].ref_sbp_mmhg += 7.0;
            let out = loocv_subject("s", &moved, Target::Sbp).unwrap();
            assert_eq!(out[k].estimate_mmhg, base[k].estimate_mmhg);
            for j in (0..aggs.len()).filter(|&j| j != k) {
                assert_ne!(out[j].estimate_mmhg, base[j].estimate_mmhg);
            }
        }
    }

    #[test]
    fn pooling_identities() {
        let a = recs(&[100.0, 110.0, 125.0], &[103.0, 107.0, 121.0]);
        let single = BTreeMap::from([("a".to_string(), a.clone())]);
        let p = pooled_report(&single, Target::Sbp).unwrap();
        let alone = compute_metrics(&a).unwrap();
        assert_eq!(p.pooled, alone);
        assert_eq!(p.per_subject, vec![("a".to_string(), alone.clone())]);

        let mut b = a.clone();
        b.iter_mut().for_each(|r| r.subject_id = "b".into());
        let twice = BTreeMap::from([("a".to_string(), a), ("b".to_string(), b)]);
        let q = pooled_report(&twice, Target::Sbp).unwrap();
        assert!((q.pooled.mae_mmhg - alone.mae_mmhg).abs() < 1e-12);
        assert!((q.pooled.std_mmhg - alone.std_mmhg).abs() < 1e-12);
        assert_eq!(q.pooled.n, 6);
        assert_eq!(q.per_subject.len(), 2);

        assert!(pooled_report(&BTreeMap::new(), Target::Sbp).is_err());
        assert!(pooled_report(&twice, Target::Dbp).is_err());
    }

    #[test]
    fn degenerate_subject_still_pooled() {
        let flat = recs(&[100.0, 100.0], &[101.0, 99.0]);
        let ok = recs(&[110.0, 130.0], &[112.0, 126.0]);
        let m = BTreeMap::from([("flat".to_string(), flat), ("ok".to_string(), ok)]);
        let p = pooled_report(&m, Target::Sbp).unwrap();
        assert_eq!(p.pooled.n, 4);
        assert_eq!(p.per_subject.len(), 1);
        assert_eq!(p.per_subject[0].0, "ok");
    }

    #[test]
    fn bland_altman_pairs() {
        let pts = bland_altman_points(&recs(&[100.0, 120.0], &[104.0, 110.0]));
        assert_eq!(pts, vec![(102.0, 4.0), (115.0, -10.0)]);
    }

    fn record_sets() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((60.0f64..200.0, -20.0f64..20.0), 3..60)
    }

    proptest! {
        #[test]
        fn report_invariants(pairs in record_sets()) {
            let refs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let ests: Vec<f64> = pairs.iter().map(|p| p.0 + p.1).collect();
            let Ok(m) = compute_metrics(&recs(&refs, &ests)) else { return Ok(()) };
            prop_assert!((-1.0..=1.0).contains(&m.r));
            prop_assert!(m.mae_mmhg >= 0.0 && m.std_mmhg >= 0.0);
            let width = m.bland_loa_mmhg.1 - m.bland_loa_mmhg.0;
            prop_assert!((width - 2.0 * LOA_Z * m.std_mmhg).abs() <= 1e-12 * (m.bland_mean_mmhg.abs() + width + 1.0));
            prop_assert!(m.mae_mmhg + 1e-12 >= m.bland_mean_mmhg.abs());
        }

        #[test]
        fn r_affine_invariant(pairs in record_sets(), a in 0.1f64..3.0, b in -20.0f64..20.0) {
            let refs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let ests: Vec<f64> = pairs.iter().map(|p| p.0 + p.1).collect();
            let Ok(m) = compute_metrics(&recs(&refs, &ests)) else { return Ok(()) };
            let moved: Vec<f64> = ests.iter().map(|e| a * e + b).collect();
            let m2 = compute_metrics(&recs(&refs, &moved)).unwrap();
            prop_assert!((m.r - m2.r).abs() < 1e-9);
        }
    }
}
