//! Recording to aggregates, and aggregates to evaluation reports.

use std::collections::BTreeMap;

use log::{info, warn};

use crate::calibration::{fit, Target};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::evaluation::{loocv_subject, pooled_report, PooledReport, PredictionRecord, MIN_LOOCV_POINTS};
use crate::fiducials::{detect_ppg_beats, detect_s1, pcg_envelope, BeatPair};
use crate::io::{AggregateRow, RecordingLoader, ReportStats, SubjectManifest, SubjectModel, SubjectStats, Summary, TargetSummary};
use crate::par;
use crate::ptt::{aggregate_interval, compute_ptt, reject_outliers, PttKind};
use crate::segmentation::{detect_key_moments, partition_intervals, MeasurementInterval};
use crate::signal::{preprocess_recording, Recording};

#[derive(Debug, Clone)]
pub struct SubjectExtraction {
    pub subject_id: String,
    pub intervals: Vec<MeasurementInterval>,
    pub beats: Vec<BeatPair>,
    /// One row per interval where every PTT kind had enough beats.
    pub rows: Vec<AggregateRow>,
}

/// Preprocess, segment, detect fiducials and aggregate one subject.
pub fn extract_subject(raw: &Recording, readings: &[(f64, f64)], config: &PipelineConfig) -> Result<SubjectExtraction> {
    let id = raw.subject_id.as_str();
    let clean = preprocess_recording(raw, config)?;

    let moments = detect_key_moments(&clean.fsr, &config.segmentation);
    let intervals = partition_intervals(&moments, raw.span(), readings).map_err(|e| match e {
        Error::ManifestMismatch { detected, expected, .. } => Error::ManifestMismatch {
            subject: id.to_string(),
            detected,
            expected,
        },
        other => other,
    })?;

    let envelope = pcg_envelope(&clean.pcg, &config.fiducials).map_err(|e| e.in_channel("pcg"))?;
    let ppg_beats = detect_ppg_beats(&clean.ppg, &config.fiducials).map_err(|e| e.in_channel("ppg"))?;
    let beats = detect_s1(&envelope, &ppg_beats, &config.fiducials)?;

    let mut rows = Vec::with_capacity(intervals.len());
    'intervals: for iv in &intervals {
        let inside: Vec<BeatPair> = beats.iter().filter(|b| iv.contains(b.s1.time_s)).copied().collect();
        let mut ptt = [0.0; 3];
        for (slot, kind) in ptt.iter_mut().zip(PttKind::ALL) {
            let samples = compute_ptt(&inside, kind, &config.ptt);
            let kept = reject_outliers(&samples, config.ptt.outlier_mads);
            match aggregate_interval(&kept, iv, kind, &config.ptt) {
                Ok(a) => *slot = a.ptt_s,
                Err(e @ Error::SparseInterval { .. }) => {
                    warn!("subject `{id}` {kind}: {e}; interval omitted");
                    continue 'intervals;
                }
                Err(e) => return Err(e),
            }
        }
        rows.push(AggregateRow {
            subject_id: id.to_string(),
            interval_index: iv.index,
            ptt_f_s: ptt[0],
            ptt_d_s: ptt[1],
            ptt_p_s: ptt[2],
            sbp_mmhg: iv.ref_sbp_mmhg,
            dbp_mmhg: iv.ref_dbp_mmhg,
        });
    }
    info!(
        "subject `{id}`: {} intervals, {} beats, {} aggregate rows",
        intervals.len(),
        beats.len(),
        rows.len()
    );
    Ok(SubjectExtraction {
        subject_id: id.to_string(),
        intervals,
        beats,
        rows,
    })
}

/// Aggregates for a cohort, sorted by subject id then interval.
pub fn extract_cohort(
    subjects: &[SubjectManifest],
    loader: &dyn RecordingLoader,
    config: &PipelineConfig,
    jobs: usize,
) -> Result<Vec<AggregateRow>> {
    let mut order: Vec<&SubjectManifest> = subjects.iter().collect();
    order.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    let per_subject = par::map(&order, jobs, |s| {
        let raw = loader.load(&s.recording_path, &s.subject_id)?;
        Ok(extract_subject(&raw, &s.readings, config)?.rows)
    })?;
    Ok(per_subject.into_iter().flatten().collect())
}

#[derive(Debug, Clone)]
pub struct CohortEvaluation {
    pub kind: PttKind,
    pub sbp: PooledReport,
    pub dbp: PooledReport,
    /// Fits on all of a subject's points, SBP then DBP per subject.
    pub models: Vec<SubjectModel>,
    pub excluded: Vec<String>,
}

impl CohortEvaluation {
    pub fn report(&self, target: Target) -> &PooledReport {
        match target {
            Target::Sbp => &self.sbp,
            Target::Dbp => &self.dbp,
        }
    }

    pub fn summary(&self) -> Summary {
        let side = |p: &PooledReport| TargetSummary {
            pooled: ReportStats::from(&p.pooled),
            subjects: p
                .per_subject
                .iter()
                .map(|(id, r)| SubjectStats {
                    subject_id: id.clone(),
                    stats: ReportStats::from(r),
                })
                .collect(),
        };
        Summary {
            ptt_kind: self.kind.label().to_string(),
            n_subjects: self.models.len() / 2,
            excluded_subjects: self.excluded.clone(),
            sbp: side(&self.sbp),
            dbp: side(&self.dbp),
        }
    }
}

struct SubjectOutcome {
    id: String,
    records: [Vec<PredictionRecord>; 2],
    models: Vec<SubjectModel>,
}

/// Per-subject leave-one-out for both targets, pooled in subject-id order.
pub fn evaluate_cohort(rows: &[AggregateRow], kind: PttKind, jobs: usize) -> Result<CohortEvaluation> {
    let mut by_subject: BTreeMap<&str, Vec<&AggregateRow>> = BTreeMap::new();
    for r in rows {
        by_subject.entry(r.subject_id.as_str()).or_default().push(r);
    }
    let mut usable = Vec::new();
    let mut excluded = Vec::new();
    for (id, mut rs) in by_subject {
        if rs.len() < MIN_LOOCV_POINTS {
            warn!(
                "subject `{id}`: {} intervals, need {MIN_LOOCV_POINTS}; excluded from evaluation",
                rs.len()
            );
            excluded.push(id.to_string());
            continue;
        }
        rs.sort_by_key(|r| r.interval_index);
        usable.push((id, rs));
    }
    if usable.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no subject has at least {MIN_LOOCV_POINTS} intervals"
        )));
    }

    let outcomes = par::map(&usable, jobs, |(id, rs)| {
        let aggs: Vec<_> = rs.iter().map(|r| r.aggregate(kind)).collect();
        let points = |t: Target| -> Vec<(f64, f64)> {
            rs.iter()
                .map(|r| (r.ptt_s(kind), if t == Target::Sbp { r.sbp_mmhg } else { r.dbp_mmhg }))
                .collect()
        };
        let mut models = Vec::with_capacity(2);
        for t in Target::BOTH {
            models.push(SubjectModel {
                subject_id: id.to_string(),
                model: fit(&points(t), t)?,
            });
        }
        Ok(SubjectOutcome {
            id: id.to_string(),
            records: [
                loocv_subject(id, &aggs, Target::Sbp)?,
                loocv_subject(id, &aggs, Target::Dbp)?,
            ],
            models,
        })
    })?;

    let mut sbp = BTreeMap::new();
    let mut dbp = BTreeMap::new();
    let mut models = Vec::with_capacity(2 * outcomes.len());
    for o in outcomes {
        let [s, d] = o.records;
        sbp.insert(o.id.clone(), s);
        dbp.insert(o.id, d);
        models.extend(o.models);
    }
    Ok(CohortEvaluation {
        kind,
        sbp: pooled_report(&sbp, Target::Sbp)?,
        dbp: pooled_report(&dbp, Target::Dbp)?,
        models,
        excluded,
    })
}
