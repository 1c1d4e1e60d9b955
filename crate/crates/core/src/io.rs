//! File formats: recordings, cohort manifests, aggregates, reports and
//! synthetic ground truth.
//!
//! Recordings are CSV with header `t_ms,pcg,ppg,fsr`, one row per
//! millisecond. Other sources plug in through [`RecordingLoader`].

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationModel;
use crate::error::{Error, Result};
use crate::evaluation::{bland_altman_points, EvaluationReport, PredictionRecord};
use crate::ptt::{PttAggregate, PttKind};
use crate::segmentation::KeyMoments;
use crate::signal::{Recording, TimeSeries, RECORDING_RATE_HZ};
use crate::synthgen::{GroundTruthBeat, SubjectProfile};

pub const RECORDING_HEADER: [&str; 4] = ["t_ms", "pcg", "ppg", "fsr"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectManifest {
    pub subject_id: String,
    /// Relative paths resolve against the manifest's directory.
    pub recording_path: PathBuf,
    /// Chronological `[sbp, dbp]` cuff readings.
    pub readings: Vec<(f64, f64)>,
}

impl SubjectManifest {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("subject `{}`: {m}", self.subject_id)));
        if self.subject_id.trim().is_empty() || self.subject_id.contains(',') {
            return bad("subject id must be non-empty and contain no commas".into());
        }
        if self.readings.len() < 3 {
            return bad(format!("{} readings; need at least 3", self.readings.len()));
        }
        for (i, &(s, d)) in self.readings.iter().enumerate() {
            if !(s.is_finite() && d.is_finite() && s > d) {
                return bad(format!("reading {i}: need finite SBP > DBP, got ({s}, {d})"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    subjects: Vec<SubjectManifest>,
}

/// Subjects in file order, recording paths made absolute.
pub fn read_manifest(path: &Path) -> Result<Vec<SubjectManifest>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ManifestFile = toml::from_str(&text).map_err(|e| Error::format(path, e.message()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut seen = BTreeSet::new();
    file.subjects
        .into_iter()
        .map(|mut s| {
            s.validate().map_err(|e| Error::format(path, e.to_string()))?;
            if !seen.insert(s.subject_id.clone()) {
                return Err(Error::format(path, format!("duplicate subject `{}`", s.subject_id)));
            }
            if s.recording_path.is_relative() {
                s.recording_path = base.join(&s.recording_path);
            }
            Ok(s)
        })
        .collect()
}

pub fn write_manifest(path: &Path, subjects: &[SubjectManifest]) -> Result<()> {
    let file = ManifestFile {
        subjects: subjects.to_vec(),
    };
    let text = toml::to_string(&file).map_err(|e| Error::Internal(format!("manifest serialization: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Source of raw recordings for the analysis path.
pub trait RecordingLoader: Sync {
    fn load(&self, path: &Path, subject_id: &str) -> Result<Recording>;
}

/// The native `t_ms,pcg,ppg,fsr` format.
#[derive(Debug, Clone, Copy, Default)]
pub struct CsvRecordingLoader;

impl RecordingLoader for CsvRecordingLoader {
    fn load(&self, path: &Path, subject_id: &str) -> Result<Recording> {
        read_recording(path, subject_id)
    }
}

#[derive(Deserialize)]
struct SampleRow {
    t_ms: i64,
    pcg: f64,
    ppg: f64,
    fsr: f64,
}

pub fn read_recording(path: &Path, subject_id: &str) -> Result<Recording> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let header = rdr.headers().map_err(|e| Error::format(path, e.to_string()))?;
    if header.iter().ne(RECORDING_HEADER) {
        return Err(Error::format(
            path,
            format!("expected header `{}`", RECORDING_HEADER.join(",")),
        ));
    }
    let (mut pcg, mut ppg, mut fsr) = (Vec::new(), Vec::new(), Vec::new());
    let mut first_ms = None;
    for (i, row) in rdr.deserialize::<SampleRow>().enumerate() {
        let row = row.map_err(|e| Error::format(path, e.to_string()))?;
        let t0 = *first_ms.get_or_insert(row.t_ms);
        if row.t_ms != t0 + i as i64 {
            return Err(Error::format(
                path,
                format!("row {}: t_ms {} breaks the 1 ms grid", i + 1, row.t_ms),
            ));
        }
        if !(row.pcg.is_finite() && row.ppg.is_finite() && row.fsr.is_finite()) {
            return Err(Error::format(path, format!("row {}: non-finite sample", i + 1)));
        }
        pcg.push(row.pcg);
        ppg.push(row.ppg);
        fsr.push(row.fsr);
    }
    let Some(t0) = first_ms else {
        return Err(Error::format(path, "no samples"));
    };
    let start = t0 as f64 / RECORDING_RATE_HZ;
    let series = |v| TimeSeries::new(v, RECORDING_RATE_HZ, start);
    Recording::new(subject_id, series(pcg)?, series(ppg)?, series(fsr)?)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Internal(format!("{}: csv: {other:?}", path.display())),
    }
}

fn finish<W: Write>(path: &Path, w: csv::Writer<W>) -> Result<()> {
    let mut inner = w
        .into_inner()
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

/// Requires a 1 kHz recording starting on a whole millisecond.
pub fn write_recording(path: &Path, rec: &Recording) -> Result<()> {
    rec.validate()?;
    if rec.sample_rate_hz() != RECORDING_RATE_HZ {
        return Err(Error::InvalidArgument(format!(
            "recordings are stored at {RECORDING_RATE_HZ} Hz, got {}",
            rec.sample_rate_hz()
        )));
    }
    let t0 = rec.pcg.start_time_s() * RECORDING_RATE_HZ;
    if (t0 - t0.round()).abs() > 1e-9 {
        return Err(Error::InvalidArgument("start time is not a whole millisecond".into()));
    }
    let t0 = t0.round() as i64;
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(RECORDING_HEADER).map_err(&err)?;
    let (pcg, ppg, fsr) = (rec.pcg.samples(), rec.ppg.samples(), rec.fsr.samples());
    for i in 0..rec.len() {
        w.serialize((t0 + i as i64, pcg[i], ppg[i], fsr[i])).map_err(&err)?;
    }
    finish(path, w)
}

/// One row of the per-interval aggregates table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub subject_id: String,
    pub interval_index: usize,
    pub ptt_f_s: f64,
    pub ptt_d_s: f64,
    pub ptt_p_s: f64,
    pub sbp_mmhg: f64,
    pub dbp_mmhg: f64,
}

impl AggregateRow {
    pub fn ptt_s(&self, kind: PttKind) -> f64 {
        match kind {
            PttKind::Foot => self.ptt_f_s,
            PttKind::Dslope => self.ptt_d_s,
            PttKind::Peak => self.ptt_p_s,
        }
    }

    /// The row as an aggregate of one kind. Beat counts are not stored, so
    /// `n_beats` is 0.
    pub fn aggregate(&self, kind: PttKind) -> PttAggregate {
        PttAggregate {
            interval_index: self.interval_index,
            kind,
            ptt_s: self.ptt_s(kind),
            n_beats: 0,
            ref_sbp_mmhg: self.sbp_mmhg,
            ref_dbp_mmhg: self.dbp_mmhg,
        }
    }
}

pub fn write_aggregates(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    // an empty table still gets its header
    if rows.is_empty() {
        w.write_record([
            "subject_id",
            "interval_index",
            "ptt_f_s",
            "ptt_d_s",
            "ptt_p_s",
            "sbp_mmhg",
            "dbp_mmhg",
        ])
        .map_err(&err)?;
    }
    for r in rows {
        w.serialize(r).map_err(&err)?;
    }
    finish(path, w)
}

pub fn read_aggregates(path: &Path) -> Result<Vec<AggregateRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let mut rows = Vec::new();
    for (i, row) in rdr.deserialize::<AggregateRow>().enumerate() {
        let row = row.map_err(|e| Error::format(path, format!("row {}: {e}", i + 1)))?;
        let values = [row.ptt_f_s, row.ptt_d_s, row.ptt_p_s, row.sbp_mmhg, row.dbp_mmhg];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(path, format!("row {}: non-finite value", i + 1)));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_records(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["subject_id", "interval_index", "target", "estimate_mmhg", "reference_mmhg"])
        .map_err(&err)?;
    for r in records {
        w.serialize((
            &r.subject_id,
            r.interval_index,
            r.target.as_str(),
            r.estimate_mmhg,
            r.reference_mmhg,
        ))
        .map_err(&err)?;
    }
    finish(path, w)
}

pub fn write_bland_altman(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["mean_of_pair_mmhg", "difference_mmhg"]).map_err(&err)?;
    for p in bland_altman_points(records) {
        w.serialize(p).map_err(&err)?;
    }
    finish(path, w)
}

/// Flat statistics of one report as stored in `summary.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportStats {
    pub n: usize,
    pub mae_mmhg: f64,
    pub std_mmhg: f64,
    pub r: f64,
    pub bland_mean_mmhg: f64,
    pub loa_low_mmhg: f64,
    pub loa_high_mmhg: f64,
}

impl From<&EvaluationReport> for ReportStats {
    fn from(r: &EvaluationReport) -> Self {
        Self {
            n: r.n,
            mae_mmhg: r.mae_mmhg,
            std_mmhg: r.std_mmhg,
            r: r.r,
            bland_mean_mmhg: r.bland_mean_mmhg,
            loa_low_mmhg: r.bland_loa_mmhg.0,
            loa_high_mmhg: r.bland_loa_mmhg.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectStats {
    pub subject_id: String,
    #[serde(flatten)]
    pub stats: ReportStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub pooled: ReportStats,
    pub subjects: Vec<SubjectStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// e.g. `PTT_p`.
    pub ptt_kind: String,
    pub n_subjects: usize,
    pub excluded_subjects: Vec<String>,
    pub sbp: TargetSummary,
    pub dbp: TargetSummary,
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    let text = toml::to_string(summary).map_err(|e| Error::Internal(format!("summary serialization: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::format(path, e.message()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectModel {
    pub subject_id: String,
    #[serde(flatten)]
    pub model: CalibrationModel,
}

#[derive(Serialize, Deserialize)]
struct ModelsFile {
    ptt_kind: String,
    models: Vec<SubjectModel>,
}

pub fn write_models(path: &Path, kind: PttKind, models: &[SubjectModel]) -> Result<()> {
    let file = ModelsFile {
        ptt_kind: kind.label().to_string(),
        models: models.to_vec(),
    };
    let text = toml::to_string(&file).map_err(|e| Error::Internal(format!("model serialization: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_models(path: &Path) -> Result<Vec<SubjectModel>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelsFile = toml::from_str(&text).map_err(|e| Error::format(path, e.message()))?;
    Ok(file.models)
}

pub fn write_ground_truth_beats(path: &Path, beats: &[GroundTruthBeat]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    for b in beats {
        w.serialize(b).map_err(&err)?;
    }
    finish(path, w)
}

pub fn read_ground_truth_beats(path: &Path) -> Result<Vec<GroundTruthBeat>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(BufReader::new(file))
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_ground_truth_cuff(path: &Path, moments: &[KeyMoments], readings: &[(f64, f64)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["measurement_index", "t1_s", "t2_s", "t3_s", "sbp_mmhg", "dbp_mmhg"])
        .map_err(&err)?;
    for (i, (m, r)) in moments.iter().zip(readings).enumerate() {
        w.serialize((i, m.t1_s, m.t2_s, m.t3_s, r.0, r.1)).map_err(&err)?;
    }
    finish(path, w)
}

pub fn write_profile(path: &Path, profile: &SubjectProfile) -> Result<()> {
    let text = toml::to_string(profile).map_err(|e| Error::Internal(format!("profile serialization: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_profile(path: &Path) -> Result<SubjectProfile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::format(path, e.message()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(pcg: Vec<f64>, start: f64) -> Recording {
        let ppg: Vec<f64> = pcg.iter().map(|v| v * 0.5 + 1.0).collect();
        let fsr: Vec<f64> = pcg.iter().map(|v| -v).collect();
        let ts = |v| TimeSeries::new(v, 1000.0, start).unwrap();
        Recording::new("s", ts(pcg), ts(ppg), ts(fsr)).unwrap()
    }

    #[test]
    fn recording_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let r = rec(vec![0.1, -1e-300, 1.0 / 3.0, 12345.678901234567, f64::MIN_POSITIVE], 2.5);
        write_recording(&path, &r).unwrap();
        let back = read_recording(&path, "s").unwrap();
        assert_eq!(back, r);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t_ms,pcg,ppg,fsr\n2500,"));
    }

    #[test]
    fn recording_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        for body in [
            "t,pcg,ppg,fsr\n0,1,2,3\n",
            "t_ms,pcg,ppg,fsr\n0,1,2,3\n2,1,2,3\n",
            "t_ms,pcg,ppg,fsr\n0,1,x,3\n",
            "t_ms,pcg,ppg,fsr\n",
            "t_ms,pcg,ppg,fsr\n0,1,2\n",
        ] {
            std::fs::write(&p, body).unwrap();
            assert!(matches!(read_recording(&p, "s"), Err(Error::Format { .. })), "{body}");
        }
        assert!(matches!(
            read_recording(&dir.path().join("missing.csv"), "s"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn manifest_round_trip_and_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.toml");
        let subjects = vec![SubjectManifest {
            subject_id: "S01".into(),
            recording_path: "S01.csv".into(),
            readings: vec![(150.0, 90.0), (140.5, 85.0), (130.0, 80.25)],
        }];
        write_manifest(&path, &subjects).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back[0].recording_path, dir.path().join("S01.csv"));
        assert_eq!(back[0].readings, subjects[0].readings);
    }

    #[test]
    fn manifest_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.toml");
        for body in [
            "[[subjects]]\nsubject_id = \"a\"\nrecording_path = \"a.csv\"\nreadings = [[120, 80], [110, 70]]\n",
            "[[subjects]]\nsubject_id = \"a\"\nrecording_path = \"a.csv\"\nreadings = [[120, 80], [70, 110], [100, 60]]\n",
            "[[subjects]]\nsubject_id = \"a\"\nrecording_path = \"a.csv\"\nreadings = [[120, 80], [110, 70], [100, 60]]\n\
             [[subjects]]\nsubject_id = \"a\"\nrecording_path = \"b.csv\"\nreadings = [[120, 80], [110, 70], [100, 60]]\n",
            "[[subjects]]\nsubject_id = \"a\"\nreadings = [[120, 80], [110, 70], [100, 60]]\n",
        ] {
            std::fs::write(&path, body).unwrap();
            assert!(matches!(read_manifest(&path), Err(Error::Format { .. })), "{body}");
        }
    }

    #[test]
    fn aggregates_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agg.csv");
        let rows = vec![AggregateRow {
            subject_id: "S01".into(),
            interval_index: 2,
            ptt_f_s: 0.1,
            ptt_d_s: 0.16,
            ptt_p_s: 0.22,
            sbp_mmhg: 151.25,
            dbp_mmhg: 90.5,
        }];
        write_aggregates(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("subject_id,interval_index,ptt_f_s,ptt_d_s,ptt_p_s,sbp_mmhg,dbp_mmhg\n"));
        assert_eq!(read_aggregates(&path).unwrap(), rows);
        assert_eq!(rows[0].aggregate(PttKind::Dslope).ptt_s, 0.16);

        write_aggregates(&path, &[]).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("subject_id,"));
        assert!(read_aggregates(&path).unwrap().is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn any_finite_recording_round_trips(v in prop::collection::vec(-1e12f64..1e12, 1..200), start_ms in -5000i64..5000) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("r.csv");
            let r = rec(v, start_ms as f64 / 1000.0);
            write_recording(&path, &r).unwrap();
            prop_assert_eq!(read_recording(&path, "s").unwrap(), r);
        }
    }
}
