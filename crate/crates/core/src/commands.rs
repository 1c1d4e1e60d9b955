//! The `pttbp` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::calibration::Target;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::io::{self, CsvRecordingLoader};
use crate::par;
use crate::pipeline::{evaluate_cohort, extract_cohort, CohortEvaluation};
use crate::ptt::PttKind;
use crate::synthgen::{cohort_profiles, generate};

#[derive(Debug, Parser)]
#[command(name = "pttbp", version, about = "Cuff-less blood pressure from PCG/PPG/FSR recordings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic cohort: recordings, manifest and ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        subjects: u64,
        /// Overrides `seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Per-interval PTT aggregates for every subject in a manifest.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        /// Aggregates CSV to write.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Leave-one-out calibration reports from an aggregates CSV.
    Evaluate {
        #[arg(long)]
        aggregates: PathBuf,
        /// Report directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        #[command(flatten)]
        common: Common,
    },
    /// `extract` then `evaluate`, everything under one directory.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Foot,
    Dslope,
    Peak,
}

impl From<KindArg> for PttKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Foot => PttKind::Foot,
            KindArg::Dslope => PttKind::Dslope,
            KindArg::Peak => PttKind::Peak,
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn cmd_synth(config: &PipelineConfig, out: &Path, n_subjects: usize, seed: u64, jobs: usize) -> Result<()> {
    if n_subjects == 0 {
        return Err(Error::Config("--subjects must be at least 1".into()));
    }
    create_dir(out)?;
    let profiles = cohort_profiles(n_subjects, seed, &config.synth)?;
    let manifests = par::map(&profiles, jobs, |p| {
        let s = generate(p)?;
        let id = &p.subject_id;
        io::write_recording(&out.join(format!("{id}.csv")), &s.recording)?;
        io::write_ground_truth_beats(&out.join(format!("{id}_beats.csv")), &s.truth.beats)?;
        io::write_ground_truth_cuff(
            &out.join(format!("{id}_cuff.csv")),
            &s.truth.cuff_moments,
            &s.truth.readings,
        )?;
        io::write_profile(&out.join(format!("{id}_profile.toml")), p)?;
        Ok(s.manifest)
    })?;
    io::write_manifest(&out.join("manifest.toml"), &manifests)?;
    info!("wrote {n_subjects} subjects to {}", out.display());
    Ok(())
}

pub fn cmd_extract(config: &PipelineConfig, manifest: &Path, out: &Path, jobs: usize) -> Result<()> {
    let subjects = io::read_manifest(manifest)?;
    let rows = extract_cohort(&subjects, &CsvRecordingLoader, config, jobs)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    io::write_aggregates(out, &rows)?;
    info!("{} aggregate rows from {} subjects", rows.len(), subjects.len());
    Ok(())
}

/// Write `summary.toml`, `models.toml`, `records.csv` and the Bland-Altman points.
pub fn write_reports(dir: &Path, ev: &CohortEvaluation) -> Result<()> {
    create_dir(dir)?;
    io::write_summary(&dir.join("summary.toml"), &ev.summary())?;
    io::write_models(&dir.join("models.toml"), ev.kind, &ev.models)?;
    let mut records = ev.sbp.pooled.records.clone();
    records.extend_from_slice(&ev.dbp.pooled.records);
    io::write_records(&dir.join("records.csv"), &records)?;
    for t in Target::BOTH {
        let name = format!("bland_altman_{}.csv", t.as_str().to_lowercase());
        io::write_bland_altman(&dir.join(name), &ev.report(t).pooled.records)?;
    }
    Ok(())
}

pub fn cmd_evaluate(config: &PipelineConfig, aggregates: &Path, out: &Path, jobs: usize) -> Result<()> {
    let rows = io::read_aggregates(aggregates)?;
    let ev = evaluate_cohort(&rows, config.ptt.kind, jobs)?;
    write_reports(out, &ev)?;
    let (s, d) = (&ev.sbp.pooled, &ev.dbp.pooled);
    info!(
        "{}: SBP MAE {:.2} STD {:.2} r {:.3}; DBP MAE {:.2} STD {:.2} r {:.3}",
        ev.kind.label(),
        s.mae_mmhg,
        s.std_mmhg,
        s.r,
        d.mae_mmhg,
        d.std_mmhg,
        d.r
    );
    Ok(())
}

pub fn cmd_run(config: &PipelineConfig, manifest: &Path, out: &Path, jobs: usize) -> Result<()> {
    create_dir(out)?;
    let aggregates = out.join("aggregates.csv");
    cmd_extract(config, manifest, &aggregates, jobs)?;
    cmd_evaluate(config, &aggregates, out, jobs)
}

fn load_config(common: &Common, kind: Option<KindArg>) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load_or_default(common.config.as_deref())?;
    if let Some(k) = kind {
        cfg.ptt.kind = k.into();
    }
    Ok(cfg)
}

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            out,
            subjects,
            seed,
            common,
        } => {
            let cfg = load_config(&common, None)?;
            let n = usize::try_from(subjects).map_err(|_| Error::Config("--subjects too large".into()))?;
            cmd_synth(&cfg, &out, n, seed.unwrap_or(cfg.seed), common.jobs)
        }
        Command::Extract { manifest, out, common } => {
            cmd_extract(&load_config(&common, None)?, &manifest, &out, common.jobs)
        }
        Command::Evaluate {
            aggregates,
            out,
            kind,
            common,
        } => cmd_evaluate(&load_config(&common, kind)?, &aggregates, &out, common.jobs),
        Command::Run {
            manifest,
            out,
            kind,
            common,
        } => cmd_run(&load_config(&common, kind)?, &manifest, &out, common.jobs),
    }
}

/// Parse, run and return the process exit status.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_cli(["pttbp"]), 1);
        assert_eq!(run_cli(["pttbp", "synth", "--out", "x", "--subjects", "0"]), 1);
        assert_eq!(run_cli(["pttbp", "evaluate", "--aggregates", "a", "--out", "o", "--kind", "onset"]), 1);
        assert_eq!(run_cli(["pttbp", "--help"]), 0);
    }

    #[test]
    fn bad_config_exits_one() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "median_window = 4\n").unwrap();
        let code = run_cli([
            "pttbp",
            "evaluate",
            "--aggregates",
            "missing.csv",
            "--out",
            dir.path().to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
        ]);
        assert_eq!(code, 1);
    }

    #[test]
    fn missing_input_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        let code = run_cli([
            "pttbp",
            "extract",
            "--manifest",
            dir.path().join("none.toml").to_str().unwrap(),
            "--out",
            dir.path().join("a.csv").to_str().unwrap(),
        ]);
        assert_eq!(code, 2);
    }

    #[test]
    fn kind_flag_overrides_config() {
        let common = Common { config: None, jobs: 1 };
        assert_eq!(load_config(&common, Some(KindArg::Foot)).unwrap().ptt.kind, PttKind::Foot);
        assert_eq!(load_config(&common, None).unwrap().ptt.kind, PttKind::Peak);
    }
}
