//! Per-subject `BP = b0 + b1 / PTT`, fit by ordinary least squares on `1 / PTT`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Target {
    Sbp,
    Dbp,
}

impl Target {
    pub const BOTH: [Target; 2] = [Target::Sbp, Target::Dbp];

    pub fn as_str(self) -> &'static str {
        match self {
            Target::Sbp => "SBP",
            Target::Dbp => "DBP",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "SBP" | "sbp" => Ok(Target::Sbp),
            "DBP" | "dbp" => Ok(Target::Dbp),
            other => Err(Error::InvalidArgument(format!("unknown target `{other}`"))),
        }
    }
}

/// Fitted coefficients; `b1_mmhg_s` multiplies `1 / PTT` with PTT in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub target: Target,
    pub b0_mmhg: f64,
    pub b1_mmhg_s: f64,
    pub n_points: usize,
}

impl CalibrationModel {
    pub fn predict(&self, ptt_s: f64) -> Result<f64> {
        predict(self, ptt_s)
    }
}

/// Least-squares fit of `bp` on `1 / ptt` via the centred normal equations.
pub fn fit(points: &[(f64, f64)], target: Target) -> Result<CalibrationModel> {
    if points.len() < 2 {
        return Err(Error::SingularDesign(format!(
            "{} points; need at least 2",
            points.len()
        )));
    }
    if let Some(&(p, _)) = points.iter().find(|(p, _)| !(*p > 0.0) || !p.is_finite()) {
        return Err(Error::InvalidArgument(format!("PTT must be positive, got {p}")));
    }
    if points.iter().any(|(_, bp)| !bp.is_finite()) {
        return Err(Error::InvalidArgument("non-finite blood pressure".into()));
    }
    let first = points[0].0;
    if points.iter().all(|&(p, _)| p == first) {
        return Err(Error::SingularDesign("all PTT values are equal".into()));
    }

    let n = points.len() as f64;
    let x_mean = points.iter().map(|(p, _)| 1.0 / p).sum::<f64>() / n;
    let y_mean = points.iter().map(|(_, y)| y).sum::<f64>() / n;
    let (sxx, sxy) = points.iter().fold((0.0, 0.0), |(sxx, sxy), &(p, y)| {
        let dx = 1.0 / p - x_mean;
        (sxx + dx * dx, sxy + dx * (y - y_mean))
    });
    if !(sxx > 0.0) {
        return Err(Error::SingularDesign("regressor has no variance".into()));
    }
    let b1 = sxy / sxx;
    let b0 = y_mean - b1 * x_mean;
    if !(b0.is_finite() && b1.is_finite()) {
        return Err(Error::SingularDesign("non-finite coefficients".into()));
    }
    Ok(CalibrationModel {
        target,
        b0_mmhg: b0,
        b1_mmhg_s: b1,
        n_points: points.len(),
    })
}

pub fn predict(model: &CalibrationModel, ptt_s: f64) -> Result<f64> {
    if !(ptt_s > 0.0) || !ptt_s.is_finite() {
        return Err(Error::InvalidArgument(format!("PTT must be positive, got {ptt_s}")));
    }
    Ok(model.b0_mmhg + model.b1_mmhg_s / ptt_s)
}
