use crate::error::{Error, Result};
use crate::signal::TimeSeries;

/// Z-score with the population (divide-by-N) standard deviation.
pub fn z_normalize(x: &TimeSeries) -> Result<TimeSeries> {
    let v = x.samples();
    if v.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "normalization needs at least 2 samples, got {}",
            v.len()
        )));
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    // rounding noise around a constant is not signal
    if !std.is_finite() || std <= 1e-12 * mean.abs() || std == 0.0 {
        return Err(Error::DegenerateSignal(
            "zero variance (dead channel?)".into(),
        ));
    }
    Ok(x.with_samples(v.iter().map(|s| (s - mean) / std).collect()))
}
