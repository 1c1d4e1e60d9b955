use crate::error::{Error, Result};
use crate::signal::TimeSeries;

/// Centered running median. Windows are truncated at the edges, so the first
/// and last `window / 2` outputs are medians of fewer points; an even count
/// takes the mean of the two middle values.
pub fn median_filter(x: &TimeSeries, window_samples: usize) -> Result<TimeSeries> {
    x.require_non_empty()?;
    if window_samples == 0 || window_samples % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "median window must be odd and positive, got {window_samples}"
        )));
    }
    if window_samples > x.len() {
        return Err(Error::InvalidArgument(format!(
            "median window {window_samples} exceeds series length {}",
            x.len()
        )));
    }
    Ok(x.with_samples(running_median(x.samples(), window_samples / 2)))
}

fn running_median(data: &[f64], half: usize) -> Vec<f64> {
    let n = data.len();
    let mut out = Vec::with_capacity(n);
    // sorted copy of data[lo..hi]
    let mut sorted: Vec<f64> = Vec::with_capacity(2 * half + 1);
    let (mut lo, mut hi) = (0usize, 0usize);
    for i in 0..n {
        let want_lo = i.saturating_sub(half);
        let want_hi = (i + half + 1).min(n);
        while hi < want_hi {
            let v = data[hi];
            let pos = sorted.partition_point(|&s| s.total_cmp(&v).is_lt());
            sorted.insert(pos, v);
            hi += 1;
        }
        while lo < want_lo {
            let v = data[lo];
            let pos = sorted.partition_point(|&s| s.total_cmp(&v).is_lt());
            sorted.remove(pos);
            lo += 1;
        }
        let m = sorted.len();
        out.push(if m % 2 == 1 {
            sorted[m / 2]
        } else {
            0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(v: &[f64]) -> TimeSeries {
        TimeSeries::new(v.to_vec(), 1000.0, 0.0).unwrap()
    }

    fn sort_oracle(data: &[f64], window: usize) -> Vec<f64> {
        let half = window / 2;
        (0..data.len())
            .map(|i| {
                let lo = i.saturating_sub(half);
                let hi = (i + half + 1).min(data.len());
                let mut w = data[lo..hi].to_vec();
                w.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let m = w.len();
                if m % 2 == 1 {
                    w[m / 2]
                } else {
                    (w[m / 2 - 1] + w[m / 2]) / 2.0
                }
            })
            .collect()
    }

    #[test]
    fn constant_series_unchanged() {
        let out = median_filter(&ts(&[5.0, 5.0, 5.0, 5.0]), 3).unwrap();
        assert_eq!(out.samples(), &[5.0, 5.0, 5.0, 5.0]);
    }

    #[test]
    fn window_one_is_identity() {
        let v = [3.0, -1.0, 7.5, 2.0];
        assert_eq!(median_filter(&ts(&v), 1).unwrap().samples(), &v);
    }

    #[test]
    fn impulse_removed_interior() {
        let v = [1.0, 9.0, 1.0, 1.0, 1.0];
        let out = median_filter(&ts(&v), 3).unwrap();
        // edge window [1, 9] has median 5
        assert_eq!(out.samples(), &[5.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(out.samples(), sort_oracle(&v, 3).as_slice());
    }

    #[test]
    fn rejects_even_zero_or_oversized_window() {
        let x = ts(&[1.0, 2.0, 3.0]);
        assert!(matches!(median_filter(&x, 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(median_filter(&x, 2), Err(Error::InvalidArgument(_))));
        assert!(matches!(median_filter(&x, 5), Err(Error::InvalidArgument(_))));
    }

    proptest! {
        #[test]
        fn matches_sort_oracle(
            data in prop::collection::vec(-100.0f64..100.0, 1..200),
            half in 0usize..8,
        ) {
            let largest_odd = if data.len() % 2 == 1 { data.len() } else { data.len() - 1 };
            let window = (2 * half + 1).min(largest_odd);
            let out = median_filter(&ts(&data), window).unwrap();
            let want = sort_oracle(&data, window);
            prop_assert_eq!(out.samples(), want.as_slice());
        }
    }
}
