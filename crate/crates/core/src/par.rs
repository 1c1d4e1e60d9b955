//! Order-preserving map over independent items, optionally on a thread pool.
//!
//! Results always come back in input order, so any reduction over them is
//! independent of scheduling. Without the `parallel` feature every call runs
//! sequentially.

use crate::error::Result;

/// Worker count requested by the caller; `0` means one per available core.
pub fn resolve_jobs(jobs: usize) -> usize {
    if jobs > 0 {
        return jobs;
    }
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// `items.map(f)` on up to `jobs` threads, stopping at the first error in input order.
#[cfg(feature = "parallel")]
pub fn map<T, U, F>(items: &[T], jobs: usize, f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    use rayon::prelude::*;

    let jobs = resolve_jobs(jobs);
    if jobs == 1 || items.len() < 2 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| crate::Error::Internal(format!("thread pool: {e}")))?;
    let results: Vec<Result<U>> = pool.install(|| items.par_iter().map(&f).collect());
    results.into_iter().collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, U, F>(items: &[T], _jobs: usize, f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    #[test]
    fn keeps_order_for_any_job_count() {
        let v: Vec<u64> = (0..257).collect();
        let want: Vec<u64> = v.iter().map(|x| x * x).collect();
        for jobs in [0, 1, 2, 8] {
            assert_eq!(map(&v, jobs, |x| Ok(x * x)).unwrap(), want);
        }
    }

    #[test]
    fn first_error_in_input_order() {
        let v: Vec<usize> = (0..64).collect();
        let out = map(&v, 4, |&x| {
            if x % 10 == 7 {
                Err(Error::InvalidArgument(format!("{x}")))
            } else {
                Ok(x)
            }
        });
        match out {
            Err(Error::InvalidArgument(m)) => assert_eq!(m, "7"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_jobs_means_all_cores() {
        assert!(resolve_jobs(0) >= 1);
        assert_eq!(resolve_jobs(3), 3);
    }
}
