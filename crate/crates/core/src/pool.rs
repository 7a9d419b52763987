//! Deterministic parallel task execution.

use crate::error::{Error, Result};
use rayon::prelude::*;

/// Seed of task `index` derived from a base seed.
pub fn task_seed(base: u64, index: usize) -> u64 {
    base ^ index as u64
}

/// Run `f(0..n)` on a pool with `threads` workers (all cores when `None`).
/// Results come back in task order, so output does not depend on scheduling.
pub fn run_tasks<T, F>(n: usize, threads: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder.build().map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(&f).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_independent_of_thread_count() {
        let a = run_tasks(50, Some(1), |i| task_seed(7, i) * 3).unwrap();
        let b = run_tasks(50, Some(4), |i| task_seed(7, i) * 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(task_seed(7, 0), 7);
        assert_eq!(task_seed(7, 1), 6);
    }
}
