//! Ensemble execution over independent members.
//!
//! Each member is a pure function of its index (and therefore of its own
//! random stream), and results are always returned in index order, so the
//! output is identical whichever execution mode or thread count is used.

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    /// Data-parallel over members on the current rayon pool. Falls back to
    /// sequential execution when built without the `parallel` feature.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Run `f(0..members)` and collect results in index order. The first error
/// by index is returned.
pub fn run_members<T, G>(members: usize, exec: Execution, f: G) -> Result<Vec<T>>
where
    T: Send,
    G: Fn(usize) -> Result<T> + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..members).map(f).collect(),
        Execution::Parallel => parallel(members, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel<T, G>(members: usize, f: G) -> Result<Vec<T>>
where
    T: Send,
    G: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    let out: Vec<Result<T>> = (0..members).into_par_iter().map(f).collect();
    out.into_iter().collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel<T, G>(members: usize, f: G) -> Result<Vec<T>>
where
    T: Send,
    G: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..members).map(f).collect()
}

/// Run `f` inside a dedicated pool of `threads` workers (`None` or 0: the
/// global pool). Without the `parallel` feature this simply calls `f`.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if let Some(k) = threads.filter(|&k| k > 0) {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(k).build() {
                return pool.install(f);
            }
        }
        f()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn modes_agree_and_preserve_order() {
        let f = |i: usize| Ok(i * i);
        let a = run_members(50, Execution::Sequential, f).unwrap();
        let b = run_members(50, Execution::Parallel, f).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[7], 49);
    }

    #[test]
    fn first_error_by_index() {
        let f = |i: usize| {
            if i % 10 == 3 {
                Err(Error::InvalidParameter(format!("member {i}")))
            } else {
                Ok(i)
            }
        };
        for exec in [Execution::Sequential, Execution::Parallel] {
            let err = run_members(40, exec, f).unwrap_err();
            assert_eq!(err.to_string(), "invalid parameter: member 3");
        }
    }

    #[test]
    fn thread_pool_wrapper_runs() {
        let v = with_threads(Some(2), || run_members(8, Execution::Parallel, |i| Ok(i + 1)).unwrap());
        assert_eq!(v.iter().sum::<usize>(), 36);
    }
}
