//! Batch execution over independent jobs.

use serde::{Deserialize, Serialize};

/// How a batch of independent jobs is executed.
///
/// `Parallel` uses the rayon global pool when the `parallel` feature is
/// enabled and degrades to `Sequential` otherwise. Results are always
/// returned in input order, so both modes give identical output.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// True when jobs will actually run on more than one thread.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    pub fn map<T, R, F>(self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            return items.into_par_iter().map(f).collect();
        }
        items.into_iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_keep_order() {
        let v: Vec<u64> = (0..200).collect();
        let f = |x: u64| x * x + 1;
        assert_eq!(
            Execution::Parallel.map(v.clone(), f),
            Execution::Sequential.map(v, f)
        );
    }

    #[test]
    fn sequential_is_never_parallel() {
        assert!(!Execution::Sequential.is_parallel());
        assert_eq!(Execution::Parallel.is_parallel(), cfg!(feature = "parallel"));
    }
}
