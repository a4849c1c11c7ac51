//! Execution strategy for independent work items (sweep runs, optimizer
//! restarts).
//!
//! Results always come back in input order, so reductions over them are
//! identical whichever mode produced them. Without the `parallel` feature
//! [`ExecMode::Parallel`] runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    #[default]
    Sequential,
    Parallel,
}

impl ExecMode {
    /// `Parallel` when the crate was built with rayon support.
    pub fn best_available() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }

    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            ExecMode::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            ExecMode::Parallel => items.par_iter().map(f).collect(),
            #[cfg(not(feature = "parallel"))]
            ExecMode::Parallel => items.iter().map(f).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_preserve_order() {
        let items: Vec<u64> = (0..257).collect();
        let seq = ExecMode::Sequential.map(&items, |x| x * x + 1);
        let par = ExecMode::Parallel.map(&items, |x| x * x + 1);
        assert_eq!(seq, par);
        assert_eq!(seq[16], 257);
    }
}
