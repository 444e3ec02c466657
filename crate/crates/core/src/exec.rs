#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How batch operations distribute per-item work.
///
/// `Parallel` uses the rayon global pool when the `parallel` feature is
/// compiled in and degrades to `Sequential` otherwise. Results are always
/// collected in input order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => items.par_iter().map(f).collect(),
            _ => items.iter().map(f).collect(),
        }
    }

    pub fn map_enumerated<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(usize, &T) -> U + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => items
                .par_iter()
                .enumerate()
                .map(|(i, item)| f(i, item))
                .collect(),
            _ => items
                .iter()
                .enumerate()
                .map(|(i, item)| f(i, item))
                .collect(),
        }
    }
}
