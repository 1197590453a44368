//! Execution policy for the data-parallel inner loops.
//!
//! Every batch evaluation in the crate (pointwise indemnities over the grid,
//! scenario sweeps) goes through [`Exec::map`]. With the `parallel` feature
//! disabled, [`Exec::Parallel`] silently runs sequentially. Results are always
//! returned in input order and reductions are done sequentially by callers,
//! so both policies produce bit-identical output.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exec {
    #[default]
    Parallel,
    Sequential,
}

impl Exec {
    /// Whether this policy actually fans out work in the current build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        {
            if self == Exec::Parallel {
                use rayon::prelude::*;
                return items.par_iter().map(f).collect();
            }
        }
        items.iter().map(f).collect()
    }

    /// Runs two closures, concurrently when the policy allows it.
    pub fn join<A, B, RA, RB>(self, a: A, b: B) -> (RA, RB)
    where
        A: FnOnce() -> RA + Send,
        B: FnOnce() -> RB + Send,
        RA: Send,
        RB: Send,
    {
        #[cfg(feature = "parallel")]
        {
            if self == Exec::Parallel {
                return rayon::join(a, b);
            }
        }
        (a(), b())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_agree_and_keep_order() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 * 0.37).collect();
        let a = Exec::Parallel.map(&xs, |x| x.sin());
        let b = Exec::Sequential.map(&xs, |x| x.sin());
        assert_eq!(a, b);
    }

    #[test]
    fn join_returns_both() {
        let (a, b) = Exec::Sequential.join(|| 1, || 2);
        assert_eq!((a, b), (1, 2));
        let (a, b) = Exec::Parallel.join(|| "x", || 3.5);
        assert_eq!((a, b), ("x", 3.5));
    }
}
