//! Execution mode for the data-parallel loops.
//!
//! Every sweep in the solvers is split into phases whose per-node work is
//! independent, so each phase is a plain map over nodes. With the `parallel`
//! feature those maps run on the rayon pool; without it, or when
//! [`Parallelism::Serial`] is requested, they run in order on the caller's
//! thread. Both paths perform the same floating-point operations per node, so
//! results are bitwise identical.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parallelism {
    Serial,
    /// Falls back to [`Parallelism::Serial`] when the `parallel` feature is off.
    Parallel,
}

impl Default for Parallelism {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Parallelism::Parallel
        } else {
            Parallelism::Serial
        }
    }
}

impl Parallelism {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Parallel
    }
}

pub(crate) fn for_each_mut<T, F>(mode: Parallelism, items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        items.par_iter_mut().enumerate().for_each(|(i, t)| f(i, t));
        return;
    }
    let _ = mode;
    items.iter_mut().enumerate().for_each(|(i, t)| f(i, t));
}

pub(crate) fn zip_for_each_mut<A, B, F>(mode: Parallelism, a: &mut [A], b: &mut [B], f: F)
where
    A: Send,
    B: Send,
    F: Fn(usize, &mut A, &mut B) + Send + Sync,
{
    debug_assert_eq!(a.len(), b.len());
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        a.par_iter_mut()
            .zip(b.par_iter_mut())
            .enumerate()
            .for_each(|(i, (x, y))| f(i, x, y));
        return;
    }
    let _ = mode;
    a.iter_mut()
        .zip(b.iter_mut())
        .enumerate()
        .for_each(|(i, (x, y))| f(i, x, y));
}

pub(crate) fn map_indexed<R, F>(mode: Parallelism, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serial_and_parallel_maps_agree() {
        let a = map_indexed(Parallelism::Serial, 100, |i| (i as f64).sqrt());
        let b = map_indexed(Parallelism::Parallel, 100, |i| (i as f64).sqrt());
        assert_eq!(a, b);
    }

    #[test]
    fn zip_visits_every_pair_once() {
        let mut a = vec![0usize; 50];
        let mut b = vec![0usize; 50];
        zip_for_each_mut(Parallelism::Parallel, &mut a, &mut b, |i, x, y| {
            *x += i;
            *y += 2 * i;
        });
        assert!(a.iter().enumerate().all(|(i, &x)| x == i));
        assert!(b.iter().enumerate().all(|(i, &y)| y == 2 * i));
    }
}
