//! Work distribution.
//!
//! The engine expresses its hot loops as "evaluate `f(i)` for `i` in
//! `0..len` and collect in index order". An [`Executor`] decides how those
//! calls are scheduled. Since every item derives its own random stream from
//! its index, any executor yields identical output.

use alloc::vec::Vec;

pub trait Executor: Sync {
    fn map<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs every item on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..len).map(f).collect()
    }
}

impl<E: Executor> Executor for &E {
    fn map<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (**self).map(len, f)
    }
}
