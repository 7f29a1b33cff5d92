use std::sync::atomic::{AtomicUsize, Ordering};

use crate::descriptors::{mean_set_descriptor, FaceDescriptor};
use crate::error::{LsedError, Result};
use crate::par;

/// Pairwise distance grid, rows indexed by `a`.
fn grid<T, F>(a: &[T], b: &[T], s: &F) -> Result<Vec<Vec<f64>>>
where
    T: Sync,
    F: Fn(&T, &T) -> Result<f64> + Sync,
{
    if a.is_empty() || b.is_empty() {
        return Err(LsedError::Empty("set"));
    }
    par::try_map_range(a.len(), |i| b.iter().map(|y| s(&a[i], y)).collect())
}

/// `max_{a in A} min_{b in B} s(a, b)`.
pub fn directed_hausdorff<T, F>(a: &[T], b: &[T], s: F) -> Result<f64>
where
    T: Sync,
    F: Fn(&T, &T) -> Result<f64> + Sync,
{
    let g = grid(a, b, &s)?;
    Ok(g.iter()
        .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// `max(h(A, B), h(B, A))`, evaluating each pair once.
pub fn hausdorff_distance<T, F>(a: &[T], b: &[T], s: F) -> Result<f64>
where
    T: Sync,
    F: Fn(&T, &T) -> Result<f64> + Sync,
{
    let g = grid(a, b, &s)?;
    let h_ab = g
        .iter()
        .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
        .fold(f64::NEG_INFINITY, f64::max);
    let h_ba = (0..b.len())
        .map(|j| g.iter().map(|row| row[j]).fold(f64::INFINITY, f64::min))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(h_ab.max(h_ba))
}

/// Compares two sets through their mean descriptors: one distance call.
pub fn mean_set_distance<F>(a: &[FaceDescriptor], b: &[FaceDescriptor], s: F) -> Result<f64>
where
    F: Fn(&FaceDescriptor, &FaceDescriptor) -> Result<f64>,
{
    s(&mean_set_descriptor(a)?, &mean_set_descriptor(b)?)
}

/// Wraps a distance and counts how often it is evaluated.
#[derive(Debug)]
pub struct CountingDistance<F> {
    inner: F,
    calls: AtomicUsize,
}

impl<F> CountingDistance<F> {
    pub fn new(inner: F) -> Self {
        CountingDistance {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }

    pub fn call<T: ?Sized>(&self, a: &T, b: &T) -> Result<f64>
    where
        F: Fn(&T, &T) -> Result<f64>,
    {
        self.calls.fetch_add(1, Ordering::Relaxed);
        (self.inner)(a, b)
    }
}
