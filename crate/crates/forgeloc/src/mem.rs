//! Byte accounting for raster buffers.
//!
//! Every [`Plane`](crate::raster::Plane), mask, and accumulator allocation is
//! counted against a process-wide tally so callers can verify that tiled
//! processing stays within a memory budget instead of scaling with image area
//! times overlap.

use std::ops::{Deref, DerefMut};
use std::sync::atomic::{AtomicUsize, Ordering};

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

fn on_alloc(bytes: usize) {
    let now = CURRENT.fetch_add(bytes, Ordering::Relaxed) + bytes;
    PEAK.fetch_max(now, Ordering::Relaxed);
}

fn on_free(bytes: usize) {
    CURRENT.fetch_sub(bytes, Ordering::Relaxed);
}

/// Bytes currently held by tracked raster buffers.
pub fn current_bytes() -> usize {
    CURRENT.load(Ordering::Relaxed)
}

/// High-water mark since process start or the last [`reset_peak`].
pub fn peak_bytes() -> usize {
    PEAK.load(Ordering::Relaxed)
}

/// Resets the high-water mark to the current usage.
pub fn reset_peak() {
    PEAK.store(CURRENT.load(Ordering::Relaxed), Ordering::Relaxed);
}

/// A fixed-size buffer whose allocation is charged to the raster tally.
#[derive(Debug)]
pub(crate) struct TrackedVec<T> {
    data: Vec<T>,
    bytes: usize,
}

impl<T> TrackedVec<T> {
    pub(crate) fn from_vec(data: Vec<T>) -> Self {
        let bytes = data.capacity() * std::mem::size_of::<T>();
        on_alloc(bytes);
        Self { data, bytes }
    }

    pub(crate) fn filled(value: T, len: usize) -> Self
    where
        T: Clone,
    {
        Self::from_vec(vec![value; len])
    }

}

impl<T> Drop for TrackedVec<T> {
    fn drop(&mut self) {
        on_free(self.bytes);
    }
}

impl<T: Clone> Clone for TrackedVec<T> {
    fn clone(&self) -> Self {
        Self::from_vec(self.data.clone())
    }
}

impl<T: PartialEq> PartialEq for TrackedVec<T> {
    fn eq(&self, other: &Self) -> bool {
        self.data == other.data
    }
}

impl<T> Deref for TrackedVec<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.data
    }
}

impl<T> DerefMut for TrackedVec<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alloc_and_drop_balance() {
        let before = current_bytes();
        let buf = TrackedVec::filled(0f32, 1024);
        assert!(current_bytes() >= before + 4096);
        drop(buf);
        assert_eq!(current_bytes(), before);
    }

    #[test]
    fn peak_tracks_high_water() {
        reset_peak();
        let base = peak_bytes();
        let a = TrackedVec::filled(0u8, 1 << 16);
        drop(a);
        assert!(peak_bytes() >= base + (1 << 16));
    }
}
