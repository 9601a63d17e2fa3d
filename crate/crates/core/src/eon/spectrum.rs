//! Per-link frequency-slice occupancy.

use serde::{Deserialize, Serialize};

/// Slice width of the flexible grid, GHz.
pub const SLICE_WIDTH_GHZ: f64 = 12.5;
/// Every optical channel is 37.5 GHz wide.
pub const CHANNEL_SLICES: usize = 3;

/// A contiguous run of slices `[start, start + width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SliceRange {
    pub start: usize,
    pub width: usize,
}

impl SliceRange {
    pub fn end(&self) -> usize {
        self.start + self.width
    }
}

/// Bitmask of `S` slices; a set bit means occupied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpectrumBitmap {
    slices: usize,
    words: Vec<u64>,
}

impl SpectrumBitmap {
    pub fn new(slices: usize) -> Self {
        Self { slices, words: vec![0; slices.div_ceil(64)] }
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    pub fn is_occupied(&self, i: usize) -> bool {
        i < self.slices && (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn is_free(&self, r: SliceRange) -> bool {
        r.end() <= self.slices && (r.start..r.end()).all(|i| !self.is_occupied(i))
    }

    pub fn occupied_count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Marks a range occupied. Returns false (and changes nothing) if any
    /// slice in it is already taken or out of range.
    pub fn occupy(&mut self, r: SliceRange) -> bool {
        if !self.is_free(r) {
            return false;
        }
        for i in r.start..r.end() {
            self.words[i / 64] |= 1 << (i % 64);
        }
        true
    }

    /// Frees a range. Returns false if any slice in it was not occupied.
    pub fn release(&mut self, r: SliceRange) -> bool {
        if r.end() > self.slices || !(r.start..r.end()).all(|i| self.is_occupied(i)) {
            return false;
        }
        for i in r.start..r.end() {
            self.words[i / 64] &= !(1 << (i % 64));
        }
        true
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// OR of several bitmaps of equal size: a slice is taken if taken anywhere.
    pub fn union<'a>(slices: usize, maps: impl IntoIterator<Item = &'a SpectrumBitmap>) -> Self {
        let mut out = Self::new(slices);
        for m in maps {
            debug_assert_eq!(m.slices, slices);
            for (o, w) in out.words.iter_mut().zip(&m.words) {
                *o |= *w;
            }
        }
        out
    }

    /// Lowest start index of `width` consecutive free slices.
    pub fn first_fit(&self, width: usize) -> Option<usize> {
        if width == 0 || width > self.slices {
            return None;
        }
        let n = self.words.len();
        let mut free: Vec<u64> = self.words.iter().map(|w| !w).collect();
        let tail = self.slices % 64;
        if tail != 0 {
            free[n - 1] &= (1u64 << tail) - 1;
        }
        // bit i of `run` set iff slices i..i+k are all free, growing k
        let mut run = free.clone();
        for _ in 1..width {
            let mut shifted = vec![0u64; n];
            for j in 0..n {
                let hi = if j + 1 < n { run[j + 1] << 63 } else { 0 };
                shifted[j] = (run[j] >> 1) | hi;
            }
            for j in 0..n {
                run[j] = free[j] & shifted[j];
            }
        }
        run.iter().enumerate().find(|(_, w)| **w != 0).map(|(j, w)| j * 64 + w.trailing_zeros() as usize)
    }
}
