//! Wavelet index bookkeeping.
//!
//! Level `j0` holds the coarse single-scale block `Φ_{j0+1}` with `2^{j0+1}`
//! functions; every level `j > j0` holds `2^j` wavelets. The flat layout is
//! level-major, so level `j > j0` occupies `[2^j, 2^{j+1})` and `p = 2^{J+1}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex {
    pub j: usize,
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelIndexSet {
    pub j0: usize,
    pub jmax: usize,
}

impl LevelIndexSet {
    pub fn new(j0: usize, jmax: usize) -> Result<Self> {
        if jmax < j0 {
            return Err(Error::InvalidParameter(format!("finest level {jmax} below coarsest level {j0}")));
        }
        if jmax >= 40 {
            return Err(Error::InvalidParameter(format!("level {jmax} is out of range")));
        }
        Ok(LevelIndexSet { j0, jmax })
    }

    /// `p = #(Λ_J)`.
    #[inline]
    pub fn len(&self) -> usize {
        1 << (self.jmax + 1)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Level of the single-scale space spanned by the index set.
    #[inline]
    pub fn single_scale_level(&self) -> usize {
        self.jmax + 1
    }

    pub fn levels(&self) -> std::ops::RangeInclusive<usize> {
        self.j0..=self.jmax
    }

    /// `#(∇_j)`.
    #[inline]
    pub fn level_size(&self, j: usize) -> usize {
        if j == self.j0 {
            1 << (self.j0 + 1)
        } else {
            1 << j
        }
    }

    #[inline]
    pub fn level_offset(&self, j: usize) -> usize {
        if j == self.j0 {
            0
        } else {
            1 << j
        }
    }

    pub fn level_range(&self, j: usize) -> std::ops::Range<usize> {
        let o = self.level_offset(j);
        o..o + self.level_size(j)
    }

    #[inline]
    pub fn flat(&self, idx: MultiIndex) -> usize {
        self.level_offset(idx.j) + idx.k
    }

    #[inline]
    pub fn level_of(&self, flat: usize) -> usize {
        if flat < (1 << (self.j0 + 1)) {
            self.j0
        } else {
            (usize::BITS - 1 - flat.leading_zeros()) as usize
        }
    }

    #[inline]
    pub fn multi(&self, flat: usize) -> MultiIndex {
        let j = self.level_of(flat);
        MultiIndex { j, k: flat - self.level_offset(j) }
    }

    pub fn iter(&self) -> impl Iterator<Item = MultiIndex> + '_ {
        (0..self.len()).map(|i| self.multi(i))
    }

    /// Index set truncated at a coarser finest level.
    pub fn truncate(&self, jmax: usize) -> Result<Self> {
        LevelIndexSet::new(self.j0, jmax.min(self.jmax))
    }
}

/// Diagonal scaling `D^s` with entries `2^{s|λ|}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagScaling {
    pub s: f64,
    pub entries: Vec<f64>,
}

impl DiagScaling {
    pub fn new(idx: &LevelIndexSet, s: f64) -> Self {
        let entries = (0..idx.len()).map(|i| (s * idx.level_of(i) as f64).exp2()).collect();
        DiagScaling { s, entries }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.entries).map(|(a, b)| a * b).collect()
    }

    pub fn apply_inverse(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.entries).map(|(a, b)| a / b).collect()
    }
}

/// `D^s` over `idx`.
pub fn diag_scaling(idx: &LevelIndexSet, s: f64) -> DiagScaling {
    DiagScaling::new(idx, s)
}
