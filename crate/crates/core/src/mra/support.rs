//! Supports and singular supports of the primal basis functions in parameter space.

use super::{LevelIndexSet, MultiIndex, WaveletSystem};

/// A closed periodic interval `[start, start + len]` of the parameter circle `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamInterval {
    pub start: f64,
    pub len: f64,
}

impl ParamInterval {
    pub fn full() -> Self {
        ParamInterval { start: 0.0, len: 1.0 }
    }

    pub fn is_full(&self) -> bool {
        self.len >= 1.0
    }

    pub fn end(&self) -> f64 {
        self.start + self.len
    }

    pub fn contains(&self, t: f64) -> bool {
        self.is_full() || (t - self.start).rem_euclid(1.0) <= self.len + 1e-14
    }

    /// Whether two periodic intervals share at least one point.
    pub fn intersects(&self, other: &ParamInterval) -> bool {
        if self.is_full() || other.is_full() {
            return true;
        }
        let gap = (other.start - self.start).rem_euclid(1.0);
        gap <= self.len + 1e-14 || (self.start - other.start).rem_euclid(1.0) <= other.len + 1e-14
    }

    /// `count + 1` equispaced parameters covering the interval.
    pub fn samples(&self, count: usize) -> impl Iterator<Item = f64> + '_ {
        let len = self.len.min(1.0);
        (0..=count).map(move |i| self.start + len * i as f64 / count as f64)
    }
}

/// Support data of the primal basis over an index set.
pub trait SupportGeometry {
    fn support(&self, idx: &LevelIndexSet, lambda: MultiIndex) -> ParamInterval;
    fn singular_support(&self, idx: &LevelIndexSet, lambda: MultiIndex) -> Vec<f64>;
    /// Width constant `c` with `|S_{j,k}| = c 2^{-j}` for wavelet levels.
    fn support_width_constant(&self) -> f64;
}

impl WaveletSystem {
    /// Fine-grid node range `[lo, hi]` at level `level` of the hats combined into `λ`.
    fn node_range(&self, idx: &LevelIndexSet, lambda: MultiIndex) -> (i64, i64, usize) {
        if lambda.j == idx.j0 {
            let k = lambda.k as i64;
            (k, k, idx.j0 + 1)
        } else {
            let base = 2 * lambda.k as i64;
            (base + self.g.first(), base + self.g.last(), lambda.j + 1)
        }
    }
}

impl SupportGeometry for WaveletSystem {
    fn support(&self, idx: &LevelIndexSet, lambda: MultiIndex) -> ParamInterval {
        let (lo, hi, level) = self.node_range(idx, lambda);
        let h = (-(level as f64)).exp2();
        // each hat φ_{level,n} lives on [(n−1)h, (n+1)h]
        let len = (hi - lo + 2) as f64 * h;
        if len >= 1.0 {
            return ParamInterval::full();
        }
        ParamInterval { start: ((lo - 1) as f64 * h).rem_euclid(1.0), len }
    }

    fn singular_support(&self, idx: &LevelIndexSet, lambda: MultiIndex) -> Vec<f64> {
        let (lo, hi, level) = self.node_range(idx, lambda);
        let nodes = 1i64 << level;
        let h = (-(level as f64)).exp2();
        let mut knots: Vec<i64> = ((lo - 1)..=(hi + 1)).map(|n| n.rem_euclid(nodes)).collect();
        knots.sort_unstable();
        knots.dedup();
        knots.into_iter().map(|n| n as f64 * h).collect()
    }

    fn support_width_constant(&self) -> f64 {
        (self.g.last() - self.g.first() + 2) as f64 / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths_halve_per_level() {
        let w = WaveletSystem::build_default(2, 6).unwrap();
        let idx = w.index_set(8).unwrap();
        assert_eq!(w.support_width_constant(), 7.0);
        for j in idx.j0 + 1..=idx.jmax {
            let s = w.support(&idx, MultiIndex { j, k: 1 });
            assert_eq!(s.len, 7.0 * (-(j as f64)).exp2());
            if j > idx.j0 + 1 {
                let coarser = w.support(&idx, MultiIndex { j: j - 1, k: 1 });
                assert_eq!(coarser.len, 2.0 * s.len);
            }
        }
        let coarse = w.support(&idx, MultiIndex { j: idx.j0, k: 0 });
        assert_eq!(coarse.len, 0.25);
        assert!((coarse.start - 0.875).abs() < 1e-15);
    }

    #[test]
    fn knots_inside_support() {
        let w = WaveletSystem::build_default(2, 8).unwrap();
        let idx = w.index_set(7).unwrap();
        for lambda in idx.iter() {
            let s = w.support(&idx, lambda);
            let knots = w.singular_support(&idx, lambda);
            assert!(!knots.is_empty());
            assert!(knots.iter().all(|&t| s.contains(t)), "{lambda:?}");
        }
    }

    #[test]
    fn interval_intersection() {
        let a = ParamInterval { start: 0.9, len: 0.2 };
        let b = ParamInterval { start: 0.05, len: 0.1 };
        let c = ParamInterval { start: 0.2, len: 0.1 };
        assert!(a.intersects(&b) && b.intersects(&a));
        assert!(!a.intersects(&c) && !c.intersects(&a));
    }
}
