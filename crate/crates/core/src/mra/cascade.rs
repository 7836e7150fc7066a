//! Point values of refinable functions by the cascade algorithm.

use nalgebra::{DMatrix, DVector};

use super::{Family, Filter, WaveletSystem};

/// Samples `f(start + i·step)` of a compactly supported function on a dyadic grid.
#[derive(Debug, Clone)]
pub struct RefinableProfile {
    pub start: f64,
    pub step: f64,
    pub values: Vec<f64>,
}

impl RefinableProfile {
    /// Value at grid index `i` relative to `start`; zero outside the support.
    #[inline]
    pub fn at(&self, i: i64) -> f64 {
        if i < 0 || i as usize >= self.values.len() {
            0.0
        } else {
            self.values[i as usize]
        }
    }

    pub fn end(&self) -> f64 {
        self.start + self.step * (self.values.len() - 1) as f64
    }

    /// Trapezoidal approximation of `∫ x^m f(x) dx`.
    pub fn moment(&self, m: u32) -> f64 {
        // samples vanish at both ends of the support, so the trapezoidal rule is a plain sum
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| v * (self.start + i as f64 * self.step).powi(m as i32))
            .sum::<f64>()
            * self.step
    }
}

/// Values of `φ(x) = Σ_n mask_n φ(2x − n)` (sum-2 mask) on the grid `2^{-sweeps}`.
fn cascade(mask: &Filter, sweeps: u32) -> RefinableProfile {
    let (a, b) = (mask.first(), mask.last());
    let len = (b - a + 1) as usize;
    // integer samples: eigenvector of M_{xy} = mask_{2x−y} for eigenvalue one with Σ φ(n) = 1
    let mut m = DMatrix::from_fn(len, len, |x, y| {
        let (x, y) = (a + x as i64, a + y as i64);
        mask.get(2 * x - y) - if x == y { 1.0 } else { 0.0 }
    });
    let mut rhs = DVector::zeros(len);
    for y in 0..len {
        m[(len - 1, y)] = 1.0;
    }
    rhs[len - 1] = 1.0;
    let ints = m.lu().solve(&rhs).expect("refinement matrix must be nonsingular");
    let mut values: Vec<f64> = ints.iter().copied().collect();
    let mut level = 0u32;
    while level < sweeps {
        level += 1;
        // new grid spacing 2^{-level}; sample x = a + i 2^{-level}
        let n_new = ((b - a) as usize) * (1 << level) + 1;
        let scale_old = 1i64 << (level - 1);
        let mut next = vec![0.0; n_new];
        for (i, slot) in next.iter_mut().enumerate() {
            // 2x − n on the old grid: index (2(a·2^l + i) − n·2^l)/2 − a·2^{l−1}
            let x_num = a * (1 << level) + i as i64; // x = x_num 2^{-level}
            let mut acc = 0.0;
            for (n, hn) in mask.iter() {
                // 2x − n = (x_num − n 2^{level−1}) 2^{-(level−1)}
                let y = x_num - n * scale_old;
                let idx = y - a * scale_old;
                if idx >= 0 && (idx as usize) < values.len() {
                    acc += hn * values[idx as usize];
                }
            }
            *slot = acc;
        }
        values = next;
    }
    RefinableProfile { start: a as f64, step: (-(sweeps as f64)).exp2(), values }
}

impl WaveletSystem {
    /// Scaling function `φ` (primal) or `φ̃` (dual) on a grid of spacing `2^{-sweeps}`.
    pub fn scaling_profile(&self, family: Family, sweeps: u32) -> RefinableProfile {
        let (low, _) = self.refinement_filters(family);
        cascade(&sum2(low), sweeps)
    }

    /// Mother wavelet `ψ(x) = Σ_n √2 G_n φ(2x − n)` on a grid of spacing `2^{-sweeps}`.
    pub fn wavelet_profile(&self, family: Family, sweeps: u32) -> RefinableProfile {
        assert!(sweeps >= 1);
        let (low, high) = self.refinement_filters(family);
        let phi = cascade(&sum2(low), sweeps - 1);
        let high = sum2(high);
        // ψ(x) on grid 2^{-sweeps}: x = start + i step with start = (a + g.first)/2
        let a = low.first();
        let b = low.last();
        let start_num = a + high.first(); // 2x range lower end, in units of 1
        let end_num = b + high.last();
        let per_unit = 1i64 << (sweeps - 1); // samples per unit of 2x on phi's grid
        let count = ((end_num - start_num) * per_unit + 1) as usize;
        let values = (0..count)
            .map(|i| {
                let two_x = start_num * per_unit + i as i64; // 2x in units of 2^{-(sweeps-1)}
                high.iter()
                    .map(|(n, gn)| gn * phi.at(two_x - n * per_unit - a * per_unit))
                    .sum()
            })
            .collect();
        RefinableProfile { start: start_num as f64 / 2.0, step: (-(sweeps as f64)).exp2(), values }
    }
}

fn sum2(f: &Filter) -> Filter {
    Filter::new(f.offset, f.taps.iter().map(|v| v * std::f64::consts::SQRT_2).collect())
}
