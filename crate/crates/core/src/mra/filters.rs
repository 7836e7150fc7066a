//! CDF(2, d̃) filter coefficients.
//!
//! Masks are stored in the "sum = 2" convention `φ(x) = Σ h_n φ(2x − n)` as exact
//! dyadic rationals; [`Filter`] rescales them by `1/√2` so that the transforms
//! act on L²-normalized coefficients.

use nalgebra::DMatrix;

/// Primal low-pass mask of the piecewise linear hat function, taps `n = -1..=1`.
pub const HAT_MASK: [f64; 3] = [0.5, 1.0, 0.5];

const DUAL_2_2: [f64; 5] = [-1.0 / 4.0, 1.0 / 2.0, 3.0 / 2.0, 1.0 / 2.0, -1.0 / 4.0];

const DUAL_2_4: [f64; 9] = [
    3.0 / 64.0, -3.0 / 32.0, -1.0 / 4.0, 19.0 / 32.0, 45.0 / 32.0, 19.0 / 32.0, -1.0 / 4.0, -3.0 / 32.0, 3.0 / 64.0,
];

const DUAL_2_6: [f64; 13] = [
    -5.0 / 512.0, 5.0 / 256.0, 17.0 / 256.0, -39.0 / 256.0, -123.0 / 512.0, 81.0 / 128.0, 175.0 / 128.0,
    81.0 / 128.0, -123.0 / 512.0, -39.0 / 256.0, 17.0 / 256.0, 5.0 / 256.0, -5.0 / 512.0,
];

const DUAL_2_8: [f64; 17] = [
    35.0 / 16384.0, -35.0 / 8192.0, -75.0 / 4096.0, 335.0 / 8192.0, 307.0 / 4096.0, -1563.0 / 8192.0,
    -949.0 / 4096.0, 5359.0 / 8192.0, 11025.0 / 8192.0, 5359.0 / 8192.0, -949.0 / 4096.0, -1563.0 / 8192.0,
    307.0 / 4096.0, 335.0 / 8192.0, -75.0 / 4096.0, -35.0 / 8192.0, 35.0 / 16384.0,
];

const DUAL_2_10: [f64; 21] = [
    -63.0 / 131072.0, 63.0 / 65536.0, 329.0 / 65536.0, -721.0 / 65536.0, -3219.0 / 131072.0, 985.0 / 16384.0,
    1291.0 / 16384.0, -3567.0 / 16384.0, -14743.0 / 65536.0, 21877.0 / 32768.0, 43659.0 / 32768.0,
    21877.0 / 32768.0, -14743.0 / 65536.0, -3567.0 / 16384.0, 1291.0 / 16384.0, 985.0 / 16384.0,
    -3219.0 / 131072.0, -721.0 / 65536.0, 329.0 / 65536.0, 63.0 / 65536.0, -63.0 / 131072.0,
];

/// Dual low-pass mask for primal order 2, taps `n = -d̃..=d̃`, or `None` if unsupported.
pub fn dual_mask(dt: usize) -> Option<&'static [f64]> {
    match dt {
        2 => Some(&DUAL_2_2),
        4 => Some(&DUAL_2_4),
        6 => Some(&DUAL_2_6),
        8 => Some(&DUAL_2_8),
        10 => Some(&DUAL_2_10),
        _ => None,
    }
}

/// A finite filter `F_n`, `n = offset .. offset + taps.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    pub offset: i64,
    pub taps: Vec<f64>,
}

impl Filter {
    pub fn new(offset: i64, taps: Vec<f64>) -> Self {
        Filter { offset, taps }
    }

    /// Converts a sum-2 mask to the L²-normalized (sum √2) filter.
    pub fn from_mask(offset: i64, mask: &[f64]) -> Self {
        Filter::new(offset, mask.iter().map(|v| v * std::f64::consts::FRAC_1_SQRT_2).collect())
    }

    #[inline]
    pub fn get(&self, n: i64) -> f64 {
        let i = n - self.offset;
        if i < 0 || i as usize >= self.taps.len() {
            0.0
        } else {
            self.taps[i as usize]
        }
    }

    pub fn first(&self) -> i64 {
        self.offset
    }

    pub fn last(&self) -> i64 {
        self.offset + self.taps.len() as i64 - 1
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.taps.iter().enumerate().map(move |(i, &v)| (self.offset + i as i64, v))
    }

    /// High-pass partner `G_n = (-1)^n L_{1-n}` of a low-pass `L`.
    pub fn quadrature_mirror(&self) -> Filter {
        let first = 1 - self.last();
        let last = 1 - self.first();
        let taps = (first..=last)
            .map(|n| if n.rem_euclid(2) == 0 { 1.0 } else { -1.0 } * self.get(1 - n))
            .collect();
        Filter::new(first, taps)
    }

    /// Discrete moment `Σ_n n^m F_n`.
    pub fn moment(&self, m: u32) -> f64 {
        self.iter().map(|(n, v)| (n as f64).powi(m as i32) * v).sum()
    }

    /// `Σ_n self_n other_{n+shift}`.
    pub fn correlate(&self, other: &Filter, shift: i64) -> f64 {
        self.iter().map(|(n, v)| v * other.get(n + shift)).sum()
    }
}

/// L²-Sobolev regularity of the refinable function with sum-2 mask `mask`.
///
/// Splits off the factor `((1 + e^{-iξ})/2)^N` (`N` = number of zeros at π) and
/// evaluates `N − ½ log₂ ρ(T)` for the transfer operator `T_{ij} = 2 u_{2i−j}` of `u = |q|²`.
pub fn sobolev_regularity(mask: &[f64]) -> f64 {
    // polynomial in z with coefficients mask / 2 (so that value at z = 1 is one)
    let mut q: Vec<f64> = mask.iter().map(|v| v / 2.0).collect();
    let mut zeros = 0usize;
    // synthetic division by (1 + z)/2 while -1 remains a root
    loop {
        let at_minus_one: f64 = q.iter().enumerate().map(|(i, c)| if i % 2 == 0 { *c } else { -*c }).sum();
        if q.len() < 2 || at_minus_one.abs() > 1e-12 {
            break;
        }
        let deg = q.len() - 1;
        let mut quot = vec![0.0; deg];
        // q(z) = (1 + z) s(z); divide from the top
        let mut carry = 0.0;
        for i in (1..=deg).rev() {
            let s = q[i] - carry;
            quot[i - 1] = s;
            carry = s;
        }
        q = quot.iter().map(|v| 2.0 * v).collect();
        zeros += 1;
    }
    // u = q(z) q(1/z): autocorrelation, indices -(L)..=L
    let len = q.len() as i64;
    let l = len - 1;
    let u = |k: i64| -> f64 {
        (0..len).filter_map(|i| {
            let j = i - k;
            (0..len).contains(&j).then(|| q[i as usize] * q[j as usize])
        }).sum()
    };
    let size = (2 * l + 1) as usize;
    let t = DMatrix::from_fn(size, size, |i, j| {
        let (i, j) = (i as i64 - l, j as i64 - l);
        2.0 * u(2 * i - j)
    });
    let rho = t.complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max);
    zeros as f64 - 0.5 * rho.log2()
}
