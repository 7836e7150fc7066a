//! Periodic biorthogonal CDF(2, d̃) spline wavelets on the parameter circle `[0, 1)`.
//!
//! The primal system is built from piecewise linear hat functions; the primal
//! wavelets carry `d̃` vanishing moments and the dual wavelets carry `d = 2`.
//! Functions are L²-normalized in the parameter domain: `φ_{j,k}(t) = 2^{j/2} φ(2^j t − k)`.

mod cascade;
pub mod filters;
pub mod index;
mod support;
mod transform;

use serde::Serialize;

pub use cascade::RefinableProfile;
pub use filters::Filter;
pub use index::{diag_scaling, DiagScaling, LevelIndexSet, MultiIndex};
pub use support::{ParamInterval, SupportGeometry};

use crate::error::{Error, Result};

/// Which of the two biorthogonal families a transform or profile refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Family {
    Primal,
    Dual,
}

#[derive(Debug, Clone, Serialize)]
pub struct WaveletSystem {
    pub d: usize,
    pub dt: usize,
    pub j0: usize,
    /// Primal low-pass (`Σ = √2`).
    #[serde(skip)]
    pub h: Filter,
    #[serde(skip)]
    pub h_dual: Filter,
    #[serde(skip)]
    pub g: Filter,
    #[serde(skip)]
    pub g_dual: Filter,
    /// Sobolev regularity of the primal scaling function.
    pub gamma: f64,
    /// Sobolev regularity of the dual scaling function.
    pub gamma_dual: f64,
}

/// Supported `(d, d̃)` pairs.
pub const SUPPORTED_PAIRS: [(usize, usize); 4] = [(2, 4), (2, 6), (2, 8), (2, 10)];

impl WaveletSystem {
    /// Smallest admissible coarse level: level `j0 + 1` wavelets must not overlap their own periodic images.
    pub fn min_coarse_level(d: usize, dt: usize) -> Result<usize> {
        if !SUPPORTED_PAIRS.contains(&(d, dt)) {
            return Err(Error::UnsupportedWavelet { d, dt });
        }
        // primal wavelet support width is (d̃ + 1) 2^{-j}
        let width = dt + 1;
        let mut j = 0usize;
        while (1usize << (j + 1)) < width {
            j += 1;
        }
        Ok(j)
    }

    pub fn build(d: usize, dt: usize, j0: usize) -> Result<Self> {
        let min = Self::min_coarse_level(d, dt)?;
        if j0 < min {
            return Err(Error::LevelTooCoarse { level: j0, min });
        }
        let mask = filters::dual_mask(dt).ok_or(Error::UnsupportedWavelet { d, dt })?;
        let h = Filter::from_mask(-1, &filters::HAT_MASK);
        let h_dual = Filter::from_mask(-(dt as i64), mask);
        let g = h_dual.quadrature_mirror();
        let g_dual = h.quadrature_mirror();
        Ok(WaveletSystem {
            d,
            dt,
            j0,
            gamma: filters::sobolev_regularity(&filters::HAT_MASK),
            gamma_dual: filters::sobolev_regularity(mask),
            h,
            h_dual,
            g,
            g_dual,
        })
    }

    /// Builds with the smallest admissible coarse level.
    pub fn build_default(d: usize, dt: usize) -> Result<Self> {
        Self::build(d, dt, Self::min_coarse_level(d, dt)?)
    }

    pub fn index_set(&self, jmax: usize) -> Result<LevelIndexSet> {
        LevelIndexSet::new(self.j0, jmax)
    }

    /// Low- and high-pass filters used to refine functions of `family`.
    pub fn refinement_filters(&self, family: Family) -> (&Filter, &Filter) {
        match family {
            Family::Primal => (&self.h, &self.g),
            Family::Dual => (&self.h_dual, &self.g_dual),
        }
    }

    /// Maximum violation of the perfect-reconstruction identities
    /// `Σ H_n H̃_{n+2m} = δ_m`, `Σ G_n G̃_{n+2m} = δ_m`, `Σ H_n G̃_{n+2m} = Σ H̃_n G_{n+2m} = 0`.
    pub fn biorthogonality_defect(&self) -> f64 {
        let span = (self.h_dual.taps.len() + self.g.taps.len()) as i64;
        let mut worst = 0.0f64;
        for m in -span..=span {
            let delta = if m == 0 { 1.0 } else { 0.0 };
            worst = worst
                .max((self.h.correlate(&self.h_dual, 2 * m) - delta).abs())
                .max((self.g.correlate(&self.g_dual, 2 * m) - delta).abs())
                .max(self.h.correlate(&self.g_dual, 2 * m).abs())
                .max(self.h_dual.correlate(&self.g, 2 * m).abs());
        }
        worst
    }

    /// Filter coefficients as CSV rows `filter,n,value`.
    pub fn filters_csv(&self) -> String {
        let mut out = String::from("filter,n,value\n");
        for (name, f) in [("h", &self.h), ("h_dual", &self.h_dual), ("g", &self.g), ("g_dual", &self.g_dual)] {
            for (n, v) in f.iter() {
                out.push_str(&format!("{name},{n},{v:.17e}\n"));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_levels() {
        assert_eq!(WaveletSystem::min_coarse_level(2, 4).unwrap(), 2);
        assert_eq!(WaveletSystem::min_coarse_level(2, 6).unwrap(), 2);
        assert_eq!(WaveletSystem::min_coarse_level(2, 8).unwrap(), 3);
        assert_eq!(WaveletSystem::min_coarse_level(2, 10).unwrap(), 3);
        assert!(matches!(WaveletSystem::build(2, 2, 3), Err(Error::UnsupportedWavelet { .. })));
        assert!(matches!(WaveletSystem::build(3, 5, 3), Err(Error::UnsupportedWavelet { .. })));
        assert!(matches!(WaveletSystem::build(2, 8, 2), Err(Error::LevelTooCoarse { .. })));
    }

    #[test]
    fn primal_mask_is_hat() {
        let w = WaveletSystem::build_default(2, 4).unwrap();
        let s = std::f64::consts::SQRT_2;
        assert_eq!(w.h.offset, -1);
        for (a, b) in w.h.taps.iter().zip([0.5, 1.0, 0.5]) {
            assert!((a * s - b).abs() < 1e-15);
        }
    }

    #[test]
    fn perfect_reconstruction_identities() {
        for (d, dt) in SUPPORTED_PAIRS {
            let w = WaveletSystem::build_default(d, dt).unwrap();
            assert!(w.biorthogonality_defect() <= 1e-14, "CDF({d},{dt}): {}", w.biorthogonality_defect());
        }
    }

    #[test]
    fn discrete_vanishing_moments() {
        for (d, dt) in SUPPORTED_PAIRS {
            let w = WaveletSystem::build_default(d, dt).unwrap();
            let scale = w.g.taps.iter().map(|v| v.abs()).sum::<f64>();
            for m in 0..dt as u32 {
                let tol = 1e-14 * scale * (w.g.last().abs().max(w.g.first().abs()) as f64).powi(m as i32).max(1.0);
                assert!(w.g.moment(m).abs() <= tol, "primal high-pass moment {m} of CDF({d},{dt})");
            }
            assert!(w.g.moment(dt as u32).abs() > 1e-6);
            for m in 0..d as u32 {
                assert!(w.g_dual.moment(m).abs() <= 1e-14);
            }
            assert!(w.g_dual.moment(d as u32).abs() > 1e-6);
        }
    }

    #[test]
    fn regularity_covers_coloring_orders() {
        // preconditioning of an order −2ra covariance needs γ̃ > ra
        assert!(WaveletSystem::build_default(2, 6).unwrap().gamma_dual > 1.0);
        assert!(WaveletSystem::build_default(2, 8).unwrap().gamma_dual > 2.0);
        assert!(WaveletSystem::build_default(2, 10).unwrap().gamma_dual > 2.0);
        assert!(WaveletSystem::build_default(2, 6).unwrap().gamma_dual < 2.0);
    }
}
