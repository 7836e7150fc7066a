//! Periodic fast wavelet transforms.
//!
//! `fwt`/`ifwt` act on expansions in the primal system (`v = Σ c_k φ_{L,k} = Σ d_λ ψ_λ`),
//! `fwt_dual`/`ifwt_dual` on expansions in the dual system. The synthesis map of one
//! family is the inverse transpose of the other: `ifwt_dual = fwtᵀ`.

use super::{Family, Filter, LevelIndexSet, WaveletSystem};
use crate::error::{Error, Result};

fn analysis_step(low: &Filter, high: &Filter, fine: &[f64], coarse: &mut [f64], detail: &mut [f64]) {
    let n = fine.len() as i64;
    for k in 0..coarse.len() {
        let base = 2 * k as i64;
        let mut c = 0.0;
        for (m, v) in low.iter() {
            c += v * fine[(base + m).rem_euclid(n) as usize];
        }
        let mut d = 0.0;
        for (m, v) in high.iter() {
            d += v * fine[(base + m).rem_euclid(n) as usize];
        }
        coarse[k] = c;
        detail[k] = d;
    }
}

fn synthesis_step(low: &Filter, high: &Filter, coarse: &[f64], detail: &[f64], fine: &mut [f64]) {
    let n = fine.len() as i64;
    fine.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..coarse.len() {
        let base = 2 * k as i64;
        let (c, d) = (coarse[k], detail[k]);
        for (m, v) in low.iter() {
            fine[(base + m).rem_euclid(n) as usize] += v * c;
        }
        for (m, v) in high.iter() {
            fine[(base + m).rem_euclid(n) as usize] += v * d;
        }
    }
}

impl WaveletSystem {
    fn check_len(idx: &LevelIndexSet, len: usize) -> Result<()> {
        if len != idx.len() {
            return Err(Error::DimensionMismatch { expected: idx.len(), got: len });
        }
        Ok(())
    }

    /// Single-scale coefficients at level `J + 1` → multiscale coefficients over `Λ_J`,
    /// for an expansion in `family`.
    pub fn analyze_in_place(&self, family: Family, idx: &LevelIndexSet, data: &mut [f64]) -> Result<()> {
        Self::check_len(idx, data.len())?;
        // analysis of a `family` expansion uses the biorthogonal partner's filters
        let (low, high) = match family {
            Family::Primal => (&self.h_dual, &self.g_dual),
            Family::Dual => (&self.h, &self.g),
        };
        let mut scratch = vec![0.0; data.len()];
        for j in (idx.j0 + 1..=idx.jmax).rev() {
            let half = 1usize << j;
            let fine = &mut scratch[..2 * half];
            fine.copy_from_slice(&data[..2 * half]);
            let (coarse, detail) = data[..2 * half].split_at_mut(half);
            analysis_step(low, high, fine, coarse, detail);
        }
        Ok(())
    }

    /// Inverse of [`WaveletSystem::analyze_in_place`].
    pub fn synthesize_in_place(&self, family: Family, idx: &LevelIndexSet, data: &mut [f64]) -> Result<()> {
        Self::check_len(idx, data.len())?;
        let (low, high) = self.refinement_filters(family);
        let mut scratch = vec![0.0; data.len()];
        for j in idx.j0 + 1..=idx.jmax {
            let half = 1usize << j;
            let (coarse, detail) = data[..2 * half].split_at(half);
            synthesis_step(low, high, coarse, detail, &mut scratch[..2 * half]);
            data[..2 * half].copy_from_slice(&scratch[..2 * half]);
        }
        Ok(())
    }

    /// Primal decomposition: single-scale → wavelet coefficients.
    pub fn fwt(&self, idx: &LevelIndexSet, values: &[f64]) -> Result<Vec<f64>> {
        let mut v = values.to_vec();
        self.analyze_in_place(Family::Primal, idx, &mut v)?;
        Ok(v)
    }

    /// Primal reconstruction; the synthesis map `T` with `ψ_λ = Σ_k T_{kλ} φ_{J+1,k}`.
    pub fn ifwt(&self, idx: &LevelIndexSet, coeffs: &[f64]) -> Result<Vec<f64>> {
        let mut v = coeffs.to_vec();
        self.synthesize_in_place(Family::Primal, idx, &mut v)?;
        Ok(v)
    }

    /// Dual decomposition; equals `Tᵀ`.
    pub fn fwt_dual(&self, idx: &LevelIndexSet, values: &[f64]) -> Result<Vec<f64>> {
        let mut v = values.to_vec();
        self.analyze_in_place(Family::Dual, idx, &mut v)?;
        Ok(v)
    }

    /// Dual reconstruction `T̃ = T^{-ᵀ}`.
    pub fn ifwt_dual(&self, idx: &LevelIndexSet, coeffs: &[f64]) -> Result<Vec<f64>> {
        let mut v = coeffs.to_vec();
        self.synthesize_in_place(Family::Dual, idx, &mut v)?;
        Ok(v)
    }
}
