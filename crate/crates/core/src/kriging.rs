//! Posterior-mean prediction from noisy local averages.
//!
//! Observations are `y_i = ⟨g_i, Z⟩ + η_i` with box functionals `g_i` of unit mass on
//! arcs of the curve. In dual wavelet coordinates the model reads `y = G z̃ + η` with
//! `G = G_φ̃ T`, where `G_φ̃` holds the averages of the finest dual scaling functions and
//! `T` is the dual synthesis transform. `G` is only ever applied in this factored form.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifold::CurveSpec;
use crate::matrix::{CsrMatrix, DenseSymMatrix};
use crate::mra::{Family, LevelIndexSet, RefinableProfile, WaveletSystem};
use crate::quadrature::GaussRule;
use crate::sampler::SYNTH_SWEEPS;
use crate::spectral::{cg_solve, SymOperator};

/// Smallest admissible box width, in cells of the finest grid.
pub const MIN_WIDTH_CELLS: f64 = 2.0;

/// Default box width, in cells of the finest grid.
pub const DEFAULT_WIDTH_CELLS: f64 = 4.0;

/// Arc `[center − width/2, center + width/2]` of the parameter circle `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxFunctional {
    pub center: f64,
    pub width: f64,
    /// Arc length of the box on the curve; `g = 1/arc_length` on the box.
    pub arc_length: f64,
}

impl BoxFunctional {
    fn start(&self) -> f64 {
        (self.center - 0.5 * self.width).rem_euclid(TAU)
    }

    /// `‖g‖_{L²(M)}`.
    pub fn l2_norm(&self) -> f64 {
        self.arc_length.recip().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservationSet {
    pub functionals: Vec<BoxFunctional>,
    pub values: Vec<f64>,
    pub sigma2: f64,
}

impl ObservationSet {
    /// Checks widths, noise level and pairwise disjointness of the supports.
    pub fn new(curve: &CurveSpec, centers: &[f64], widths: &[f64], values: Vec<f64>, sigma2: f64) -> Result<Self> {
        let k = centers.len();
        if widths.len() != k || values.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: widths.len().min(values.len()) });
        }
        if k == 0 {
            return Err(Error::InvalidParameter("at least one observation is required".into()));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise variance must be positive, got {sigma2}")));
        }
        if values.iter().chain(centers).chain(widths).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observations"));
        }
        if let Some(w) = widths.iter().find(|&&w| !(w > 0.0 && w <= TAU)) {
            return Err(Error::InvalidParameter(format!("box width {w} outside (0, 2π]")));
        }
        let rule = GaussRule::new(16);
        let functionals: Vec<BoxFunctional> = centers
            .iter()
            .zip(widths)
            .map(|(&c, &w)| {
                let a = c - 0.5 * w;
                let arc_length = rule.integrate(a, a + w, |phi| curve.measure_weight(phi));
                BoxFunctional { center: c.rem_euclid(TAU), width: w, arc_length }
            })
            .collect();
        check_disjoint(&functionals)?;
        Ok(ObservationSet { functionals, values, sigma2 })
    }

    /// `K` boxes of equal width centred at `2π(i + ½)/K`.
    pub fn equispaced(curve: &CurveSpec, k: usize, width: f64, values: Vec<f64>, sigma2: f64) -> Result<Self> {
        let centers: Vec<f64> = (0..k).map(|i| TAU * (i as f64 + 0.5) / k as f64).collect();
        Self::new(curve, &centers, &vec![width; k], values, sigma2)
    }

    pub fn len(&self) -> usize {
        self.functionals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functionals.is_empty()
    }
}

fn check_disjoint(f: &[BoxFunctional]) -> Result<()> {
    if f.len() < 2 {
        return Ok(());
    }
    let mut order: Vec<usize> = (0..f.len()).collect();
    order.sort_by(|&a, &b| f[a].start().total_cmp(&f[b].start()));
    let tol = 1e-12;
    for w in 0..order.len() {
        let (a, b) = (order[w], order[(w + 1) % order.len()]);
        let end_a = f[a].start() + f[a].width;
        let start_b = if w + 1 == order.len() { f[b].start() + TAU } else { f[b].start() };
        if end_a > start_b + tol {
            return Err(Error::OverlappingObservations(a.min(b), a.max(b)));
        }
    }
    Ok(())
}

/// Running trapezoidal integral of a sampled profile.
struct ProfileIntegral {
    start: f64,
    step: f64,
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl ProfileIntegral {
    fn new(p: &RefinableProfile) -> Self {
        let mut cumulative = Vec::with_capacity(p.values.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in p.values.windows(2) {
            acc += 0.5 * p.step * (w[0] + w[1]);
            cumulative.push(acc);
        }
        ProfileIntegral { start: p.start, step: p.step, values: p.values.clone(), cumulative }
    }

    fn end(&self) -> f64 {
        self.start + self.step * (self.values.len() - 1) as f64
    }

    /// `∫_{start}^{x}` of the piecewise linear interpolant.
    fn up_to(&self, x: f64) -> f64 {
        if x <= self.start {
            return 0.0;
        }
        let n = self.values.len();
        if x >= self.end() {
            return self.cumulative[n - 1];
        }
        let s = (x - self.start) / self.step;
        let i = (s.floor() as usize).min(n - 2);
        let t = s - i as f64;
        let (f0, f1) = (self.values[i], self.values[i + 1]);
        self.cumulative[i] + self.step * t * (f0 + 0.5 * t * (f1 - f0))
    }

    fn between(&self, a: f64, b: f64) -> f64 {
        self.up_to(b) - self.up_to(a)
    }
}

/// Observation operator in single-scale and wavelet form.
#[derive(Debug, Clone)]
pub struct ObservationMatrix {
    pub system: WaveletSystem,
    pub idx: LevelIndexSet,
    /// `G_φ̃`, `K × 2^L` with `L = J + 1`.
    pub single: CsrMatrix,
    /// `G = G_φ̃ T`, `K × p`.
    pub wavelet: CsrMatrix,
}

impl ObservationMatrix {
    pub fn rows(&self) -> usize {
        self.single.rows
    }

    /// `G x` through the dual synthesis transform.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let c = self.system.ifwt_dual(&self.idx, x)?;
        Ok(self.single.matvec(&c))
    }

    /// `Gᵀ v`; the adjoint of dual synthesis is primal analysis.
    pub fn apply_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        let c = self.single.matvec_transpose(v);
        self.system.fwt(&self.idx, &c)
    }
}

/// Builds `G_φ̃` by quadrature against the cascade dual scaling function and `G` by the
/// primal analysis of its rows.
pub fn build_observation_matrix(system: &WaveletSystem, obs: &ObservationSet, idx: &LevelIndexSet) -> Result<ObservationMatrix> {
    let level = idx.single_scale_level();
    let n = 1usize << level;
    let cell = TAU / n as f64;
    for (i, f) in obs.functionals.iter().enumerate() {
        if f.width < MIN_WIDTH_CELLS * cell - 1e-12 {
            return Err(Error::UnresolvedObservation {
                index: i,
                level: idx.jmax,
                reason: format!("width {:.3e} is below {MIN_WIDTH_CELLS} cells of size {cell:.3e}", f.width),
            });
        }
    }
    let profile = ProfileIntegral::new(&system.scaling_profile(Family::Dual, SYNTH_SWEEPS));
    let amp = (TAU / n as f64).sqrt();
    let single_rows: Vec<Vec<(usize, f64)>> = obs
        .functionals
        .par_iter()
        .map(|f| {
            let ua = f.start() / cell;
            let ub = ua + f.width / cell;
            let mut acc = vec![0.0; n];
            let k_lo = (ua - profile.end()).floor() as i64;
            let k_hi = (ub - profile.start).ceil() as i64;
            for k in k_lo..=k_hi {
                let v = profile.between(ua - k as f64, ub - k as f64);
                if v != 0.0 {
                    acc[k.rem_euclid(n as i64) as usize] += v;
                }
            }
            let scale = amp / f.arc_length;
            acc.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(k, v)| (k, v * scale)).collect()
        })
        .collect();
    let single = CsrMatrix::from_rows(n, single_rows);
    let wavelet_rows: Vec<Vec<(usize, f64)>> = (0..single.rows)
        .into_par_iter()
        .map(|i| {
            let mut dense = vec![0.0; n];
            for (k, v) in single.row(i) {
                dense[k] = v;
            }
            let w = system.fwt(idx, &dense)?;
            Ok(w.into_iter().enumerate().filter(|(_, v)| *v != 0.0).collect())
        })
        .collect::<Result<_>>()?;
    let wavelet = CsrMatrix::from_rows(idx.len(), wavelet_rows);
    Ok(ObservationMatrix { system: system.clone(), idx: *idx, single, wavelet })
}

/// `v ↦ G C Gᵀ v + σ² v`, applied in factored form.
pub struct GramOperator<'a> {
    pub c: &'a dyn SymOperator,
    pub g: &'a ObservationMatrix,
    pub sigma2: f64,
}

impl GramOperator<'_> {
    fn try_apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        let gt = self.g.apply_transpose(x)?;
        let mut cg = vec![0.0; gt.len()];
        self.c.apply(&gt, &mut cg);
        let out = self.g.apply(&cg)?;
        for ((yi, o), xi) in y.iter_mut().zip(out).zip(x) {
            *yi = o + self.sigma2 * xi;
        }
        Ok(())
    }
}

impl SymOperator for GramOperator<'_> {
    fn dim(&self) -> usize {
        self.g.rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.try_apply(x, y).expect("operator dimensions are checked on construction");
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KrigingSolution {
    /// Posterior mean in dual wavelet coordinates.
    pub mu: Vec<f64>,
    /// Solution of the Gram system.
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

fn check_inputs(c: &dyn SymOperator, g: &ObservationMatrix, y: &[f64], sigma2: f64) -> Result<()> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise variance must be positive, got {sigma2}")));
    }
    if c.dim() != g.idx.len() {
        return Err(Error::DimensionMismatch { expected: g.idx.len(), got: c.dim() });
    }
    if y.len() != g.rows() {
        return Err(Error::DimensionMismatch { expected: g.rows(), got: y.len() });
    }
    Ok(())
}

/// `μ = C Gᵀ (G C Gᵀ + σ² I)^{-1} y` with the Gram solve by CG.
pub fn posterior_mean(c: &dyn SymOperator, g: &ObservationMatrix, y: &[f64], sigma2: f64, cg_tol: f64) -> Result<KrigingSolution> {
    check_inputs(c, g, y, sigma2)?;
    let gram = GramOperator { c, g, sigma2 };
    let k = g.rows();
    let sol = cg_solve(&gram, y, cg_tol, 20 * k + 100)?;
    if !sol.converged {
        return Err(Error::NotPositiveDefinite(format!(
            "kriging CG stalled at relative residual {:.3e} after {} iterations",
            sol.relative_residual, sol.iterations
        )));
    }
    let gt = g.apply_transpose(&sol.x)?;
    let mut mu = vec![0.0; gt.len()];
    c.apply(&gt, &mut mu);
    Ok(KrigingSolution { mu, weights: sol.x, iterations: sol.iterations, relative_residual: sol.relative_residual })
}

/// Reference evaluation with explicit matrices and a Cholesky solve.
pub fn dense_posterior_mean(c: &DenseSymMatrix, g: &DMatrix<f64>, y: &[f64], sigma2: f64) -> Result<Vec<f64>> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter(format!("noise variance must be positive, got {sigma2}")));
    }
    if g.ncols() != c.dim() || g.nrows() != y.len() {
        return Err(Error::DimensionMismatch { expected: c.dim(), got: g.ncols() });
    }
    let cm = c.to_nalgebra();
    let cgt = &cm * g.transpose();
    let mut gram = g * &cgt;
    for i in 0..gram.nrows() {
        gram[(i, i)] += sigma2;
    }
    let chol = gram.cholesky().ok_or_else(|| Error::NotPositiveDefinite("kriging Gram matrix".into()))?;
    let w = chol.solve(&DVector::from_column_slice(y));
    Ok((cgt * w).iter().copied().collect())
}

/// Extreme eigenvalues of the Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GramSpectrum {
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl GramSpectrum {
    pub fn condition(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }
}

/// Largest observation count handled by the dense Gram eigensolver.
pub const MAX_DENSE_GRAM: usize = 2048;

/// Dense spectrum of `G C Gᵀ + σ² I`.
pub fn gram_spectrum(c: &dyn SymOperator, g: &ObservationMatrix, sigma2: f64) -> Result<GramSpectrum> {
    let k = g.rows();
    check_inputs(c, g, &vec![0.0; k], sigma2)?;
    if k > MAX_DENSE_GRAM {
        return Err(Error::InvalidParameter(format!("dense Gram spectrum limited to K ≤ {MAX_DENSE_GRAM}")));
    }
    let gram = GramOperator { c, g, sigma2 };
    let cols: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|i| {
            let mut e = vec![0.0; k];
            e[i] = 1.0;
            let mut out = vec![0.0; k];
            gram.try_apply(&e, &mut out)?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let m = DMatrix::from_fn(k, k, |i, j| 0.5 * (cols[j][i] + cols[i][j]));
    let eig = m.symmetric_eigenvalues();
    let lambda_min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let lambda_max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(GramSpectrum { lambda_min, lambda_max })
}

/// `cond₂(G C Gᵀ + σ² I)`.
pub fn gram_condition(c: &dyn SymOperator, g: &ObservationMatrix, sigma2: f64) -> Result<f64> {
    Ok(gram_spectrum(c, g, sigma2)?.condition())
}

/// Field values `Σ_λ μ_λ ψ̃_λ(φ) / |γ'(φ)|` at parameter points `φ`.
pub fn predict_at(system: &WaveletSystem, idx: &LevelIndexSet, mu: &[f64], targets: &[f64], curve: &CurveSpec) -> Result<Vec<f64>> {
    if mu.len() != idx.len() {
        return Err(Error::DimensionMismatch { expected: idx.len(), got: mu.len() });
    }
    let single = system.ifwt_dual(idx, mu)?;
    let n = single.len();
    let profile = system.scaling_profile(Family::Dual, SYNTH_SWEEPS);
    let amp = (n as f64 / TAU).sqrt();
    let cell = TAU / n as f64;
    Ok(targets
        .par_iter()
        .map(|&phi| {
            let u = phi.rem_euclid(TAU) / cell;
            let k_lo = (u - profile.end()).floor() as i64;
            let k_hi = (u - profile.start).ceil() as i64;
            let mut v = 0.0;
            for k in k_lo..=k_hi {
                let s = (u - k as f64 - profile.start) / profile.step;
                let i = s.floor();
                let t = s - i;
                let i = i as i64;
                let f = (1.0 - t) * profile.at(i) + t * profile.at(i + 1);
                v += single[k.rem_euclid(n as i64) as usize] * f;
            }
            amp * v / curve.measure_weight(phi)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_wavelet, QuadratureRule};
    use crate::kernel::{KernelSpec, Smoothness};
    use crate::matrix::SparseSymMatrix;

    fn setup(jmax: usize, k: usize) -> (WaveletSystem, LevelIndexSet, CurveSpec, ObservationSet) {
        let w = WaveletSystem::build_default(2, 6).unwrap();
        let idx = w.index_set(jmax).unwrap();
        let curve = CurveSpec::reference_boundary().normalize_to_unit_diameter().unwrap();
        let cell = TAU / (1usize << idx.single_scale_level()) as f64;
        let y = (0..k).map(|i| (i as f64 * 0.9).cos()).collect();
        let obs = ObservationSet::equispaced(&curve, k, DEFAULT_WIDTH_CELLS * cell, y, 0.1).unwrap();
        (w, idx, curve, obs)
    }

    #[test]
    fn overlap_and_resolution_are_rejected() {
        let c = CurveSpec::circle(1.0);
        assert!(matches!(
            ObservationSet::new(&c, &[0.1, 0.3], &[0.3, 0.3], vec![0.0, 0.0], 1.0),
            Err(Error::OverlappingObservations(0, 1))
        ));
        // wrap-around overlap
        assert!(ObservationSet::new(&c, &[0.05, TAU - 0.05], &[0.2, 0.2], vec![0.0, 0.0], 1.0).is_err());
        assert!(ObservationSet::new(&c, &[0.1, 0.3], &[0.2, 0.2], vec![0.0, 0.0], 1.0).is_ok());
        assert!(ObservationSet::new(&c, &[0.1], &[0.2], vec![0.0], 0.0).is_err());
        let w = WaveletSystem::build_default(2, 6).unwrap();
        let idx = w.index_set(5).unwrap();
        let narrow = ObservationSet::new(&c, &[1.0], &[0.01], vec![0.0], 1.0).unwrap();
        assert!(matches!(build_observation_matrix(&w, &narrow, &idx), Err(Error::UnresolvedObservation { .. })));
    }

    #[test]
    fn full_circle_average_hits_only_coarse_level() {
        let c = CurveSpec::circle(0.5);
        let w = WaveletSystem::build_default(2, 6).unwrap();
        let idx = w.index_set(5).unwrap();
        let obs = ObservationSet::new(&c, &[0.0], &[TAU], vec![1.0], 1.0).unwrap();
        let g = build_observation_matrix(&w, &obs, &idx).unwrap();
        for (_, col, v) in g.wavelet.iter() {
            assert!(col < idx.level_range(idx.j0).end || v.abs() < 1e-12, "{col} {v}");
        }
        assert!((obs.functionals[0].arc_length - TAU * 0.5).abs() < 1e-12);
    }

    #[test]
    fn factored_apply_matches_explicit_matrix() {
        let (w, idx, _, obs) = setup(5, 8);
        let g = build_observation_matrix(&w, &obs, &idx).unwrap();
        let dense = g.wavelet.to_nalgebra();
        let x: Vec<f64> = (0..idx.len()).map(|i| (i as f64 * 0.3).sin()).collect();
        let direct = &dense * DVector::from_column_slice(&x);
        let fact = g.apply(&x).unwrap();
        for (a, b) in direct.iter().zip(&fact) {
            assert!((a - b).abs() < 1e-12);
        }
        let v: Vec<f64> = (0..8).map(|i| i as f64 - 3.5).collect();
        let direct_t = dense.transpose() * DVector::from_column_slice(&v);
        for (a, b) in direct_t.iter().zip(g.apply_transpose(&v).unwrap()) {
            assert!((a - b).abs() < 1e-12);
        }
        // each row has unit mass against the constant field
        let ones = vec![1.0; 1 << idx.single_scale_level()];
        let single_rows = g.single.matvec(&ones);
        let expect = (ones.len() as f64 / TAU).sqrt();
        for (r, f) in single_rows.iter().zip(&obs.functionals) {
            assert!((r * f.arc_length / f.width - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn posterior_mean_matches_dense_oracle() {
        let (w, idx, curve, obs) = setup(5, 8);
        let k = KernelSpec::new(Smoothness::Half, 1.0);
        let c = assemble_wavelet(&curve, &k, &w, &idx, &QuadratureRule::default()).unwrap();
        let g = build_observation_matrix(&w, &obs, &idx).unwrap();
        let sol = posterior_mean(&c, &g, &obs.values, obs.sigma2, 1e-14).unwrap();
        let dense = dense_posterior_mean(&c, &g.wavelet.to_nalgebra(), &obs.values, obs.sigma2).unwrap();
        let scale = dense.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        for (a, b) in sol.mu.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-10 * scale);
        }
        let zero = posterior_mean(&c, &g, &[0.0; 8], obs.sigma2, 1e-12).unwrap();
        assert!(zero.mu.iter().all(|&v| v == 0.0));
        let spec = gram_spectrum(&c, &g, obs.sigma2).unwrap();
        assert!(spec.lambda_min >= obs.sigma2 - 1e-12);
        let big = gram_spectrum(&c, &g, 1e6).unwrap();
        assert!(big.condition() < 1.0 + 1e-5);
    }

    #[test]
    fn scalar_closed_form() {
        // p × p identity-like covariance with a single functional reduces to c g (c g² + σ²)^{-1} y
        let (w, idx, _, _) = setup(3, 1);
        let c = CurveSpec::circle(1.0);
        let obs = ObservationSet::new(&c, &[1.0], &[1.0], vec![2.0], 0.5).unwrap();
        let g = build_observation_matrix(&w, &obs, &idx).unwrap();
        let cov = SparseSymMatrix::diagonal_matrix(&vec![3.0; idx.len()]);
        let sol = posterior_mean(&cov, &g, &obs.values, 0.5, 1e-14).unwrap();
        let gg: f64 = g.wavelet.iter().map(|(_, _, v)| v * v).sum();
        let factor = 2.0 / (3.0 * gg + 0.5);
        for (col, v) in g.wavelet.row(0) {
            assert!((sol.mu[col] - 3.0 * v * factor).abs() < 1e-12);
        }
    }

    #[test]
    fn prediction_is_linear_and_zero_for_zero() {
        let (w, idx, curve, _) = setup(4, 4);
        let targets = [0.1, 1.0, 4.0];
        let zero = predict_at(&w, &idx, &vec![0.0; idx.len()], &targets, &curve).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        let a: Vec<f64> = (0..idx.len()).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..idx.len()).map(|i| (i as f64 * 0.2).cos()).collect();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x + y).collect();
        let (pa, pb, ps) = (
            predict_at(&w, &idx, &a, &targets, &curve).unwrap(),
            predict_at(&w, &idx, &b, &targets, &curve).unwrap(),
            predict_at(&w, &idx, &sum, &targets, &curve).unwrap(),
        );
        for i in 0..3 {
            assert!((ps[i] - 2.0 * pa[i] - pb[i]).abs() < 1e-12);
        }
    }
}
