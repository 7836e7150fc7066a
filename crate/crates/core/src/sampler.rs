//! Contour-integral square root of SPD matrices and Gaussian random field draws.
//!
//! For an SPD matrix `R` with spectrum in `[c_−, c_+]`, `√R` is approximated by the
//! rational function
//! `S_K = (2 K(m) √c_− / (π K)) · R · Σ_k dn(t_k)/cn²(t_k) · (R + w_k² I)^{-1}`
//! with `m = 1 − c_−/c_+`, `w_k = √c_− sn(t_k)/cn(t_k)` and midpoint nodes
//! `t_k = (k − ½) K(m) / K` on `[0, K(m)]`, where `K(m)` is the complete elliptic
//! integral of the first kind.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::CurveSpec;
use crate::matrix::DenseSymMatrix;
use crate::mra::{DiagScaling, Family, LevelIndexSet, WaveletSystem};
use crate::rng::{stream_id, NormalStream};
use crate::spectral::{cg_solve, DenseOracle, FnOperator, SpectralBounds, SymOperator};

const AGM_MAX: usize = 64;

fn check_parameter(m: f64) -> Result<()> {
    if !(0.0..1.0).contains(&m) {
        return Err(Error::InvalidParameter(format!("elliptic parameter {m} outside [0, 1)")));
    }
    Ok(())
}

/// Complete elliptic integrals `(K(m), E(m))` of the first and second kind, by the AGM.
pub fn elliptic_complete(m: f64) -> Result<(f64, f64)> {
    check_parameter(m)?;
    let (mut a, mut b) = (1.0f64, (1.0 - m).sqrt());
    let mut c = m.sqrt();
    let mut sum = 0.5 * c * c;
    let mut pow = 0.5;
    for _ in 0..AGM_MAX {
        if c.abs() <= f64::EPSILON * a {
            break;
        }
        let an = 0.5 * (a + b);
        let bn = (a * b).sqrt();
        c = 0.5 * (a - b);
        a = an;
        b = bn;
        pow *= 2.0;
        sum += pow * c * c;
    }
    let k = std::f64::consts::PI / (2.0 * a);
    Ok((k, k * (1.0 - sum)))
}

/// Jacobi elliptic functions `(sn, cn, dn)(u | m)` by descending Landen transformation.
pub fn jacobi_sn_cn_dn(u: f64, m: f64) -> Result<(f64, f64, f64)> {
    check_parameter(m)?;
    if m == 0.0 {
        let (s, c) = u.sin_cos();
        return Ok((s, c, 1.0));
    }
    let mut a = vec![1.0f64];
    let mut c = vec![m.sqrt()];
    let mut b = (1.0 - m).sqrt();
    while c.last().unwrap().abs() > f64::EPSILON * a.last().unwrap() && a.len() < AGM_MAX {
        let an = *a.last().unwrap();
        let a_next = 0.5 * (an + b);
        let c_next = 0.5 * (an - b);
        b = (an * b).sqrt();
        a.push(a_next);
        c.push(c_next);
    }
    let n = a.len() - 1;
    let mut phi = (n as f64).exp2() * a[n] * u;
    for i in (1..=n).rev() {
        phi = 0.5 * (phi + (c[i] / a[i] * phi.sin()).asin());
    }
    let (s, co) = phi.sin_cos();
    // 1 − m sn² written without cancellation
    let dn = (co * co + (1.0 - m) * s * s).sqrt();
    Ok((s, co, dn))
}

/// Elliptic data of the contour map for a given condition estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticParams {
    pub m: f64,
    pub k_complete: f64,
    pub e_complete: f64,
}

impl EllipticParams {
    pub fn from_condition(kappa: f64) -> Result<Self> {
        if !(kappa >= 1.0 && kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!("condition estimate {kappa} must be ≥ 1")));
        }
        let m = 1.0 - 1.0 / kappa;
        let (k, e) = elliptic_complete(m)?;
        Ok(EllipticParams { m, k_complete: k, e_complete: e })
    }
}

/// Poles and weights of `S_K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourQuadrature {
    pub nodes: usize,
    pub c_minus: f64,
    pub c_plus: f64,
    pub elliptic: EllipticParams,
    /// `t_k`.
    pub t: Vec<f64>,
    /// `w_k²`.
    pub poles: Vec<f64>,
    /// `dn(t_k)/cn²(t_k)`.
    pub weights: Vec<f64>,
    /// `2 K(m) √c_− / (π K)`.
    pub prefactor: f64,
    /// `Some(√c)` when `c_− = c_+ = c`.
    pub scalar: Option<f64>,
}

impl ContourQuadrature {
    pub fn kappa(&self) -> f64 {
        self.c_plus / self.c_minus
    }

    /// `S_K` applied to a scalar `λ`.
    pub fn eval_scalar(&self, lambda: f64) -> f64 {
        if self.scalar.is_some() {
            return lambda.sqrt();
        }
        let sum: f64 = self.poles.iter().zip(&self.weights).map(|(w2, g)| g / (lambda + w2)).sum();
        self.prefactor * lambda * sum
    }

    /// `S_K` as a dense matrix through the eigendecomposition of `R`.
    pub fn dense(&self, oracle: &DenseOracle) -> DenseSymMatrix {
        oracle.function(|l| self.eval_scalar(l))
    }

    /// `max_i |S_K(λ_i) − √λ_i| / √λ_max`, the relative spectral-norm error of `S_K`.
    pub fn relative_error(&self, eigenvalues: &[f64]) -> f64 {
        let top = eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l)).sqrt();
        eigenvalues.iter().map(|&l| (self.eval_scalar(l) - l.max(0.0).sqrt()).abs()).fold(0.0, f64::max) / top
    }
}

/// Contour data for spectral bounds `[c_−, c_+]` with `nodes` quadrature points.
pub fn build_contour(bounds: &SpectralBounds, nodes: usize) -> Result<ContourQuadrature> {
    build_contour_from(bounds.lambda_min, bounds.lambda_max, nodes)
}

pub fn build_contour_from(c_minus: f64, c_plus: f64, nodes: usize) -> Result<ContourQuadrature> {
    if nodes == 0 {
        return Err(Error::InvalidParameter("contour needs at least one node".into()));
    }
    if !(c_minus > 0.0 && c_minus <= c_plus && c_plus.is_finite()) {
        return Err(Error::InvalidParameter(format!("spectral bounds [{c_minus}, {c_plus}]")));
    }
    let elliptic = EllipticParams::from_condition(c_plus / c_minus)?;
    if c_plus == c_minus {
        return Ok(ContourQuadrature {
            nodes,
            c_minus,
            c_plus,
            elliptic,
            t: vec![],
            poles: vec![],
            weights: vec![],
            prefactor: 0.0,
            scalar: Some(c_minus.sqrt()),
        });
    }
    let kk = elliptic.k_complete;
    let mut t = Vec::with_capacity(nodes);
    let mut poles = Vec::with_capacity(nodes);
    let mut weights = Vec::with_capacity(nodes);
    for k in 1..=nodes {
        let tk = (k as f64 - 0.5) * kk / nodes as f64;
        let (sn, cn, dn) = jacobi_sn_cn_dn(tk, elliptic.m)?;
        t.push(tk);
        poles.push(c_minus * (sn / cn).powi(2));
        weights.push(dn / (cn * cn));
    }
    Ok(ContourQuadrature {
        nodes,
        c_minus,
        c_plus,
        elliptic,
        t,
        poles,
        weights,
        prefactor: 2.0 * kk * c_minus.sqrt() / (std::f64::consts::PI * nodes as f64),
        scalar: None,
    })
}

/// Default relative CG tolerance for the shifted solves.
pub const DEFAULT_CG_TOL: f64 = 1e-13;

/// `y = S_K x` with one CG solve per pole, solved concurrently.
pub fn apply_sqrt(r: &dyn SymOperator, contour: &ContourQuadrature, x: &[f64], cg_tol: f64) -> Result<Vec<f64>> {
    let n = r.dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    if let Some(s) = contour.scalar {
        // R = c I on the degenerate interval
        return Ok(x.iter().map(|v| v * s).collect());
    }
    if x.iter().all(|&v| v == 0.0) {
        return Ok(vec![0.0; n]);
    }
    let solves: Vec<Vec<f64>> = contour
        .poles
        .par_iter()
        .zip(&contour.weights)
        .map(|(&w2, &g)| {
            let shifted = FnOperator {
                dim: n,
                f: |v: &[f64], out: &mut [f64]| {
                    r.apply(v, out);
                    out.iter_mut().zip(v).for_each(|(o, vi)| *o += w2 * vi);
                },
            };
            let res = cg_solve(&shifted, x, cg_tol, 20 * n + 100)?;
            Ok(res.x.into_iter().map(|v| v * g).collect())
        })
        .collect::<Result<_>>()?;
    let mut acc = vec![0.0; n];
    for s in &solves {
        acc.iter_mut().zip(s).for_each(|(a, v)| *a += v);
    }
    let mut y = vec![0.0; n];
    r.apply(&acc, &mut y);
    y.iter_mut().for_each(|v| *v *= contour.prefactor);
    Ok(y)
}

/// Provenance of a draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub j0: usize,
    pub jmax: usize,
    pub p: usize,
    pub ra: f64,
    pub nodes: usize,
    pub c_minus: f64,
    pub c_plus: f64,
    pub kappa_hat: f64,
    pub seed: u64,
    pub index: u64,
    pub cg_tol: f64,
}

/// Wavelet coefficients `z̃ = D^{−ra} S_K ξ` of one field draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrfSample {
    pub coefficients: Vec<f64>,
    pub meta: SampleMeta,
}

/// Stream tag of the white-noise vectors used by [`sample_grf`].
pub const NOISE_TAG: u64 = 0x006e_6f69_7365;

/// White noise `ξ` of draw `index`.
pub fn white_noise(seed: u64, index: u64, p: usize) -> Vec<f64> {
    NormalStream::new(seed, stream_id(&[NOISE_TAG, index, p as u64])).vector(0, p)
}

/// Draw `index` of the field with preconditioned covariance `r` (`R = D^{ra} C D^{ra}`).
pub fn sample_grf(
    idx: &LevelIndexSet,
    r: &dyn SymOperator,
    ra: f64,
    contour: &ContourQuadrature,
    seed: u64,
    index: u64,
    cg_tol: f64,
) -> Result<GrfSample> {
    let p = idx.len();
    if r.dim() != p {
        return Err(Error::DimensionMismatch { expected: p, got: r.dim() });
    }
    let xi = white_noise(seed, index, p);
    let y = apply_sqrt(r, contour, &xi, cg_tol)?;
    let coefficients = DiagScaling::new(idx, -ra).apply(&y);
    if coefficients.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sample coefficients"));
    }
    Ok(GrfSample {
        coefficients,
        meta: SampleMeta {
            j0: idx.j0,
            jmax: idx.jmax,
            p,
            ra,
            nodes: contour.nodes,
            c_minus: contour.c_minus,
            c_plus: contour.c_plus,
            kappa_hat: contour.kappa(),
            seed,
            index,
            cg_tol,
        },
    })
}

/// Dual scaling function samples used for field synthesis.
pub const SYNTH_SWEEPS: u32 = 8;

/// Evaluates `Σ_λ z̃_λ ψ̃_λ(φ)` at `φ_i = 2π i 2^{-resolution}`, with the duals normalized
/// in `L²(0, 2π)`.
///
/// With a curve, values are divided by the arc-length density so that the result is
/// the field on the curve; without, the parameter-domain expansion is returned.
pub fn synthesize_field(
    system: &WaveletSystem,
    idx: &LevelIndexSet,
    coefficients: &[f64],
    resolution: usize,
    curve: Option<&CurveSpec>,
) -> Result<Vec<f64>> {
    let level = idx.single_scale_level();
    if resolution < level || resolution - level > SYNTH_SWEEPS as usize {
        return Err(Error::InvalidParameter(format!(
            "grid level {resolution} must lie in [{level}, {}]",
            level + SYNTH_SWEEPS as usize
        )));
    }
    let single = system.ifwt_dual(idx, coefficients)?;
    let profile = system.scaling_profile(Family::Dual, SYNTH_SWEEPS);
    let n_fine = 1usize << resolution;
    let n = 1usize << level;
    // grid index stride of one fine cell in profile units
    let stride = 1i64 << (SYNTH_SWEEPS as usize - (resolution - level));
    let per_cell = 1i64 << SYNTH_SWEEPS;
    let start = (profile.start * per_cell as f64).round() as i64;
    let amp = (n as f64).sqrt();
    let lo = profile.start.floor() as i64;
    let hi = profile.end().ceil() as i64;
    let values = (0..n_fine)
        .into_par_iter()
        .map(|i| {
            // argument 2^L t − k = i 2^{L−R} − k, in profile grid units
            let x_units = i as i64 * stride;
            let cell = x_units.div_euclid(per_cell);
            let mut v = 0.0;
            for k in (cell - hi)..=(cell - lo) {
                let arg = x_units - k * per_cell - start;
                let phi = profile.at(arg);
                if phi != 0.0 {
                    v += single[k.rem_euclid(n as i64) as usize] * phi;
                }
            }
            let v = amp * v / TAU.sqrt();
            match curve {
                Some(c) => v / c.measure_weight(TAU * i as f64 / n_fine as f64),
                None => v,
            }
        })
        .collect();
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::BoundsMethod;

    #[test]
    fn complete_integrals() {
        let (k, e) = elliptic_complete(0.0).unwrap();
        assert!((k - std::f64::consts::FRAC_PI_2).abs() < 1e-15 && (e - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        // reference values K(0.5), E(0.5)
        let (k, e) = elliptic_complete(0.5).unwrap();
        assert!((k - 1.854_074_677_301_372).abs() < 1e-14);
        assert!((e - 1.350_643_881_047_675_5).abs() < 1e-14);
        // Legendre relation E K' + E' K − K K' = π/2
        let m = 0.3;
        let (k1, e1) = elliptic_complete(m).unwrap();
        let (k2, e2) = elliptic_complete(1.0 - m).unwrap();
        assert!((e1 * k2 + e2 * k1 - k1 * k2 - std::f64::consts::FRAC_PI_2).abs() < 1e-14);
        assert!(elliptic_complete(1.0).is_err() && elliptic_complete(-0.1).is_err());
    }

    #[test]
    fn jacobi_identities() {
        let (s, c, d) = jacobi_sn_cn_dn(0.7, 0.0).unwrap();
        assert_eq!((s, c, d), (0.7f64.sin(), 0.7f64.cos(), 1.0));
        let m = 1.0 - 1e-8;
        for i in 0..=30 {
            let u = 0.1 * i as f64;
            let (s, _, _) = jacobi_sn_cn_dn(u, m).unwrap();
            assert!((s - u.tanh()).abs() < 1e-6);
        }
        let g = NormalStream::new(3, 3).vector(0, 200);
        for pair in g.chunks(2) {
            let u = 3.0 * pair[0];
            let m = 0.5 * (1.0 + pair[1].tanh());
            let (s, c, d) = jacobi_sn_cn_dn(u, m).unwrap();
            assert!((s * s + c * c - 1.0).abs() < 1e-13);
            assert!((d * d + m * s * s - 1.0).abs() < 1e-13);
        }
        // sn(K) = 1
        let (k, _) = elliptic_complete(0.8).unwrap();
        let (s, c, d) = jacobi_sn_cn_dn(k, 0.8).unwrap();
        assert!((s - 1.0).abs() < 1e-14 && c.abs() < 1e-7 && (d - 0.2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn contour_structure() {
        let q = build_contour_from(1.0, 4.0, 10).unwrap();
        assert!(q.poles.windows(2).all(|w| w[0] < w[1]) && q.poles[0] > 0.0);
        assert!(q.weights.iter().all(|&w| w > 0.0));
        let q2 = build_contour_from(1.0, 4.0, 20).unwrap();
        assert!(((q.t[1] - q.t[0]) - 2.0 * (q2.t[1] - q2.t[0])).abs() < 1e-15);
        assert_eq!(q.elliptic, q2.elliptic);
        let one = build_contour_from(2.0, 2.0, 5).unwrap();
        assert_eq!(one.eval_scalar(2.0), 2f64.sqrt());
    }

    #[test]
    fn scalar_square_root() {
        let q = build_contour_from(1.0, 16.0, 20).unwrap();
        let r = DenseSymMatrix::from_upper_fn(1, |_, _| 4.0);
        let y = apply_sqrt(&r, &q, &[3.0], 1e-14).unwrap();
        assert!((y[0] - 6.0).abs() <= 1e-12 * 6.0, "{}", y[0]);
        assert_eq!(apply_sqrt(&r, &q, &[0.0], 1e-14).unwrap(), vec![0.0]);
        for lam in [1.0, 2.5, 7.0, 16.0] {
            assert!((q.eval_scalar(lam) - lam.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn error_decays_with_nodes() {
        let b = SpectralBounds::new(1.0, 200.0, BoundsMethod::Dense, 0.0).unwrap();
        let eig: Vec<f64> = (0..400).map(|i| 1.0 + 199.0 * (i as f64 / 399.0).powi(2)).collect();
        let errs: Vec<f64> = [4, 8, 12].iter().map(|&k| build_contour(&b, k).unwrap().relative_error(&eig)).collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0] * 1e-2), "{errs:?}");
        assert!(build_contour(&b, 40).unwrap().relative_error(&eig) < 1e-14);
    }

    #[test]
    fn coarse_coefficient_gives_dual_profile() {
        let w = WaveletSystem::build_default(2, 4).unwrap();
        let idx = w.index_set(3).unwrap();
        let mut z = vec![0.0; idx.len()];
        assert!(synthesize_field(&w, &idx, &z, 6, None).unwrap().iter().all(|&v| v == 0.0));
        z[0] = 1.0;
        let field = synthesize_field(&w, &idx, &z, 8, None).unwrap();
        // coarse function φ̃_{j0+1,0}(t) = 2^{(j0+1)/2} φ̃(2^{j0+1} t), periodized
        let prof = w.scaling_profile(Family::Dual, 8);
        let level = idx.j0 + 1;
        let n = 1usize << level;
        for (i, v) in field.iter().enumerate() {
            let t = i as f64 / 256.0;
            let mut expect = 0.0;
            for shift in -3i64..=3 {
                let x = (t + shift as f64) * n as f64;
                let g = ((x - prof.start) / prof.step).round() as i64;
                expect += prof.at(g);
            }
            assert!((v - (n as f64 / TAU).sqrt() * expect).abs() < 1e-10, "{i}");
        }
    }
}
