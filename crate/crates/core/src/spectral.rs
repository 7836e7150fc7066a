//! Diagonal preconditioning, conjugate gradients, Lanczos extremal eigenvalues,
//! condition numbers and a dense eigen/Cholesky oracle.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{DenseSymMatrix, SparseSymMatrix};
use crate::mra::{DiagScaling, LevelIndexSet};
use crate::rng::NormalStream;
use crate::util::{axpy, dot, norm2};

/// A symmetric linear map given by its action.
pub trait SymOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl SymOperator for DenseSymMatrix {
    fn dim(&self) -> usize {
        DenseSymMatrix::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.matvec(x));
    }
}

impl SymOperator for SparseSymMatrix {
    fn dim(&self) -> usize {
        SparseSymMatrix::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec_into(x, y);
    }
}

/// Wraps a closure as an operator.
pub struct FnOperator<F: Fn(&[f64], &mut [f64]) + Sync> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> SymOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

/// Diagonal scaling rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Preconditioner {
    /// `2^{s|λ|}`.
    Level(f64),
    /// `1/√a_{λλ}`.
    Jacobi,
}

/// Diagonal entries of the scaling for `a`.
pub fn scaling_diagonal(idx: &LevelIndexSet, diag: &[f64], mode: Preconditioner) -> Result<Vec<f64>> {
    if diag.len() != idx.len() {
        return Err(Error::DimensionMismatch { expected: idx.len(), got: diag.len() });
    }
    match mode {
        Preconditioner::Level(s) => Ok(DiagScaling::new(idx, s).entries),
        Preconditioner::Jacobi => diag
            .iter()
            .map(|&v| if v > 0.0 { Ok(1.0 / v.sqrt()) } else { Err(Error::NotPositiveDefinite(format!("diagonal entry {v}"))) })
            .collect(),
    }
}

/// `D A D` for a dense matrix.
pub fn precondition_dense(a: &DenseSymMatrix, idx: &LevelIndexSet, mode: Preconditioner) -> Result<DenseSymMatrix> {
    let d = scaling_diagonal(idx, &a.diagonal(), mode)?;
    Ok(a.scaled(&d))
}

/// `D A D` for a sparse matrix, scaling values in place.
pub fn precondition_sparse(a: &mut SparseSymMatrix, idx: &LevelIndexSet, mode: Preconditioner) -> Result<()> {
    let d = scaling_diagonal(idx, &a.diagonal(), mode)?;
    a.scale_symmetric(&d);
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final `‖b − Ax‖₂ / ‖b‖₂`.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Conjugate gradients from a zero initial guess.
pub fn cg_solve(op: &dyn SymOperator, b: &[f64], tol: f64, max_iter: usize) -> Result<CgResult> {
    let n = op.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.len() });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("right-hand side"));
    }
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(CgResult { x, iterations: 0, relative_residual: 0.0, converged: true });
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut it = 0;
    while it < max_iter {
        if rr.sqrt() <= tol * bnorm {
            break;
        }
        op.apply(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !curvature.is_finite() {
            return Err(Error::NonFinite("operator application"));
        }
        if curvature <= 0.0 {
            return Err(Error::CgBreakdown { iteration: it, curvature });
        }
        let alpha = rr / curvature;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        it += 1;
    }
    let rel = rr.sqrt() / bnorm;
    Ok(CgResult { x, iterations: it, relative_residual: rel, converged: rel <= tol })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundsMethod {
    Dense,
    Lanczos,
}

/// Estimated extreme eigenvalues `c̃_−, c̃_+`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralBounds {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub method: BoundsMethod,
    pub rel_tol: f64,
}

impl SpectralBounds {
    pub fn new(lambda_min: f64, lambda_max: f64, method: BoundsMethod, rel_tol: f64) -> Result<Self> {
        if !(lambda_min > 0.0 && lambda_min <= lambda_max && lambda_max.is_finite()) {
            return Err(Error::NotPositiveDefinite(format!("spectral bounds [{lambda_min}, {lambda_max}]")));
        }
        Ok(SpectralBounds { lambda_min, lambda_max, method, rel_tol })
    }

    /// `κ̂ = c̃_+ / c̃_−`.
    pub fn condition(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }
}

/// Seed of the Lanczos start vector.
pub const LANCZOS_SEED: u64 = 0x5eed_1a2c;

/// Lanczos with full reorthogonalization. Returns the extreme Ritz values once both
/// residual bounds fall below `tol` times the Ritz value; the smallest one may be
/// non-positive for indefinite input, in which case an error is raised.
pub fn lanczos_extremes(op: &dyn SymOperator, tol: f64, max_iter: usize) -> Result<SpectralBounds> {
    let (lo, hi) = lanczos_ritz(op, tol, max_iter)?;
    if lo <= 0.0 {
        return Err(Error::NotPositiveDefinite(format!("Lanczos smallest Ritz value {lo}")));
    }
    SpectralBounds::new(lo, hi, BoundsMethod::Lanczos, tol)
}

fn lanczos_ritz(op: &dyn SymOperator, tol: f64, max_iter: usize) -> Result<(f64, f64)> {
    let n = op.dim();
    if n == 0 {
        return Err(Error::InvalidParameter("empty operator".into()));
    }
    let mut q = NormalStream::new(LANCZOS_SEED, n as u64).vector(0, n);
    let qn = norm2(&q);
    q.iter_mut().for_each(|v| *v /= qn);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let cap = max_iter.min(n);
    let mut best = (f64::NAN, f64::NAN);
    for m in 0..cap {
        op.apply(&basis[m], &mut w);
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("operator application"));
        }
        let alpha = dot(&w, &basis[m]);
        alphas.push(alpha);
        // two passes of classical Gram–Schmidt against the whole basis
        for _ in 0..2 {
            for v in &basis {
                let c = dot(&w, v);
                axpy(-c, v, &mut w);
            }
        }
        let beta = norm2(&w);
        let k = alphas.len();
        let mut t = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alphas[i];
            if i + 1 < k {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let (mut imin, mut imax) = (0, 0);
        for i in 0..k {
            if eig.eigenvalues[i] < eig.eigenvalues[imin] {
                imin = i;
            }
            if eig.eigenvalues[i] > eig.eigenvalues[imax] {
                imax = i;
            }
        }
        let (lo, hi) = (eig.eigenvalues[imin], eig.eigenvalues[imax]);
        best = (lo, hi);
        let res_lo = (beta * eig.eigenvectors[(k - 1, imin)]).abs();
        let res_hi = (beta * eig.eigenvectors[(k - 1, imax)]).abs();
        let exhausted = beta <= 1e-14 * hi.abs().max(lo.abs()) || k == n;
        if exhausted || (res_lo <= tol * lo.abs() && res_hi <= tol * hi.abs()) {
            return Ok(best);
        }
        betas.push(beta);
        w.iter_mut().for_each(|v| *v /= beta);
        basis.push(std::mem::replace(&mut w, vec![0.0; n]));
    }
    Err(Error::LanczosNoConvergence { iterations: cap, lo: best.0, hi: best.1 })
}

/// Dense symmetric eigendecomposition with derived square root and Cholesky factor.
#[derive(Debug, Clone)]
pub struct DenseOracle {
    /// Ascending eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// Column `i` belongs to `eigenvalues[i]`.
    pub eigenvectors: DMatrix<f64>,
}

impl DenseOracle {
    pub fn new(a: &DenseSymMatrix) -> Result<Self> {
        if a.dim() > 4096 {
            return Err(Error::InvalidParameter(format!("dense oracle limited to p ≤ 4096, got {}", a.dim())));
        }
        let eig = SymmetricEigen::new(a.to_nalgebra());
        let mut order: Vec<usize> = (0..a.dim()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let eigenvectors = DMatrix::from_fn(a.dim(), a.dim(), |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(DenseOracle { eigenvalues, eigenvectors })
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }

    pub fn condition(&self) -> Result<f64> {
        if self.min() <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!("smallest eigenvalue {}", self.min())));
        }
        Ok(self.max() / self.min())
    }

    pub fn bounds(&self) -> Result<SpectralBounds> {
        SpectralBounds::new(self.min(), self.max(), BoundsMethod::Dense, 0.0)
    }

    /// `f(A) = V f(Λ) Vᵀ`.
    pub fn function(&self, f: impl Fn(f64) -> f64) -> DenseSymMatrix {
        let n = self.eigenvalues.len();
        let mut scaled = self.eigenvectors.clone();
        for (c, &lam) in self.eigenvalues.iter().enumerate() {
            let fl = f(lam);
            scaled.column_mut(c).iter_mut().for_each(|v| *v *= fl);
        }
        let m = &scaled * self.eigenvectors.transpose();
        let mut out = DenseSymMatrix::from_upper_fn(n, |i, j| m[(i, j)]);
        out.symmetrize();
        out
    }

    /// Symmetric square root; requires a non-negative spectrum.
    pub fn sqrt(&self) -> Result<DenseSymMatrix> {
        if self.min() < 0.0 {
            return Err(Error::NotPositiveDefinite(format!("smallest eigenvalue {}", self.min())));
        }
        Ok(self.function(f64::sqrt))
    }
}

/// Lower Cholesky factor of an SPD matrix.
pub fn cholesky(a: &DenseSymMatrix) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new(a.to_nalgebra())
        .map(|c| c.l())
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))
}

/// `λ_max / λ_min`, dense for `p ≤ 2048` and Lanczos otherwise.
pub fn condition_number(op: &dyn SymOperator, dense: Option<&DenseSymMatrix>) -> Result<f64> {
    match dense {
        Some(a) if a.dim() <= 2048 => DenseOracle::new(a)?.condition(),
        _ => Ok(lanczos_extremes(op, 1e-8, 2000.min(op.dim()))?.condition()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> DenseSymMatrix {
        let mut a = DenseSymMatrix::zeros(v.len());
        for (i, &x) in v.iter().enumerate() {
            a.set(i, i, x);
        }
        a
    }

    fn random_spd(n: usize, spectrum: impl Fn(usize) -> f64) -> DenseSymMatrix {
        let g = NormalStream::new(5, 9).vector(0, n * n);
        let qr = DMatrix::from_row_slice(n, n, &g).qr();
        let q = qr.q();
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |i, _| spectrum(i)));
        let m = &q * d * q.transpose();
        let mut a = DenseSymMatrix::from_upper_fn(n, |i, j| m[(i, j)]);
        a.symmetrize();
        a
    }

    #[test]
    fn cg_trivial_cases() {
        let id = DenseSymMatrix::identity(5);
        let b = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let r = cg_solve(&id, &b, 1e-12, 10).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.x, b);
        let d = diag(&(1..=10).map(|i| i as f64).collect::<Vec<_>>());
        let r = cg_solve(&d, &[1.0; 10], 1e-13, 100).unwrap();
        for (i, x) in r.x.iter().enumerate() {
            assert!((x - 1.0 / (i + 1) as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn cg_iteration_bound() {
        for kappa in [10.0f64, 100.0, 1000.0] {
            let n = 200;
            let a = random_spd(n, |i| 1.0 + (kappa - 1.0) * i as f64 / (n - 1) as f64);
            let b = NormalStream::new(1, 1).vector(0, n);
            let r = cg_solve(&a, &b, 1e-8, 1000).unwrap();
            assert!(r.converged);
            let rate = ((kappa.sqrt() + 1.0) / (kappa.sqrt() - 1.0)).ln();
            let bound = ((2e8f64).ln() / rate).ceil() as usize + 2;
            assert!(r.iterations <= bound, "κ={kappa}: {} > {bound}", r.iterations);
        }
    }

    #[test]
    fn cg_detects_indefinite() {
        let a = diag(&[1.0, -1.0]);
        assert!(matches!(cg_solve(&a, &[1.0, 1.0], 1e-10, 10), Err(Error::CgBreakdown { .. })));
    }

    #[test]
    fn lanczos_matches_dense() {
        let b = lanczos_extremes(&diag(&[1.0, 2.0, 3.0]), 1e-10, 10).unwrap();
        assert!((b.lambda_min - 1.0).abs() < 1e-12 && (b.lambda_max - 3.0).abs() < 1e-12);
        let b = lanczos_extremes(&DenseSymMatrix::identity(7), 1e-10, 10).unwrap();
        assert!((b.lambda_min - 1.0).abs() < 1e-12 && (b.lambda_max - 1.0).abs() < 1e-12);
        let a = random_spd(300, |i| 0.5 + (i as f64).powf(1.5));
        let l = lanczos_extremes(&a, 1e-9, 300).unwrap();
        let d = DenseOracle::new(&a).unwrap();
        assert!((l.lambda_min - d.min()).abs() / d.min() < 1e-6);
        assert!((l.lambda_max - d.max()).abs() / d.max() < 1e-6);
    }

    #[test]
    fn oracle_sqrt() {
        let o = DenseOracle::new(&diag(&[4.0, 9.0])).unwrap();
        let s = o.sqrt().unwrap();
        assert!((s.get(0, 0) - 2.0).abs() < 1e-14 && (s.get(1, 1) - 3.0).abs() < 1e-14);
        let a = random_spd(60, |i| 1e-3 + i as f64);
        let s = DenseOracle::new(&a).unwrap().sqrt().unwrap();
        let s2 = s.to_nalgebra() * s.to_nalgebra();
        let diff = (s2 - a.to_nalgebra()).norm();
        assert!(diff <= 1e-10 * a.to_nalgebra().norm());
        assert!(cholesky(&a).is_ok());
        assert!(cholesky(&diag(&[1.0, -1.0])).is_err());
    }

    #[test]
    fn preconditioning() {
        let idx = LevelIndexSet::new(2, 4).unwrap();
        let ra = 1.0;
        let entries: Vec<f64> = (0..idx.len()).map(|i| (-2.0 * ra * idx.level_of(i) as f64).exp2()).collect();
        let a = diag(&entries);
        let p = precondition_dense(&a, &idx, Preconditioner::Level(ra)).unwrap();
        assert!(p.diagonal().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert_eq!(precondition_dense(&a, &idx, Preconditioner::Level(0.0)).unwrap(), a);
        let j = precondition_dense(&a, &idx, Preconditioner::Jacobi).unwrap();
        assert!(j.diagonal().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let mut s = SparseSymMatrix::from_dense(&a);
        precondition_sparse(&mut s, &idx, Preconditioner::Level(ra)).unwrap();
        assert!(s.diagonal().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }
}
