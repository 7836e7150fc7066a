//! Matérn covariance kernels and the Whittle–Matérn spectrum on the circle.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-integer Matérn smoothness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Smoothness {
    #[serde(rename = "matern12")]
    Half,
    #[serde(rename = "matern32")]
    ThreeHalves,
    #[serde(rename = "matern52")]
    FiveHalves,
}

impl Smoothness {
    pub fn nu(self) -> f64 {
        match self {
            Smoothness::Half => 0.5,
            Smoothness::ThreeHalves => 1.5,
            Smoothness::FiveHalves => 2.5,
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Smoothness::Half => "matern12",
            Smoothness::ThreeHalves => "matern32",
            Smoothness::FiveHalves => "matern52",
        }
    }
}

impl fmt::Display for Smoothness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Smoothness {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matern12" => Ok(Smoothness::Half),
            "matern32" => Ok(Smoothness::ThreeHalves),
            "matern52" => Ok(Smoothness::FiveHalves),
            other => Err(Error::InvalidParameter(format!("unknown kernel '{other}'"))),
        }
    }
}

/// Anything that can be evaluated as a function of the distance `z ≥ 0`.
pub trait IsotropicKernel: Sync {
    fn eval(&self, z: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub nu: Smoothness,
    pub ell: f64,
    #[serde(default = "unit")]
    pub sigma2: f64,
}

fn unit() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn new(nu: Smoothness, ell: f64) -> Self {
        KernelSpec { nu, ell, sigma2: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ell > 0.0 && self.ell.is_finite()) {
            return Err(Error::InvalidParameter(format!("correlation length {} must be positive", self.ell)));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!("variance {} must be positive", self.sigma2)));
        }
        Ok(())
    }

    /// `σ² k_ν(z)` with the closed forms for ν ∈ {1/2, 3/2, 5/2}.
    pub fn eval_kernel(&self, z: f64) -> f64 {
        let ell = self.ell;
        let k = match self.nu {
            Smoothness::Half => (-z / ell).exp(),
            Smoothness::ThreeHalves => {
                let s = 3f64.sqrt() * z / ell;
                (1.0 + s) * (-s).exp()
            }
            Smoothness::FiveHalves => {
                let s = 5f64.sqrt() * z / ell;
                (1.0 + s + 5.0 * z * z / (3.0 * ell * ell)) * (-s).exp()
            }
        };
        self.sigma2 * k
    }

    /// Order of the covariance operator on an `n`-dimensional manifold.
    pub fn operator_order(&self, n: usize) -> Result<OperatorOrder> {
        if n != 1 {
            return Err(Error::InvalidParameter(format!("manifold dimension {n} is not supported")));
        }
        let r = -(2.0 * self.nu.nu() + n as f64);
        Ok(OperatorOrder { r, ra: -r / 2.0 })
    }
}

impl IsotropicKernel for KernelSpec {
    #[inline]
    fn eval(&self, z: f64) -> f64 {
        self.eval_kernel(z)
    }
}

/// The constant kernel `k ≡ c`; gives rank-one Galerkin matrices.
#[derive(Debug, Clone, Copy)]
pub struct ConstantKernel(pub f64);

impl IsotropicKernel for ConstantKernel {
    #[inline]
    fn eval(&self, _z: f64) -> f64 {
        self.0
    }
}

/// Covariance order `r` and coloring order `ra = -r/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorOrder {
    pub r: f64,
    pub ra: f64,
}

/// Eigenvalues `λ_m = (κ² + m²)^{-2β}` of `(−Δ + κ²)^{-2β}` on the unit-speed circle.
#[derive(Debug, Clone)]
pub struct CircleSpectrum {
    pub kappa: f64,
    pub beta: f64,
    pub modes: usize,
    eigenvalues: Vec<f64>,
}

const TAIL_TOL: f64 = 1e-12;

impl CircleSpectrum {
    /// Fails when the neglected tail `Σ_{|m|>M} λ_m` may exceed `1e-12`.
    pub fn new(kappa: f64, beta: f64, modes: usize) -> Result<Self> {
        if !(kappa > 0.0 && beta > 0.25) {
            return Err(Error::InvalidParameter(format!("need kappa > 0 and beta > 1/4, got ({kappa}, {beta})")));
        }
        let tail = Self::tail_bound(beta, modes);
        if tail > TAIL_TOL {
            let mut required = modes.max(1);
            while Self::tail_bound(beta, required) > TAIL_TOL {
                required *= 2;
            }
            let (mut lo, mut hi) = (required / 2, required);
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if Self::tail_bound(beta, mid) > TAIL_TOL {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Err(Error::SpectrumTail { tail, required: hi });
        }
        let eigenvalues = (0..=modes).map(|m| Self::eigenvalue_of(kappa, beta, m as f64)).collect();
        Ok(CircleSpectrum { kappa, beta, modes, eigenvalues })
    }

    fn eigenvalue_of(kappa: f64, beta: f64, m: f64) -> f64 {
        (kappa * kappa + m * m).powf(-2.0 * beta)
    }

    /// Upper bound `2 ∫_M^∞ x^{-4β} dx` on the two-sided tail.
    fn tail_bound(beta: f64, modes: usize) -> f64 {
        if modes == 0 {
            return f64::INFINITY;
        }
        let m = modes as f64;
        2.0 * m.powf(1.0 - 4.0 * beta) / (4.0 * beta - 1.0)
    }

    /// `λ_m` for `|m| ≤ M`.
    pub fn eigenvalue(&self, m: i64) -> f64 {
        self.eigenvalues[m.unsigned_abs() as usize]
    }

    /// `(1/2π) Σ_{|m|≤M} λ_m cos(mθ)`.
    pub fn circle_wm_kernel(&self, theta: f64) -> f64 {
        let mut sum = self.eigenvalues[0];
        for (m, lam) in self.eigenvalues.iter().enumerate().skip(1) {
            sum += 2.0 * lam * (m as f64 * theta).cos();
        }
        sum / (2.0 * PI)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    #[test]
    fn closed_forms() {
        let k = KernelSpec::new(Smoothness::Half, 1.0);
        assert_eq!(k.eval_kernel(0.0), 1.0);
        assert_abs_diff_eq!(k.eval_kernel(1.0), (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(k.eval_kernel(1.0), 0.367879, epsilon = 1e-6);
        assert_eq!(KernelSpec::new(Smoothness::ThreeHalves, 1.0).eval_kernel(0.0), 1.0);
        assert_eq!(KernelSpec::new(Smoothness::FiveHalves, 0.3).eval_kernel(0.0), 1.0);
    }

    #[test]
    fn orders() {
        for (nu, r, ra) in [(Smoothness::Half, -2.0, 1.0), (Smoothness::ThreeHalves, -4.0, 2.0), (Smoothness::FiveHalves, -6.0, 3.0)] {
            let o = KernelSpec::new(nu, 1.0).operator_order(1).unwrap();
            assert_eq!((o.r, o.ra), (r, ra));
        }
        assert!(KernelSpec::new(Smoothness::Half, 1.0).operator_order(2).is_err());
    }

    #[test]
    fn identifiers_round_trip() {
        for nu in [Smoothness::Half, Smoothness::ThreeHalves, Smoothness::FiveHalves] {
            assert_eq!(nu.id().parse::<Smoothness>().unwrap(), nu);
        }
        assert!("matern72".parse::<Smoothness>().is_err());
    }

    #[test]
    fn monotone_in_distance() {
        for nu in [Smoothness::Half, Smoothness::ThreeHalves, Smoothness::FiveHalves] {
            let k = KernelSpec::new(nu, 0.7);
            let vals: Vec<f64> = (0..2000).map(|i| k.eval_kernel(i as f64 * 0.005)).collect();
            assert!(vals.windows(2).all(|w| w[1] <= w[0]), "{nu} not monotone");
        }
    }

    #[test]
    fn circle_spectrum_values() {
        let s = CircleSpectrum::new(1.0, 1.0, 10_000).unwrap();
        assert_eq!(s.eigenvalue(0), 1.0);
        assert_eq!(s.eigenvalue(1), 0.25);
        assert_eq!(s.eigenvalue(-1), 0.25);
        let peak = s.circle_wm_kernel(0.0);
        for i in 1..50 {
            let th = i as f64 * 0.1;
            assert!(s.circle_wm_kernel(th) < peak);
            assert_abs_diff_eq!(s.circle_wm_kernel(th), s.circle_wm_kernel(-th), epsilon = 1e-15);
        }
    }

    #[test]
    fn tail_tolerance_is_enforced() {
        match CircleSpectrum::new(1.0, 1.0, 100) {
            Err(Error::SpectrumTail { required, .. }) => {
                assert!(CircleSpectrum::new(1.0, 1.0, required).is_ok());
                assert!(CircleSpectrum::new(1.0, 1.0, required - 1).is_err());
            }
            other => panic!("expected tail error, got {other:?}"),
        }
    }

    #[test]
    fn circle_gram_is_psd() {
        let s = CircleSpectrum::new(3.0, 1.0, 9000).unwrap();
        for m in [4usize, 17, 64] {
            let g = DMatrix::from_fn(m, m, |i, j| s.circle_wm_kernel(2.0 * PI * (i as f64 - j as f64) / m as f64));
            let ev = g.symmetric_eigenvalues();
            assert!(ev.min() >= -1e-10, "m={m}: min eigenvalue {}", ev.min());
        }
    }

    #[test]
    fn eigenvalue_plateau_and_tail_slope() {
        let (kappa, beta) = (10.0, 1.0);
        let s = CircleSpectrum::new(kappa, beta, 20_000).unwrap();
        let plateau = kappa.powf(-4.0 * beta);
        // (1 + m²/κ²)^{-2β} ≥ 1/2 requires |m| ≤ κ √(√2 − 1); check half the plateau width
        for m in 0..=5 {
            let ratio = s.eigenvalue(m) / plateau;
            assert!((0.5..=1.0).contains(&ratio), "m={m}: {ratio}");
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = (100..=1000)
            .step_by(10)
            .map(|m| ((m as f64).ln(), s.eigenvalue(m).ln()))
            .unzip();
        let slope = crate::util::ls_slope(&xs, &ys);
        assert!((slope + 4.0 * beta).abs() <= 0.05 * 4.0 * beta, "slope {slope}");
    }
}
