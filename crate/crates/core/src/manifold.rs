//! Closed parametrized curves in the plane.
//!
//! A curve is a single 2π-periodic chart `γ(φ) = scale · g(φ) (cos φ, sin φ)`.
//! Everything downstream works in the normalized parameter `t = φ / 2π ∈ [0, 1)`;
//! [`CurveSpec::point_at`] and [`CurveSpec::speed_at`] are the `t`-versions.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fourier coefficients `α_{-5}, …, α_5` of the reference boundary.
pub const REFERENCE_BOUNDARY_COEFFS: [f64; 11] = [
    2.2, 0.56, 0.14, 1.1, 1.4, // α_{-5} .. α_{-1}
    50.0, // α_0
    -0.57, -1.5, -1.2, -1.5, 0.89, // α_1 .. α_5
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CurveKind {
    /// Radius function `g(φ) = α_0 + (1/100) Σ_k (α_{-k} sin kφ + α_k cos kφ)`,
    /// coefficients ordered `α_{-5}..=α_5`.
    FourierBoundary { coeffs: [f64; 11] },
    Circle { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub kind: CurveKind,
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub phi: f64,
    pub xy: [f64; 2],
}

impl CurveSpec {
    pub fn circle(radius: f64) -> Self {
        CurveSpec { kind: CurveKind::Circle { radius }, scale: 1.0 }
    }

    pub fn fourier(coeffs: [f64; 11]) -> Self {
        CurveSpec { kind: CurveKind::FourierBoundary { coeffs }, scale: 1.0 }
    }

    /// The reference boundary, unscaled.
    pub fn reference_boundary() -> Self {
        Self::fourier(REFERENCE_BOUNDARY_COEFFS)
    }

    /// Looks up a named preset (`reference-boundary`, `unit-circle`).
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "reference-boundary" => Ok(Self::reference_boundary()),
            "unit-circle" => Ok(Self::circle(1.0)),
            other => Err(Error::InvalidParameter(format!("unknown curve preset '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidParameter(format!("curve scale {} must be positive", self.scale)));
        }
        match self.kind {
            CurveKind::Circle { radius } if !(radius.is_finite() && radius > 0.0) => {
                Err(Error::InvalidParameter(format!("circle radius {radius} must be positive")))
            }
            CurveKind::FourierBoundary { coeffs } => {
                // |Σ| ≤ Σ|α_k|/100 bounds the oscillating part of g.
                let osc: f64 = coeffs.iter().enumerate().filter(|&(i, _)| i != 5).map(|(_, a)| a.abs()).sum();
                if coeffs[5] - osc / 100.0 > 0.0 {
                    return Ok(());
                }
                // fall back to a dense check when the cheap bound is inconclusive
                let n = 4096;
                for i in 0..n {
                    let (g, _) = self.radius_and_derivative(TAU * i as f64 / n as f64);
                    if !(g > 0.0) {
                        return Err(Error::InvalidParameter("radius function must be positive".into()));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `(g(φ), g'(φ))` without the global scale.
    pub fn radius_and_derivative(&self, phi: f64) -> (f64, f64) {
        match self.kind {
            CurveKind::Circle { radius } => (radius, 0.0),
            CurveKind::FourierBoundary { coeffs } => {
                let mut g = coeffs[5];
                let mut dg = 0.0;
                let (s1, c1) = phi.sin_cos();
                let (mut s, mut c) = (0.0, 1.0);
                for k in 1..=5 {
                    // angle addition: (sin kφ, cos kφ) from (sin (k−1)φ, cos (k−1)φ)
                    (s, c) = (s * c1 + c * s1, c * c1 - s * s1);
                    let a_neg = coeffs[5 - k];
                    let a_pos = coeffs[5 + k];
                    g += (a_neg * s + a_pos * c) / 100.0;
                    dg += k as f64 * (a_neg * c - a_pos * s) / 100.0;
                }
                (g, dg)
            }
        }
    }

    /// `γ(φ)` after scaling; `φ` is reduced modulo 2π.
    pub fn evaluate(&self, phi: f64) -> CurvePoint {
        let phi = phi.rem_euclid(TAU);
        let (g, _) = self.radius_and_derivative(phi);
        let (s, c) = phi.sin_cos();
        CurvePoint { phi, xy: [self.scale * g * c, self.scale * g * s] }
    }

    /// Arc-length density `|γ'(φ)|`.
    pub fn measure_weight(&self, phi: f64) -> f64 {
        let (g, dg) = self.radius_and_derivative(phi);
        self.scale * g.hypot(dg)
    }

    /// Chordal distance between `γ(φ1)` and `γ(φ2)`.
    pub fn distance(&self, phi1: f64, phi2: f64) -> f64 {
        let a = self.evaluate(phi1).xy;
        let b = self.evaluate(phi2).xy;
        (a[0] - b[0]).hypot(a[1] - b[1])
    }

    /// Position at normalized parameter `t` (period 1).
    #[inline]
    pub fn point_at(&self, t: f64) -> [f64; 2] {
        self.evaluate(TAU * t).xy
    }

    /// Position and arc-length density at `t` in one evaluation.
    #[inline]
    pub fn point_and_speed_at(&self, t: f64) -> ([f64; 2], f64) {
        let phi = TAU * t;
        let (g, dg) = self.radius_and_derivative(phi);
        let (s, c) = phi.sin_cos();
        ([self.scale * g * c, self.scale * g * s], TAU * self.scale * g.hypot(dg))
    }

    /// Arc-length density with respect to `t`, i.e. `2π |γ'(2πt)|`.
    #[inline]
    pub fn speed_at(&self, t: f64) -> f64 {
        TAU * self.measure_weight(TAU * t)
    }

    /// Maximal chordal distance between two points of the curve.
    pub fn diameter(&self) -> f64 {
        const N: usize = 4096;
        let pts: Vec<[f64; 2]> = (0..N).map(|i| self.evaluate(TAU * i as f64 / N as f64).xy).collect();
        let (mut best, mut bi, mut bj) = (0.0_f64, 0, 0);
        for i in 0..N {
            for j in (i + 1)..N {
                let d = (pts[i][0] - pts[j][0]).hypot(pts[i][1] - pts[j][1]);
                if d > best {
                    best = d;
                    bi = i;
                    bj = j;
                }
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        let h = TAU / N as f64;
        let mut p1 = TAU * bi as f64 / N as f64;
        let mut p2 = TAU * bj as f64 / N as f64;
        // alternating 1-D golden-section refinement of both endpoints
        for _ in 0..20 {
            let prev = best;
            p1 = golden_max(|x| self.distance(x, p2), p1 - h, p1 + h);
            p2 = golden_max(|x| self.distance(p1, x), p2 - h, p2 + h);
            best = best.max(self.distance(p1, p2));
            if (best - prev).abs() <= 1e-10 * best {
                break;
            }
        }
        best
    }

    /// Rescales the curve so that its chordal diameter is one.
    pub fn normalize_to_unit_diameter(&self) -> Result<CurveSpec> {
        self.validate()?;
        let diam = self.diameter();
        if !(diam > 0.0 && diam.is_finite()) {
            return Err(Error::DegenerateCurve(format!("diameter {diam}")));
        }
        Ok(CurveSpec { kind: self.kind, scale: self.scale / diam })
    }

    /// Total arc length (trapezoidal rule, exact up to round-off for trigonometric integrands).
    pub fn length(&self) -> f64 {
        const N: usize = 1024;
        (0..N).map(|i| self.measure_weight(TAU * i as f64 / N as f64)).sum::<f64>() * TAU / N as f64
    }
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > 1e-12 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;
    use std::sync::LazyLock;

    static UNIT_BOUNDARY: LazyLock<CurveSpec> =
        LazyLock::new(|| CurveSpec::reference_boundary().normalize_to_unit_diameter().unwrap());

    #[test]
    fn circle_points() {
        let c = CurveSpec::circle(1.0);
        let p = c.evaluate(0.0).xy;
        assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.0, epsilon = 1e-15);
        let p = c.evaluate(PI).xy;
        assert_abs_diff_eq!(p[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn boundary_at_zero() {
        let c = CurveSpec::reference_boundary();
        let p = c.evaluate(0.0).xy;
        assert_abs_diff_eq!(p[0], 49.9612, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn measure_weight_cases() {
        assert_abs_diff_eq!(CurveSpec::circle(1.0).measure_weight(0.7), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(CurveSpec::circle(2.0).measure_weight(2.1), 2.0, epsilon = 1e-15);
        let c = CurveSpec::reference_boundary();
        let dg0: f64 = (1..=5).map(|k| k as f64 * REFERENCE_BOUNDARY_COEFFS[5 - k]).sum::<f64>() / 100.0;
        let expected = 49.9612f64.hypot(dg0);
        assert_abs_diff_eq!(c.measure_weight(0.0), expected, epsilon = 1e-12);
        // central differences of γ
        let h = 1e-5;
        let a = c.evaluate(-h).xy;
        let b = c.evaluate(h).xy;
        let fd = ((b[0] - a[0]) / (2.0 * h)).hypot((b[1] - a[1]) / (2.0 * h));
        assert!((fd - expected).abs() < 1e-6 * expected);
    }

    #[test]
    fn distances() {
        let c = CurveSpec::circle(1.0);
        assert_abs_diff_eq!(c.distance(0.0, PI), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.distance(0.0, PI / 2.0), 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(CurveSpec::reference_boundary().distance(1.3, 1.3), 0.0);
    }

    #[test]
    fn normalization() {
        let c = CurveSpec::circle(3.0).normalize_to_unit_diameter().unwrap();
        assert!((c.scale - 1.0 / 6.0).abs() < 1e-10);
        let again = c.normalize_to_unit_diameter().unwrap();
        assert!((again.scale - c.scale).abs() < 1e-10 * c.scale);

        let b = *UNIT_BOUNDARY;
        let n = 1024;
        let mut max = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                max = max.max(b.distance(TAU * i as f64 / n as f64, TAU * j as f64 / n as f64));
            }
        }
        assert!((0.999..=1.0 + 1e-12).contains(&max), "max pairwise distance {max}");
    }

    #[test]
    fn degenerate_curve_rejected() {
        let c = CurveSpec { kind: CurveKind::Circle { radius: 1.0 }, scale: 0.0 };
        assert!(c.normalize_to_unit_diameter().is_err());
    }

    #[test]
    fn positive_weight_everywhere() {
        let c = CurveSpec::reference_boundary();
        assert!((0..4096).all(|i| c.measure_weight(TAU * i as f64 / 4096.0) > 0.0));
    }

    proptest::proptest! {
        #[test]
        fn chordal_distance_is_a_metric(a in 0.0..TAU, b in 0.0..TAU, c in 0.0..TAU) {
            let curve = *UNIT_BOUNDARY;
            let (ab, ba) = (curve.distance(a, b), curve.distance(b, a));
            proptest::prop_assert!((ab - ba).abs() <= 1e-12);
            proptest::prop_assert!(ab <= curve.distance(a, c) + curve.distance(c, b) + 1e-12);
        }
    }
}
