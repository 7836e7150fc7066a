//! Galerkin assembly of covariance matrices.
//!
//! The single-scale trial space at level `L` consists of the `N = 2^L` periodic hat
//! functions `φ_{L,k}(φ) = √(N/2π) · hat(N φ/2π − k)` in the curve parameter
//! `φ ∈ [0, 2π)`, normalized in `L²(0, 2π)`. Entries are
//! `A_{kk'} = ∬ k(‖γ(φ) − γ(φ')‖) φ_k(φ) φ_{k'}(φ') |γ'(φ)| |γ'(φ')| dφ dφ'`.
//! Internally the integrals run over `t = φ/2π ∈ [0, 1)`. Integrals are split over pairs of grid cells; cell pairs that touch
//! the diagonal are refined dyadically toward it.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::IsotropicKernel;
use crate::manifold::CurveSpec;
use crate::matrix::{DenseSymMatrix, SparseSymMatrix};
use crate::mra::{Family, LevelIndexSet, WaveletSystem};
use crate::quadrature::GaussRule;

/// Composite Gauss settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureRule {
    /// Gauss–Legendre points per direction on each (sub)cell.
    pub order: usize,
    /// Dyadic refinement steps toward the diagonal for touching cell pairs.
    pub refinement_depth: usize,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        QuadratureRule { order: 8, refinement_depth: 6 }
    }
}

impl QuadratureRule {
    pub fn validate(&self) -> Result<()> {
        if self.order == 0 || self.order > 64 {
            return Err(Error::InvalidParameter(format!("quadrature order {} out of range", self.order)));
        }
        if self.refinement_depth > 20 {
            return Err(Error::InvalidParameter(format!("refinement depth {} out of range", self.refinement_depth)));
        }
        Ok(())
    }
}

struct CellData {
    xy: Vec<[f64; 2]>,
    /// Gauss weight × cell length × arc-length density.
    w: Vec<f64>,
}

/// Integrates products of hat functions over pairs of cells.
struct CellIntegrator<'a, K: IsotropicKernel> {
    curve: &'a CurveSpec,
    kernel: &'a K,
    n: usize,
    rule: GaussRule,
    depth: usize,
    cells: Vec<CellData>,
}

impl<'a, K: IsotropicKernel> CellIntegrator<'a, K> {
    fn new(curve: &'a CurveSpec, kernel: &'a K, level: usize, quad: &QuadratureRule) -> Result<Self> {
        quad.validate()?;
        curve.validate()?;
        if level == 0 || level > 16 {
            return Err(Error::InvalidParameter(format!("single-scale level {level} out of range")));
        }
        let n = 1usize << level;
        let rule = GaussRule::new(quad.order);
        let h = 1.0 / n as f64;
        let cells = (0..n)
            .map(|c| {
                let mut xy = Vec::with_capacity(rule.len());
                let mut w = Vec::with_capacity(rule.len());
                for (&x, &g) in rule.nodes.iter().zip(&rule.weights) {
                    let t = (c as f64 + x) * h;
                    xy.push(curve.point_at(t));
                    w.push(g * h * curve.speed_at(t));
                }
                CellData { xy, w }
            })
            .collect();
        Ok(CellIntegrator { curve, kernel, n, rule, depth: quad.refinement_depth, cells })
    }

    /// Periodic offset `b − a` in `{−1, 0, 1}` for touching cells.
    fn touching_offset(&self, a: usize, b: usize) -> Option<i64> {
        let n = self.n as i64;
        let d = (b as i64 - a as i64).rem_euclid(n);
        if d == 0 {
            Some(0)
        } else if d == 1 {
            Some(1)
        } else if d == n - 1 {
            Some(-1)
        } else {
            None
        }
    }

    /// `M[α][β] = ∬_{cell a × cell b} k φ^a_α φ^b_β w w`, where `φ^c_0` is the hat
    /// centred at node `c` and `φ^c_1` the one centred at node `c + 1`.
    fn local(&self, a: usize, b: usize) -> Result<[[f64; 2]; 2]> {
        let m = match self.touching_offset(a, b) {
            Some(off) if self.n > 2 => self.local_refined(a, b, off),
            _ => self.local_regular(a, b),
        };
        if m.iter().flatten().all(|v| v.is_finite()) {
            Ok(m)
        } else {
            Err(Error::NonFinite("kernel value during quadrature"))
        }
    }

    fn local_regular(&self, a: usize, b: usize) -> [[f64; 2]; 2] {
        let (ca, cb) = (&self.cells[a], &self.cells[b]);
        let x = &self.rule.nodes;
        let mut m = [[0.0; 2]; 2];
        for (g, (pa, wa)) in ca.xy.iter().zip(&ca.w).enumerate() {
            let (mut s0, mut s1) = (0.0, 0.0);
            for (h, (pb, wb)) in cb.xy.iter().zip(&cb.w).enumerate() {
                let kv = self.kernel.eval((pa[0] - pb[0]).hypot(pa[1] - pb[1])) * wb;
                s0 += kv * (1.0 - x[h]);
                s1 += kv * x[h];
            }
            let ua = wa * (1.0 - x[g]);
            let va = wa * x[g];
            m[0][0] += ua * s0;
            m[0][1] += ua * s1;
            m[1][0] += va * s0;
            m[1][1] += va * s1;
        }
        let scale = self.n as f64 / TAU;
        m.iter_mut().flatten().for_each(|v| *v *= scale);
        m
    }

    fn local_refined(&self, a: usize, b: usize, off: i64) -> [[f64; 2]; 2] {
        let mut m = [[0.0; 2]; 2];
        self.refine(a, b, off as f64, [0.0, 1.0], [0.0, 1.0], 0, &mut m);
        let scale = self.n as f64 / TAU;
        m.iter_mut().flatten().for_each(|v| *v *= scale);
        m
    }

    /// Local coordinates `s, t ∈ [0, 1]` on cells `a` and `b`; the singular line is `s = t + off`.
    #[allow(clippy::too_many_arguments)]
    fn refine(&self, a: usize, b: usize, off: f64, s: [f64; 2], t: [f64; 2], level: usize, m: &mut [[f64; 2]; 2]) {
        // on the same cell only squares cut by the diagonal are refined; for neighbouring
        // cells the kink is the shared corner
        let touches = if off == 0.0 { s[0] < t[1] && t[0] < s[1] } else { s[0] <= t[1] + off && t[0] + off <= s[1] };
        if touches && level < self.depth {
            let sm = 0.5 * (s[0] + s[1]);
            let tm = 0.5 * (t[0] + t[1]);
            for si in [[s[0], sm], [sm, s[1]]] {
                for ti in [[t[0], tm], [tm, t[1]]] {
                    self.refine(a, b, off, si, ti, level + 1, m);
                }
            }
            return;
        }
        if off == 0.0 && s == t {
            // the kink runs along the diagonal of this square: integrate each triangle
            // with a collapsed (Duffy) product rule, on which the integrand is smooth
            let hs = s[1] - s[0];
            for (x, wx) in self.rule.mapped(0.0, 1.0) {
                let u = s[0] + hs * x;
                let pu = self.node(a, u);
                for (y, wy) in self.rule.mapped(0.0, 1.0) {
                    let w = wx * wy * hs * hs * x;
                    let v = s[0] + hs * x * y;
                    let pv = self.node(b, v);
                    let kv = self.kernel.eval((pu.0[0] - pv.0[0]).hypot(pu.0[1] - pv.0[1])) * w * pu.1 * pv.1;
                    // the mirrored point (v, u) carries the same kernel value
                    m[0][0] += kv * 2.0 * (1.0 - u) * (1.0 - v);
                    m[0][1] += kv * ((1.0 - u) * v + (1.0 - v) * u);
                    m[1][0] += kv * ((1.0 - u) * v + (1.0 - v) * u);
                    m[1][1] += kv * 2.0 * u * v;
                }
            }
            return;
        }
        let tb: Vec<(f64, [f64; 2], f64)> = self
            .rule
            .mapped(t[0], t[1])
            .map(|(y, w)| {
                let (pb, wb) = self.node(b, y);
                (y, pb, w * wb)
            })
            .collect();
        for (x, w) in self.rule.mapped(s[0], s[1]) {
            let (pa, wa) = self.node(a, x);
            let wa = w * wa;
            let (mut s0, mut s1) = (0.0, 0.0);
            for &(y, pb, wb) in &tb {
                let kv = self.kernel.eval((pa[0] - pb[0]).hypot(pa[1] - pb[1])) * wb;
                s0 += kv * (1.0 - y);
                s1 += kv * y;
            }
            m[0][0] += wa * (1.0 - x) * s0;
            m[0][1] += wa * (1.0 - x) * s1;
            m[1][0] += wa * x * s0;
            m[1][1] += wa * x * s1;
        }
    }

    /// Curve point and `h · w(t)` at local coordinate `x` of cell `c`.
    #[inline]
    fn node(&self, c: usize, x: f64) -> ([f64; 2], f64) {
        let h = 1.0 / self.n as f64;
        let (p, w) = self.curve.point_and_speed_at((c as f64 + x) * h);
        (p, w * h)
    }
}

/// Dense single-scale Galerkin matrix at level `level` (dimension `2^level`).
pub fn assemble_single_scale<K: IsotropicKernel>(
    curve: &CurveSpec,
    kernel: &K,
    level: usize,
    quad: &QuadratureRule,
) -> Result<DenseSymMatrix> {
    let integ = CellIntegrator::new(curve, kernel, level, quad)?;
    let n = integ.n;
    let mut out = DenseSymMatrix::zeros(n);
    const BATCH: usize = 64;
    for batch in (0..n).collect::<Vec<_>>().chunks(BATCH) {
        let locals: Vec<Vec<[[f64; 2]; 2]>> = batch
            .par_iter()
            .map(|&a| (a..n).map(|b| integ.local(a, b)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        let data = out.as_mut_slice();
        for (&a, row) in batch.iter().zip(locals) {
            for (m, b) in row.into_iter().zip(a..n) {
                for (alpha, mrow) in m.iter().enumerate() {
                    let i = (a + alpha) % n;
                    for (beta, &v) in mrow.iter().enumerate() {
                        let j = (b + beta) % n;
                        data[i * n + j] += v;
                        if a != b {
                            data[j * n + i] += v;
                        }
                    }
                }
            }
        }
    }
    out.symmetrize();
    Ok(out)
}

/// Applies `f` to every row, then to every column, of a symmetric matrix.
fn congruence(a: &DenseSymMatrix, f: impl Fn(&[f64]) -> Result<Vec<f64>> + Sync) -> Result<DenseSymMatrix> {
    let n = a.dim();
    let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|i| f(a.row(i))).collect::<Result<_>>()?;
    // rows[i] = (B)_{i,·} with B = A Mᵀ; the columns of B are the rows of B ᵀ = M A
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            f(&col)
        })
        .collect::<Result<_>>()?;
    let mut data = vec![0.0; n * n];
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            data[i * n + j] = *v;
        }
    }
    let mut out = DenseSymMatrix::from_row_major(n, data, f64::INFINITY)?;
    out.symmetrize();
    Ok(out)
}

/// `C_ψ = Tᵀ A T`, with `T` the primal synthesis map (wavelet → single-scale).
pub fn to_wavelet_coordinates(system: &WaveletSystem, idx: &LevelIndexSet, a: &DenseSymMatrix) -> Result<DenseSymMatrix> {
    if a.dim() != idx.len() {
        return Err(Error::DimensionMismatch { expected: idx.len(), got: a.dim() });
    }
    congruence(a, |v| system.fwt_dual(idx, v))
}

/// Inverse congruence `A = T^{-ᵀ} C_ψ T^{-1}`.
pub fn from_wavelet_coordinates(system: &WaveletSystem, idx: &LevelIndexSet, c: &DenseSymMatrix) -> Result<DenseSymMatrix> {
    if c.dim() != idx.len() {
        return Err(Error::DimensionMismatch { expected: idx.len(), got: c.dim() });
    }
    congruence(c, |v| system.ifwt_dual(idx, v))
}

/// Dense wavelet-coordinate covariance matrix over `Λ_J`.
pub fn assemble_wavelet<K: IsotropicKernel>(
    curve: &CurveSpec,
    kernel: &K,
    system: &WaveletSystem,
    idx: &LevelIndexSet,
    quad: &QuadratureRule,
) -> Result<DenseSymMatrix> {
    let a = assemble_single_scale(curve, kernel, idx.single_scale_level(), quad)?;
    to_wavelet_coordinates(system, idx, &a)
}

/// Single-scale expansion of every primal basis function, as periodic runs `(first index, coefficients)`.
pub(crate) fn single_scale_columns(system: &WaveletSystem, idx: &LevelIndexSet, family: Family) -> Result<Vec<Vec<(usize, f64)>>> {
    let p = idx.len();
    (0..p)
        .into_par_iter()
        .map(|l| {
            let mut e = vec![0.0; p];
            e[l] = 1.0;
            system.synthesize_in_place(family, idx, &mut e)?;
            Ok(e.into_iter().enumerate().filter(|(_, v)| *v != 0.0).collect())
        })
        .collect()
}

/// Fixed-size bit rows.
struct BitRows {
    words: usize,
    bits: Vec<u64>,
}

impl BitRows {
    fn new(rows: usize, cols: usize) -> Self {
        let words = cols.div_ceil(64);
        BitRows { words, bits: vec![0; rows * words] }
    }

    fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    fn or_row(&mut self, i: usize, other: &[u64]) {
        let w = self.words;
        self.bits[i * w..(i + 1) * w].iter_mut().zip(other).for_each(|(a, b)| *a |= b);
    }

    fn set(&mut self, i: usize, j: usize) {
        self.bits[i * self.words + j / 64] |= 1 << (j % 64);
    }

    fn ones(row: &[u64]) -> impl Iterator<Item = usize> + '_ {
        row.iter().enumerate().flat_map(|(w, &bits)| {
            let mut b = bits;
            std::iter::from_fn(move || {
                if b == 0 {
                    return None;
                }
                let tz = b.trailing_zeros() as usize;
                b &= b - 1;
                Some(w * 64 + tz)
            })
        })
    }
}

/// Wavelet-coordinate entries on a pattern, computed from the single-scale entries
/// inside the supports of the kept pairs only.
pub fn assemble_compressed<K: IsotropicKernel>(
    curve: &CurveSpec,
    kernel: &K,
    system: &WaveletSystem,
    idx: &LevelIndexSet,
    pattern: &crate::compression::TaperPattern,
    quad: &QuadratureRule,
) -> Result<SparseSymMatrix> {
    let p = idx.len();
    if pattern.dim() != p {
        return Err(Error::DimensionMismatch { expected: p, got: pattern.dim() });
    }
    let integ = CellIntegrator::new(curve, kernel, idx.single_scale_level(), quad)?;
    let cols = single_scale_columns(system, idx, Family::Primal)?;

    // hat pairs (k, k') required by some kept (λ, λ')
    let mut hat_pairs = BitRows::new(p, p);
    let mut mask = BitRows::new(1, p);
    for l in 0..p {
        mask.bits.iter_mut().for_each(|w| *w = 0);
        for &m in pattern.row(l) {
            for &(k, _) in &cols[m] {
                mask.set(0, k);
            }
        }
        let row_mask = mask.row(0).to_vec();
        for &(k, _) in &cols[l] {
            hat_pairs.or_row(k, &row_mask);
        }
    }
    // cell pairs covering them; hat k lives on cells k−1 and k
    let mut cell_pairs = BitRows::new(p, p);
    for k in 0..p {
        let row = hat_pairs.row(k).to_vec();
        for kp in BitRows::ones(&row) {
            for a in [(k + p - 1) % p, k] {
                for b in [(kp + p - 1) % p, kp] {
                    cell_pairs.set(a, b);
                }
            }
        }
    }
    let cell_locals: Vec<Vec<(usize, [[f64; 2]; 2])>> = (0..p)
        .into_par_iter()
        .map(|a| BitRows::ones(cell_pairs.row(a)).map(|b| Ok((b, integ.local(a, b)?))).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    // single-scale entries restricted to the required hat pairs
    let hat_rows: Vec<Vec<(usize, f64)>> = (0..p)
        .into_par_iter()
        .map(|k| {
            BitRows::ones(hat_pairs.row(k))
                .map(|kp| {
                    let mut v = 0.0;
                    for (alpha, a) in [(1usize, (k + p - 1) % p), (0, k)] {
                        let locals = &cell_locals[a];
                        for (beta, b) in [(1usize, (kp + p - 1) % p), (0, kp)] {
                            let pos = locals.binary_search_by_key(&b, |e| e.0).expect("cell pair scheduled");
                            v += locals[pos].1[alpha][beta];
                        }
                    }
                    (kp, v)
                })
                .collect()
        })
        .collect();

    let rows: Vec<Vec<(usize, f64)>> = (0..p)
        .into_par_iter()
        .map(|l| {
            let mut y = vec![0.0; p];
            for &(k, c) in &cols[l] {
                for &(kp, v) in &hat_rows[k] {
                    y[kp] += c * v;
                }
            }
            pattern
                .row(l)
                .iter()
                .map(|&m| (m, cols[m].iter().map(|&(kp, c)| c * y[kp]).sum::<f64>()))
                .collect()
        })
        .collect();
    let mut triplets = Vec::new();
    for (l, row) in rows.into_iter().enumerate() {
        for (m, v) in row {
            if m >= l {
                triplets.push((l, m, v));
            }
        }
    }
    SparseSymMatrix::from_upper_triplets(p, triplets)
}
