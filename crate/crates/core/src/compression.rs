//! A-priori tapering of wavelet-coordinate matrices, a-posteriori thresholding,
//! and sparsity statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::CurveSpec;
use crate::matrix::{DenseSymMatrix, SparseSymMatrix};
use crate::mra::{LevelIndexSet, MultiIndex, ParamInterval, SupportGeometry, WaveletSystem};

/// Tapering constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionParams {
    pub a: f64,
    pub a_prime: f64,
    pub d_prime: f64,
    /// Order of the operator being compressed.
    pub r: f64,
}

impl CompressionParams {
    /// `a = a' = 2` and `d' = d + (d̃ − d + r)/4`.
    pub fn standard(system: &WaveletSystem, r: f64) -> Self {
        let (d, dt) = (system.d as f64, system.dt as f64);
        CompressionParams { a: 2.0, a_prime: 2.0, d_prime: d + (dt - d + r) / 4.0, r }
    }

    pub fn with_a(mut self, a: f64, a_prime: f64) -> Self {
        self.a = a;
        self.a_prime = a_prime;
        self
    }

    pub fn validate(&self, system: &WaveletSystem) -> Result<()> {
        let (d, dt) = (system.d as f64, system.dt as f64);
        if !(self.a > 1.0 && self.a_prime > 1.0) || !self.a.is_finite() || !self.a_prime.is_finite() {
            return Err(Error::InvalidParameter(format!("tapering constants a={}, a'={} must exceed 1", self.a, self.a_prime)));
        }
        // the borderline case d' = d = d̃ + r is admitted (log-linear compression)
        if !(d <= self.d_prime && self.d_prime <= dt + self.r) || !(2.0 * dt + self.r > 0.0 && dt + self.r > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "d'={} must lie between d={d} and d̃+r={}",
                self.d_prime,
                dt + self.r
            )));
        }
        Ok(())
    }

    /// Consistency scale `ε = a^{−2(d + r/2)} + a'^{−(d̃ + r)}`.
    pub fn consistency_scale(&self, system: &WaveletSystem) -> f64 {
        let (d, dt) = (system.d as f64, system.dt as f64);
        self.a.powf(-2.0 * (d + self.r / 2.0)) + self.a_prime.powf(-(dt + self.r))
    }
}

/// Block truncation parameters `(τ_{jj'}, τ'_{jj'})` for discretization level `big_j`.
///
/// [`build_pattern`] passes `big_j = log2 p`, the level of the single-scale space.
pub fn taper_params(system: &WaveletSystem, params: &CompressionParams, j: usize, jp: usize, big_j: usize) -> Result<(f64, f64)> {
    params.validate(system)?;
    if j < system.j0 || jp < system.j0 || j > big_j || jp > big_j {
        return Err(Error::InvalidParameter(format!("levels ({j},{jp}) outside [{}, {big_j}]", system.j0)));
    }
    Ok(taper_params_unchecked(system.dt as f64, params, j, jp, big_j))
}

fn taper_params_unchecked(dt: f64, params: &CompressionParams, j: usize, jp: usize, big_j: usize) -> (f64, f64) {
    let (r, dp) = (params.r, params.d_prime);
    let (jf, jpf, big) = (j as f64, jp as f64, big_j as f64);
    let lo = j.min(jp) as f64;
    let hi = j.max(jp) as f64;
    let tau = params.a * (-lo).exp2().max(((2.0 * big * (dp - r / 2.0) - (jf + jpf) * (dp + dt)) / (2.0 * dt + r)).exp2());
    let tau_p = params.a_prime * (-hi).exp2().max(((2.0 * big * (dp - r / 2.0) - (jf + jpf) * dp - hi * dt) / (dt + r)).exp2());
    (tau, tau_p)
}

/// Sampled geometry of one support.
struct SupportShape {
    interval: ParamInterval,
    points: Vec<[f64; 2]>,
    center: [f64; 2],
    radius: f64,
    knots: Vec<(f64, [f64; 2])>,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn point_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return dist(p, a);
    }
    let s = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0);
    dist(p, [a[0] + s * dx, a[1] + s * dy])
}

impl SupportShape {
    fn new(curve: &CurveSpec, interval: ParamInterval, knots: &[f64]) -> Self {
        let segments = ((interval.len.min(1.0) * 128.0).ceil() as usize).clamp(8, 128);
        let points: Vec<[f64; 2]> = interval.samples(segments).map(|t| curve.point_at(t)).collect();
        let n = points.len() as f64;
        let center = [points.iter().map(|p| p[0]).sum::<f64>() / n, points.iter().map(|p| p[1]).sum::<f64>() / n];
        // sampled radius plus a margin for the chord sagitta
        let sag = points.windows(2).map(|w| dist(w[0], w[1])).fold(0.0, f64::max);
        let radius = points.iter().map(|&p| dist(p, center)).fold(0.0, f64::max) + sag;
        let knots = knots.iter().map(|&t| (t, curve.point_at(t))).collect();
        SupportShape { interval, points, center, radius, knots }
    }

    /// Lower bound for the distance to another support.
    fn lower_bound(&self, other: &SupportShape) -> f64 {
        dist(self.center, other.center) - self.radius - other.radius
    }

    fn distance(&self, other: &SupportShape) -> f64 {
        if self.interval.intersects(&other.interval) {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for p in &self.points {
            for w in other.points.windows(2) {
                best = best.min(point_segment(*p, w[0], w[1]));
            }
        }
        for p in &other.points {
            for w in self.points.windows(2) {
                best = best.min(point_segment(*p, w[0], w[1]));
            }
        }
        best
    }

    /// Distance from this function's singular support to `other`'s support.
    fn singular_distance(&self, other: &SupportShape) -> f64 {
        let mut best = f64::INFINITY;
        for &(t, p) in &self.knots {
            if other.interval.contains(t) {
                return 0.0;
            }
            for w in other.points.windows(2) {
                best = best.min(point_segment(p, w[0], w[1]));
            }
        }
        best
    }
}

/// Symmetric keep/drop pattern over `Λ_J × Λ_J`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaperPattern {
    pub idx: LevelIndexSet,
    pub params: CompressionParams,
    rows: Vec<Vec<usize>>,
    nnz: usize,
    /// Kept entries per level block, indexed `[j − j0][j' − j0]`.
    block_nnz: Vec<Vec<usize>>,
}

impl TaperPattern {
    fn from_rows(idx: LevelIndexSet, params: CompressionParams, rows: Vec<Vec<usize>>) -> Self {
        let nl = idx.jmax - idx.j0 + 1;
        let mut block_nnz = vec![vec![0usize; nl]; nl];
        let mut nnz = 0;
        for (l, row) in rows.iter().enumerate() {
            let jl = idx.level_of(l) - idx.j0;
            for &m in row {
                block_nnz[jl][idx.level_of(m) - idx.j0] += 1;
            }
            nnz += row.len();
        }
        TaperPattern { idx, params, rows, nnz, block_nnz }
    }

    /// Pattern keeping every entry.
    pub fn full(idx: LevelIndexSet, params: CompressionParams) -> Self {
        let p = idx.len();
        Self::from_rows(idx, params, (0..p).map(|_| (0..p).collect()).collect())
    }

    /// Pattern given by the stored entries of a symmetric sparse matrix.
    pub fn from_matrix(idx: LevelIndexSet, params: CompressionParams, a: &SparseSymMatrix) -> Self {
        let rows = (0..a.dim()).map(|l| a.row(l).0.to_vec()).collect();
        Self::from_rows(idx, params, rows)
    }

    /// Pattern keeping only the diagonal.
    pub fn diagonal(idx: LevelIndexSet, params: CompressionParams) -> Self {
        Self::from_rows(idx, params, (0..idx.len()).map(|i| vec![i]).collect())
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn nnz(&self) -> usize {
        self.nnz
    }

    pub fn nnz_fraction(&self) -> f64 {
        self.nnz as f64 / (self.dim() as f64).powi(2)
    }

    /// Kept column indices of row `l`, sorted.
    pub fn row(&self, l: usize) -> &[usize] {
        &self.rows[l]
    }

    pub fn contains(&self, l: usize, m: usize) -> bool {
        self.rows[l].binary_search(&m).is_ok()
    }

    pub fn block_nnz(&self) -> &[Vec<usize>] {
        &self.block_nnz
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows.iter().enumerate().all(|(l, row)| row.iter().all(|&m| self.contains(m, l)))
    }

    /// `(row, col)` list of kept entries.
    pub fn fingerprint_csv(&self) -> String {
        let mut s = String::from("row,col\n");
        for (l, row) in self.rows.iter().enumerate() {
            for &m in row {
                s.push_str(&format!("{l},{m}\n"));
            }
        }
        s
    }

    /// Matrix Market `pattern symmetric` export (lower triangle, 1-based).
    pub fn matrix_market(&self) -> String {
        let p = self.dim();
        let lower: usize = self.rows.iter().enumerate().map(|(l, r)| r.iter().filter(|&&m| m <= l).count()).sum();
        let mut s = format!("%%MatrixMarket matrix coordinate pattern symmetric\n{p} {p} {lower}\n");
        for (l, row) in self.rows.iter().enumerate() {
            for &m in row.iter().filter(|&&m| m <= l) {
                s.push_str(&format!("{} {}\n", l + 1, m + 1));
            }
        }
        s
    }
}

/// Decides every pair of `Λ_J × Λ_J` by the two drop rules.
///
/// Entries with a coarsest-level index are always kept; the near-field
/// singular-support rule applies to pairs of distinct wavelet levels only.
pub fn build_pattern(system: &WaveletSystem, curve: &CurveSpec, params: &CompressionParams, idx: &LevelIndexSet) -> Result<TaperPattern> {
    params.validate(system)?;
    curve.validate()?;
    if idx.j0 != system.j0 {
        return Err(Error::InvalidParameter(format!("index set coarse level {} differs from system {}", idx.j0, system.j0)));
    }
    let p = idx.len();
    let shapes: Vec<SupportShape> = (0..p)
        .into_par_iter()
        .map(|l| {
            let lam = idx.multi(l);
            SupportShape::new(curve, system.support(idx, lam), &system.singular_support(idx, lam))
        })
        .collect();
    let nl = idx.jmax - idx.j0 + 1;
    let dt = system.dt as f64;
    let taus: Vec<Vec<(f64, f64)>> = (0..nl)
        .map(|a| (0..nl).map(|b| taper_params_unchecked(dt, params, idx.j0 + a, idx.j0 + b, idx.single_scale_level())).collect())
        .collect();
    let j0 = idx.j0;
    let keep = |l: usize, m: usize| -> bool {
        let (lam, mu) = (idx.multi(l), idx.multi(m));
        // order so that `lo` is on the coarser level
        let (lo, hi, slo, shi) = if lam.j <= mu.j { (lam, mu, &shapes[l], &shapes[m]) } else { (mu, lam, &shapes[m], &shapes[l]) };
        let (tau, tau_p) = taus[lo.j - j0][hi.j - j0];
        if lo.j == j0 {
            return true;
        }
        let near = (-(lo.j as f64)).exp2();
        let bound = slo.lower_bound(shi);
        if bound > tau {
            return false;
        }
        let dsupp = slo.distance(shi);
        if dsupp > tau {
            return false;
        }
        if lo.j != hi.j && dsupp <= near && slo.singular_distance(shi) > tau_p {
            return false;
        }
        true
    };
    let rows: Vec<Vec<usize>> = (0..p).into_par_iter().map(|l| (0..p).filter(|&m| keep(l, m)).collect()).collect();
    Ok(TaperPattern::from_rows(*idx, *params, rows))
}

/// Restricts a dense matrix to a pattern, copying kept entries bit-exactly.
pub fn apply_pattern(a: &DenseSymMatrix, pattern: &TaperPattern) -> Result<SparseSymMatrix> {
    if a.dim() != pattern.dim() {
        return Err(Error::DimensionMismatch { expected: pattern.dim(), got: a.dim() });
    }
    Ok(SparseSymMatrix::from_dense_filtered(a, |i, j| pattern.contains(i, j)))
}

/// Drops off-diagonal entries whose preconditioned magnitude `|2^{ra(|λ|+|λ'|)} c_{λλ'}|`
/// is below `delta`. The diagonal is always kept.
pub fn aposteriori_threshold(a: &SparseSymMatrix, idx: &LevelIndexSet, ra: f64, delta: f64) -> Result<SparseSymMatrix> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidParameter(format!("threshold {delta} must be non-negative")));
    }
    if a.dim() != idx.len() {
        return Err(Error::DimensionMismatch { expected: idx.len(), got: a.dim() });
    }
    if delta == 0.0 {
        return Ok(a.clone());
    }
    Ok(a.retain(|i, j, v| {
        i == j || (v * (ra * (idx.level_of(i) + idx.level_of(j)) as f64).exp2()).abs() >= delta
    }))
}

/// Counts of stored entries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparsityReport {
    pub p: usize,
    pub nnz: usize,
    pub nnz_fraction: f64,
    /// `[j − j0][j' − j0]` block counts.
    pub block_nnz: Vec<Vec<usize>>,
}

pub fn sparsity_report(pattern: &TaperPattern) -> SparsityReport {
    SparsityReport {
        p: pattern.dim(),
        nnz: pattern.nnz(),
        nnz_fraction: pattern.nnz_fraction(),
        block_nnz: pattern.block_nnz().to_vec(),
    }
}

pub fn matrix_sparsity_report(a: &SparseSymMatrix, idx: &LevelIndexSet) -> SparsityReport {
    let nl = idx.jmax - idx.j0 + 1;
    let mut block_nnz = vec![vec![0usize; nl]; nl];
    for (i, j, _) in a.iter() {
        block_nnz[idx.level_of(i) - idx.j0][idx.level_of(j) - idx.j0] += 1;
    }
    SparsityReport { p: a.dim(), nnz: a.nnz(), nnz_fraction: a.nnz() as f64 / (a.dim() as f64).powi(2), block_nnz }
}

/// Whether `λ` sits on the coarsest level of `idx`.
pub fn is_coarse(idx: &LevelIndexSet, lambda: MultiIndex) -> bool {
    lambda.j == idx.j0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn system() -> WaveletSystem {
        WaveletSystem::build_default(2, 6).unwrap()
    }

    #[test]
    fn hand_evaluated_taper() {
        let w = system();
        let params = CompressionParams::standard(&w, -2.0);
        assert_eq!(params.d_prime, 2.5);
        let (tau, _) = taper_params(&w, &params, 5, 5, 5).unwrap();
        assert!((tau - 2.0 * 2f64.powf(-5.0)).abs() < 1e-15);
        // at the coarsest level the decay term dominates: (35 − 34)/10 = 0.1
        let (tau, _) = taper_params(&w, &params, 2, 2, 5).unwrap();
        assert!((tau - 2.0 * 2f64.powf(0.1)).abs() < 1e-15);
        let (_, tau_p) = taper_params(&w, &params, 5, 2, 5).unwrap();
        let expected = 2.0 * 2f64.powf(-5.0).max(2f64.powf((2.0 * 5.0 * 3.5 - 7.0 * 2.5 - 5.0 * 6.0) / 4.0));
        assert!((tau_p - expected).abs() < 1e-15);
        assert!(taper_params(&w, &params.with_a(1.0, 2.0), 3, 3, 5).is_err());
        assert!(taper_params(&w, &params, 1, 3, 5).is_err());
    }

    #[test]
    fn params_constraints() {
        let w = system();
        let mut p = CompressionParams::standard(&w, -2.0);
        assert!(p.validate(&w).is_ok());
        p.d_prime = 4.5;
        assert!(p.validate(&w).is_err());
        let eps2 = CompressionParams::standard(&w, -2.0).consistency_scale(&w);
        let eps3 = CompressionParams::standard(&w, -2.0).with_a(3.0, 3.0).consistency_scale(&w);
        assert!(eps3 < eps2);
    }

    #[test]
    fn coarsest_only_is_full() {
        let w = system();
        let curve = CurveSpec::reference_boundary().normalize_to_unit_diameter().unwrap();
        let idx = w.index_set(w.j0).unwrap();
        let pat = build_pattern(&w, &curve, &CompressionParams::standard(&w, -2.0), &idx).unwrap();
        assert_eq!(pat.nnz(), idx.len() * idx.len());
    }

    #[test]
    fn pattern_symmetric_and_contains_diagonal() {
        let w = system();
        let curve = CurveSpec::reference_boundary().normalize_to_unit_diameter().unwrap();
        let idx = w.index_set(6).unwrap();
        let pat = build_pattern(&w, &curve, &CompressionParams::standard(&w, -2.0), &idx).unwrap();
        assert!(pat.is_symmetric());
        assert!((0..idx.len()).all(|l| pat.contains(l, l)));
        let total: usize = pat.block_nnz().iter().flatten().sum();
        assert_eq!(total, pat.nnz());
    }

    #[test]
    fn threshold_limits() {
        let idx = LevelIndexSet::new(2, 3).unwrap();
        let d = DenseSymMatrix::from_upper_fn(16, |i, j| 1.0 / (1.0 + (i + j) as f64));
        let s = SparseSymMatrix::from_dense(&d);
        assert_eq!(aposteriori_threshold(&s, &idx, 1.0, 0.0).unwrap(), s);
        let diag = aposteriori_threshold(&s, &idx, 1.0, f64::INFINITY).unwrap();
        assert_eq!(diag.nnz(), 16);
    }
}
