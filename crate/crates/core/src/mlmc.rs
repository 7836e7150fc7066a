//! Multilevel Monte Carlo estimation of tapered covariance matrices.
//!
//! Block `(j, j')` of the estimate averages `z̃(j) z̃(j')ᵀ` over `M̃_{max(j,j')}` fresh
//! samples, restricted to the entries kept by the taper pattern. Blocks `(j, j')` and
//! `(j', j)` are estimated once and mirrored.

use std::io::Read;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::compression::TaperPattern;
use crate::error::{Error, Result};
use crate::io::read_numeric_table;
use crate::matrix::{DenseSymMatrix, SparseSymMatrix};
use crate::mra::LevelIndexSet;
use crate::rng::{stream_id, NormalStream};
use crate::sampler::{apply_sqrt, ContourQuadrature};
use crate::spectral::{cholesky, SymOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// `2α > n`
    Fast,
    /// `2α = n`
    Borderline,
    /// `2α < n`
    Slow,
}

/// Per-level sample counts `M̃_j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSchedule {
    pub j0: usize,
    pub jmax: usize,
    pub n: usize,
    pub alpha: f64,
    pub alpha0: f64,
    /// `M̃_j` for `j = j0..=jmax`.
    pub counts: Vec<usize>,
    pub regime: Regime,
}

impl SampleSchedule {
    pub fn count(&self, j: usize) -> usize {
        self.counts[j - self.j0]
    }

    /// `M_{j,j'} = M̃_{max(j, j')}`.
    pub fn block_count(&self, j: usize, jp: usize) -> usize {
        self.count(j.max(jp))
    }

    /// Cost model `Σ_j M̃_j 2^{jn}`.
    pub fn work(&self) -> f64 {
        (self.j0..=self.jmax).map(|j| self.count(j) as f64 * ((j * self.n) as f64).exp2()).sum()
    }

    /// Every count multiplied by `factor`.
    pub fn scaled(&self, factor: usize) -> SampleSchedule {
        let mut s = self.clone();
        s.counts.iter_mut().for_each(|c| *c *= factor);
        s
    }
}

/// `M̃_j = ⌈M_finest · 2^{(J − j)(n + α)·2/3}⌉`.
pub fn schedule(idx: &LevelIndexSet, n: usize, alpha: f64, alpha0: f64, m_finest: usize) -> Result<SampleSchedule> {
    if n == 0 {
        return Err(Error::InvalidParameter("manifold dimension must be positive".into()));
    }
    if !(alpha > 0.0 && alpha.is_finite() && alpha <= alpha0) {
        return Err(Error::InvalidParameter(format!("need 0 < α ≤ α₀, got α={alpha}, α₀={alpha0}")));
    }
    if m_finest == 0 {
        return Err(Error::InvalidParameter("finest-level sample count must be positive".into()));
    }
    let rate = (n as f64 + alpha) * 2.0 / 3.0;
    let counts = (idx.j0..=idx.jmax)
        .map(|j| {
            let c = m_finest as f64 * ((idx.jmax - j) as f64 * rate).exp2();
            // guard against round-off pushing exact integers up
            (c - 1e-9 * c).ceil() as usize
        })
        .collect();
    let two_alpha = 2.0 * alpha;
    let regime = if (two_alpha - n as f64).abs() < 1e-12 {
        Regime::Borderline
    } else if two_alpha > n as f64 {
        Regime::Fast
    } else {
        Regime::Slow
    };
    Ok(SampleSchedule { j0: idx.j0, jmax: idx.jmax, n, alpha, alpha0, counts, regime })
}

/// Supplier of i.i.d. coefficient vectors in the level-major layout.
pub trait SampleSource: Sync {
    /// Writes the leading `out.len()` coefficients of sample number `index`; random
    /// sources derive their stream from `seed`.
    fn draw(&self, seed: u64, index: u64, out: &mut [f64]) -> Result<()>;
    /// Number of available samples, if finite.
    fn capacity(&self) -> Option<u64> {
        None
    }
}

/// Exact draws from `N(0, C)` through the Cholesky factor of `C`.
///
/// With the level-major layout, levels `≤ j` form a leading block, whose Cholesky
/// factor is the leading block of the full factor.
pub struct CholeskySource {
    l: DMatrix<f64>,
}

/// Stream tag of Cholesky-source draws.
pub const CHOLESKY_TAG: u64 = 0x6368_6f6c;

impl CholeskySource {
    pub fn new(cov: &DenseSymMatrix) -> Result<Self> {
        Ok(CholeskySource { l: cholesky(cov)? })
    }
}

impl SampleSource for CholeskySource {
    fn draw(&self, seed: u64, index: u64, out: &mut [f64]) -> Result<()> {
        let len = out.len();
        if len > self.l.nrows() {
            return Err(Error::DimensionMismatch { expected: self.l.nrows(), got: len });
        }
        let xi = NormalStream::new(seed, stream_id(&[CHOLESKY_TAG, index])).vector(0, len);
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.l.row(i);
            *o = (0..=i).map(|k| row[k] * xi[k]).sum();
        }
        Ok(())
    }
}

/// Draws `D^{−ra} S_K ξ` from a preconditioned operator; the full vector is computed
/// and truncated.
pub struct ContourSource<'a> {
    pub r: &'a dyn SymOperator,
    pub scaling: Vec<f64>,
    pub contour: &'a ContourQuadrature,
    pub cg_tol: f64,
}

impl SampleSource for ContourSource<'_> {
    fn draw(&self, seed: u64, index: u64, out: &mut [f64]) -> Result<()> {
        let p = self.r.dim();
        let xi = crate::sampler::white_noise(seed, index, p);
        let y = apply_sqrt(self.r, self.contour, &xi, self.cg_tol)?;
        for (i, o) in out.iter_mut().enumerate() {
            *o = y[i] * self.scaling[i];
        }
        Ok(())
    }
}

/// Samples read from a CSV file, one row per sample, columns in flat order.
pub struct TableSource {
    rows: Vec<Vec<f64>>,
}

impl TableSource {
    pub fn new(rows: Vec<Vec<f64>>) -> Self {
        TableSource { rows }
    }

    /// Parses one sample per CSV row; `#` lines and a header row are skipped.
    pub fn from_csv(reader: impl Read) -> Result<Self> {
        Ok(TableSource { rows: read_numeric_table(reader)? })
    }
}

impl SampleSource for TableSource {
    fn draw(&self, _seed: u64, index: u64, out: &mut [f64]) -> Result<()> {
        let row = self
            .rows
            .get(index as usize)
            .ok_or(Error::SourceExhausted { delivered: self.rows.len(), requested: index as usize + 1 })?;
        if row.len() < out.len() {
            return Err(Error::DimensionMismatch { expected: out.len(), got: row.len() });
        }
        out.copy_from_slice(&row[..out.len()]);
        Ok(())
    }

    fn capacity(&self) -> Option<u64> {
        Some(self.rows.len() as u64)
    }
}

/// Fixed vector returned for every index.
pub struct ConstantSource(pub Vec<f64>);

impl SampleSource for ConstantSource {
    fn draw(&self, _seed: u64, _index: u64, out: &mut [f64]) -> Result<()> {
        let n = out.len();
        out.copy_from_slice(&self.0[..n]);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlmcEstimate {
    pub matrix: SparseSymMatrix,
    pub seed: u64,
    /// Samples used by block `(j, j')`, indexed `[j − j0][j' − j0]`.
    pub block_samples: Vec<Vec<usize>>,
    /// Total samples drawn.
    pub samples_drawn: u64,
    /// `Σ` over drawn samples of their length.
    pub coefficients_drawn: u64,
}

/// Blocks `(j, j')`, `j ≤ j'`, in the order in which samples are assigned.
fn blocks(idx: &LevelIndexSet) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for jp in idx.levels() {
        for j in idx.j0..=jp {
            out.push((j, jp));
        }
    }
    out
}

/// MLMC estimate of the pattern entries.
///
/// Block `b` consumes the sample indices `[offset_b, offset_b + M_b)` of the source,
/// so results are reproducible and independent of scheduling.
pub fn estimate(pattern: &TaperPattern, sched: &SampleSchedule, source: &dyn SampleSource, seed: u64) -> Result<MlmcEstimate> {
    let idx = pattern.idx;
    if sched.j0 != idx.j0 || sched.jmax != idx.jmax {
        return Err(Error::InvalidParameter(format!(
            "schedule levels [{}, {}] do not match pattern levels [{}, {}]",
            sched.j0, sched.jmax, idx.j0, idx.jmax
        )));
    }
    let list = blocks(&idx);
    let mut offsets = Vec::with_capacity(list.len());
    let mut total = 0u64;
    for &(j, jp) in &list {
        offsets.push(total);
        total += sched.block_count(j, jp) as u64;
    }
    if let Some(cap) = source.capacity() {
        if cap < total {
            return Err(Error::SourceExhausted { delivered: cap as usize, requested: total as usize });
        }
    }
    type BlockResult = (Vec<(usize, usize, f64)>, u64);
    let results: Vec<BlockResult> = list
        .par_iter()
        .zip(&offsets)
        .map(|(&(j, jp), &offset)| {
            let entries: Vec<(usize, usize)> = idx
                .level_range(j)
                .flat_map(|l| {
                    let r = idx.level_range(jp);
                    pattern.row(l).iter().filter(move |&&m| r.contains(&m) && m >= l).map(move |&m| (l, m))
                })
                .collect();
            let len = idx.level_range(jp).end;
            let m = sched.block_count(j, jp);
            let mut acc = vec![0.0; entries.len()];
            let mut z = vec![0.0; len];
            for i in 0..m {
                source.draw(seed, offset + i as u64, &mut z)?;
                for (a, &(l, c)) in acc.iter_mut().zip(&entries) {
                    *a += z[l] * z[c];
                }
            }
            let inv = 1.0 / m as f64;
            let trip = entries.iter().zip(acc).map(|(&(l, c), a)| (l, c, a * inv)).collect();
            Ok((trip, (m * len) as u64))
        })
        .collect::<Result<_>>()?;
    let mut triplets = Vec::new();
    let mut coefficients = 0u64;
    for (t, c) in results {
        triplets.extend(t);
        coefficients += c;
    }
    let nl = idx.jmax - idx.j0 + 1;
    let block_samples = (0..nl).map(|a| (0..nl).map(|b| sched.block_count(idx.j0 + a, idx.j0 + b)).collect()).collect();
    Ok(MlmcEstimate {
        matrix: SparseSymMatrix::from_upper_triplets(idx.len(), triplets)?,
        seed,
        block_samples,
        samples_drawn: total,
        coefficients_drawn: coefficients,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    /// `‖C − E‖₂`.
    pub op_norm_error: f64,
    /// `Σ_{j,j'} 2^{−jt − j't'} ‖C(j, j') − E(j, j')‖₂`.
    pub weighted_error: f64,
    /// Spectral norms of the error blocks, indexed `[j − j0][j' − j0]`.
    pub block_errors: Vec<Vec<f64>>,
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().iter().fold(0.0f64, |a, &b| a.max(b))
}

/// Error of an estimate against the dense truth.
pub fn error_report(est: &SparseSymMatrix, truth: &DenseSymMatrix, idx: &LevelIndexSet, t: f64, tp: f64) -> Result<ErrorReport> {
    let p = idx.len();
    if est.dim() != p || truth.dim() != p {
        return Err(Error::DimensionMismatch { expected: p, got: est.dim().max(truth.dim()) });
    }
    let mut diff = truth.to_nalgebra();
    for (i, j, v) in est.iter() {
        diff[(i, j)] -= v;
    }
    let op = spectral_norm(&diff);
    let block_errors: Vec<Vec<f64>> = idx
        .levels()
        .map(|j| {
            idx.levels()
                .map(|jp| {
                    let (r, c) = (idx.level_range(j), idx.level_range(jp));
                    spectral_norm(&diff.view((r.start, c.start), (r.len(), c.len())).into_owned())
                })
                .collect()
        })
        .collect();
    let mut weighted = 0.0;
    for (a, row) in block_errors.iter().enumerate() {
        for (b, e) in row.iter().enumerate() {
            let (j, jp) = ((idx.j0 + a) as f64, (idx.j0 + b) as f64);
            weighted += (-j * t - jp * tp).exp2() * e;
        }
    }
    Ok(ErrorReport { op_norm_error: op, weighted_error: weighted, block_errors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compression::CompressionParams;
    use crate::mra::WaveletSystem;

    fn params() -> CompressionParams {
        CompressionParams { a: 2.0, a_prime: 2.0, d_prime: 2.5, r: -2.0 }
    }

    #[test]
    fn geometric_schedule() {
        let idx = LevelIndexSet::new(2, 11).unwrap();
        let s = schedule(&idx, 1, 0.5, 2.0, 100).unwrap();
        assert_eq!(s.count(11), 100);
        assert_eq!(s.count(10), 200);
        assert_eq!(s.count(2), 51200);
        assert_eq!(s.block_count(3, 7), s.count(7));
        assert_eq!(s.regime, Regime::Borderline);
        assert!(s.counts.windows(2).all(|w| w[0] >= w[1]));
        let single = schedule(&LevelIndexSet::new(2, 2).unwrap(), 1, 0.5, 2.0, 100).unwrap();
        assert_eq!(single.counts, vec![100]);
        assert_eq!(schedule(&idx, 1, 1.0, 2.0, 10).unwrap().regime, Regime::Fast);
        assert!(schedule(&idx, 1, 3.0, 2.0, 10).is_err());
        assert!(schedule(&idx, 1, 0.5, 2.0, 0).is_err());
    }

    #[test]
    fn constant_source_gives_tapered_outer_product() {
        let idx = LevelIndexSet::new(2, 3).unwrap();
        let v: Vec<f64> = (0..idx.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        // thin the pattern to a band to exercise restriction
        let band = SparseSymMatrix::from_upper_triplets(
            16,
            (0..16).flat_map(|i| (i..16.min(i + 3)).map(move |j| (i, j, 1.0))).collect(),
        )
        .unwrap();
        let pat_rows = TaperPattern::from_matrix(idx, params(), &band);
        let s = schedule(&idx, 1, 0.5, 2.0, 3).unwrap();
        let e = estimate(&pat_rows, &s, &ConstantSource(v.clone()), 0).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let expect = if band.contains(i, j) { v[i] * v[j] } else { 0.0 };
                assert!((e.matrix.get(i, j) - expect).abs() < 1e-15);
            }
        }
        assert_eq!(e.block_samples[0][1], s.count(3));
    }

    #[test]
    fn deterministic_and_exhaustion() {
        let w = WaveletSystem::build_default(2, 4).unwrap();
        let idx = w.index_set(3).unwrap();
        let cov = DenseSymMatrix::from_upper_fn(16, |i, j| if i == j { 2.0 } else { 0.5f64.powi((j - i) as i32) });
        let src = CholeskySource::new(&cov).unwrap();
        let pat = TaperPattern::full(idx, params());
        let s = schedule(&idx, 1, 0.5, 2.0, 50).unwrap();
        let a = estimate(&pat, &s, &src, 11).unwrap();
        let b = estimate(&pat, &s, &src, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, estimate(&pat, &s, &src, 12).unwrap());
        let table = TableSource::new(vec![vec![0.0; 16]; 10]);
        assert!(matches!(estimate(&pat, &s, &table, 0), Err(Error::SourceExhausted { .. })));
    }

    #[test]
    fn report_zero_for_truth() {
        let idx = LevelIndexSet::new(2, 3).unwrap();
        let c = DenseSymMatrix::from_upper_fn(16, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        let r = error_report(&SparseSymMatrix::from_dense(&c), &c, &idx, 0.0, 0.0).unwrap();
        assert_eq!(r.op_norm_error, 0.0);
        assert!(r.block_errors.iter().flatten().all(|&e| e == 0.0));
    }
}
