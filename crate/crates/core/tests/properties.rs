//! Randomized invariants across the public API.

use std::sync::LazyLock;

use proptest::prelude::*;
use wavegrf::assembly::{assemble_single_scale, to_wavelet_coordinates, QuadratureRule};
use wavegrf::compression::{build_pattern, CompressionParams};
use wavegrf::kernel::{KernelSpec, Smoothness};
use wavegrf::manifold::CurveSpec;
use wavegrf::matrix::{DenseSymMatrix, SparseSymMatrix};
use wavegrf::mlmc::{estimate, schedule, CholeskySource};
use wavegrf::mra::{DiagScaling, WaveletSystem};
use wavegrf::sampler::{build_contour_from, jacobi_sn_cn_dn};

const PAIRS: [(usize, usize); 4] = [(2, 4), (2, 6), (2, 8), (2, 10)];

static CURVE: LazyLock<CurveSpec> = LazyLock::new(|| CurveSpec::preset("reference-boundary").unwrap().normalize_to_unit_diameter().unwrap());

/// Small dense wavelet-coordinate covariance shared by the estimator properties.
static SMALL: LazyLock<(WaveletSystem, DenseSymMatrix)> = LazyLock::new(|| {
    let w = WaveletSystem::build_default(2, 6).unwrap();
    let idx = w.index_set(3).unwrap();
    let a = assemble_single_scale(&CURVE, &KernelSpec::new(Smoothness::Half, 1.0), idx.single_scale_level(), &QuadratureRule::default()).unwrap();
    let c = to_wavelet_coordinates(&w, &idx, &a).unwrap();
    (w, c)
});

fn vector(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0e3..1.0e3f64, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transforms_invert(pair in 0usize..4, extra in 0usize..6, seed in vector(1 << 13)) {
        let (d, dt) = PAIRS[pair];
        let w = WaveletSystem::build_default(d, dt).unwrap();
        let idx = w.index_set(w.j0 + extra).unwrap();
        let x = &seed[..idx.len()];
        let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let back = w.ifwt(&idx, &w.fwt(&idx, x).unwrap()).unwrap();
        let back_dual = w.ifwt_dual(&idx, &w.fwt_dual(&idx, x).unwrap()).unwrap();
        for ((a, b), c) in x.iter().zip(&back).zip(&back_dual) {
            prop_assert!((a - b).abs() <= 1e-12 * scale);
            prop_assert!((a - c).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn transforms_are_linear(extra in 0usize..5, a in -3.0..3.0f64, x in vector(256), y in vector(256)) {
        let w = WaveletSystem::build_default(2, 6).unwrap();
        let idx = w.index_set(w.j0 + extra).unwrap();
        let n = idx.len();
        let combo: Vec<f64> = x[..n].iter().zip(&y[..n]).map(|(u, v)| a * u + v).collect();
        let lhs = w.fwt(&idx, &combo).unwrap();
        let fx = w.fwt(&idx, &x[..n]).unwrap();
        let fy = w.fwt(&idx, &y[..n]).unwrap();
        for i in 0..n {
            prop_assert!((lhs[i] - (a * fx[i] + fy[i])).abs() <= 1e-9 * (1.0 + lhs[i].abs()));
        }
    }

    #[test]
    fn diagonal_scaling_inverts(extra in 0usize..5, s in -3.0..3.0f64, x in vector(256)) {
        let w = WaveletSystem::build_default(2, 6).unwrap();
        let idx = w.index_set(w.j0 + extra).unwrap();
        let n = idx.len();
        let d = DiagScaling::new(&idx, s);
        let back = d.apply_inverse(&d.apply(&x[..n]));
        for (a, b) in x[..n].iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn jacobi_identities_hold(u in -5.0..5.0f64, m in 0.0..0.999_999f64) {
        let (sn, cn, dn) = jacobi_sn_cn_dn(u, m).unwrap();
        prop_assert!((sn * sn + cn * cn - 1.0).abs() <= 1e-13);
        prop_assert!((dn * dn + m * sn * sn - 1.0).abs() <= 1e-13);
    }

    #[test]
    fn contour_poles_increase(lo in 1e-3..1.0f64, ratio in 1.5..1e4f64, nodes in 1usize..40) {
        let c = build_contour_from(lo, lo * ratio, nodes).unwrap();
        prop_assert!(c.poles.iter().all(|&w| w > 0.0));
        prop_assert!(c.poles.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(c.weights.iter().all(|&g| g > 0.0));
    }

    #[test]
    fn kernels_are_even_decreasing_and_bounded(z in 0.0..5.0f64, dz in 1e-6..1.0f64, ell in 0.05..3.0f64, nu in 0usize..3) {
        let nu = [Smoothness::Half, Smoothness::ThreeHalves, Smoothness::FiveHalves][nu];
        let k = KernelSpec::new(nu, ell);
        prop_assert!(k.eval_kernel(z) <= k.eval_kernel(0.0));
        prop_assert!(k.eval_kernel(z + dz) <= k.eval_kernel(z));
        prop_assert!(k.eval_kernel(z) > 0.0);
    }

    #[test]
    fn patterns_are_symmetric_and_keep_coarse_pairs(pair in 0usize..4, extra in 0usize..5, a in 1.05..4.0f64) {
        let (d, dt) = PAIRS[pair];
        let w = WaveletSystem::build_default(d, dt).unwrap();
        let idx = w.index_set(w.j0 + extra).unwrap();
        let params = CompressionParams::standard(&w, -2.0).with_a(a, a);
        let pattern = build_pattern(&w, &CURVE, &params, &idx).unwrap();
        prop_assert!(pattern.is_symmetric());
        let coarse = idx.level_range(idx.j0);
        for l in coarse.clone() {
            for m in 0..idx.len() {
                prop_assert!(pattern.contains(l, m) && pattern.contains(m, l));
            }
        }
        prop_assert!((0..idx.len()).all(|l| pattern.contains(l, l)));
    }

    #[test]
    fn larger_a_keeps_more_entries(extra in 1usize..6, a in 1.05..3.0f64, step in 0.1..2.0f64) {
        let w = WaveletSystem::build_default(2, 6).unwrap();
        let idx = w.index_set(w.j0 + extra).unwrap();
        let base = CompressionParams::standard(&w, -2.0);
        let small = build_pattern(&w, &CURVE, &base.with_a(a, a), &idx).unwrap();
        let large = build_pattern(&w, &CURVE, &base.with_a(a + step, a + step), &idx).unwrap();
        for l in 0..idx.len() {
            for &m in small.row(l) {
                prop_assert!(large.contains(l, m));
            }
        }
    }

    #[test]
    fn sparse_matvec_matches_dense(n in 1usize..24, entries in prop::collection::vec((0usize..24, 0usize..24, -5.0..5.0f64), 0..80), x in vector(24)) {
        let trip: Vec<_> = entries.into_iter().filter(|&(i, j, _)| i < n && j < n && i <= j).collect();
        let mut dedup = std::collections::BTreeMap::new();
        for (i, j, v) in trip {
            dedup.insert((i, j), v);
        }
        let a = SparseSymMatrix::from_upper_triplets(n, dedup.iter().map(|(&(i, j), &v)| (i, j, v)).collect()).unwrap();
        let dense = a.to_dense();
        let y = a.matvec(&x[..n]);
        let z = dense.matvec(&x[..n]);
        for (u, v) in y.iter().zip(&z) {
            prop_assert!((u - v).abs() <= 1e-9 * (1.0 + v.abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn estimates_are_symmetric_and_supported_on_the_pattern(seed in any::<u64>(), m in 1usize..40, a in 1.1..3.0f64) {
        let (w, c) = &*SMALL;
        let idx = w.index_set(3).unwrap();
        let pattern = build_pattern(w, &CURVE, &CompressionParams::standard(w, -2.0).with_a(a, a), &idx).unwrap();
        let sched = schedule(&idx, 1, 0.5, 2.0, m).unwrap();
        let source = CholeskySource::new(c).unwrap();
        let est = estimate(&pattern, &sched, &source, seed).unwrap();
        for (i, j, v) in est.matrix.iter() {
            prop_assert!(pattern.contains(i, j));
            prop_assert_eq!(v, est.matrix.get(j, i));
        }
        for (a_, row) in est.block_samples.iter().enumerate() {
            for (b_, &count) in row.iter().enumerate() {
                prop_assert_eq!(count, sched.count(idx.j0 + a_.max(b_)));
            }
        }
        let again = estimate(&pattern, &sched, &source, seed).unwrap();
        prop_assert!(est.matrix.iter().zip(again.matrix.iter()).all(|(x, y)| x == y));
    }

    #[test]
    fn schedules_are_monotone(jmax in 2usize..12, alpha in 0.1..2.0f64, m in 1usize..500) {
        let w = WaveletSystem::build_default(2, 6).unwrap();
        let idx = w.index_set(jmax).unwrap();
        let s = schedule(&idx, 1, alpha, 2.0f64.max(alpha), m).unwrap();
        prop_assert_eq!(s.count(jmax), m);
        for j in idx.j0..jmax {
            prop_assert!(s.count(j) >= s.count(j + 1));
        }
    }
}
