//! Experiment pipelines behind the subcommands.

use std::f64::consts::TAU;
use std::fs::File;

use wavegrf::assembly::{assemble_compressed, assemble_single_scale, to_wavelet_coordinates};
use wavegrf::compression::{aposteriori_threshold, apply_pattern, build_pattern, TaperPattern};
use wavegrf::io::{matrix_market_general, matrix_market_symmetric, read_observations};
use wavegrf::kriging::{
    build_observation_matrix, dense_posterior_mean, gram_spectrum, posterior_mean, predict_at, ObservationSet, MAX_DENSE_GRAM,
};
use wavegrf::matrix::{CsrMatrix, DenseSymMatrix, SparseSymMatrix};
use wavegrf::mlmc::{error_report, estimate, schedule, CholeskySource, TableSource};
use wavegrf::mra::{Family, LevelIndexSet};
use wavegrf::rng::{stream_id, NormalStream};
use wavegrf::sampler::{build_contour_from, sample_grf, synthesize_field};
use wavegrf::spectral::{lanczos_extremes, precondition_dense, precondition_sparse, DenseOracle, Preconditioner};
use wavegrf::util::ls_slope;
use wavegrf::{Error, Result};

use crate::config::{RunConfig, Setup};
use crate::output::{int, num, Context, Table};

/// Relative widening of Lanczos bounds before they enter the contour.
pub const BOUNDS_MARGIN: f64 = 0.1;

const NOISE_TAG: u64 = 0x6b72_6967;

fn log(msg: impl AsRef<str>) {
    eprintln!("[wavegrf] {}", msg.as_ref());
}

/// Dense wavelet-coordinate covariance, its pattern and the tapered matrix.
struct DenseSystem {
    c: DenseSymMatrix,
    pattern: TaperPattern,
    tapered: SparseSymMatrix,
}

fn dense_system(cfg: &RunConfig, s: &Setup, idx: &LevelIndexSet) -> Result<(DenseSystem, DenseSymMatrix)> {
    let single = assemble_single_scale(&s.curve, &s.kernel, idx.single_scale_level(), &cfg.quadrature)?;
    let c = to_wavelet_coordinates(&s.system, idx, &single)?;
    let pattern = build_pattern(&s.system, &s.curve, &cfg.compression_params(&s.system, s.r), idx)?;
    let tapered = apply_pattern(&c, &pattern)?;
    Ok((DenseSystem { c, pattern, tapered }, single))
}

fn compressed_system(cfg: &RunConfig, s: &Setup, idx: &LevelIndexSet) -> Result<(TaperPattern, SparseSymMatrix)> {
    let pattern = build_pattern(&s.system, &s.curve, &cfg.compression_params(&s.system, s.r), idx)?;
    let c = assemble_compressed(&s.curve, &s.kernel, &s.system, idx, &pattern, &cfg.quadrature)?;
    Ok((pattern, c))
}

fn dense_limit_check(cfg: &RunConfig, p: usize, what: &str) -> Result<()> {
    if p > cfg.dense_limit {
        return Err(Error::InvalidParameter(format!("{what} needs a dense matrix; p = {p} exceeds dense_limit = {}", cfg.dense_limit)));
    }
    Ok(())
}

/// Extreme eigenvalues of a preconditioned sparse matrix, dense when small.
fn spectral_bounds(cfg: &RunConfig, r: &SparseSymMatrix) -> Result<(f64, f64, &'static str)> {
    if r.dim() <= cfg.dense_limit {
        let o = DenseOracle::new(&r.to_dense())?;
        Ok((o.min(), o.max(), "dense"))
    } else {
        let b = lanczos_extremes(r, 1e-8, r.dim().min(2000))?;
        Ok((b.lambda_min * (1.0 - BOUNDS_MARGIN), b.lambda_max * (1.0 + BOUNDS_MARGIN), "lanczos"))
    }
}

/// Condition numbers and compression rates over the level range.
pub fn tables(ctx: &Context, s: &Setup) -> Result<()> {
    let cfg = &ctx.config;
    let mut t = Table::new(
        "tables",
        &["p", "jmax", "nnz", "nnz_pct", "cond_wavelet", "lambda_min_tapered", "cond_single", "single_growth"],
    );
    let mut prev_single: Option<f64> = None;
    for jmax in cfg.jmin..=cfg.jmax {
        let idx = s.index_set(jmax)?;
        let p = idx.len();
        log(format!("tables: p = {p}"));
        let (pattern, cond_w, lmin, cond_s) = if p <= cfg.dense_limit {
            let (d, single) = dense_system(cfg, s, &idx)?;
            let tapered = d.tapered.to_dense();
            let lmin = DenseOracle::new(&tapered)?.min();
            if lmin <= 0.0 {
                return Err(Error::NotPositiveDefinite(format!("tapered matrix at p = {p} has eigenvalue {lmin:e}; increase a, a'")));
            }
            let r = precondition_dense(&tapered, &idx, Preconditioner::Level(s.ra))?;
            let cond_w = DenseOracle::new(&r)?.condition()?;
            let cond_s = DenseOracle::new(&single)?.condition()?;
            (d.pattern, cond_w, lmin, Some(cond_s))
        } else {
            let (pattern, mut c) = compressed_system(cfg, s, &idx)?;
            precondition_sparse(&mut c, &idx, Preconditioner::Level(s.ra))?;
            let b = lanczos_extremes(&c, 1e-8, p.min(2000))?;
            (pattern, b.condition(), f64::NAN, None)
        };
        let growth = match (cond_s, prev_single) {
            (Some(c), Some(pv)) => num(c / pv),
            _ => String::new(),
        };
        prev_single = cond_s;
        t.push(vec![
            int(p),
            int(jmax),
            int(pattern.nnz()),
            num(100.0 * pattern.nnz_fraction()),
            num(cond_w),
            if lmin.is_nan() { String::new() } else { num(lmin) },
            cond_s.map(num).unwrap_or_default(),
            growth,
        ]);
    }
    t.note("kernel", cfg.kernel);
    t.note("wavelet", cfg.wavelet);
    ctx.write_table(&t)?;
    Ok(())
}

/// Diagonal entries in wavelet coordinates and their per-level means.
pub fn decay(ctx: &Context, s: &Setup) -> Result<()> {
    let cfg = &ctx.config;
    let idx = s.index_set(cfg.jmax)?;
    let diag = if idx.len() <= cfg.dense_limit {
        dense_system(cfg, s, &idx)?.0.c.diagonal()
    } else {
        compressed_system(cfg, s, &idx)?.1.diagonal()
    };
    let mut entries = Table::new("decay_diagonal", &["index", "level", "value"]);
    for (i, v) in diag.iter().enumerate() {
        entries.push(vec![int(i), int(idx.level_of(i)), num(*v)]);
    }
    let means: Vec<f64> = idx.levels().map(|j| idx.level_range(j).map(|i| diag[i]).sum::<f64>() / idx.level_size(j) as f64).collect();
    let mut levels = Table::new("decay_levels", &["level", "mean", "jump", "order_estimate"]);
    for (a, j) in idx.levels().enumerate() {
        let (jump, order) = if a > 0 {
            let q = means[a - 1] / means[a];
            (num(q), num(-q.log2()))
        } else {
            (String::new(), String::new())
        };
        levels.push(vec![int(j), num(means[a]), jump, order]);
    }
    // regression over wavelet levels only; the coarsest block holds scaling functions
    let xs: Vec<f64> = idx.levels().skip(1).map(|j| j as f64).collect();
    let ys: Vec<f64> = means.iter().skip(1).map(|m| m.log2()).collect();
    if xs.len() >= 2 {
        levels.note("order_regression", ls_slope(&xs, &ys));
    }
    levels.note("operator_order", s.r);
    ctx.write_table(&entries)?;
    ctx.write_table(&levels)?;
    Ok(())
}

/// A-priori and a-posteriori compression rates against the correlation length.
pub fn corrlen(ctx: &Context, s: &Setup) -> Result<()> {
    let cfg = &ctx.config;
    let idx = s.index_set(cfg.jmax)?;
    let mut t = Table::new("corrlen", &["ell", "p", "apriori_nnz_pct", "aposteriori_nnz_pct", "threshold"]);
    for &ell in &cfg.corrlen.ells {
        log(format!("corrlen: ell = {ell}"));
        let local = Setup { kernel: wavegrf::kernel::KernelSpec { ell, ..s.kernel }, curve: s.curve, system: s.system.clone(), ..*s };
        let (pattern, c) = compressed_system(cfg, &local, &idx)?;
        let top = c
            .iter()
            .map(|(i, j, v)| (v * (s.ra * (idx.level_of(i) + idx.level_of(j)) as f64).exp2()).abs())
            .fold(0.0, f64::max);
        let delta = cfg.corrlen.relative_threshold * top;
        let post = aposteriori_threshold(&c, &idx, s.ra, delta)?;
        let p2 = (idx.len() * idx.len()) as f64;
        t.push(vec![num(ell), int(idx.len()), num(100.0 * pattern.nnz_fraction()), num(100.0 * post.nnz() as f64 / p2), num(delta)]);
    }
    ctx.write_table(&t)?;
    Ok(())
}

/// Error of the contour square root against the dense square root, for exact and
/// perturbed condition-number estimates.
pub fn sqrt_bench(ctx: &Context, s: &Setup) -> Result<()> {
    let cfg = &ctx.config;
    let idx = s.index_set(cfg.jmax)?;
    dense_limit_check(cfg, idx.len(), "sqrt-bench")?;
    let (d, _) = dense_system(cfg, s, &idx)?;
    let r = precondition_dense(&d.tapered.to_dense(), &idx, Preconditioner::Level(s.ra))?;
    let oracle = DenseOracle::new(&r)?;
    let (lo, hi) = (oracle.min(), oracle.max());
    let kappa = hi / lo;
    let mut t = Table::new("sqrt_bench", &["kappa_factor", "kappa_hat", "nodes", "relative_error"]);
    for &f in &cfg.sqrt.kappa_factors {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &k in &cfg.sqrt.nodes {
            // κ̂ = f κ by moving the lower bound
            let contour = build_contour_from(lo / f, hi, k)?;
            let err = contour.relative_error(&oracle.eigenvalues);
            if err > 1e-13 {
                xs.push(k as f64);
                ys.push(err.log2());
            }
            t.push(vec![num(f), num(f * kappa), int(k), num(err)]);
        }
        if xs.len() >= 2 {
            t.note(&format!("log2_slope_factor_{f}"), ls_slope(&xs, &ys));
        }
    }
    t.note("p", idx.len());
    t.note("kappa", kappa);
    ctx.write_table(&t)?;
    Ok(())
}

/// Field draws by the contour sampler.
pub fn sample(ctx: &Context, s: &Setup) -> Result<()> {
    let cfg = &ctx.config;
    let idx = s.index_set(cfg.jmax)?;
    let p = idx.len();
    let (_, mut r) = compressed_system(cfg, s, &idx)?;
    precondition_sparse(&mut r, &idx, Preconditioner::Level(s.ra))?;
    let (lo, hi, method) = spectral_bounds(cfg, &r)?;
    let contour = build_contour_from(lo, hi, cfg.sample.nodes)?;
    let grid = cfg.sample.grid_level.unwrap_or(idx.single_scale_level());
    let cols: Vec<String> = (0..p).map(|i| format!("c{i}")).collect();
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut coeffs = Table::new("samples_coefficients", &col_refs);
    let mut fields = Vec::new();
    for i in 0..cfg.sample.count {
        log(format!("sample: draw {i}"));
        let draw = sample_grf(&idx, &r, s.ra, &contour, cfg.seed, i as u64, cfg.sample.cg_tol)?;
        coeffs.push(draw.coefficients.iter().map(|&v| num(v)).collect());
        fields.push(synthesize_field(&s.system, &idx, &draw.coefficients, grid, Some(&s.curve))?);
    }
    coeffs.note("p", p);
    coeffs.note("kappa_hat", hi / lo);
    coeffs.note("bounds", method);
    coeffs.note("nodes", cfg.sample.nodes);
    let mut names = vec!["phi".to_string(), "x".into(), "y".into()];
    names.extend((0..cfg.sample.count).map(|i| format!("sample{i}")));
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut ft = Table::new("samples_field", &name_refs);
    let n = 1usize << grid;
    for g in 0..n {
        let phi = TAU * g as f64 / n as f64;
        let pt = s.curve.evaluate(phi).xy;
        let mut row = vec![num(phi), num(pt[0]), num(pt[1])];
        row.extend(fields.iter().map(|f| num(f[g])));
        ft.push(row);
    }
    ctx.write_table(&coeffs)?;
    ctx.write_table(&ft)?;
    Ok(())
}

/// Multilevel Monte Carlo covariance estimation against the dense truth.
pub fn mlmc(ctx: &Context, s: &Setup) -> Result<()> {
    let cfg = &ctx.config;
    let alpha0 = cfg.mlmc_alpha0(s.ra);
    if let Some(path) = &cfg.mlmc.samples_file {
        return mlmc_from_file(ctx, s, path, alpha0);
    }
    let mut t = Table::new(
        "mlmc",
        &["p", "log2_p", "jmax", "m_coarsest", "mean_error", "std_error", "contraction", "mean_weighted_error", "samples", "work"],
    );
    let mut prev: Option<f64> = None;
    let mut finest = None;
    for jmax in cfg.jmin..=cfg.jmax {
        let idx = s.index_set(jmax)?;
        let p = idx.len();
        dense_limit_check(cfg, p, "mlmc truth")?;
        log(format!("mlmc: p = {p}"));
        let (d, _) = dense_system(cfg, s, &idx)?;
        let sched = schedule(&idx, 1, cfg.mlmc.alpha, alpha0, cfg.mlmc.m_finest)?;
        let source = CholeskySource::new(&d.c)?;
        let mut errs = Vec::with_capacity(cfg.mlmc.runs);
        let mut weighted = 0.0;
        let mut samples = 0;
        for run in 0..cfg.mlmc.runs {
            let est = estimate(&d.pattern, &sched, &source, stream_id(&[cfg.seed, run as u64]))?;
            let rep = error_report(&est.matrix, &d.c, &idx, 0.0, 0.0)?;
            errs.push(rep.op_norm_error);
            weighted += rep.weighted_error;
            samples = est.samples_drawn;
            if run == 0 && jmax == cfg.jmax {
                finest = Some(est.matrix);
            }
        }
        let n = errs.len() as f64;
        let mean = errs.iter().sum::<f64>() / n;
        let std = if errs.len() > 1 { (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
        t.push(vec![
            int(p),
            int(p.trailing_zeros()),
            int(jmax),
            int(sched.count(idx.j0)),
            num(mean),
            num(std),
            prev.map(|pv| num(pv / mean)).unwrap_or_default(),
            num(weighted / n),
            int(samples),
            num(sched.work()),
        ]);
        prev = Some(mean);
    }
    t.note("runs", cfg.mlmc.runs);
    t.note("m_finest", cfg.mlmc.m_finest);
    t.note("alpha", cfg.mlmc.alpha);
    t.note("alpha0", alpha0);
    ctx.write_table(&t)?;
    if let Some(m) = finest {
        ctx.write_matrix_market("mlmc_estimate", &matrix_market_symmetric(&m))?;
    }
    Ok(())
}

fn mlmc_from_file(ctx: &Context, s: &Setup, path: &str, alpha0: f64) -> Result<()> {
    let cfg = &ctx.config;
    let idx = s.index_set(cfg.jmax)?;
    let source = TableSource::from_csv(File::open(path)?)?;
    let pattern = build_pattern(&s.system, &s.curve, &cfg.compression_params(&s.system, s.r), &idx)?;
    let sched = schedule(&idx, 1, cfg.mlmc.alpha, alpha0, cfg.mlmc.m_finest)?;
    let est = estimate(&pattern, &sched, &source, cfg.seed)?;
    let mut t = Table::new("mlmc_blocks", &["level", "level_prime", "samples"]);
    for (a, row) in est.block_samples.iter().enumerate() {
        for (b, m) in row.iter().enumerate() {
            t.push(vec![int(idx.j0 + a), int(idx.j0 + b), int(m)]);
        }
    }
    t.note("samples_drawn", est.samples_drawn);
    if idx.len() <= cfg.dense_limit {
        let (d, _) = dense_system(cfg, s, &idx)?;
        let rep = error_report(&est.matrix, &d.c, &idx, 0.0, 0.0)?;
        t.note("op_norm_error", rep.op_norm_error);
        t.note("weighted_error", rep.weighted_error);
    }
    ctx.write_table(&t)?;
    ctx.write_matrix_market("mlmc_estimate", &matrix_market_symmetric(&est.matrix))?;
    Ok(())
}

/// Compressed kriging from file or synthetic observations.
pub fn krige(ctx: &Context, s: &Setup) -> Result<()> {
    let cfg = &ctx.config;
    let kc = &cfg.krige;
    let idx = s.index_set(cfg.jmax)?;
    let p = idx.len();
    let (_, c) = compressed_system(cfg, s, &idx)?;
    let cell = TAU / (1usize << idx.single_scale_level()) as f64;
    let (obs, truth) = match &kc.observations_file {
        Some(path) => {
            let rec = read_observations(File::open(path)?)?;
            (ObservationSet::new(&s.curve, &rec.centers, &rec.widths, rec.values, kc.noise)?, None)
        }
        None => {
            let mut r = c.clone();
            precondition_sparse(&mut r, &idx, Preconditioner::Level(s.ra))?;
            let (lo, hi, _) = spectral_bounds(cfg, &r)?;
            let contour = build_contour_from(lo, hi, cfg.sample.nodes)?;
            let z = sample_grf(&idx, &r, s.ra, &contour, cfg.seed, 0, cfg.sample.cg_tol)?.coefficients;
            let placeholder = ObservationSet::equispaced(&s.curve, kc.count, kc.width_cells * cell, vec![0.0; kc.count], kc.noise)?;
            let g = build_observation_matrix(&s.system, &placeholder, &idx)?;
            let noise = NormalStream::new(cfg.seed, stream_id(&[NOISE_TAG])).vector(0, kc.count);
            let y: Vec<f64> = g.apply(&z)?.iter().zip(&noise).map(|(v, e)| v + kc.noise.sqrt() * e).collect();
            (ObservationSet { values: y, ..placeholder }, Some(z))
        }
    };
    let g = build_observation_matrix(&s.system, &obs, &idx)?;
    let sol = posterior_mean(&c, &g, &obs.values, obs.sigma2, kc.cg_tol)?;
    let targets: Vec<f64> = (0..kc.targets).map(|i| TAU * i as f64 / kc.targets as f64).collect();
    let pred = predict_at(&s.system, &idx, &sol.mu, &targets, &s.curve)?;
    let truth_vals = match &truth {
        Some(z) => Some(predict_at(&s.system, &idx, z, &targets, &s.curve)?),
        None => None,
    };
    let mut t = Table::new("krige_predictions", &["phi", "x", "y", "prediction", "truth"]);
    for (i, &phi) in targets.iter().enumerate() {
        let pt = s.curve.evaluate(phi).xy;
        let tv = truth_vals.as_ref().map(|v| num(v[i])).unwrap_or_default();
        t.push(vec![num(phi), num(pt[0]), num(pt[1]), num(pred[i]), tv]);
    }
    let mut diag = Table::new("krige_diagnostics", &["quantity", "value"]);
    diag.push(vec!["p".into(), int(p)]);
    diag.push(vec!["observations".into(), int(obs.len())]);
    diag.push(vec!["cg_iterations".into(), int(sol.iterations)]);
    diag.push(vec!["cg_relative_residual".into(), num(sol.relative_residual)]);
    if obs.len() <= MAX_DENSE_GRAM {
        let spec = gram_spectrum(&c, &g, obs.sigma2)?;
        diag.push(vec!["gram_lambda_min".into(), num(spec.lambda_min)]);
        diag.push(vec!["gram_lambda_max".into(), num(spec.lambda_max)]);
        diag.push(vec!["gram_condition".into(), num(spec.condition())]);
    }
    if p <= cfg.dense_limit {
        let dense = dense_posterior_mean(&c.to_dense(), &g.wavelet.to_nalgebra(), &obs.values, obs.sigma2)?;
        let scale = dense.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let diff = sol.mu.iter().zip(&dense).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
        diag.push(vec!["dense_oracle_relative_difference".into(), num(diff)]);
    }
    ctx.write_table(&t)?;
    ctx.write_table(&diag)?;
    if kc.dump_factors {
        ctx.write_matrix_market("krige_g_single", &matrix_market_general(&g.single))?;
        let cols: Vec<Vec<f64>> = (0..p)
            .map(|i| {
                let mut e = vec![0.0; p];
                e[i] = 1.0;
                s.system.ifwt_dual(&idx, &e)
            })
            .collect::<Result<_>>()?;
        let rows = (0..p).map(|k| (0..p).filter(|&i| cols[i][k] != 0.0).map(|i| (i, cols[i][k])).collect()).collect();
        ctx.write_matrix_market("krige_dual_synthesis", &matrix_market_general(&CsrMatrix::from_rows(p, rows)))?;
        ctx.write_matrix_market("krige_covariance", &matrix_market_symmetric(&c))?;
    }
    Ok(())
}

/// Taper pattern dump.
pub fn pattern(ctx: &Context, s: &Setup) -> Result<()> {
    let cfg = &ctx.config;
    let idx = s.index_set(cfg.jmax)?;
    let pattern = build_pattern(&s.system, &s.curve, &cfg.compression_params(&s.system, s.r), &idx)?;
    let mut t = Table::new("pattern_blocks", &["level", "level_prime", "nnz"]);
    for (a, row) in pattern.block_nnz().iter().enumerate() {
        for (b, n) in row.iter().enumerate() {
            t.push(vec![int(idx.j0 + a), int(idx.j0 + b), int(n)]);
        }
    }
    t.note("p", idx.len());
    t.note("nnz", pattern.nnz());
    t.note("nnz_pct", 100.0 * pattern.nnz_fraction());
    ctx.write_table(&t)?;
    ctx.write_matrix_market("pattern", &pattern.matrix_market())?;
    Ok(())
}

/// Refinement filters of the configured wavelet pair.
pub fn filters_dump(ctx: &Context, s: &Setup) -> Result<()> {
    let mut t = Table::new("filters", &["filter", "family", "n", "value"]);
    for family in [Family::Primal, Family::Dual] {
        let (low, high) = s.system.refinement_filters(family);
        let fam = match family {
            Family::Primal => "primal",
            Family::Dual => "dual",
        };
        for (name, f) in [("lowpass", low), ("highpass", high)] {
            for (n, v) in f.iter() {
                t.push(vec![name.into(), fam.into(), int(n), num(v)]);
            }
        }
    }
    t.note("biorthogonality_defect", s.system.biorthogonality_defect());
    t.note("j0", s.system.j0);
    ctx.write_table(&t)?;
    Ok(())
}
