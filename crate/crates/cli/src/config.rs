//! Run configuration read from TOML.

use serde::{Deserialize, Serialize};
use wavegrf::assembly::QuadratureRule;
use wavegrf::compression::CompressionParams;
use wavegrf::kernel::{KernelSpec, Smoothness};
use wavegrf::manifold::CurveSpec;
use wavegrf::mra::{LevelIndexSet, WaveletSystem};
use wavegrf::{Error, Result};

/// Finest level accepted by any command.
pub const MAX_LEVEL: usize = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Curve preset name.
    pub curve: String,
    /// Rescale the curve to unit diameter before use.
    pub unit_diameter: bool,
    pub kernel: Smoothness,
    pub ell: f64,
    pub sigma2: f64,
    /// `(d, d̃)`.
    pub wavelet: [usize; 2],
    /// Coarsest level; the smallest admissible one when absent.
    pub j0: Option<usize>,
    /// Finest-level range `jmin..=jmax` swept by table-style commands.
    pub jmin: usize,
    pub jmax: usize,
    pub seed: u64,
    /// Largest `p` handled by dense eigen-solvers and dense truth matrices.
    pub dense_limit: usize,
    pub compression: CompressionConfig,
    pub quadrature: QuadratureRule,
    pub corrlen: CorrlenConfig,
    pub sqrt: SqrtConfig,
    pub sample: SampleConfig,
    pub mlmc: MlmcConfig,
    pub krige: KrigeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompressionConfig {
    pub a: f64,
    pub a_prime: f64,
    /// `d'`; `d + (d̃ − d + r)/4` when absent.
    pub d_prime: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrlenConfig {
    pub ells: Vec<f64>,
    /// A-posteriori threshold relative to the largest scaled entry.
    pub relative_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SqrtConfig {
    pub nodes: Vec<usize>,
    /// Factors applied to the exact condition number `κ`.
    pub kappa_factors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    pub count: usize,
    pub nodes: usize,
    /// Output grid level for the synthesized fields; `jmax + 1` when absent.
    pub grid_level: Option<usize>,
    pub cg_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlmcConfig {
    pub runs: usize,
    pub m_finest: usize,
    pub alpha: f64,
    /// `2ra` when absent.
    pub alpha0: Option<f64>,
    /// Coefficient samples (one per row) replacing the synthetic source.
    pub samples_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KrigeConfig {
    /// `center,width,value` rows; synthetic data from a field draw when absent.
    pub observations_file: Option<String>,
    /// Number of synthetic observations.
    pub count: usize,
    /// Synthetic box width in cells of the finest grid.
    pub width_cells: f64,
    pub noise: f64,
    pub cg_tol: f64,
    /// Number of equispaced prediction points.
    pub targets: usize,
    pub dump_factors: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            curve: "reference-boundary".into(),
            unit_diameter: true,
            kernel: Smoothness::Half,
            ell: 1.0,
            sigma2: 1.0,
            wavelet: [2, 6],
            j0: None,
            jmin: 4,
            jmax: 9,
            seed: 0,
            dense_limit: 2048,
            compression: CompressionConfig::default(),
            quadrature: QuadratureRule::default(),
            corrlen: CorrlenConfig::default(),
            sqrt: SqrtConfig::default(),
            sample: SampleConfig::default(),
            mlmc: MlmcConfig::default(),
            krige: KrigeConfig::default(),
        }
    }
}

impl Default for CompressionConfig {
    fn default() -> Self {
        CompressionConfig { a: 2.0, a_prime: 2.0, d_prime: None }
    }
}

impl Default for CorrlenConfig {
    fn default() -> Self {
        CorrlenConfig { ells: vec![0.05, 0.1, 0.2, 0.5, 1.0, 2.0], relative_threshold: 1e-6 }
    }
}

impl Default for SqrtConfig {
    fn default() -> Self {
        SqrtConfig { nodes: vec![1, 2, 4, 6, 8, 10, 15, 20, 25, 30, 40, 50, 60], kappa_factors: vec![1.0, 0.5, 2.0] }
    }
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig { count: 4, nodes: 40, grid_level: None, cg_tol: 1e-13 }
    }
}

impl Default for MlmcConfig {
    fn default() -> Self {
        MlmcConfig { runs: 10, m_finest: 100, alpha: 0.5, alpha0: None, samples_file: None }
    }
}

impl Default for KrigeConfig {
    fn default() -> Self {
        KrigeConfig {
            observations_file: None,
            count: 32,
            width_cells: 4.0,
            noise: 1e-2,
            cg_tol: 1e-10,
            targets: 256,
            dump_factors: false,
        }
    }
}

/// Objects shared by all commands, built once from a validated configuration.
pub struct Setup {
    pub curve: CurveSpec,
    pub kernel: KernelSpec,
    pub system: WaveletSystem,
    pub r: f64,
    pub ra: f64,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Checks every module constraint and builds the shared objects.
    pub fn setup(&self) -> Result<Setup> {
        let mut curve = CurveSpec::preset(&self.curve)?;
        if self.unit_diameter {
            curve = curve.normalize_to_unit_diameter()?;
        }
        curve.validate()?;
        let kernel = KernelSpec { nu: self.kernel, ell: self.ell, sigma2: self.sigma2 };
        kernel.validate()?;
        let order = kernel.operator_order(1)?;
        let [d, dt] = self.wavelet;
        let system = match self.j0 {
            Some(j0) => WaveletSystem::build(d, dt, j0)?,
            None => WaveletSystem::build_default(d, dt)?,
        };
        if self.jmin < system.j0 || self.jmin > self.jmax || self.jmax > MAX_LEVEL {
            return Err(Error::InvalidParameter(format!(
                "level range [{}, {}] must satisfy j0={} ≤ jmin ≤ jmax ≤ {MAX_LEVEL}",
                self.jmin, self.jmax, system.j0
            )));
        }
        self.quadrature.validate()?;
        self.compression_params(&system, order.r).validate(&system)?;
        if self.dense_limit > 4096 {
            return Err(Error::InvalidParameter("dense_limit must not exceed 4096".into()));
        }
        if self.corrlen.ells.iter().any(|&l| !(l > 0.0 && l.is_finite())) || !(self.corrlen.relative_threshold >= 0.0) {
            return Err(Error::InvalidParameter("corrlen needs positive lengths and a non-negative threshold".into()));
        }
        if self.sqrt.nodes.contains(&0) || self.sqrt.kappa_factors.iter().any(|&f| !(f > 0.0)) {
            return Err(Error::InvalidParameter("sqrt needs positive node counts and κ factors".into()));
        }
        if self.sample.nodes == 0 || !(self.sample.cg_tol > 0.0) {
            return Err(Error::InvalidParameter("sample needs nodes ≥ 1 and a positive CG tolerance".into()));
        }
        if self.mlmc.runs == 0 || self.mlmc.m_finest == 0 {
            return Err(Error::InvalidParameter("mlmc needs runs ≥ 1 and m_finest ≥ 1".into()));
        }
        if !(self.krige.noise > 0.0) || !(self.krige.cg_tol > 0.0) || self.krige.count == 0 {
            return Err(Error::InvalidParameter("krige needs positive noise, tolerance and count".into()));
        }
        Ok(Setup { curve, kernel, system, r: order.r, ra: order.ra })
    }

    pub fn compression_params(&self, system: &WaveletSystem, r: f64) -> CompressionParams {
        let base = CompressionParams::standard(system, r).with_a(self.compression.a, self.compression.a_prime);
        match self.compression.d_prime {
            Some(dp) => CompressionParams { d_prime: dp, ..base },
            None => base,
        }
    }

    pub fn mlmc_alpha0(&self, ra: f64) -> f64 {
        self.mlmc.alpha0.unwrap_or(2.0 * ra)
    }
}

impl Setup {
    pub fn index_set(&self, jmax: usize) -> Result<LevelIndexSet> {
        self.system.index_set(jmax)
    }
}
