//! Scenario file: one JSON document, matrices as row-major nested arrays.
//!
//! Every optional field has an explicit default, and `resolve` fills the
//! derived ones (the drift level `zeta`), so the resolved document written
//! next to the results records every value a run used.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use netspc_core::ocp::StabilitySpec;
use netspc_core::policy::DEFAULT_TOL_SPARSE;
use netspc_core::qp::Settings;
use netspc_core::sim::{ControllerKind, ScenarioConfig};
use netspc_core::stochastics::GeStart;
use netspc_core::{decompose, reachability, ChannelKind, ChannelSpec, NoiseSpec, PlantModel, ProtocolKind, SaturationKind, SaturationSpec};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub plant: PlantConfig,
    pub weights: WeightsConfig,
    /// Optimization horizon `N`.
    pub horizon: usize,
    /// Recalculation interval `N_r`.
    pub recalculation_interval: usize,
    #[serde(default = "default_protocol")]
    pub protocol: ProtocolKind,
    pub channel: ChannelConfig,
    pub noise_covariance: Vec<Vec<f64>>,
    #[serde(default)]
    pub saturation: SaturationConfig,
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub stability: Option<StabilityConfig>,
    pub x0: Vec<f64>,
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub moments: MomentConfig,
    #[serde(default = "default_tol_sparse")]
    pub tol_sparse: f64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_true")]
    pub strict_solver: bool,
    /// Comparison controllers run next to `proposed`.
    #[serde(default)]
    pub baselines: Vec<ControllerKind>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub u_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    pub q: Vec<Vec<f64>>,
    pub q_f: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelConfig {
    Bernoulli { p: f64 },
    GilbertElliott { p1: f64, p2: f64, p12: f64, p21: f64, #[serde(default)] start: GeStartConfig },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeStartConfig {
    #[default]
    Stationary,
    Good,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaturationKindConfig {
    #[default]
    Sigmoid,
    HardSat,
    PiecewiseLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaturationConfig {
    #[serde(default)]
    pub kind: SaturationKindConfig,
    #[serde(default = "default_phi_max")]
    pub phi_max: f64,
}

impl Default for SaturationConfig {
    fn default() -> Self {
        Self { kind: SaturationKindConfig::Sigmoid, phi_max: default_phi_max() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// `None` picks 90% of the largest admissible drift.
    #[serde(default)]
    pub zeta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub steps: usize,
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_moment_seed")]
    pub seed: u64,
}

impl Default for MomentConfig {
    fn default() -> Self {
        Self { samples: default_samples(), seed: default_moment_seed() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub tol: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    pub check_every: usize,
    pub scaling_iters: usize,
    pub adaptive_rho: bool,
    pub polish: bool,
    pub polish_delta: f64,
    pub polish_refine: usize,
    pub polish_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Settings::default().into()
    }
}

impl From<Settings> for SolverConfig {
    fn from(s: Settings) -> Self {
        Self {
            rho: s.rho,
            sigma: s.sigma,
            alpha: s.alpha,
            tol: s.tol,
            eps_rel: s.eps_rel,
            max_iter: s.max_iter,
            check_every: s.check_every,
            scaling_iters: s.scaling_iters,
            adaptive_rho: s.adaptive_rho,
            polish: s.polish,
            polish_delta: s.polish_delta,
            polish_refine: s.polish_refine,
            polish_every: s.polish_every,
        }
    }
}

impl From<&SolverConfig> for Settings {
    fn from(c: &SolverConfig) -> Self {
        Settings {
            rho: c.rho,
            sigma: c.sigma,
            alpha: c.alpha,
            tol: c.tol,
            eps_rel: c.eps_rel,
            max_iter: c.max_iter,
            check_every: c.check_every,
            scaling_iters: c.scaling_iters,
            adaptive_rho: c.adaptive_rho,
            polish: c.polish,
            polish_delta: c.polish_delta,
            polish_refine: c.polish_refine,
            polish_every: c.polish_every,
        }
    }
}

/// Cartesian grid of success probabilities, noise scales (multiplying
/// `noise_covariance`) and protocols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub p: Vec<f64>,
    pub noise_scale: Vec<f64>,
    pub protocols: Vec<ProtocolKind>,
}

fn default_protocol() -> ProtocolKind {
    ProtocolKind::Tp1
}
fn default_tol_sparse() -> f64 {
    DEFAULT_TOL_SPARSE
}
fn default_true() -> bool {
    true
}
fn default_phi_max() -> f64 {
    1.0
}
fn default_r() -> f64 {
    StabilitySpec::DEFAULT_R
}
fn default_epsilon() -> f64 {
    StabilitySpec::DEFAULT_EPSILON
}
fn default_samples() -> usize {
    netspc_core::moments::DEFAULT_SAMPLES
}
fn default_moment_seed() -> u64 {
    1
}

/// One cell of the experiment grid.
#[derive(Debug, Clone)]
pub struct GridPoint {
    pub p: f64,
    pub noise_scale: f64,
    pub protocol: ProtocolKind,
    pub scenario: ScenarioConfig,
}

impl GridPoint {
    /// Directory name, e.g. `tp1_p0.5_s1`.
    pub fn label(&self) -> String {
        format!("{}_p{}_s{}", self.protocol.as_str(), self.p, self.noise_scale)
    }
}

pub fn parse(text: &str) -> Result<Config, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("at `{path}`: {}", e.inner()))
    })
}

pub fn load(path: &Path) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

/// Canonical form: fixed key order, two-space indentation, trailing newline.
pub fn to_canonical_json(cfg: &Config) -> String {
    let mut s = serde_json::to_string_pretty(cfg).expect("config serializes");
    s.push('\n');
    s
}

/// SHA-256 over `blob <len>\0<bytes>`, the way git hashes objects.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(CliError::Config(format!("`{name}` must be a nonempty matrix")));
    }
    if let Some(i) = rows.iter().position(|row| row.len() != c) {
        return Err(CliError::Config(format!("`{name}` row {i} has {} entries, expected {c}", rows[i].len())));
    }
    Ok(DMatrix::from_row_iterator(r, c, rows.iter().flatten().copied()))
}

fn channel(c: &ChannelConfig, p_override: Option<f64>, seed: u64) -> ChannelSpec {
    let kind = match (*c, p_override) {
        (_, Some(p)) => ChannelKind::BernoulliIid { p },
        (ChannelConfig::Bernoulli { p }, None) => ChannelKind::BernoulliIid { p },
        (ChannelConfig::GilbertElliott { p1, p2, p12, p21, start }, None) => ChannelKind::GilbertElliott {
            p1,
            p2,
            p12,
            p21,
            start: match start {
                GeStartConfig::Stationary => GeStart::Stationary,
                GeStartConfig::Good => GeStart::Good,
            },
        },
    };
    ChannelSpec { kind, seed }
}

impl Config {
    /// Fill derived defaults so the document is fully explicit.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        if let Some(st) = self.stability.as_mut() {
            if st.zeta.is_none() {
                let a = matrix("plant.a", &self.plant.a)?;
                let b = matrix("plant.b", &self.plant.b)?;
                let noise = NoiseSpec::new(DMatrix::zeros(a.nrows(), a.nrows()), 0).map_err(CliError::from_config)?;
                let model = PlantModel::new(a, b, self.plant.u_max, noise).map_err(CliError::from_config)?;
                let dec = decompose(&model, netspc_core::plant::DEFAULT_UNIT_CIRCLE_TOL).map_err(CliError::from_config)?;
                let reach = reachability(&dec, self.horizon).map_err(CliError::from_config)?;
                st.zeta = Some(if reach.empty_orthogonal_part {
                    0.0
                } else {
                    StabilitySpec::DEFAULT_ZETA_FRACTION * StabilitySpec::zeta_upper(self.plant.u_max, dec.d_o, &reach)
                });
            }
        }
        Ok(self)
    }

    /// Scenario for one grid cell; `None` values fall back to the base document.
    pub fn scenario(&self, p: Option<f64>, noise_scale: f64, protocol: ProtocolKind) -> Result<ScenarioConfig, CliError> {
        let seed = self.simulation.seed;
        let a = matrix("plant.a", &self.plant.a)?;
        let b = matrix("plant.b", &self.plant.b)?;
        let cov = matrix("noise_covariance", &self.noise_covariance)? * noise_scale;
        let noise = NoiseSpec::new(cov, seed).map_err(CliError::from_config)?;
        let model = PlantModel::new(a, b, self.plant.u_max, noise).map_err(CliError::from_config)?;
        let sat = SaturationSpec::new(
            match self.saturation.kind {
                SaturationKindConfig::Sigmoid => SaturationKind::Sigmoid,
                SaturationKindConfig::HardSat => SaturationKind::HardSat,
                SaturationKindConfig::PiecewiseLinear => SaturationKind::PiecewiseLinear,
            },
            self.saturation.phi_max,
        )
        .map_err(CliError::from_config)?;
        let stability = match self.stability {
            Some(st) => Some(StabilitySpec {
                r: st.r,
                epsilon: st.epsilon,
                zeta: st.zeta.ok_or_else(|| CliError::Config("stability.zeta unresolved".into()))?,
            }),
            None => None,
        };
        let cfg = ScenarioConfig {
            model,
            q: matrix("weights.q", &self.weights.q)?,
            q_f: matrix("weights.q_f", &self.weights.q_f)?,
            r: matrix("weights.r", &self.weights.r)?,
            n: self.horizon,
            n_r: self.recalculation_interval,
            protocol,
            channel: channel(&self.channel, p, seed),
            sat,
            mu: self.mu,
            stability,
            x0: DVector::from_vec(self.x0.clone()),
            steps: self.simulation.steps,
            paths: self.simulation.paths,
            seed,
            moment_samples: self.moments.samples,
            moment_seed: self.moments.seed,
            tol_sparse: self.tol_sparse,
            solver: (&self.solver).into(),
            strict_solver: self.strict_solver,
        };
        cfg.validate().map_err(CliError::from_config)?;
        Ok(cfg)
    }

    /// All grid cells in (protocol, p, noise scale) order; a single cell
    /// when no grid is given.
    pub fn grid_points(&self) -> Result<Vec<GridPoint>, CliError> {
        let base_p = match self.channel {
            ChannelConfig::Bernoulli { p } => p,
            ChannelConfig::GilbertElliott { .. } => channel(&self.channel, None, 0).stationary_success(),
        };
        let Some(grid) = &self.grid else {
            let p_override = matches!(self.channel, ChannelConfig::Bernoulli { .. }).then_some(base_p);
            return Ok(vec![GridPoint { p: base_p, noise_scale: 1.0, protocol: self.protocol, scenario: self.scenario(p_override, 1.0, self.protocol)? }]);
        };
        if grid.p.is_empty() || grid.noise_scale.is_empty() || grid.protocols.is_empty() {
            return Err(CliError::Config("grid axes must be nonempty".into()));
        }
        let mut out = Vec::new();
        for &protocol in &grid.protocols {
            for &p in &grid.p {
                for &s in &grid.noise_scale {
                    out.push(GridPoint { p, noise_scale: s, protocol, scenario: self.scenario(Some(p), s, protocol)? });
                }
            }
        }
        Ok(out)
    }

    /// `proposed` followed by the configured baselines, without repeats.
    pub fn controllers(&self) -> Vec<ControllerKind> {
        let mut out = vec![ControllerKind::Proposed];
        for k in &self.baselines {
            if !out.contains(k) {
                out.push(*k);
            }
        }
        out
    }
}
