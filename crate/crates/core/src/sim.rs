//! Receding-horizon closed loop over the erasure channel, its metrics, and
//! the comparison controllers.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{self, CacheStatus, LiftedDynamics, MomentInputs, MomentSet};
use crate::ocp::{self, OcpConfig, PolicyStructure, StabilityContext, StabilitySpec};
use crate::plant::{decompose, reachability, OrthoSchurDecomposition, PlantModel, ReachabilityData, DEFAULT_UNIT_CIRCLE_TOL};
use crate::policy::PolicyParams;
use crate::protocol::{ActuatorState, ProtocolKind, ProtocolSpec, Transmitter};
use crate::qp::Settings;
use crate::stochastics::{substream, ChannelSpec, DropoutSampler, NoiseSampler, NoiseSpec, SaturationSpec, StreamSource};

/// Controller run in the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    /// Full policy `η + Θe + Λν` with the sparsity regularizer.
    Proposed,
    /// Certainty-equivalent MPC: offsets only, nominal prediction, one
    /// control value per packet.
    CeMpc,
    /// Certainty-equivalent MPC that sends the remaining sequence until it
    /// is acknowledged, buffered at the actuator.
    PacketizedMpc,
    /// Disturbance feedback only (`Λ = 0`, `μ = 0`).
    SpcDisturbanceOnly,
    /// Dropout feedback only (`Θ = 0`, `μ = 0`).
    DropoutOnly,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 5] = [Self::Proposed, Self::CeMpc, Self::PacketizedMpc, Self::SpcDisturbanceOnly, Self::DropoutOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Proposed => "proposed",
            Self::CeMpc => "ce_mpc",
            Self::PacketizedMpc => "packetized_mpc",
            Self::SpcDisturbanceOnly => "spc_disturbance_only",
            Self::DropoutOnly => "dropout_only",
        }
    }

    fn structure(self) -> PolicyStructure {
        match self {
            Self::Proposed => PolicyStructure::FULL,
            Self::CeMpc | Self::PacketizedMpc => PolicyStructure::OFFSET_ONLY,
            Self::SpcDisturbanceOnly => PolicyStructure { theta: true, lambda: false },
            Self::DropoutOnly => PolicyStructure { theta: false, lambda: true },
        }
    }

    fn nominal(self) -> bool {
        matches!(self, Self::CeMpc | Self::PacketizedMpc)
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown controller '{s}'")))
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub model: PlantModel,
    pub q: DMatrix<f64>,
    pub q_f: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub n: usize,
    pub n_r: usize,
    pub protocol: ProtocolKind,
    pub channel: ChannelSpec,
    pub sat: SaturationSpec,
    pub mu: f64,
    /// Drift constraints; `None` disables them.
    pub stability: Option<StabilitySpec>,
    pub x0: DVector<f64>,
    pub steps: usize,
    pub paths: usize,
    /// Seed of the plant-noise and channel streams.
    pub seed: u64,
    pub moment_samples: usize,
    pub moment_seed: u64,
    pub tol_sparse: f64,
    pub solver: Settings,
    /// Treat uncertified solves as errors.
    pub strict_solver: bool,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let d = self.model.d();
        if self.x0.len() != d {
            return Err(Error::DimensionMismatch(format!("x0 has length {} for d={d}", self.x0.len())));
        }
        ProtocolSpec::new(self.protocol, self.n, self.n_r)?;
        self.channel.validate()?;
        if self.paths == 0 {
            return Err(Error::InvalidArgument("paths must be at least 1".into()));
        }
        if self.model.noise.dim() != d {
            return Err(Error::DimensionMismatch("noise covariance does not match the state dimension".into()));
        }
        if self.mu < 0.0 {
            return Err(Error::InvalidArgument("mu must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn moment_inputs(&self, kind: ControllerKind) -> Result<MomentInputs> {
        let d = self.model.d();
        let (protocol, p_design, noise) = if kind.nominal() {
            (ProtocolSpec::new(ProtocolKind::Tp1, self.n, self.n_r)?, 1.0, NoiseSpec::new(DMatrix::zeros(d, d), 0)?)
        } else {
            (ProtocolSpec::new(self.protocol, self.n, self.n_r)?, self.channel.stationary_success(), self.model.noise.clone())
        };
        Ok(MomentInputs {
            a: self.model.a.clone(),
            b: self.model.b.clone(),
            q: self.q.clone(),
            q_f: self.q_f.clone(),
            r: self.r.clone(),
            protocol,
            p_design,
            noise,
            sat: self.sat,
            seed: self.moment_seed,
            samples: self.moment_samples,
        })
    }

    fn transmit_protocol(&self, kind: ControllerKind) -> ProtocolKind {
        match kind {
            ControllerKind::CeMpc => ProtocolKind::Tp1,
            ControllerKind::PacketizedMpc => ProtocolKind::Tp2,
            _ => self.protocol,
        }
    }
}

/// Everything a path needs, computed once per (scenario, controller).
pub struct PreparedController {
    pub kind: ControllerKind,
    pub lifted: LiftedDynamics,
    pub moments: MomentSet,
    pub cache_status: CacheStatus,
    pub ocp: OcpConfig,
    pub transmit: ProtocolKind,
    stability: Option<(OrthoSchurDecomposition, ReachabilityData, StabilitySpec)>,
}

impl PreparedController {
    pub fn stability_context(&self) -> Option<StabilityContext<'_>> {
        self.stability.as_ref().map(|(dec, reach, spec)| StabilityContext { dec, reach, spec: *spec })
    }
}

/// Moments (from `cache_dir` when given), drift data and solver settings.
pub fn prepare(cfg: &ScenarioConfig, kind: ControllerKind, cache_dir: Option<&Path>) -> Result<PreparedController> {
    cfg.validate()?;
    let inputs = cfg.moment_inputs(kind)?;
    let lifted = inputs.lifted()?;
    let (moments, cache_status) = moments::load_or_compute(&inputs, cache_dir)?;
    let stability = match cfg.stability {
        Some(spec) => {
            let dec = decompose(&cfg.model, DEFAULT_UNIT_CIRCLE_TOL)?;
            let reach = reachability(&dec, cfg.n)?;
            if !reach.empty_orthogonal_part {
                if cfg.n_r != reach.kappa {
                    return Err(Error::InvalidArgument(format!(
                        "drift constraints need N_r = κ = {}, got N_r = {}",
                        reach.kappa, cfg.n_r
                    )));
                }
                spec.validate(cfg.model.u_max, dec.d_o, &reach)?;
            }
            Some((dec, reach, spec))
        }
        None => None,
    };
    let mu = if kind == ControllerKind::Proposed { cfg.mu } else { 0.0 };
    let ocp = OcpConfig {
        mu,
        u_max: cfg.model.u_max,
        phi_max: cfg.sat.phi_max,
        structure: kind.structure(),
        settings: cfg.solver.clone(),
    };
    Ok(PreparedController { kind, lifted, moments, cache_status, ocp, transmit: cfg.transmit_protocol(kind), stability })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub x: Vec<f64>,
    /// Control value computed by the controller.
    pub u: Vec<f64>,
    /// Scalars in the transmitted packet.
    pub payload: usize,
    pub nu: u8,
    pub u_applied: Vec<f64>,
    pub stage_cost: f64,
    /// The solved policy has an all-zero row for this instant.
    pub null_control: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub solves: usize,
    pub uncertified: usize,
    pub repaired: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathTrace {
    pub path: usize,
    pub steps: Vec<StepRecord>,
    /// `x_T`, after the last step.
    pub final_state: Vec<f64>,
    pub solves: SolveSummary,
}

impl PathTrace {
    /// `x_0, …, x_T`.
    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.steps.iter().map(|s| s.x.as_slice()).chain(std::iter::once(self.final_state.as_slice()))
    }
}

/// Tolerance on the controller's noise reconstruction (floating-point
/// round-off of `x⁺ − Ax − Bu`).
const RECONSTRUCTION_TOL: f64 = 1e-9;

pub fn run_path(cfg: &ScenarioConfig, prep: &PreparedController, path: usize) -> Result<PathTrace> {
    let (n, n_r) = (cfg.n, cfg.n_r);
    let (d, m) = (cfg.model.d(), cfg.model.m());
    let h = n - 1;
    let a = &cfg.model.a;
    let b = &cfg.model.b;
    let noise = NoiseSampler::new(&cfg.model.noise);
    let mut noise_rng = substream(cfg.seed, path as u64, StreamSource::PlantNoise);
    let mut chan_rng = substream(cfg.seed, path as u64, StreamSource::Channel);
    let mut channel = DropoutSampler::new(&cfg.channel, &mut chan_rng);
    let stability = prep.stability_context();

    let mut x = cfg.x0.clone();
    let mut steps = Vec::with_capacity(cfg.steps);
    let mut summary = SolveSummary::default();
    let mut previous: Option<PolicyParams> = None;
    let mut t = 0;
    while t < cfg.steps {
        let warm = previous.as_ref().map(|p| ocp::shift_policy(p, n_r));
        let sol = ocp::solve(&prep.moments, &prep.lifted, &x, &prep.ocp, stability.as_ref(), warm.as_ref())
            .map_err(|e| Error::Solve { path, t, source: Box::new(e) })?;
        summary.solves += 1;
        summary.iterations += sol.stats.iterations;
        summary.repaired += sol.repaired as usize;
        if !sol.certified {
            summary.uncertified += 1;
            if cfg.strict_solver {
                let err = Error::MaxIterations {
                    iterations: sol.stats.iterations,
                    primal_residual: sol.stats.kkt.primal,
                    dual_residual: sol.stats.kkt.dual,
                };
                return Err(Error::Solve { path, t, source: Box::new(err) });
            }
        }
        let params = sol.params;
        let null_rows: Vec<bool> = params.fhat_row_norms().iter().map(|v| *v <= cfg.tol_sparse).collect();

        let mut e_hist = DVector::zeros(d * h);
        let mut nu_hist = DVector::zeros(h);
        let mut tx = Transmitter::new(prep.transmit, n_r, &params.eta, m);
        let mut act = ActuatorState::new(m, n_r);
        act.start_cycle();
        for ell in 0..n_r {
            if t >= cfg.steps {
                break;
            }
            let rows = ell * m..(ell + 1) * m;
            let u = DVector::from_iterator(
                m,
                rows.clone().map(|r| params.eta[r] + params.theta.row(r).dot(&e_hist.transpose()) + params.lambda.row(r).dot(&nu_hist.transpose())),
            );
            let packet = tx.packet(ell, u.clone());
            let nu = channel.next(&mut chan_rng);
            let (applied, ack) = act
                .step(ell, (nu == 1).then_some(&packet))
                .map_err(|e| Error::Invariant { path, t, message: e.to_string() })?;
            tx.acknowledge(ack == 1);

            let w = noise.draw(&mut noise_rng);
            let x_next = cfg.model.step(&x, &applied, &w);
            let w_rec = &x_next - a * &x - b * &applied;
            if (&w_rec - &w).amax() > RECONSTRUCTION_TOL * (1.0 + x.amax().max(x_next.amax())) {
                return Err(Error::Invariant { path, t, message: "noise reconstruction mismatch".into() });
            }
            if ell < h {
                for (k, v) in w_rec.iter().enumerate() {
                    e_hist[ell * d + k] = cfg.sat.apply_scalar(*v);
                }
                nu_hist[ell] = ack as f64;
            }
            let stage_cost = x.dot(&(&cfg.q * &x)) + applied.dot(&(&cfg.r * &applied));
            steps.push(StepRecord {
                t,
                x: x.iter().copied().collect(),
                u: u.iter().copied().collect(),
                payload: packet.payload_len(),
                nu,
                u_applied: applied.iter().copied().collect(),
                stage_cost,
                null_control: null_rows[ell],
            });
            x = x_next;
            t += 1;
        }
        previous = Some(params);
    }
    Ok(PathTrace { path, steps, final_state: x.iter().copied().collect(), solves: summary })
}

/// All paths, in path order.
pub fn run_closed_loop(cfg: &ScenarioConfig, prep: &PreparedController) -> Result<Vec<PathTrace>> {
    (0..cfg.paths).into_par_iter().map(|p| run_path(cfg, prep, p)).collect()
}

pub fn run_baseline(cfg: &ScenarioConfig, kind: ControllerKind, cache_dir: Option<&Path>) -> Result<Vec<PathTrace>> {
    let prep = prepare(cfg, kind, cache_dir)?;
    run_closed_loop(cfg, &prep)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `max_{t ≥ 1}` of the path-mean of `‖x_t‖²`.
    pub msb: f64,
    /// Time average over `t = 1..T` of the path-mean of `‖x_t‖²`.
    pub msb_time_avg: f64,
    /// Path- and time-averaged `‖u^a_t‖²`.
    pub actuator_energy: f64,
    /// Percentage of computed control instants whose policy row is zero.
    pub sparsity_pct: f64,
    /// Path- and time-averaged stage cost.
    pub avg_cost: f64,
    pub paths: usize,
    pub steps: usize,
    pub solver: SolveSummary,
}

/// Path-mean of `‖x_t‖²` for `t = 0..T`.
pub fn mean_square_series(traces: &[PathTrace]) -> Vec<f64> {
    let Some(first) = traces.first() else { return Vec::new() };
    let len = first.steps.len() + 1;
    let mut out = vec![0.0; len];
    for tr in traces {
        for (k, x) in tr.states().enumerate() {
            out[k] += x.iter().map(|v| v * v).sum::<f64>();
        }
    }
    out.iter_mut().for_each(|v| *v /= traces.len() as f64);
    out
}

pub fn metrics(traces: &[PathTrace]) -> Metrics {
    let series = mean_square_series(traces);
    let steps = traces.first().map_or(0, |t| t.steps.len());
    if traces.is_empty() || steps == 0 {
        return Metrics { paths: traces.len(), ..Metrics::default() };
    }
    let after = &series[1..];
    let count = (traces.len() * steps) as f64;
    let mut energy = 0.0;
    let mut cost = 0.0;
    let mut null = 0usize;
    let mut solver = SolveSummary::default();
    for tr in traces {
        for s in &tr.steps {
            energy += s.u_applied.iter().map(|v| v * v).sum::<f64>();
            cost += s.stage_cost;
            null += s.null_control as usize;
        }
        solver.solves += tr.solves.solves;
        solver.uncertified += tr.solves.uncertified;
        solver.repaired += tr.solves.repaired;
        solver.iterations += tr.solves.iterations;
    }
    Metrics {
        msb: after.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        msb_time_avg: after.iter().sum::<f64>() / after.len() as f64,
        actuator_energy: energy / count,
        sparsity_pct: 100.0 * null as f64 / count,
        avg_cost: cost / count,
        paths: traces.len(),
        steps,
        solver,
    }
}

/// One row per `(path, t)`.
pub fn write_trace_csv<W: Write>(out: &mut W, traces: &[PathTrace]) -> Result<()> {
    let Some(first) = traces.first().and_then(|t| t.steps.first()) else {
        writeln!(out, "path,t")?;
        return Ok(());
    };
    let (d, m) = (first.x.len(), first.u.len());
    let mut header = vec!["path".to_string(), "t".to_string()];
    header.extend((0..d).map(|i| format!("x{i}")));
    header.extend((0..m).map(|i| format!("u{i}")));
    header.extend(["payload".into(), "nu".into()]);
    header.extend((0..m).map(|i| format!("ua{i}")));
    header.extend(["stage_cost".into(), "null_control".into(), "state_norm2".into()]);
    writeln!(out, "{}", header.join(","))?;
    for tr in traces {
        for s in &tr.steps {
            let mut f: Vec<String> = vec![tr.path.to_string(), s.t.to_string()];
            f.extend(s.x.iter().map(|v| v.to_string()));
            f.extend(s.u.iter().map(|v| v.to_string()));
            f.push(s.payload.to_string());
            f.push(s.nu.to_string());
            f.extend(s.u_applied.iter().map(|v| v.to_string()));
            f.push(s.stage_cost.to_string());
            f.push((s.null_control as u8).to_string());
            f.push(s.x.iter().map(|v| v * v).sum::<f64>().to_string());
            writeln!(out, "{}", f.join(","))?;
        }
    }
    Ok(())
}

/// `t, mean ‖x_t‖², running max` for `t = 0..T`.
pub fn write_series_csv<W: Write>(out: &mut W, traces: &[PathTrace]) -> Result<()> {
    writeln!(out, "t,mean_state_norm2,running_max")?;
    let mut running = f64::NEG_INFINITY;
    for (t, v) in mean_square_series(traces).into_iter().enumerate() {
        if t >= 1 {
            running = running.max(v);
        }
        let shown = if t == 0 { v } else { running };
        writeln!(out, "{t},{v},{shown}")?;
    }
    Ok(())
}
