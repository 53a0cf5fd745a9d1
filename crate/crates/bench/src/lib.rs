//! Shared fixtures for the benchmarks: the three-state orthogonal plant with
//! a four-step horizon, recalculated every three steps.

use nalgebra::DMatrix;

use netspc_core::ocp::StabilitySpec;
use netspc_core::plant::DEFAULT_UNIT_CIRCLE_TOL;
use netspc_core::qp::Settings;
use netspc_core::scenario::*;
use netspc_core::sim::{self, ControllerKind, PreparedController, ScenarioConfig};
use netspc_core::{decompose, reachability, ChannelSpec, ProtocolKind, SaturationSpec};

/// Closed-loop scenario with drift constraints enabled.
pub fn scenario(p: f64, sigma: f64, protocol: ProtocolKind, mu: f64, steps: usize) -> ScenarioConfig {
    let model = example_plant(DMatrix::identity(3, 3) * sigma, 0);
    let dec = decompose(&model, DEFAULT_UNIT_CIRCLE_TOL).expect("plant decomposes");
    let reach = reachability(&dec, EXAMPLE_N).expect("plant is reachable");
    ScenarioConfig {
        stability: Some(StabilitySpec::with_defaults(EXAMPLE_U_MAX, dec.d_o, &reach)),
        model,
        q: example_q(),
        q_f: example_qf(),
        r: example_r(),
        n: EXAMPLE_N,
        n_r: EXAMPLE_N_R,
        protocol,
        channel: ChannelSpec::bernoulli(p, 0).expect("valid p"),
        sat: SaturationSpec::default(),
        mu,
        x0: example_x0(),
        steps,
        paths: 1,
        seed: 1,
        moment_samples: 20_000,
        moment_seed: 1,
        tol_sparse: netspc_core::policy::DEFAULT_TOL_SPARSE,
        solver: Settings::default(),
        strict_solver: false,
    }
}

pub fn prepared(cfg: &ScenarioConfig) -> PreparedController {
    sim::prepare(cfg, ControllerKind::Proposed, None).expect("scenario prepares")
}
