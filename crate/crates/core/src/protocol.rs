//! Transmission protocols.
//!
//! * TP1 sends only the current control value; a drop means zero input.
//! * TP2 also sends the remaining offset blocks of the current cycle until
//!   the first acknowledged delivery; the actuator buffers them and falls
//!   back on the buffered offset when a later packet is lost.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::PolicyParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Tp1,
    Tp2,
}

impl ProtocolKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::Tp1 => "tp1",
            ProtocolKind::Tp2 => "tp2",
        }
    }
}

impl std::str::FromStr for ProtocolKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "tp1" => Ok(ProtocolKind::Tp1),
            "tp2" => Ok(ProtocolKind::Tp2),
            other => Err(format!("unknown protocol `{other}` (expected tp1 or tp2)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolSpec {
    pub kind: ProtocolKind,
    pub n: usize,
    pub n_r: usize,
}

impl ProtocolSpec {
    pub fn new(kind: ProtocolKind, n: usize, n_r: usize) -> Result<Self> {
        if n_r == 0 || n_r > n {
            return Err(Error::InvalidArgument(format!("need 1 <= N_r <= N, got N_r={n_r}, N={n}")));
        }
        Ok(Self { kind, n, n_r })
    }

    /// Number of dropout outcomes a prediction depends on: `S` reads the
    /// first `N_r`, `Λ` the first `N-1`.
    pub fn pattern_len(&self) -> usize {
        self.n_r.max(self.n - 1).max(1)
    }
}

/// `ρ_ℓ = 1` iff some `ν_s = 1` with `s <= ℓ`.
pub fn rho_sequence(nu: &[u8]) -> Vec<u8> {
    let mut seen = 0u8;
    nu.iter()
        .map(|&v| {
            seen |= v;
            seen
        })
        .collect()
}

/// `blkdiag(ν_0 I_m, …, ν_{N_r-1} I_m, I_{m(N-N_r)})`; `nu` needs at least `N_r` entries.
pub fn build_s(nu: &[u8], n: usize, n_r: usize, m: usize) -> DMatrix<f64> {
    let mut diag = DVector::from_element(m * n, 1.0);
    for (k, &v) in nu.iter().take(n_r).enumerate() {
        diag.rows_mut(k * m, m).fill(v as f64);
    }
    DMatrix::from_diagonal(&diag)
}

/// Square `mN × mN` offset map of TP2: block `(i,i)` is `ρ_i I_m` for
/// `i < N_r` and `I_m` after. Its first `m(N-1)` columns form the
/// `mN × m(N-1)` layout; the extra column block keeps the last offset.
pub fn build_g(nu: &[u8], n: usize, n_r: usize, m: usize) -> DMatrix<f64> {
    let rho = rho_sequence(&nu[..n_r.min(nu.len())]);
    let mut diag = DVector::from_element(m * n, 1.0);
    for (k, &v) in rho.iter().enumerate() {
        diag.rows_mut(k * m, m).fill(v as f64);
    }
    DMatrix::from_diagonal(&diag)
}

/// Diagonal of `S` as a 0/1 mask over the `mN` control entries.
pub fn s_mask(nu: &[u8], n: usize, n_r: usize, m: usize) -> Vec<f64> {
    let mut out = vec![1.0; m * n];
    for (k, &v) in nu.iter().take(n_r).enumerate() {
        out[k * m..(k + 1) * m].fill(v as f64);
    }
    out
}

/// Diagonal of the square `G` as a 0/1 mask.
pub fn g_mask(nu: &[u8], n: usize, n_r: usize, m: usize) -> Vec<f64> {
    let rho = rho_sequence(&nu[..n_r.min(nu.len())]);
    let mut out = vec![1.0; m * n];
    for (k, &v) in rho.iter().enumerate() {
        out[k * m..(k + 1) * m].fill(v as f64);
    }
    out
}

/// Applied controls over the whole horizon for a realization of `e` and `ν`
/// (`nu` of length [`ProtocolSpec::pattern_len`]).
pub fn applied_controls(
    spec: &ProtocolSpec,
    params: &PolicyParams,
    sat_noise: &DVector<f64>,
    nu: &[u8],
) -> Result<DVector<f64>> {
    let h = spec.n - 1;
    if nu.len() < spec.n_r.max(h) {
        return Err(Error::DimensionMismatch(format!(
            "need {} dropout outcomes, got {}",
            spec.n_r.max(h),
            nu.len()
        )));
    }
    let u = params.evaluate_controls(sat_noise, &nu[..h])?;
    let s = build_s(nu, spec.n, spec.n_r, params.m);
    Ok(match spec.kind {
        ProtocolKind::Tp1 => s * u,
        ProtocolKind::Tp2 => {
            let nu_vec = DVector::from_iterator(h, nu[..h].iter().map(|&v| v as f64));
            let g = build_g(nu, spec.n, spec.n_r, params.m);
            g * &params.eta + s * params.feedback(sat_noise, &nu_vec)
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub control: DVector<f64>,
    /// TP2 burst: offset blocks for instants `ℓ+1, …, N_r-1` of this cycle.
    pub offsets: Vec<DVector<f64>>,
}

impl Packet {
    pub fn payload_len(&self) -> usize {
        self.control.len() + self.offsets.iter().map(|o| o.len()).sum::<usize>()
    }
}

/// Controller side of the link for one recalculation cycle.
#[derive(Debug, Clone)]
pub struct Transmitter {
    kind: ProtocolKind,
    n_r: usize,
    m: usize,
    eta: DVector<f64>,
    acked: bool,
}

impl Transmitter {
    pub fn new(kind: ProtocolKind, n_r: usize, eta: &DVector<f64>, m: usize) -> Self {
        Self { kind, n_r, m, eta: eta.clone(), acked: false }
    }

    pub fn packet(&self, ell: usize, control: DVector<f64>) -> Packet {
        let offsets = if self.kind == ProtocolKind::Tp2 && !self.acked {
            (ell + 1..self.n_r).map(|k| self.eta.rows(k * self.m, self.m).into_owned()).collect()
        } else {
            Vec::new()
        };
        Packet { control, offsets }
    }

    pub fn acknowledge(&mut self, delivered: bool) {
        self.acked |= delivered;
    }
}

/// Actuator side: applies delivered controls, otherwise a buffered offset
/// (TP2) or zero.
#[derive(Debug, Clone)]
pub struct ActuatorState {
    m: usize,
    n_r: usize,
    buffer: Vec<Option<DVector<f64>>>,
    received: bool,
}

impl ActuatorState {
    pub fn new(m: usize, n_r: usize) -> Self {
        Self { m, n_r, buffer: vec![None; n_r], received: false }
    }

    pub fn start_cycle(&mut self) {
        self.buffer.iter_mut().for_each(|b| *b = None);
        self.received = false;
    }

    /// Returns the applied block and the ACK bit.
    pub fn step(&mut self, ell: usize, incoming: Option<&Packet>) -> Result<(DVector<f64>, u8)> {
        match incoming {
            Some(p) => {
                if !p.offsets.is_empty() {
                    if p.offsets.len() != self.n_r.saturating_sub(ell + 1) {
                        return Err(Error::BufferUnderrun(ell));
                    }
                    for (k, blk) in p.offsets.iter().enumerate() {
                        self.buffer[ell + 1 + k] = Some(blk.clone());
                    }
                }
                self.received = true;
                Ok((p.control.clone(), 1))
            }
            None => match self.buffer.get(ell).and_then(|b| b.clone()) {
                Some(b) => Ok((b, 0)),
                None if self.received && self.buffer.iter().any(|b| b.is_some()) => Err(Error::BufferUnderrun(ell)),
                None => Ok((DVector::zeros(self.m), 0)),
            },
        }
    }
}

/// Event-level emulation of one cycle: the applied blocks for `ℓ < N_r`.
pub fn emulate_cycle(
    spec: &ProtocolSpec,
    params: &PolicyParams,
    sat_noise: &DVector<f64>,
    nu: &[u8],
) -> Result<Vec<DVector<f64>>> {
    let m = params.m;
    let h = spec.n - 1;
    let u = params.evaluate_controls(sat_noise, &nu[..h])?;
    let mut tx = Transmitter::new(spec.kind, spec.n_r, &params.eta, m);
    let mut act = ActuatorState::new(m, spec.n_r);
    act.start_cycle();
    let mut out = Vec::with_capacity(spec.n_r);
    for ell in 0..spec.n_r {
        let pkt = tx.packet(ell, u.rows(ell * m, m).into_owned());
        let delivered = nu[ell] == 1;
        let (applied, ack) = act.step(ell, delivered.then_some(&pkt))?;
        tx.acknowledge(ack == 1);
        out.push(applied);
    }
    Ok(out)
}
