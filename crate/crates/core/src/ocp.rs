//! The finite-horizon optimal control problem as a QP over the packed
//! policy `(Ξ, Θ_free)` plus auxiliaries:
//!
//! * `s_k`   — epigraph of the ∞-norm of row `k` of `F̂` (only when `μ > 0`),
//! * `a`     — absolute values of the free `Λ` and `Θ` entries,
//! * `h_i`   — absolute value of `η_i + ½ Σ_c Λ_{ic}`.
//!
//! The hard input bound `|u_i| ≤ U` over every dropout pattern and every
//! saturated noise value is the linear condition
//! `h_i + ½ Σ a_Λ + φ Σ a_Θ ≤ U`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::moments::{LiftedDynamics, MomentSet};
use crate::plant::{OrthoSchurDecomposition, ReachabilityData};
use crate::policy::{lambda_free_positions, theta_free_positions, PackedDecision, PolicyParams};
use crate::qp::{self, Qp, Settings};

/// Which policy blocks are decision variables; the others are fixed at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyStructure {
    pub theta: bool,
    pub lambda: bool,
}

impl PolicyStructure {
    pub const FULL: Self = Self { theta: true, lambda: true };
    pub const OFFSET_ONLY: Self = Self { theta: false, lambda: false };
}

/// Index map from policy entries and auxiliaries into the QP vector `z`.
#[derive(Debug, Clone)]
pub struct VarMap {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub eta: usize,
    /// `(row, col)` of each free `Λ` entry, stored from `lambda_start`.
    pub lambda_pos: Vec<(usize, usize)>,
    pub lambda_start: usize,
    pub theta_pos: Vec<(usize, usize)>,
    pub theta_start: usize,
    /// One per instant when the regularizer is active.
    pub epi_start: Option<usize>,
    pub abs_lambda_start: usize,
    pub abs_theta_start: usize,
    pub h_start: usize,
    pub len: usize,
}

impl VarMap {
    pub fn new(n: usize, m: usize, d: usize, structure: PolicyStructure, regularized: bool) -> Self {
        let lambda_pos = if structure.lambda { lambda_free_positions(n, m) } else { Vec::new() };
        let theta_pos = if structure.theta { theta_free_positions(n, m, d) } else { Vec::new() };
        let eta = 0;
        let lambda_start = m * n;
        let theta_start = lambda_start + lambda_pos.len();
        let mut next = theta_start + theta_pos.len();
        let epi_start = regularized.then(|| {
            let s = next;
            next += n;
            s
        });
        let abs_lambda_start = next;
        let abs_theta_start = abs_lambda_start + lambda_pos.len();
        let h_start = abs_theta_start + theta_pos.len();
        let len = h_start + m * n;
        Self { n, m, d, eta, lambda_pos, lambda_start, theta_pos, theta_start, epi_start, abs_lambda_start, abs_theta_start, h_start, len }
    }

    pub fn xi_len(&self) -> usize {
        self.m * self.n + self.lambda_pos.len()
    }

    pub fn policy_len(&self) -> usize {
        self.theta_start + self.theta_pos.len()
    }

    pub fn to_params(&self, z: &DVector<f64>) -> PolicyParams {
        let mut p = PolicyParams::zeros(self.n, self.m, self.d);
        p.eta.copy_from(&z.rows(self.eta, self.m * self.n));
        for (k, &(r, c)) in self.lambda_pos.iter().enumerate() {
            p.lambda[(r, c)] = z[self.lambda_start + k];
        }
        for (k, &(r, c)) in self.theta_pos.iter().enumerate() {
            p.theta[(r, c)] = z[self.theta_start + k];
        }
        p
    }

    /// Policy entries from `params` with auxiliaries at their tightest
    /// feasible values. Entries outside the structure are dropped.
    pub fn from_params(&self, params: &PolicyParams) -> DVector<f64> {
        let mut z = DVector::zeros(self.len);
        z.rows_mut(self.eta, self.m * self.n).copy_from(&params.eta);
        for (k, &(r, c)) in self.lambda_pos.iter().enumerate() {
            z[self.lambda_start + k] = params.lambda[(r, c)];
            z[self.abs_lambda_start + k] = params.lambda[(r, c)].abs();
        }
        for (k, &(r, c)) in self.theta_pos.iter().enumerate() {
            z[self.theta_start + k] = params.theta[(r, c)];
            z[self.abs_theta_start + k] = params.theta[(r, c)].abs();
        }
        let restricted = self.to_params(&z);
        for i in 0..self.m * self.n {
            z[self.h_start + i] = (restricted.eta[i] + 0.5 * restricted.lambda.row(i).sum()).abs();
        }
        if let Some(e) = self.epi_start {
            for (k, v) in restricted.fhat_row_norms().into_iter().enumerate() {
                z[e + k] = v;
            }
        }
        z
    }
}

/// Sparse linear row `lo ≤ Σ coef·z ≤ hi`.
#[derive(Debug, Clone)]
struct Row {
    coef: Vec<(usize, f64)>,
    lo: f64,
    hi: f64,
}

/// Tags of the constraint rows, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    InputBound(usize),
    AbsEta(usize),
    AbsLambda(usize),
    AbsTheta(usize),
    Epigraph(usize),
    Stability(usize),
}

/// Drift constraints on the orthogonal part of the state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilitySpec {
    pub r: f64,
    pub epsilon: f64,
    pub zeta: f64,
}

impl StabilitySpec {
    pub const DEFAULT_R: f64 = 1.0;
    pub const DEFAULT_EPSILON: f64 = 0.1;
    pub const DEFAULT_ZETA_FRACTION: f64 = 0.9;

    /// `U / (√d_o σ₁(R_κ⁺))`; `ζ` must stay strictly below it.
    pub fn zeta_upper(u_max: f64, d_o: usize, reach: &ReachabilityData) -> f64 {
        u_max / ((d_o as f64).sqrt() * reach.sigma1_pinv)
    }

    pub fn with_defaults(u_max: f64, d_o: usize, reach: &ReachabilityData) -> Self {
        Self {
            r: Self::DEFAULT_R,
            epsilon: Self::DEFAULT_EPSILON,
            zeta: Self::DEFAULT_ZETA_FRACTION * Self::zeta_upper(u_max, d_o, reach),
        }
    }

    pub fn validate(&self, u_max: f64, d_o: usize, reach: &ReachabilityData) -> Result<()> {
        if !(self.r > 0.0 && self.epsilon > 0.0 && self.zeta > 0.0) {
            return Err(Error::InvalidArgument("stability r, epsilon and zeta must be positive".into()));
        }
        let upper = Self::zeta_upper(u_max, d_o, reach);
        if self.zeta >= upper {
            return Err(Error::InvalidArgument(format!("zeta {} must be below {upper}", self.zeta)));
        }
        Ok(())
    }
}

/// `sat∞_{r,ζ}`: linear with slope `ζ/r` inside `[-r, r]`, `±ζ` outside.
pub fn sat_inf(x: &DVector<f64>, r: f64, zeta: f64) -> DVector<f64> {
    x.map(|v| if v.abs() <= r { v * zeta / r } else { zeta * v.signum() })
}

/// One active drift row: `w·(η + p Λ𝟙)_{1:κm} ≤ −ζ` (`upper`) or `≥ ζ`.
#[derive(Debug, Clone)]
pub struct StabilityRow {
    pub coord: usize,
    pub weights: DVector<f64>,
    pub p: f64,
    pub upper: bool,
    pub zeta: f64,
}

impl StabilityRow {
    pub fn lhs(&self, params: &PolicyParams) -> f64 {
        (0..self.weights.len())
            .map(|r| self.weights[r] * (params.eta[r] + self.p * params.lambda.row(r).sum()))
            .sum()
    }

    /// Nonnegative when the row holds.
    pub fn slack(&self, params: &PolicyParams) -> f64 {
        let v = self.lhs(params);
        if self.upper {
            -self.zeta - v
        } else {
            v - self.zeta
        }
    }
}

/// Orthogonal-part data needed for the drift constraints.
#[derive(Debug, Clone)]
pub struct StabilityContext<'a> {
    pub dec: &'a OrthoSchurDecomposition,
    pub reach: &'a ReachabilityData,
    pub spec: StabilitySpec,
}

pub fn build_stability_constraints(
    dec: &OrthoSchurDecomposition,
    reach: &ReachabilityData,
    spec: &StabilitySpec,
    x: &DVector<f64>,
    p_design: f64,
    n: usize,
) -> Result<Vec<StabilityRow>> {
    if dec.d_o == 0 {
        return Ok(Vec::new());
    }
    if reach.kappa > n {
        return Err(Error::InvalidArgument(format!("horizon N={n} shorter than reachability index {}", reach.kappa)));
    }
    let xo = dec.orthogonal_coords(x);
    let w = a_o_power(dec, reach.kappa).transpose() * &reach.r_kappa;
    let mut rows = Vec::new();
    for j in 0..dec.d_o {
        let active_hi = xo[j] >= spec.r + spec.epsilon;
        let active_lo = xo[j] <= -(spec.r + spec.epsilon);
        if active_hi || active_lo {
            rows.push(StabilityRow {
                coord: j,
                weights: w.row(j).transpose(),
                p: p_design,
                upper: active_hi,
                zeta: spec.zeta,
            });
        }
    }
    Ok(rows)
}

fn a_o_power(dec: &OrthoSchurDecomposition, k: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(dec.d_o, dec.d_o);
    for _ in 0..k {
        out = &dec.a_o * out;
    }
    out
}

/// Offsets `η_{1:κm} = −R_κ⁺ A_o^κ sat∞(x^o)`, all gains zero.
pub fn fallback_policy(
    dec: &OrthoSchurDecomposition,
    reach: &ReachabilityData,
    spec: &StabilitySpec,
    x: &DVector<f64>,
    n: usize,
    d: usize,
) -> PolicyParams {
    let m = dec.b_o.ncols();
    let mut p = PolicyParams::zeros(n, m, d);
    if dec.d_o == 0 {
        return p;
    }
    let xo = dec.orthogonal_coords(x);
    let eta = -(&reach.r_kappa_pinv * a_o_power(dec, reach.kappa) * sat_inf(&xo, spec.r, spec.zeta));
    p.eta.rows_mut(0, eta.len()).copy_from(&eta);
    p
}

/// Worst-case `|u_i|` over all dropout patterns and saturated noise values,
/// per control entry.
pub fn input_bound_lhs(params: &PolicyParams, phi_max: f64) -> DVector<f64> {
    DVector::from_fn(params.eta.len(), |i, _| {
        let lam = params.lambda.row(i);
        (params.eta[i] + 0.5 * lam.sum()).abs() + 0.5 * lam.abs().sum() + phi_max * params.theta.row(i).abs().sum()
    })
}

#[derive(Debug, Clone)]
pub struct OcpConfig {
    pub mu: f64,
    pub u_max: f64,
    pub phi_max: f64,
    pub structure: PolicyStructure,
    pub settings: Settings,
}

impl OcpConfig {
    pub fn new(mu: f64, u_max: f64, phi_max: f64) -> Self {
        Self { mu, u_max, phi_max, structure: PolicyStructure::FULL, settings: Settings::default() }
    }
}

/// `½ zᵀHz + gᵀz + c0` subject to `l ≤ Az ≤ u`.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub c0: f64,
    pub a: DMatrix<f64>,
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
    pub row_kinds: Vec<RowKind>,
    pub var_map: VarMap,
    pub stability_rows: Vec<StabilityRow>,
}

impl QpProblem {
    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.g.dot(z) + self.c0
    }

    pub fn to_qp(&self) -> Result<Qp> {
        self.to_qp_with_margin(0.0)
    }

    /// As [`to_qp`](Self::to_qp), with the input-bound and drift rows
    /// tightened by `margin·(1 + ‖row‖₁)`. A solution whose residuals are
    /// within `margin` then satisfies those rows of the original problem
    /// even after its auxiliaries are re-derived from the policy.
    pub fn to_qp_with_margin(&self, margin: f64) -> Result<Qp> {
        let (mut lo, mut hi) = (self.lo.clone(), self.hi.clone());
        if margin > 0.0 {
            for (i, kind) in self.row_kinds.iter().enumerate() {
                if matches!(kind, RowKind::InputBound(_) | RowKind::Stability(_)) {
                    let back_off = margin * (1.0 + self.a.row(i).abs().sum());
                    lo[i] += back_off;
                    hi[i] -= back_off;
                }
            }
        }
        Qp::new(self.h.clone(), self.g.clone(), self.a.clone(), lo, hi)
    }

    /// Largest constraint violation at `z`.
    pub fn violation(&self, z: &DVector<f64>) -> f64 {
        let az = &self.a * z;
        (0..az.len()).map(|i| (self.lo[i] - az[i]).max(az[i] - self.hi[i]).max(0.0)).fold(0.0, f64::max)
    }

    /// Plain-text sparse triplets: `P`, `q`, `A`, bounds.
    pub fn to_triplets(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# n {} m {} c0 {:e}", self.g.len(), self.lo.len(), self.c0);
        for j in 0..self.h.ncols() {
            for i in 0..=j {
                if self.h[(i, j)] != 0.0 {
                    let _ = writeln!(s, "P {i} {j} {:e}", self.h[(i, j)]);
                }
            }
        }
        for (i, v) in self.g.iter().enumerate() {
            if *v != 0.0 {
                let _ = writeln!(s, "q {i} {v:e}");
            }
        }
        for i in 0..self.a.nrows() {
            for j in 0..self.a.ncols() {
                if self.a[(i, j)] != 0.0 {
                    let _ = writeln!(s, "A {i} {j} {:e}", self.a[(i, j)]);
                }
            }
        }
        for i in 0..self.lo.len() {
            let _ = writeln!(s, "b {i} {:e} {:e}", self.lo[i], self.hi[i]);
        }
        s
    }
}

/// Quadratic objective `(H, g, c0)` of the expected horizon cost plus the
/// regularizer.
pub fn build_objective(
    moments: &MomentSet,
    lifted: &LiftedDynamics,
    x: &DVector<f64>,
    mu: f64,
    vm: &VarMap,
) -> Result<(DMatrix<f64>, DVector<f64>, f64)> {
    if mu < 0.0 || !mu.is_finite() {
        return Err(Error::InvalidArgument(format!("mu must be finite and nonnegative, got {mu}")));
    }
    let (n, m, d) = (lifted.n, lifted.m, lifted.d);
    let mn = m * n;
    let mut h = DMatrix::zeros(vm.len, vm.len);
    let mut g = DVector::zeros(vm.len);

    // Ξ block: Ξᵀ ℒ Ξ + (ℳ 𝒜 x)ᵀ Ξ, restricted to the variables present.
    let lin = &moments.cal_m * (&lifted.cal_a * x);
    let xi_idx: Vec<usize> = (0..mn).chain(vm.lambda_pos.iter().map(|&(r, c)| lambda_xi_index(r, c, n, m))).collect();
    for (a, &ia) in xi_idx.iter().enumerate() {
        g[a] = lin[ia];
        for (b, &ib) in xi_idx.iter().enumerate() {
            h[(a, b)] = 2.0 * moments.cal_l[(ia, ib)];
        }
    }

    // Θ block: tr(Θᵀ Σ_S Θ Σ_e) + 2 tr(Θᵀ μ_Sᵀ ℬᵀ 𝒬 𝒟 Σ′_e).
    if !vm.theta_pos.is_empty() {
        let sigma_s = &moments.channel.sigma_s;
        let sigma_e = &moments.noise.sigma_e;
        let lin_theta = moments.channel.mu_s.transpose() * lifted.cal_b.transpose() * &lifted.cal_q * &lifted.cal_d * &moments.noise.sigma_e_prime;
        let t0 = vm.theta_start;
        for (a, &(i, j)) in vm.theta_pos.iter().enumerate() {
            g[t0 + a] = 2.0 * lin_theta[(i, j)];
            for (b, &(k, l)) in vm.theta_pos.iter().enumerate() {
                h[(t0 + a, t0 + b)] = 2.0 * sigma_s[(i, k)] * sigma_e[(j, l)];
            }
        }
    }
    let _ = d;

    if let Some(e) = vm.epi_start {
        for k in 0..n {
            g[e + k] = mu;
        }
    }
    let ax = &lifted.cal_a * x;
    let c0 = ax.dot(&(&lifted.cal_q * &ax))
        + (lifted.cal_d.transpose() * &lifted.cal_q * &lifted.cal_d).component_mul(&moments.noise.sigma_w).sum();
    Ok((linalg::symmetrize(&h), g, c0))
}

/// Index inside `Ξ` of the free `Λ` entry at `(row, col)`.
fn lambda_xi_index(row: usize, col: usize, n: usize, m: usize) -> usize {
    // columns before `col` contribute (n - c - 1) m entries each
    let before: usize = (0..col).map(|c| (n - c - 1) * m).sum();
    m * n + before + (row - (col + 1) * m)
}

fn input_bound_rows(vm: &VarMap, u_max: f64, phi_max: f64) -> Vec<(Row, RowKind)> {
    let mn = vm.m * vm.n;
    let mut rows = Vec::new();
    let inf = f64::INFINITY;
    for i in 0..mn {
        let mut coef = vec![(vm.h_start + i, 1.0)];
        for (k, &(r, _)) in vm.lambda_pos.iter().enumerate() {
            if r == i {
                coef.push((vm.abs_lambda_start + k, 0.5));
            }
        }
        for (k, &(r, _)) in vm.theta_pos.iter().enumerate() {
            if r == i {
                coef.push((vm.abs_theta_start + k, phi_max));
            }
        }
        rows.push((Row { coef, lo: -inf, hi: u_max }, RowKind::InputBound(i)));
    }
    for i in 0..mn {
        let mut inner = vec![(vm.eta + i, 1.0)];
        for (k, &(r, _)) in vm.lambda_pos.iter().enumerate() {
            if r == i {
                inner.push((vm.lambda_start + k, 0.5));
            }
        }
        // h_i ≥ |inner|  ⇔  −∞ ≤ inner − h_i ≤ 0  and  0 ≤ inner + h_i ≤ ∞
        let mut minus = inner.clone();
        minus.push((vm.h_start + i, -1.0));
        let mut plus = inner;
        plus.push((vm.h_start + i, 1.0));
        rows.push((Row { coef: minus, lo: -inf, hi: 0.0 }, RowKind::AbsEta(i)));
        rows.push((Row { coef: plus, lo: 0.0, hi: inf }, RowKind::AbsEta(i)));
    }
    for k in 0..vm.lambda_pos.len() {
        let (v, a) = (vm.lambda_start + k, vm.abs_lambda_start + k);
        rows.push((Row { coef: vec![(v, 1.0), (a, -1.0)], lo: -inf, hi: 0.0 }, RowKind::AbsLambda(k)));
        rows.push((Row { coef: vec![(v, 1.0), (a, 1.0)], lo: 0.0, hi: inf }, RowKind::AbsLambda(k)));
    }
    for k in 0..vm.theta_pos.len() {
        let (v, a) = (vm.theta_start + k, vm.abs_theta_start + k);
        rows.push((Row { coef: vec![(v, 1.0), (a, -1.0)], lo: -inf, hi: 0.0 }, RowKind::AbsTheta(k)));
        rows.push((Row { coef: vec![(v, 1.0), (a, 1.0)], lo: 0.0, hi: inf }, RowKind::AbsTheta(k)));
    }
    rows
}

/// `s_k ≥ |entry|` for every entry of row `k` of `F̂`. Gain entries reuse
/// their absolute-value auxiliaries: `a ≤ s_k`.
fn epigraph_rows(vm: &VarMap) -> Vec<(Row, RowKind)> {
    let Some(e) = vm.epi_start else { return Vec::new() };
    let inf = f64::INFINITY;
    let mut rows = Vec::new();
    for k in 0..vm.n {
        let s = e + k;
        for r in k * vm.m..(k + 1) * vm.m {
            rows.push((Row { coef: vec![(vm.eta + r, 1.0), (s, -1.0)], lo: -inf, hi: 0.0 }, RowKind::Epigraph(k)));
            rows.push((Row { coef: vec![(vm.eta + r, 1.0), (s, 1.0)], lo: 0.0, hi: inf }, RowKind::Epigraph(k)));
        }
        for (j, &(r, _)) in vm.lambda_pos.iter().enumerate() {
            if r / vm.m == k {
                rows.push((Row { coef: vec![(vm.abs_lambda_start + j, 1.0), (s, -1.0)], lo: -inf, hi: 0.0 }, RowKind::Epigraph(k)));
            }
        }
        for (j, &(r, _)) in vm.theta_pos.iter().enumerate() {
            if r / vm.m == k {
                rows.push((Row { coef: vec![(vm.abs_theta_start + j, 1.0), (s, -1.0)], lo: -inf, hi: 0.0 }, RowKind::Epigraph(k)));
            }
        }
    }
    rows
}

fn stability_qp_rows(vm: &VarMap, rows: &[StabilityRow]) -> Vec<(Row, RowKind)> {
    rows.iter()
        .enumerate()
        .map(|(idx, sr)| {
            let mut coef: Vec<(usize, f64)> = (0..sr.weights.len()).map(|r| (vm.eta + r, sr.weights[r])).collect();
            for (k, &(r, _)) in vm.lambda_pos.iter().enumerate() {
                if r < sr.weights.len() {
                    coef.push((vm.lambda_start + k, sr.weights[r] * sr.p));
                }
            }
            let (lo, hi) = if sr.upper { (f64::NEG_INFINITY, -sr.zeta) } else { (sr.zeta, f64::INFINITY) };
            (Row { coef, lo, hi }, RowKind::Stability(idx))
        })
        .collect()
}

pub fn build_problem(
    moments: &MomentSet,
    lifted: &LiftedDynamics,
    x: &DVector<f64>,
    cfg: &OcpConfig,
    stability: Option<&StabilityContext<'_>>,
) -> Result<QpProblem> {
    if !(cfg.u_max > 0.0 && cfg.phi_max > 0.0) {
        return Err(Error::InvalidArgument("u_max and phi_max must be positive".into()));
    }
    if x.len() != lifted.d {
        return Err(Error::DimensionMismatch(format!("state of length {} for d={}", x.len(), lifted.d)));
    }
    let vm = VarMap::new(lifted.n, lifted.m, lifted.d, cfg.structure, cfg.mu > 0.0);
    let (h, g, c0) = build_objective(moments, lifted, x, cfg.mu, &vm)?;
    let stability_rows = match stability {
        Some(ctx) => build_stability_constraints(ctx.dec, ctx.reach, &ctx.spec, x, moments.channel.p_design, lifted.n)?,
        None => Vec::new(),
    };
    let mut rows = input_bound_rows(&vm, cfg.u_max, cfg.phi_max);
    rows.extend(epigraph_rows(&vm));
    rows.extend(stability_qp_rows(&vm, &stability_rows));
    let mut a = DMatrix::zeros(rows.len(), vm.len);
    let mut lo = DVector::zeros(rows.len());
    let mut hi = DVector::zeros(rows.len());
    let mut row_kinds = Vec::with_capacity(rows.len());
    for (i, (row, kind)) in rows.into_iter().enumerate() {
        for (j, v) in row.coef {
            a[(i, j)] += v;
        }
        lo[i] = row.lo;
        hi[i] = row.hi;
        row_kinds.push(kind);
    }
    Ok(QpProblem { h, g, c0, a, lo, hi, row_kinds, var_map: vm, stability_rows })
}

#[derive(Debug, Clone)]
pub struct OcpSolution {
    pub params: PolicyParams,
    pub z: DVector<f64>,
    /// Expected horizon cost (without the regularizer).
    pub expected_cost: f64,
    /// `μ · Σ_k ‖F̂_k‖∞`
    pub regularizer: f64,
    pub stats: qp::Stats,
    /// KKT conditions met to tolerance.
    pub certified: bool,
    /// The solver iterate was pulled toward the fallback point to restore feasibility.
    pub repaired: bool,
}

impl OcpSolution {
    pub fn packed(&self) -> Result<PackedDecision> {
        self.params.pack()
    }
}

const REPAIR_TOL: f64 = 1e-9;

/// Solve the OCP at `x`. A feasible reference point (the drift fallback,
/// or the zero policy without drift rows) warm-starts the solver when no
/// `warm` policy is given, and is used to repair iterates that violate the
/// constraints beyond `REPAIR_TOL · U`.
pub fn solve(
    moments: &MomentSet,
    lifted: &LiftedDynamics,
    x: &DVector<f64>,
    cfg: &OcpConfig,
    stability: Option<&StabilityContext<'_>>,
    warm: Option<&PolicyParams>,
) -> Result<OcpSolution> {
    let problem = build_problem(moments, lifted, x, cfg, stability)?;
    solve_problem(&problem, lifted, x, cfg, stability, warm)
}

pub fn solve_problem(
    problem: &QpProblem,
    lifted: &LiftedDynamics,
    x: &DVector<f64>,
    cfg: &OcpConfig,
    stability: Option<&StabilityContext<'_>>,
    warm: Option<&PolicyParams>,
) -> Result<OcpSolution> {
    let vm = &problem.var_map;
    let reference = match (stability, problem.stability_rows.is_empty()) {
        (Some(ctx), false) => fallback_policy(ctx.dec, ctx.reach, &ctx.spec, x, lifted.n, lifted.d),
        _ => PolicyParams::zeros(lifted.n, lifted.m, lifted.d),
    };
    let z_ref = vm.from_params(&reference);
    let ref_violation = problem.violation(&z_ref);
    if ref_violation > REPAIR_TOL * cfg.u_max {
        return Err(Error::Infeasible(format!(
            "fallback point violates the constraints by {ref_violation:e}; zeta is misconfigured"
        )));
    }
    let z0 = match warm {
        Some(p) => vm.from_params(p),
        None => z_ref.clone(),
    };
    let y0 = DVector::zeros(problem.lo.len());
    let qp = problem.to_qp_with_margin(cfg.settings.tol)?;
    let sol = qp::solve(&qp, &cfg.settings, Some((&z0, &y0)))?;
    if sol.status == qp::Status::PrimalInfeasible {
        return Err(Error::Infeasible("solver reported primal infeasibility".into()));
    }
    let certified = sol.status == qp::Status::Solved;
    // Auxiliaries are re-derived from the policy so reported values are exact.
    let mut z = vm.from_params(&vm.to_params(&sol.x));
    let mut repaired = false;
    if problem.violation(&z) > REPAIR_TOL * cfg.u_max {
        z = repair(problem, &z, &z_ref, REPAIR_TOL * cfg.u_max);
        repaired = true;
    }
    let params = vm.to_params(&z);
    let reg_z = vm.epi_start.map_or(0.0, |_| cfg.mu * params.regularizer());
    let full = problem.objective(&z);
    let expected_cost = full - vm.epi_start.map_or(0.0, |e| cfg.mu * z.rows(e, vm.n).sum());
    Ok(OcpSolution { params, z, expected_cost, regularizer: reg_z, stats: sol.stats, certified, repaired })
}

/// Smallest step from `z` toward the feasible `z_ref` that restores
/// feasibility (the constraint set is convex, so bisection applies).
fn repair(problem: &QpProblem, z: &DVector<f64>, z_ref: &DVector<f64>, tol: f64) -> DVector<f64> {
    let vm = &problem.var_map;
    let tighten = |z: &DVector<f64>| vm.from_params(&vm.to_params(z));
    let at = |t: f64| tighten(&(z * (1.0 - t) + z_ref * t));
    if problem.violation(&at(0.0)) <= tol {
        return at(0.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if problem.violation(&at(mid)) <= tol {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    at(hi)
}

/// Previous policy advanced by `shift` stages, as a warm start: offsets and
/// gains move up, and gains on noise/dropouts already realized are dropped.
pub fn shift_policy(params: &PolicyParams, shift: usize) -> PolicyParams {
    let (n, m, d) = (params.n, params.m, params.d);
    let mut out = PolicyParams::zeros(n, m, d);
    for k in 0..n.saturating_sub(shift) {
        let src = k + shift;
        for r in 0..m {
            out.eta[k * m + r] = params.eta[src * m + r];
            for j in 0..k {
                let sj = j + shift;
                for c in 0..d {
                    out.theta[(k * m + r, j * d + c)] = params.theta[(src * m + r, sj * d + c)];
                }
                out.lambda[(k * m + r, j)] = params.lambda[(src * m + r, sj)];
            }
        }
    }
    out
}
