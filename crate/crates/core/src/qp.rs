//! Dense convex QP solver:
//!
//! ```text
//! minimize ½ xᵀPx + qᵀx   subject to   l ≤ Ax ≤ u
//! ```
//!
//! Operator splitting (ADMM) on the scaled problem with per-row step sizes
//! and adaptive ρ, followed by a polish step that solves the equality QP on
//! the guessed active set. Infinite bounds are allowed.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Qp {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
}

impl Qp {
    pub fn new(p: DMatrix<f64>, q: DVector<f64>, a: DMatrix<f64>, l: DVector<f64>, u: DVector<f64>) -> Result<Self> {
        let n = q.len();
        let m = l.len();
        if p.shape() != (n, n) || a.shape() != (m, n) || u.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "QP with P {:?}, q {}, A {:?}, l {}, u {}",
                p.shape(),
                n,
                a.shape(),
                m,
                u.len()
            )));
        }
        if let Some(i) = (0..m).find(|&i| l[i] > u[i] || l[i].is_nan() || u[i].is_nan()) {
            return Err(Error::InvalidArgument(format!("row {i}: lower bound {} above upper bound {}", l[i], u[i])));
        }
        Ok(Self { p, q, a, l, u })
    }

    pub fn num_vars(&self) -> usize {
        self.q.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.l.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x)
    }

    /// Primal residual `‖Ax − Π(Ax)‖∞`, dual residual `‖Px + q + Aᵀy‖∞` and
    /// duality gap for the pair `(x, y)`. Multiplier components with a sign
    /// that only an infinite bound could support are dropped first, so the
    /// three numbers form a valid certificate.
    pub fn kkt(&self, x: &DVector<f64>, y: &DVector<f64>) -> Kkt {
        let y = DVector::from_fn(y.len(), |i, _| {
            if (y[i] > 0.0 && self.u[i].is_infinite()) || (y[i] < 0.0 && self.l[i].is_infinite()) {
                0.0
            } else {
                y[i]
            }
        });
        let ax = &self.a * x;
        let primal = (0..ax.len())
            .map(|i| (ax[i] - ax[i].clamp(self.l[i], self.u[i])).abs())
            .fold(0.0, f64::max);
        let px = &self.p * x;
        let support: f64 = (0..y.len())
            .map(|i| {
                if y[i] > 0.0 {
                    y[i] * self.u[i]
                } else if y[i] < 0.0 {
                    y[i] * self.l[i]
                } else {
                    0.0
                }
            })
            .sum();
        let aty = self.a.transpose() * &y;
        let dual = (&px + &self.q + &aty).amax();
        let (xpx, qx) = (x.dot(&px), self.q.dot(x));
        let gap = (xpx + qx + support).abs();
        Kkt {
            primal,
            dual,
            gap,
            primal_scale: ax.amax(),
            dual_scale: px.amax().max(aty.amax()).max(self.q.amax()),
            gap_scale: xpx.abs().max(qx.abs()).max(support.abs()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Kkt {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    /// Magnitudes the residuals are measured against.
    pub primal_scale: f64,
    pub dual_scale: f64,
    pub gap_scale: f64,
}

impl Kkt {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.gap)
    }

    /// Largest residual in units of its tolerance: `abs` for feasibility,
    /// `abs + rel·scale` for stationarity and the gap. `≤ 1` certifies
    /// optimality.
    pub fn score(&self, abs: f64, rel: f64) -> f64 {
        (self.primal / abs)
            .max(self.dual / (abs + rel * self.dual_scale))
            .max(self.gap / (abs + rel * self.gap_scale))
    }
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    /// Absolute tolerance on the unscaled KKT residuals and gap.
    pub tol: f64,
    /// Relative tolerance on the same residuals; also gates polishing.
    pub eps_rel: f64,
    pub max_iter: usize,
    pub check_every: usize,
    pub scaling_iters: usize,
    pub adaptive_rho: bool,
    pub polish: bool,
    /// Regularization of the polish KKT system.
    pub polish_delta: f64,
    pub polish_refine: usize,
    /// Also try polishing every this many iterations, converged or not.
    pub polish_every: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            tol: 1e-6,
            eps_rel: 1e-6,
            max_iter: 20_000,
            check_every: 25,
            scaling_iters: 10,
            adaptive_rho: true,
            polish: true,
            polish_delta: 1e-9,
            polish_refine: 5,
            polish_every: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Solved,
    /// Iteration limit hit; the best iterate is returned uncertified.
    MaxIterations,
    PrimalInfeasible,
}

#[derive(Debug, Clone)]
pub struct Stats {
    pub iterations: usize,
    pub kkt: Kkt,
    pub polished: bool,
    pub rho_updates: usize,
    pub final_rho: f64,
    pub regularization: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub objective: f64,
    pub status: Status,
    pub stats: Stats,
}

impl Solution {
    pub fn into_result(self) -> Result<Self> {
        match self.status {
            Status::Solved => Ok(self),
            Status::MaxIterations => Err(Error::MaxIterations {
                iterations: self.stats.iterations,
                primal_residual: self.stats.kkt.primal,
                dual_residual: self.stats.kkt.dual,
            }),
            Status::PrimalInfeasible => Err(Error::Infeasible("primal infeasibility certificate found".into())),
        }
    }
}

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
const INF_BOUND: f64 = 1e20;

struct Scaled {
    p: DMatrix<f64>,
    q: DVector<f64>,
    a: DMatrix<f64>,
    l: DVector<f64>,
    u: DVector<f64>,
    d: DVector<f64>,
    e: DVector<f64>,
    c: f64,
}

fn col_inf_norm(m: &DMatrix<f64>, j: usize) -> f64 {
    m.column(j).amax()
}

fn scale_problem(qp: &Qp, iters: usize) -> Scaled {
    let (n, m) = (qp.num_vars(), qp.num_constraints());
    let mut p = qp.p.clone();
    let mut a = qp.a.clone();
    let mut d = DVector::from_element(n, 1.0);
    let mut e = DVector::from_element(m, 1.0);
    let guard = |v: f64| if v < 1e-4 { 1.0 } else { v.min(1e4) };
    for _ in 0..iters {
        let dd = DVector::from_fn(n, |j, _| 1.0 / guard(col_inf_norm(&p, j).max(col_inf_norm(&a, j))).sqrt());
        let ee = DVector::from_fn(m, |i, _| 1.0 / guard(a.row(i).amax()).sqrt());
        for j in 0..n {
            for i in 0..n {
                p[(i, j)] *= dd[i] * dd[j];
            }
            for i in 0..m {
                a[(i, j)] *= ee[i] * dd[j];
            }
        }
        d.component_mul_assign(&dd);
        e.component_mul_assign(&ee);
    }
    let mut q = qp.q.component_mul(&d);
    let mean_p = if n > 0 { (0..n).map(|j| col_inf_norm(&p, j)).sum::<f64>() / n as f64 } else { 1.0 };
    let c = 1.0 / guard(mean_p.max(q.amax()));
    p *= c;
    q *= c;
    let scale_bound = |b: f64, ei: f64| if b.abs() >= INF_BOUND || b.is_infinite() { b.signum() * f64::INFINITY } else { b * ei };
    let l = DVector::from_fn(m, |i, _| scale_bound(qp.l[i], e[i]));
    let u = DVector::from_fn(m, |i, _| scale_bound(qp.u[i], e[i]));
    Scaled { p, q, a, l, u, d, e, c }
}

fn row_rhos(l: &DVector<f64>, u: &DVector<f64>, rho: f64) -> DVector<f64> {
    DVector::from_fn(l.len(), |i, _| {
        if l[i].is_infinite() && u[i].is_infinite() {
            RHO_MIN
        } else if (u[i] - l[i]).abs() < 1e-12 {
            RHO_EQ_FACTOR * rho
        } else {
            rho
        }
    })
}

fn factor(s: &Scaled, sigma: f64, rho: &DVector<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let n = s.q.len();
    let mut k = s.p.clone() + DMatrix::identity(n, n) * sigma;
    let mut ra = s.a.clone();
    for i in 0..ra.nrows() {
        ra.row_mut(i).scale_mut(rho[i]);
    }
    k += s.a.transpose() * ra;
    Cholesky::new(k).ok_or_else(|| Error::Numerical("ADMM system not positive definite (P not PSD?)".into()))
}

fn project(z: &DVector<f64>, l: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(z.len(), |i, _| z[i].max(l[i]).min(u[i]))
}

struct Iterate {
    x: DVector<f64>,
    y: DVector<f64>,
}

fn unscale(s: &Scaled, xs: &DVector<f64>, ys: &DVector<f64>) -> Iterate {
    Iterate { x: xs.component_mul(&s.d), y: ys.component_mul(&s.e) / s.c }
}

pub fn solve(qp: &Qp, settings: &Settings, warm: Option<(&DVector<f64>, &DVector<f64>)>) -> Result<Solution> {
    let (n, m) = (qp.num_vars(), qp.num_constraints());
    if n == 0 {
        let x = DVector::zeros(0);
        let y = DVector::zeros(m);
        let kkt = qp.kkt(&x, &y);
        let status = if kkt.primal > settings.tol { Status::PrimalInfeasible } else { Status::Solved };
        return Ok(Solution {
            objective: 0.0,
            x,
            y,
            status,
            stats: Stats { iterations: 0, kkt, polished: false, rho_updates: 0, final_rho: settings.rho, regularization: settings.polish_delta },
        });
    }
    let s = scale_problem(qp, settings.scaling_iters);
    let mut rho = settings.rho;
    let mut rho_vec = row_rhos(&s.l, &s.u, rho);
    let mut chol = factor(&s, settings.sigma, &rho_vec)?;

    let (mut x, mut y) = match warm {
        Some((x0, y0)) if x0.len() == n && y0.len() == m => (x0.component_div(&s.d), y0.component_div(&s.e) * s.c),
        _ => (DVector::zeros(n), DVector::zeros(m)),
    };
    let mut z = project(&(&s.a * &x), &s.l, &s.u);
    let at = s.a.transpose();

    let score = |k: &Kkt| k.score(settings.tol, settings.eps_rel);
    let mut best: Option<(Iterate, Kkt)> = None;
    let mut rho_updates = 0;
    let mut polished = false;
    let mut iterations = 0;
    let mut last_polish_at = usize::MAX;
    let mut x_prev = x.clone();
    let mut y_prev = y.clone();

    let alpha = settings.alpha;
    let mut rhs = DVector::zeros(n);
    let mut zt = DVector::zeros(m);
    let mut tmp = DVector::zeros(m);
    for it in 1..=settings.max_iter {
        iterations = it;
        // x̃ solves the regularized KKT system; then relax and project.
        tmp.copy_from(&z);
        tmp.component_mul_assign(&rho_vec);
        tmp -= &y;
        rhs.copy_from(&x);
        rhs *= settings.sigma;
        rhs -= &s.q;
        rhs.gemv(1.0, &at, &tmp, 1.0);
        chol.solve_mut(&mut rhs);
        zt.gemv(1.0, &s.a, &rhs, 0.0);
        x *= 1.0 - alpha;
        x.axpy(alpha, &rhs, 1.0);
        for i in 0..m {
            let relaxed = alpha * zt[i] + (1.0 - alpha) * z[i];
            let z_new = (relaxed + y[i] / rho_vec[i]).max(s.l[i]).min(s.u[i]);
            y[i] += rho_vec[i] * (relaxed - z_new);
            z[i] = z_new;
        }

        if it % settings.check_every != 0 && it != settings.max_iter {
            continue;
        }
        let cur = unscale(&s, &x, &y);
        let kkt = qp.kkt(&cur.x, &cur.y);
        if best.as_ref().is_none_or(|(_, b)| score(&kkt) < score(b)) {
            best = Some((Iterate { x: cur.x.clone(), y: cur.y.clone() }, kkt));
        }
        let converged = score(&kkt) <= 1.0;
        if converged && settings.polish && last_polish_at != it {
            last_polish_at = it;
            if let Some(p) = polish(qp, &cur, settings) {
                let pk = qp.kkt(&p.x, &p.y);
                if score(&pk) < score(&kkt) {
                    best = Some((p, pk));
                    polished = true;
                }
            }
        }
        if converged {
            break;
        }

        if primal_infeasible(&s, &(&y - &y_prev), settings.tol) {
            let (it_best, kkt_best) = best.unwrap();
            return Ok(finish(qp, it_best, kkt_best, Status::PrimalInfeasible, iterations, false, rho_updates, rho, settings));
        }
        x_prev.copy_from(&x);
        y_prev.copy_from(&y);

        // Scaled residual norms drive both polishing and ρ adaptation.
        let ax = &s.a * &x;
        let px = &s.p * &x;
        let aty = &at * &y;
        let r_prim = (&ax - &z).amax();
        let r_dual = (&px + &s.q + &aty).amax();
        let prim_scale = ax.amax().max(z.amax()).max(1e-12);
        let dual_scale = px.amax().max(aty.amax()).max(s.q.amax()).max(1e-12);

        let loose = r_prim <= settings.eps_rel * (1.0 + prim_scale) && r_dual <= settings.eps_rel * (1.0 + dual_scale);
        let try_polish = settings.polish && last_polish_at != it && (loose || it % settings.polish_every.max(1) == 0);
        if try_polish {
            last_polish_at = it;
            if let Some(p) = polish(qp, &cur, settings) {
                let pk = qp.kkt(&p.x, &p.y);
                if score(&pk) < best.as_ref().map_or(f64::INFINITY, |(_, b)| score(b)) {
                    best = Some((p, pk));
                    polished = true;
                }
                if score(&pk) <= 1.0 {
                    break;
                }
            }
        }

        if settings.adaptive_rho {
            let ratio = ((r_prim / prim_scale) / (r_dual / dual_scale).max(1e-30)).sqrt();
            let new_rho = (rho * ratio).clamp(RHO_MIN, RHO_MAX);
            if new_rho.is_finite() && (new_rho > 5.0 * rho || new_rho < rho / 5.0) {
                rho = new_rho;
                rho_vec = row_rhos(&s.l, &s.u, rho);
                chol = factor(&s, settings.sigma, &rho_vec)?;
                rho_updates += 1;
            }
        }
    }

    let (it_best, kkt_best) = best.unwrap_or_else(|| {
        let cur = unscale(&s, &x, &y);
        let k = qp.kkt(&cur.x, &cur.y);
        (cur, k)
    });
    let status = if score(&kkt_best) <= 1.0 { Status::Solved } else { Status::MaxIterations };
    let polished = polished && status == Status::Solved;
    Ok(finish(qp, it_best, kkt_best, status, iterations, polished, rho_updates, rho, settings))
}

#[allow(clippy::too_many_arguments)]
fn finish(qp: &Qp, it: Iterate, kkt: Kkt, status: Status, iterations: usize, polished: bool, rho_updates: usize, rho: f64, settings: &Settings) -> Solution {
    Solution {
        objective: qp.objective(&it.x),
        x: it.x,
        y: it.y,
        status,
        stats: Stats { iterations, kkt, polished, rho_updates, final_rho: rho, regularization: settings.polish_delta },
    }
}

/// `δy` certifies infeasibility if `Aᵀδy ≈ 0` and the support function of
/// the bounds at `δy` is negative.
fn primal_infeasible(s: &Scaled, dy: &DVector<f64>, tol: f64) -> bool {
    let norm = dy.amax();
    if norm <= 1e-12 {
        return false;
    }
    let eps = tol.max(1e-9) * norm;
    let aty = (s.a.transpose() * dy).component_mul(&s.d).amax();
    if aty > eps {
        return false;
    }
    let mut support = 0.0;
    for i in 0..dy.len() {
        if dy[i] > 0.0 {
            if s.u[i].is_infinite() {
                return false;
            }
            support += s.u[i] * dy[i];
        } else if dy[i] < 0.0 {
            if s.l[i].is_infinite() {
                return false;
            }
            support += s.l[i] * dy[i];
        }
    }
    support < -eps
}

/// Solve the equality-constrained QP on the active set guessed from
/// `(x, y)`, with regularization and iterative refinement.
fn polish(qp: &Qp, cur: &Iterate, settings: &Settings) -> Option<Iterate> {
    let n = qp.num_vars();
    let ax = &qp.a * &cur.x;
    let mut active = Vec::new();
    for i in 0..qp.num_constraints() {
        let lower = qp.l[i].is_finite() && ax[i] - qp.l[i] < -cur.y[i];
        let upper = qp.u[i].is_finite() && qp.u[i] - ax[i] < cur.y[i];
        if lower {
            active.push((i, qp.l[i]));
        } else if upper {
            active.push((i, qp.u[i]));
        }
    }
    let k = active.len();
    let dim = n + k;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&qp.p);
    for (r, &(i, _)) in active.iter().enumerate() {
        for j in 0..n {
            kkt[(n + r, j)] = qp.a[(i, j)];
            kkt[(j, n + r)] = qp.a[(i, j)];
        }
    }
    // The proximal term δ/2‖x − x̂‖² pins variables the active-set KKT
    // system leaves undetermined (e.g. zero-cost slacks) at the iterate.
    for j in 0..n {
        kkt[(j, j)] += settings.polish_delta;
    }
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, n).copy_from(&(&cur.x * settings.polish_delta - &qp.q));
    for (r, &(_, b)) in active.iter().enumerate() {
        rhs[n + r] = b;
    }
    let mut reg = kkt.clone();
    for r in 0..k {
        reg[(n + r, n + r)] -= settings.polish_delta;
    }
    let lu = reg.lu();
    let mut sol = lu.solve(&rhs)?;
    for _ in 0..settings.polish_refine {
        let res = &rhs - &kkt * &sol;
        if res.amax() < 1e-14 {
            break;
        }
        sol += lu.solve(&res)?;
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x = sol.rows(0, n).into_owned();
    let mut y = DVector::zeros(qp.num_constraints());
    for (r, &(i, _)) in active.iter().enumerate() {
        y[i] = sol[n + r];
    }
    Some(Iterate { x, y })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp_1d(p: f64, q: f64, lo: f64, hi: f64) -> Qp {
        Qp::new(
            DMatrix::from_element(1, 1, p),
            DVector::from_element(1, q),
            DMatrix::identity(1, 1),
            DVector::from_element(1, lo),
            DVector::from_element(1, hi),
        )
        .unwrap()
    }

    #[test]
    fn scalar_clipped_minimizer() {
        for (p, q, lo, hi) in [(2.0, -4.0, -1.0, 1.0), (2.0, -1.0, -1.0, 1.0), (0.5, 3.0, -2.0, 5.0), (1e3, 1e3, -0.3, 0.3)] {
            let s = solve(&qp_1d(p, q, lo, hi), &Settings::default(), None).unwrap().into_result().unwrap();
            let want = (-q / p).clamp(lo, hi);
            assert!((s.x[0] - want).abs() < 1e-8, "{p} {q}: {} vs {want}", s.x[0]);
        }
    }

    #[test]
    fn unconstrained_matches_linear_solve() {
        let p = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let q = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let a = DMatrix::zeros(0, 3);
        let qp = Qp::new(p.clone(), q.clone(), a, DVector::zeros(0), DVector::zeros(0)).unwrap();
        let s = solve(&qp, &Settings::default(), None).unwrap().into_result().unwrap();
        let want = p.lu().solve(&(-q)).unwrap();
        assert!((s.x - want).amax() < 1e-9);
    }

    #[test]
    fn linear_program_with_free_rows() {
        // minimize -x0 - x1 subject to x0 + x1 <= 1, x >= 0, and an unbounded row
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, -1.0]);
        let inf = f64::INFINITY;
        let qp = Qp::new(
            DMatrix::zeros(2, 2),
            DVector::from_vec(vec![-1.0, -2.0]),
            a,
            DVector::from_vec(vec![-inf, 0.0, 0.0, -inf]),
            DVector::from_vec(vec![1.0, inf, inf, inf]),
        )
        .unwrap();
        let s = solve(&qp, &Settings::default(), None).unwrap();
        let s = s.into_result().unwrap();
        assert!((s.x[0]).abs() < 1e-7 && (s.x[1] - 1.0).abs() < 1e-7, "{:?}", s.x);
        assert!((s.objective + 2.0).abs() < 1e-7);
    }

    #[test]
    fn detects_primal_infeasibility() {
        let a = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let qp = Qp::new(
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            a,
            DVector::from_vec(vec![1.0, -f64::INFINITY]),
            DVector::from_vec(vec![f64::INFINITY, -1.0]),
        )
        .unwrap();
        let s = solve(&qp, &Settings::default(), None).unwrap();
        assert_eq!(s.status, Status::PrimalInfeasible);
        assert!(matches!(s.into_result(), Err(Error::Infeasible(_))));
    }

    #[test]
    fn iteration_limit_is_reported() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-3]);
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let qp = Qp::new(p, DVector::from_vec(vec![-1.0, 5.0]), a, DVector::from_element(1, 3.0), DVector::from_element(1, 3.0)).unwrap();
        let settings = Settings { max_iter: 3, polish: false, check_every: 1, ..Settings::default() };
        let s = solve(&qp, &settings, None).unwrap();
        assert_eq!(s.status, Status::MaxIterations);
        assert!(matches!(s.into_result(), Err(Error::MaxIterations { iterations: 3, .. })));
    }

    #[test]
    fn equality_constraints_are_met() {
        let p = DMatrix::identity(3, 3);
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 1.0, -1.0, 0.0]);
        let qp = Qp::new(p, DVector::zeros(3), a, DVector::from_vec(vec![3.0, 0.0]), DVector::from_vec(vec![3.0, 0.0])).unwrap();
        let s = solve(&qp, &Settings::default(), None).unwrap().into_result().unwrap();
        assert!((s.x - DVector::from_element(3, 1.0)).amax() < 1e-8);
        assert!(s.stats.kkt.score(1e-6, 1e-6) <= 1.0);
    }

    #[test]
    fn warm_start_from_solution_converges_immediately() {
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let a = DMatrix::identity(2, 2);
        let qp = Qp::new(p, DVector::from_vec(vec![-3.0, 2.0]), a, DVector::from_element(2, -1.0), DVector::from_element(2, 1.0)).unwrap();
        let cold = solve(&qp, &Settings::default(), None).unwrap().into_result().unwrap();
        let warm = solve(&qp, &Settings::default(), Some((&cold.x, &cold.y))).unwrap().into_result().unwrap();
        assert!(warm.stats.iterations <= cold.stats.iterations);
        assert!((warm.objective - cold.objective).abs() < 1e-9);
    }

    #[test]
    fn rejects_inverted_bounds() {
        assert!(Qp::new(DMatrix::zeros(1, 1), DVector::zeros(1), DMatrix::identity(1, 1), DVector::from_element(1, 1.0), DVector::from_element(1, 0.0)).is_err());
    }
}
