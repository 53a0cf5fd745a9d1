//! Affine policy `u = η + Θ e(w) + Λ ν` with strictly lower block-triangular
//! gains, its packed decision vector, and the row-wise ℓ1/ℓ∞ regularizer.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOL_SPARSE: f64 = 1e-6;
const STRUCTURE_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    /// Offsets, length `mN`.
    pub eta: DVector<f64>,
    /// Saturated-disturbance gain, `mN × d(N-1)`.
    pub theta: DMatrix<f64>,
    /// Dropout gain, `mN × (N-1)`.
    pub lambda: DMatrix<f64>,
}

/// `Ξ = [η; Λ̃]` plus the free entries of `Θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedDecision {
    pub xi: DVector<f64>,
    pub theta_free: DVector<f64>,
}

/// Number of free `Λ` entries, `mN(N-1)/2`.
pub fn lambda_free_len(n: usize, m: usize) -> usize {
    m * n * n.saturating_sub(1) / 2
}

/// Number of free `Θ` entries, `m d N(N-1)/2`.
pub fn theta_free_len(n: usize, m: usize, d: usize) -> usize {
    lambda_free_len(n, m) * d
}

/// Total decision count `mN(1 + (N-1)(d+1)/2)`.
pub fn decision_count(n: usize, m: usize, d: usize) -> usize {
    m * n + lambda_free_len(n, m) + theta_free_len(n, m, d)
}

/// Position of each free `Θ` entry, in packed order (block-row-major,
/// row-major inside each `m × d` block).
pub fn theta_free_positions(n: usize, m: usize, d: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(theta_free_len(n, m, d));
    for k in 1..n {
        for j in 0..k {
            for r in 0..m {
                for c in 0..d {
                    out.push((k * m + r, j * d + c));
                }
            }
        }
    }
    out
}

/// Position of each free `Λ` entry, in `Λ̃` order (column by column, tail rows).
pub fn lambda_free_positions(n: usize, m: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(lambda_free_len(n, m));
    for col in 0..n.saturating_sub(1) {
        for row in (col + 1) * m..n * m {
            out.push((row, col));
        }
    }
    out
}

impl PolicyParams {
    pub fn zeros(n: usize, m: usize, d: usize) -> Self {
        let h = n.saturating_sub(1);
        Self {
            n,
            m,
            d,
            eta: DVector::zeros(m * n),
            theta: DMatrix::zeros(m * n, d * h),
            lambda: DMatrix::zeros(m * n, h),
        }
    }

    fn check_dims(&self) -> Result<()> {
        let (mn, h) = (self.m * self.n, self.n.saturating_sub(1));
        if self.eta.len() != mn
            || self.theta.shape() != (mn, self.d * h)
            || self.lambda.shape() != (mn, h)
        {
            return Err(Error::DimensionMismatch(format!(
                "policy with N={}, m={}, d={} has eta {}, theta {:?}, lambda {:?}",
                self.n,
                self.m,
                self.d,
                self.eta.len(),
                self.theta.shape(),
                self.lambda.shape()
            )));
        }
        Ok(())
    }

    /// Errors if a structural zero holds a nonzero value.
    pub fn check_structure(&self) -> Result<()> {
        self.check_dims()?;
        let (m, d) = (self.m, self.d);
        let violation = |mat: &DMatrix<f64>, zero: &dyn Fn(usize, usize) -> bool| {
            (0..mat.nrows())
                .flat_map(|r| (0..mat.ncols()).map(move |c| (r, c)))
                .find(|&(r, c)| zero(r, c) && mat[(r, c)].abs() > STRUCTURE_TOL)
        };
        if let Some((row, col)) = violation(&self.theta, &|r, c| c / d >= r / m) {
            return Err(Error::StructureViolation { matrix: "Theta", row, col, value: self.theta[(row, col)] });
        }
        if let Some((row, col)) = violation(&self.lambda, &|r, c| c >= r / m) {
            return Err(Error::StructureViolation { matrix: "Lambda", row, col, value: self.lambda[(row, col)] });
        }
        Ok(())
    }

    pub fn pack(&self) -> Result<PackedDecision> {
        self.check_structure()?;
        let lam = lambda_free_positions(self.n, self.m);
        let mut xi = DVector::zeros(self.eta.len() + lam.len());
        xi.rows_mut(0, self.eta.len()).copy_from(&self.eta);
        for (k, &(r, c)) in lam.iter().enumerate() {
            xi[self.eta.len() + k] = self.lambda[(r, c)];
        }
        let theta_free = DVector::from_iterator(
            theta_free_len(self.n, self.m, self.d),
            theta_free_positions(self.n, self.m, self.d).into_iter().map(|(r, c)| self.theta[(r, c)]),
        );
        Ok(PackedDecision { xi, theta_free })
    }

    pub fn unpack(packed: &PackedDecision, n: usize, m: usize, d: usize) -> Result<Self> {
        let lam = lambda_free_positions(n, m);
        let th = theta_free_positions(n, m, d);
        if packed.xi.len() != m * n + lam.len() || packed.theta_free.len() != th.len() {
            return Err(Error::DimensionMismatch(format!(
                "packed lengths ({}, {}) do not match N={n}, m={m}, d={d}",
                packed.xi.len(),
                packed.theta_free.len()
            )));
        }
        let mut p = Self::zeros(n, m, d);
        p.eta.copy_from(&packed.xi.rows(0, m * n));
        for (k, (r, c)) in lam.into_iter().enumerate() {
            p.lambda[(r, c)] = packed.xi[m * n + k];
        }
        for (k, (r, c)) in th.into_iter().enumerate() {
            p.theta[(r, c)] = packed.theta_free[k];
        }
        Ok(p)
    }

    /// `u = η + Θ e + Λ ν`, all `N` blocks.
    pub fn evaluate_controls(&self, sat_noise: &DVector<f64>, dropouts: &[u8]) -> Result<DVector<f64>> {
        self.check_dims()?;
        let h = self.n.saturating_sub(1);
        if sat_noise.len() != self.d * h || dropouts.len() != h {
            return Err(Error::DimensionMismatch(format!(
                "expected e of length {} and nu of length {h}, got {} and {}",
                self.d * h,
                sat_noise.len(),
                dropouts.len()
            )));
        }
        let nu = DVector::from_iterator(h, dropouts.iter().map(|&v| v as f64));
        Ok(&self.eta + self.feedback(sat_noise, &nu))
    }

    /// `Θ e + Λ ν`; kept separate so protocol maps can scale it as one term.
    pub fn feedback(&self, sat_noise: &DVector<f64>, nu: &DVector<f64>) -> DVector<f64> {
        &self.theta * sat_noise + &self.lambda * nu
    }

    /// Entries of row `i` of `F̂`: every parameter that enters `u_{t+i}`.
    pub fn fhat_row(&self, i: usize) -> Vec<f64> {
        let rows = i * self.m..(i + 1) * self.m;
        let mut out = Vec::new();
        for r in rows {
            out.push(self.eta[r]);
            out.extend(self.theta.row(r).iter());
            out.extend(self.lambda.row(r).iter());
        }
        out
    }

    /// Row ∞-norms of `F̂`.
    pub fn fhat_row_norms(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.fhat_row(i).iter().fold(0.0, |a: f64, v| a.max(v.abs())))
            .collect()
    }

    /// `Σ_i ‖F̂^{(i,:)}‖∞`.
    pub fn regularizer(&self) -> f64 {
        self.fhat_row_norms().iter().sum()
    }

    /// Instants whose whole `F̂` row is below `tol` (the control there is zero).
    pub fn null_control_instants(&self, tol: f64) -> Vec<usize> {
        self.fhat_row_norms()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v <= tol)
            .map(|(i, _)| i)
            .collect()
    }

    /// Column names matching [`PolicyParams::csv_row`].
    pub fn csv_header(n: usize, m: usize, d: usize) -> Vec<String> {
        let mut h: Vec<String> = (0..m * n).map(|i| format!("eta_{i}")).collect();
        h.extend(lambda_free_positions(n, m).into_iter().map(|(r, c)| format!("lambda_{r}_{c}")));
        h.extend(theta_free_positions(n, m, d).into_iter().map(|(r, c)| format!("theta_{r}_{c}")));
        h
    }

    /// Packed order: `η`, `Λ̃`, free `Θ`.
    pub fn csv_row(&self) -> Result<Vec<f64>> {
        let p = self.pack()?;
        Ok(p.xi.iter().chain(p.theta_free.iter()).copied().collect())
    }
}
