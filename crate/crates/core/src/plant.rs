//! LTI plant `x+ = A x + B u + w`, its splitting into an orthogonal part and
//! a Schur-stable part, reachability of the orthogonal part, and per-axis
//! input-bound rescaling.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg;
use crate::stochastics::NoiseSpec;

pub const DEFAULT_UNIT_CIRCLE_TOL: f64 = 1e-8;

/// Eigenvalues closer than this are treated as one (possibly repeated) eigenvalue.
const CLUSTER_TOL: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct PlantModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Box bound on every input coordinate.
    pub u_max: f64,
    pub noise: NoiseSpec,
}

impl PlantModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, u_max: f64, noise: NoiseSpec) -> Result<Self> {
        let d = a.nrows();
        if d == 0 || a.ncols() != d {
            return Err(Error::InvalidModel(format!("A must be square and nonempty, got {}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != d || b.ncols() == 0 {
            return Err(Error::InvalidModel(format!("B must be {d}xm with m >= 1, got {}x{}", b.nrows(), b.ncols())));
        }
        if !(u_max > 0.0) || !u_max.is_finite() {
            return Err(Error::InvalidModel(format!("u_max must be positive, got {u_max}")));
        }
        if noise.dim() != d {
            return Err(Error::InvalidModel(format!("noise covariance must be {d}x{d}")));
        }
        Ok(Self { a, b, u_max, noise })
    }

    pub fn d(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + w
    }
}

/// `A = T blkdiag(A_o, A_s) T⁻¹` with `A_o` orthogonal and `A_s` Schur stable.
///
/// `T` is orthogonal whenever the two invariant subspaces are mutually
/// orthogonal and `A` restricted to the unit-circle subspace is normal
/// (e.g. any orthogonal `A`); otherwise it is a general similarity and
/// `t_inv` must be used to change coordinates.
#[derive(Debug, Clone)]
pub struct OrthoSchurDecomposition {
    pub t: DMatrix<f64>,
    pub t_inv: DMatrix<f64>,
    pub a_o: DMatrix<f64>,
    pub a_s: DMatrix<f64>,
    pub b_o: DMatrix<f64>,
    pub b_s: DMatrix<f64>,
    pub d_o: usize,
    pub d_s: usize,
    pub eigenvalues: Vec<Complex64>,
}

impl OrthoSchurDecomposition {
    /// Orthogonal-part coordinates `x^o` of a state.
    pub fn orthogonal_coords(&self, x: &DVector<f64>) -> DVector<f64> {
        self.t_inv.rows(0, self.d_o) * x
    }

    pub fn t_is_orthogonal(&self) -> bool {
        let n = self.t.nrows();
        (self.t.transpose() * &self.t - DMatrix::identity(n, n)).amax() <= 1e-10
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let d = self.d_o + self.d_s;
        let mut blk = DMatrix::zeros(d, d);
        blk.view_mut((0, 0), (self.d_o, self.d_o)).copy_from(&self.a_o);
        blk.view_mut((self.d_o, self.d_o), (self.d_s, self.d_s)).copy_from(&self.a_s);
        &self.t * blk * &self.t_inv
    }
}

fn cluster(eigs: &[Complex64]) -> Vec<(Complex64, usize)> {
    let mut out: Vec<(Complex64, usize, Complex64)> = Vec::new();
    for &l in eigs {
        match out.iter_mut().find(|(c, _, _)| (c - l).norm() <= CLUSTER_TOL) {
            Some((c, k, sum)) => {
                *k += 1;
                *sum += l;
                *c = *sum / (*k as f64);
            }
            None => out.push((l, 1, l)),
        }
    }
    out.into_iter().map(|(c, k, _)| (c, k)).collect()
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

fn shifted_null_space(m: &DMatrix<f64>, lambda: Complex64) -> DMatrix<Complex64> {
    let n = m.nrows();
    let shifted = to_complex(m) - DMatrix::<Complex64>::identity(n, n) * lambda;
    linalg::complex_null_space(&shifted, 1e-8 * m.norm().max(1.0))
}

/// Split `A` into its unit-circle (orthogonal) and strictly stable parts.
pub fn decompose(model: &PlantModel, unit_circle_tol: f64) -> Result<OrthoSchurDecomposition> {
    let a = &model.a;
    let d = model.d();
    let (mut z, mut t) = linalg::real_schur(a)?;
    let mut eigenvalues = Vec::with_capacity(d);
    for (s, n) in linalg::schur_blocks(&t) {
        eigenvalues.extend(linalg::block_eigenvalues(&t, s, n));
    }
    if let Some(l) = eigenvalues.iter().find(|l| l.norm() > 1.0 + unit_circle_tol) {
        return Err(Error::NotLyapunovStable(format!("eigenvalue {l} has modulus {} > 1", l.norm())));
    }
    let on_circle = |l: &Complex64| l.norm() >= 1.0 - unit_circle_tol;
    let circle: Vec<Complex64> = eigenvalues.iter().copied().filter(on_circle).collect();
    for (lambda, mult) in cluster(&circle) {
        let geometric = shifted_null_space(a, lambda).ncols();
        if geometric < mult {
            return Err(Error::NotLyapunovStable(format!(
                "unit-circle eigenvalue {lambda} is defective (geometric {geometric} < algebraic {mult})"
            )));
        }
    }

    let d_o = linalg::reorder_schur(&mut t, &mut z, |ev| on_circle(&ev[0]))?;
    let d_s = d - d_o;
    let t11 = t.view((0, 0), (d_o, d_o)).into_owned();
    let t22 = t.view((d_o, d_o), (d_s, d_s)).into_owned();
    let t12 = t.view((0, d_o), (d_o, d_s)).into_owned();
    let z_o = z.columns(0, d_o).into_owned();
    let z_s = z.columns(d_o, d_s).into_owned();

    // basis in which T11 is orthogonal: P = Re(W^{-H} W^{-1}) is T11-invariant
    let c = if d_o > 0 {
        let mut cols: Vec<DVector<Complex64>> = Vec::with_capacity(d_o);
        let t11_eigs: Vec<Complex64> = eigenvalues.iter().copied().filter(on_circle).collect();
        for (lambda, _) in cluster(&t11_eigs) {
            if lambda.im < -CLUSTER_TOL {
                continue;
            }
            let ns = shifted_null_space(&t11, lambda);
            for j in 0..ns.ncols() {
                let v = ns.column(j).into_owned();
                if lambda.im > CLUSTER_TOL {
                    cols.push(v.map(|x| x.conj()));
                }
                cols.push(v);
            }
        }
        if cols.len() != d_o {
            return Err(Error::NotLyapunovStable(format!(
                "found {} eigenvectors for a {d_o}-dimensional unit-circle part",
                cols.len()
            )));
        }
        let w = DMatrix::from_columns(&cols);
        let w_inv = w
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular eigenvector basis".into()))?;
        let p = linalg::symmetrize(&(w_inv.adjoint() * &w_inv).map(|x| x.re));
        let chol = p
            .cholesky()
            .ok_or_else(|| Error::Numerical("invariant metric is not positive definite".into()))?;
        chol.l().transpose()
    } else {
        DMatrix::zeros(0, 0)
    };
    let c_inv = if d_o > 0 {
        c.clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular metric factor".into()))?
    } else {
        DMatrix::zeros(0, 0)
    };

    let y = linalg::solve_sylvester(&t11, &t22, &(-&t12))?;
    let v_o = &z_o * &c_inv;
    let v_s_raw = &z_o * &y + &z_s;
    let v_s = if d_s > 0 { v_s_raw.qr().q() } else { v_s_raw };

    let mut tm = DMatrix::zeros(d, d);
    tm.columns_mut(0, d_o).copy_from(&v_o);
    tm.columns_mut(d_o, d_s).copy_from(&v_s);
    let orthogonal = (tm.transpose() * &tm - DMatrix::identity(d, d)).amax() <= 1e-12;
    let t_inv = if orthogonal {
        tm.transpose()
    } else {
        tm.clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular change of basis".into()))?
    };
    let a_o = &c * &t11 * &c_inv;
    let a_s = v_s.transpose() * a * &v_s;
    let b_t = &t_inv * &model.b;
    let b_o = b_t.rows(0, d_o).into_owned();
    let b_s = b_t.rows(d_o, d_s).into_owned();

    Ok(OrthoSchurDecomposition {
        t: tm,
        t_inv,
        a_o,
        a_s,
        b_o,
        b_s,
        d_o,
        d_s,
        eigenvalues,
    })
}

#[derive(Debug, Clone)]
pub struct ReachabilityData {
    pub kappa: usize,
    /// `[A_o^{κ-1} B_o, …, A_o B_o, B_o]`
    pub r_kappa: DMatrix<f64>,
    pub r_kappa_pinv: DMatrix<f64>,
    /// Largest singular value of the pseudo-inverse.
    pub sigma1_pinv: f64,
    /// Set when there is no orthogonal part (`d_o = 0`).
    pub empty_orthogonal_part: bool,
}

pub fn reachability_matrix(a_o: &DMatrix<f64>, b_o: &DMatrix<f64>, steps: usize) -> DMatrix<f64> {
    let (d_o, m) = (b_o.nrows(), b_o.ncols());
    let mut r = DMatrix::zeros(d_o, steps * m);
    let mut blk = b_o.clone();
    for k in (0..steps).rev() {
        r.columns_mut(k * m, m).copy_from(&blk);
        blk = a_o * blk;
    }
    r
}

pub fn reachability(dec: &OrthoSchurDecomposition, kappa_max: usize) -> Result<ReachabilityData> {
    let m = dec.b_o.ncols();
    if dec.d_o == 0 {
        return Ok(ReachabilityData {
            kappa: 1,
            r_kappa: DMatrix::zeros(0, m),
            r_kappa_pinv: DMatrix::zeros(m, 0),
            sigma1_pinv: 0.0,
            empty_orthogonal_part: true,
        });
    }
    let mut last_rank = 0;
    for ell in 1..=kappa_max.max(1) {
        let r = reachability_matrix(&dec.a_o, &dec.b_o, ell);
        let (pinv, rank, sv) = linalg::pinv_with_rank(&r, 1e-10);
        last_rank = rank;
        if rank == dec.d_o {
            let smallest = sv[dec.d_o - 1];
            return Ok(ReachabilityData {
                kappa: ell,
                r_kappa: r,
                r_kappa_pinv: pinv,
                sigma1_pinv: 1.0 / smallest,
                empty_orthogonal_part: false,
            });
        }
    }
    Err(Error::NotReachable {
        kappa_max,
        rank: last_rank,
        d_o: dec.d_o,
    })
}

#[derive(Debug, Clone)]
pub struct RescaledInputs {
    pub b: DMatrix<f64>,
    pub u_max: f64,
    /// Physical input = `scale ⊙ solved input`.
    pub scale: DVector<f64>,
}

/// Turn per-axis bounds `|u_i| <= U_i` into a uniform box of size `max_i U_i`.
pub fn rescale_inputs(b: &DMatrix<f64>, bounds: &[f64]) -> Result<RescaledInputs> {
    if bounds.len() != b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} bounds for {} inputs",
            bounds.len(),
            b.ncols()
        )));
    }
    if bounds.iter().any(|&u| !(u > 0.0) || !u.is_finite()) {
        return Err(Error::InvalidArgument("input bounds must be positive".into()));
    }
    let u_max = bounds.iter().copied().fold(0.0, f64::max);
    let scale = DVector::from_iterator(bounds.len(), bounds.iter().map(|u| u / u_max));
    let mut b_scaled = b.clone();
    for (i, mut col) in b_scaled.column_iter_mut().enumerate() {
        col *= scale[i];
    }
    Ok(RescaledInputs {
        b: b_scaled,
        u_max,
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::example_plant;

    fn model(a: DMatrix<f64>, b: DMatrix<f64>) -> PlantModel {
        let d = a.nrows();
        PlantModel::new(a, b, 1.0, NoiseSpec::new(DMatrix::zeros(d, d), 0).unwrap()).unwrap()
    }

    #[test]
    fn example_matrix_is_orthogonal() {
        let p = example_plant(DMatrix::identity(3, 3) * 0.1, 0);
        assert!((p.a.transpose() * &p.a - DMatrix::identity(3, 3)).amax() < 1e-12);
        let dec = decompose(&p, DEFAULT_UNIT_CIRCLE_TOL).unwrap();
        assert_eq!((dec.d_o, dec.d_s), (3, 0));
        assert!(dec.t_is_orthogonal());
        assert!((dec.a_o.transpose() * &dec.a_o - DMatrix::identity(3, 3)).amax() < 1e-9);
        assert!((dec.reconstruct() - &p.a).amax() < 1e-9);
        assert_eq!(reachability(&dec, 3).unwrap().kappa, 3);
    }

    #[test]
    fn stable_matrix_has_no_orthogonal_part() {
        let dec = decompose(&model(DMatrix::identity(2, 2) * 0.5, DMatrix::identity(2, 1)), 1e-8).unwrap();
        assert_eq!((dec.d_o, dec.d_s), (0, 2));
        assert!((&dec.a_s - DMatrix::identity(2, 2) * 0.5).amax() < 1e-12);
        let r = reachability(&dec, 2).unwrap();
        assert!(r.empty_orthogonal_part);
        assert_eq!(r.kappa, 1);
    }

    #[test]
    fn identity_is_all_orthogonal() {
        let dec = decompose(&model(DMatrix::identity(2, 2), DMatrix::identity(2, 2)), 1e-8).unwrap();
        assert_eq!((dec.d_o, dec.d_s), (2, 0));
        assert!((&dec.a_o - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn unstable_and_defective_are_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.01, 0.0, 0.0, 0.2]);
        assert!(matches!(
            decompose(&model(a, DMatrix::identity(2, 1)), 1e-8),
            Err(Error::NotLyapunovStable(_))
        ));
        let jordan = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(matches!(
            decompose(&model(jordan, DMatrix::identity(2, 1)), 1e-8),
            Err(Error::NotLyapunovStable(_))
        ));
    }

    #[test]
    fn mixed_non_normal_plant() {
        // rotation coupled to a stable mode through a non-normal term
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let a = DMatrix::from_row_slice(3, 3, &[c, -s, 0.7, s, c, -0.2, 0.0, 0.0, 0.4]);
        let b = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 1.0]);
        let dec = decompose(&model(a.clone(), b.clone()), 1e-8).unwrap();
        assert_eq!((dec.d_o, dec.d_s), (2, 1));
        assert!((dec.reconstruct() - &a).amax() < 1e-9);
        assert!((dec.a_o.transpose() * &dec.a_o - DMatrix::identity(2, 2)).amax() < 1e-9);
        assert!((&dec.a_s[(0, 0)] - 0.4).abs() < 1e-12);
        // the orthogonal coordinates evolve through A_o, B_o
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let u = DVector::from_vec(vec![0.3]);
        let next = &a * &x + &b * &u;
        let pred = &dec.a_o * dec.orthogonal_coords(&x) + &dec.b_o * &u;
        assert!((dec.orthogonal_coords(&next) - pred).amax() < 1e-12);
    }

    #[test]
    fn repeated_unit_eigenvalue_with_stable_block() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.5, 0.0, 1.0, 0.1, 0.0, 0.0, -0.3]);
        let dec = decompose(&model(a.clone(), DMatrix::identity(3, 1)), 1e-8).unwrap();
        assert_eq!((dec.d_o, dec.d_s), (2, 1));
        assert!((dec.reconstruct() - a).amax() < 1e-9);
    }

    #[test]
    fn reachability_small_cases() {
        let one = OrthoSchurDecomposition {
            t: DMatrix::identity(1, 1),
            t_inv: DMatrix::identity(1, 1),
            a_o: DMatrix::identity(1, 1),
            a_s: DMatrix::zeros(0, 0),
            b_o: DMatrix::from_element(1, 1, 1.0),
            b_s: DMatrix::zeros(0, 1),
            d_o: 1,
            d_s: 0,
            eigenvalues: vec![Complex64::new(1.0, 0.0)],
        };
        let r = reachability(&one, 1).unwrap();
        assert_eq!(r.kappa, 1);
        assert_eq!(r.r_kappa, DMatrix::from_element(1, 1, 1.0));

        let rot = OrthoSchurDecomposition {
            t: DMatrix::identity(2, 2),
            t_inv: DMatrix::identity(2, 2),
            a_o: DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]),
            a_s: DMatrix::zeros(0, 0),
            b_o: DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            b_s: DMatrix::zeros(0, 1),
            d_o: 2,
            d_s: 0,
            eigenvalues: vec![],
        };
        let r = reachability(&rot, 2).unwrap();
        assert_eq!(r.kappa, 2);
        let mut stuck = rot.clone();
        stuck.a_o = DMatrix::identity(2, 2);
        assert!(matches!(reachability(&stuck, 2), Err(Error::NotReachable { .. })));
    }

    #[test]
    fn pinv_is_right_inverse_on_example_system() {
        let p = example_plant(DMatrix::identity(3, 3), 0);
        let dec = decompose(&p, 1e-8).unwrap();
        let r = reachability(&dec, 3).unwrap();
        let mut seed = 12345u64;
        for _ in 0..100 {
            let v = DVector::from_fn(3, |_, _| {
                seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            });
            assert!((&r.r_kappa * (&r.r_kappa_pinv * &v) - &v).amax() < 1e-9);
        }
    }

    #[test]
    fn rescaling() {
        let b = DMatrix::identity(2, 2);
        let r = rescale_inputs(&b, &[2.0, 4.0]).unwrap();
        assert_eq!(r.u_max, 4.0);
        assert_eq!(r.b, DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0]));
        assert_eq!(r.scale.as_slice(), &[0.5, 1.0]);

        let p = example_plant(DMatrix::identity(3, 3), 0);
        let r = rescale_inputs(&p.b, &[15.0]).unwrap();
        assert_eq!(r.b, p.b);
        assert_eq!(r.scale.as_slice(), &[1.0]);
        assert!(rescale_inputs(&b, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn rescaled_plant_matches_physical_plant() {
        let a = DMatrix::from_fn(3, 3, |i, j| ((i + 2 * j) as f64 * 0.37).sin());
        let b = DMatrix::from_fn(3, 2, |i, j| ((3 * i + j) as f64 * 0.71).cos());
        let bounds = [3.0, 0.5];
        let r = rescale_inputs(&b, &bounds).unwrap();
        let x = DVector::from_vec(vec![0.2, -1.0, 4.0]);
        let v = DVector::from_vec(vec![2.5, -1.7]);
        let physical = v.component_mul(&r.scale);
        let lhs = &a * &x + &r.b * &v;
        let rhs = &a * &x + &b * &physical;
        assert!((lhs - rhs).amax() < 1e-12);
        // spectrum untouched
        let dec1 = decompose(&model(DMatrix::identity(3, 3), b.clone()), 1e-8).unwrap();
        let dec2 = decompose(&model(DMatrix::identity(3, 3), r.b.clone()), 1e-8).unwrap();
        assert_eq!((dec1.d_o, dec1.d_s), (dec2.d_o, dec2.d_s));
    }
}
