//! Textbook primal active-set method for strictly convex QPs
//! `min ½xᵀHx + gᵀx  s.t.  Cx ≤ d`, started from a feasible point.
//! Used only as an independent reference for the ADMM solver.

use nalgebra::{DMatrix, DVector};

pub struct ActiveSetResult {
    pub x: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
}

pub fn solve_active_set(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    c: &DMatrix<f64>,
    d: &DVector<f64>,
    x0: &DVector<f64>,
) -> ActiveSetResult {
    let n = g.len();
    let m = d.len();
    let mut x = x0.clone();
    let mut work: Vec<usize> = Vec::new();
    for it in 0..10_000 {
        let k = work.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(h);
        for (r, &i) in work.iter().enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = c[(i, j)];
                kkt[(j, n + r)] = c[(i, j)];
            }
        }
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-(h * &x + g)));
        let sol = kkt.lu().solve(&rhs).expect("singular working-set KKT");
        let p = sol.rows(0, n).into_owned();
        let lambda = sol.rows(n, k).into_owned();
        if p.amax() <= 1e-11 * (1.0 + x.amax()) {
            let most_negative = (0..k).min_by(|&a, &b| lambda[a].partial_cmp(&lambda[b]).unwrap());
            match most_negative {
                Some(r) if lambda[r] < -1e-10 => {
                    work.remove(r);
                }
                _ => {
                    let objective = 0.5 * x.dot(&(h * &x)) + g.dot(&x);
                    return ActiveSetResult { x, objective, iterations: it };
                }
            }
        } else {
            let mut step = 1.0;
            let mut blocking = None;
            for i in (0..m).filter(|i| !work.contains(i)) {
                let cp = c.row(i).dot(&p.transpose());
                if cp > 1e-14 {
                    let t = (d[i] - c.row(i).dot(&x.transpose())) / cp;
                    if t < step {
                        step = t.max(0.0);
                        blocking = Some(i);
                    }
                }
            }
            x += &p * step;
            if let Some(i) = blocking {
                work.push(i);
            }
        }
    }
    panic!("active-set reference did not converge");
}
