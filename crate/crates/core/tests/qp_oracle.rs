mod support;

use nalgebra::{DMatrix, DVector};
use netspc_core::qp::{solve, Qp, Settings};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::active_set::solve_active_set;

struct Instance {
    h: DMatrix<f64>,
    g: DVector<f64>,
    c: DMatrix<f64>,
    d: DVector<f64>,
    x_feasible: DVector<f64>,
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = rng.random_range(1..=30);
    let m = rng.random_range(0..=2 * n);
    let k = rng.random_range(1..=n);
    let f = DMatrix::from_fn(k, n, |_, _| rng.random_range(-1.0..1.0));
    let h = f.transpose() * f + DMatrix::identity(n, n) * rng.random_range(1e-3..1.0);
    let g = DVector::from_fn(n, |_, _| rng.random_range(-10.0..10.0));
    let c = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let x_feasible = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let slack = DVector::from_fn(m, |_, _| rng.random_range(0.05..1.0));
    let d = &c * &x_feasible + slack;
    Instance { h, g, c, d, x_feasible }
}

#[test]
fn admm_matches_active_set_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..200 {
        let inst = random_instance(&mut rng);
        let reference = solve_active_set(&inst.h, &inst.g, &inst.c, &inst.d, &inst.x_feasible);
        let m = inst.d.len();
        let qp = Qp::new(
            inst.h.clone(),
            inst.g.clone(),
            inst.c.clone(),
            DVector::from_element(m, f64::NEG_INFINITY),
            inst.d.clone(),
        )
        .unwrap();
        let sol = solve(&qp, &Settings::default(), None).unwrap().into_result().unwrap();
        let rel = (sol.objective - reference.objective).abs() / reference.objective.abs().max(1.0);
        assert!(rel <= 1e-6, "trial {trial}: admm {} vs reference {} (rel {rel:e})", sol.objective, reference.objective);
    }
}

#[test]
fn reference_solves_box_problem() {
    // min ½‖x‖² − 2x₀ s.t. x₀ ≤ 1
    let h = DMatrix::identity(2, 2);
    let g = DVector::from_vec(vec![-2.0, 0.0]);
    let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let d = DVector::from_element(1, 1.0);
    let r = solve_active_set(&h, &g, &c, &d, &DVector::zeros(2));
    assert!((r.x[0] - 1.0).abs() < 1e-12 && r.x[1].abs() < 1e-12);
    assert!((r.objective + 1.5).abs() < 1e-12);
}
