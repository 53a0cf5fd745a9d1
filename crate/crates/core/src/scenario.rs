//! Reference three-state example: an orthogonal `A`, one input bounded by 15,
//! horizon 4 and recalculation interval 3.

use nalgebra::{DMatrix, DVector};

use crate::plant::PlantModel;
use crate::stochastics::NoiseSpec;

pub const EXAMPLE_U_MAX: f64 = 15.0;
pub const EXAMPLE_N: usize = 4;
pub const EXAMPLE_N_R: usize = 3;

pub fn example_a() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[0.0, -0.8, -0.6, 0.8, -0.36, 0.48, 0.6, 0.48, -0.64])
}

pub fn example_b() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 1, &[0.16, 0.14, 1.0])
}

pub fn example_q() -> DMatrix<f64> {
    DMatrix::identity(3, 3)
}

pub fn example_qf() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[12.0, 1.0, 4.0, 1.0, 19.0, 2.0, 4.0, 2.0, 2.0])
}

pub fn example_r() -> DMatrix<f64> {
    DMatrix::from_element(1, 1, 2.0)
}

pub fn example_x0() -> DVector<f64> {
    DVector::from_vec(vec![10.0, 10.0, -10.0])
}

/// The example plant with noise covariance `sigma_w`.
pub fn example_plant(sigma_w: DMatrix<f64>, seed: u64) -> PlantModel {
    let noise = NoiseSpec::new(sigma_w, seed).expect("covariance must be PSD");
    PlantModel::new(example_a(), example_b(), EXAMPLE_U_MAX, noise).expect("valid example plant")
}
