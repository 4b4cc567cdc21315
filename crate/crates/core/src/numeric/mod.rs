//! Dense arithmetic, seeded randomness, parameter storage and the
//! finite-difference gradient oracle. Everything is `f64`.

mod gradcheck;
mod matrix;
mod ops;
mod params;
mod rng;

pub use gradcheck::{gradcheck, GradcheckConfig, GradcheckReport, GroupReport, Objective};
pub use matrix::Matrix;
pub use ops::{
    dense_affine, dense_affine_backward, relu, relu_backward, sigmoid, sigmoid_derivative, Affine,
    AffineGrad,
};
pub(crate) use ops::{fold_relu_pattern, relu_backward_in_place, relu_matrix};
pub use params::{Grads, ParamId, ParamInfo, ParamStore, Values};
pub use rng::Rng;

/// Draws `n` values from `N(0, std²)`.
pub fn normal_init(rng: &mut Rng, n: usize, std: f64) -> Vec<f64> {
    (0..n).map(|_| rng.normal() * std).collect()
}
