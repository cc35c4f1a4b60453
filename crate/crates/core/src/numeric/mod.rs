//! Dense numeric kernel: matrices, activations, stable softmax, the seeded
//! generator and the central-difference gradient checker.

mod gradcheck;
mod matrix;
mod ops;
mod rng;

pub use gradcheck::finite_diff_gradient;
pub use matrix::DenseMatrix;
pub use ops::{dot, log_softmax, log_sum_exp, softmax, tanh_activation};
pub use rng::{sample_permutation, SeededRng};
