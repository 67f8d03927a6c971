//! Minimal dense numerics with exact gradients.
//!
//! Everything the Q-network and mixer need, double precision throughout:
//! affine maps, ELU, a GRU cell, flat named parameter storage, Xavier
//! initialization, Adam, global-norm clipping, a seeded PRNG, and a
//! finite-difference gradient checker. No autodiff graph; each operation has
//! a hand-written backward pass verified against central differences.

pub mod adam;
pub mod gradcheck;
pub mod gru;
pub mod ops;
pub mod rng;
pub mod store;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use gradcheck::{check_gradients, relative_error, GradCheckReport, FD_STEP};
pub use gru::{gru_backward, gru_forward, GruCache, GruIds};
pub use ops::{
    affine, affine_backward, clip_global_norm, elu, elu_deriv, global_norm, sigmoid, xavier_init,
};
pub use rng::SeededRng;
pub use store::{AffineIds, DenseMatrix, MatRef, ParameterStore, SegId};
