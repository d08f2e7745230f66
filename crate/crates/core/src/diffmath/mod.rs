//! Dense tensors, forward ops with hand-written adjoints, and a
//! finite-difference gradient verifier.

mod gradcheck;
pub mod ops;
mod tensor;

pub use gradcheck::finite_diff_check;
pub use tensor::{ParamSet, Parameter, Tensor};
