//! Scalar numerical kernels shared by the modules: adaptive quadrature and
//! bracketing root refinement.

pub mod quad;
pub mod roots;
