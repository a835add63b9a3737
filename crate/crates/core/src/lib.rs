//! Simulation and constrained-system prediction for the slow-fast system
//!
//! ```text
//! dx/dt = 1
//! dy/dt = (1/ε)·√(m² + y²)·(f(x) − y),    m = exp(ρ/ε), ρ < 0
//! ```
//!
//! whose slow curves are the graph of a piecewise-C¹ `f` (attracting) and the
//! axis `y = 0` (attracting on one side, repelling on the other).

pub mod analysis;
pub mod constrained;
pub mod dynamics;
pub mod fnspec;
pub mod katriel;
pub mod numeric;
