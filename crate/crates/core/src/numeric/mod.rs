//! Numerical support: special functions, quadrature rules, small dense
//! linear algebra, seeded random streams, and a vectorized exponential.

pub mod linalg;
pub mod quad;
pub mod rng;
pub mod special;
pub mod vexp;
