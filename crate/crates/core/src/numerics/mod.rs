//! Quadrature, Monte Carlo, root finding and integration shared by every
//! other module. All routines are pure functions of their inputs.

pub mod integrate;
pub mod montecarlo;
pub mod quadrature;
pub mod rng;
pub mod roots;
pub mod special;

pub use integrate::integrate_1d;
pub use montecarlo::{mc_expect, McEstimate, MIN_SAMPLES};
pub use quadrature::{default_rule, gauss_hermite, gaussian_expect_adaptive, QuadratureRule};
pub use rng::RngStream;
pub use roots::find_root_increasing;
