//! Scene representation and the closed-form geometry every other module
//! builds on.

mod camera;
mod covariance;
mod gaussian;
mod sh;

pub use camera::{Camera, Intrinsics};
pub use covariance::{build_covariance, covariance_vjp, gaussian_weight};
pub use gaussian::{CloudGrad, GaussianCloud};
pub use sh::{eval_sh, eval_sh_raw, sh_basis, sh_basis_grad, sh_coeff_count, ShBasis, SH_C0};
