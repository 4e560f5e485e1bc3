//! Radial grids, quadrature and operators.

mod function;
mod grid;
pub mod nodes;
mod ops;

pub use function::{Decay, RadialFunction};
pub use grid::{make_grid, make_grid_with_order, sphere_area, GridSpec, RadialGrid, DEFAULT_ORDER};
pub use ops::{
    check_pairing_identities, check_pairing_identities_with_moment, derivative, grad_sq, h1_sq, inner, lambda_op,
    laplacian, lp_pow, mass, moment_sq, times_power, PairingReport,
};
pub(crate) use ops::inner_slices;
