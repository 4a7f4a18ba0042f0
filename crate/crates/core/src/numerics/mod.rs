//! Small dense matrix kernel: grids, Lyapunov solves, SPD roots, matrix ODEs.

mod grid;
mod lyapunov;
mod ode;
mod spd;

pub use grid::{MatrixPath, TimeGrid, NODE_TOLERANCE};
pub use lyapunov::{solve_lyapunov_continuous, solve_lyapunov_discrete, LYAPUNOV_RESIDUAL};
pub use ode::{integrate_matrix_ode, rk4_step, transition_matrix};
pub use spd::{
    check_spd, ddt_inv_sqrt, eig_extremes, min_eigenvalue, psd_inverse, psd_inverse_shifted,
    sqrtm_spd, symmetrize, symmetrize_mut, SpdRoots, SPD_RELATIVE_FLOOR,
};

pub(crate) use ode::ensure_finite;
pub(crate) use spd::ddt_inv_sqrt_with;
