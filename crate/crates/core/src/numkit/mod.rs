//! Dense linear-algebra kernel shared by every design and analysis module.
//!
//! Everything here is a pure function of its inputs. Matrices are
//! `nalgebra::DMatrix<f64>`; spectra are plain vectors of `Complex64`.

mod expm;
mod linalg;
mod matrix_equation;
mod riccati;

pub use expm::{cross_integral, matexp, matexp_with_integral};
pub use linalg::{
    block_diag, eigenvalues, from_rows, hstack, identity, is_hurwitz, is_schur, kron, norm2,
    rank_svd, rank_svd_complex, selector_first, spectral_abscissa, spectral_radius, to_complex,
    vstack, zeros, Spectrum,
};
pub use matrix_equation::{
    solve_linear_matrix_equation, solve_lyapunov, solve_stein, solve_stein_doubling,
    substitution_residual,
    LinearSolution,
};
pub use riccati::{care_residual, dare_residual, solve_care, solve_dare};

pub use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;

/// Real dense matrix used throughout the crate.
pub type Matrix = DMatrix<f64>;
/// Real dense column vector.
pub type Vector = DVector<f64>;
/// Complex dense matrix, used for rank tests at complex eigenvalues.
pub type CMatrix = DMatrix<Complex64>;

/// Default relative tolerance for rank decisions and stability margins.
pub const DEFAULT_TOL: f64 = 1e-9;
