use super::{identity, kron, zeros, Matrix};
use crate::error::{dim_err, Error, Result};

/// Result of [`solve_linear_matrix_equation`].
#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub x: Matrix,
    /// Frobenius norm of `Σ Lᵢ X Rᵢ − RHS` after substitution.
    pub residual: f64,
    /// Numerical rank of the vectorized operator.
    pub rank: usize,
    pub unknowns: usize,
    /// False when the operator is rank-deficient; `x` is then the
    /// minimum-norm solution.
    pub unique: bool,
}

/// `‖Σ Lᵢ X Rᵢ − RHS‖_F`.
pub fn substitution_residual(terms: &[(&Matrix, &Matrix)], x: &Matrix, rhs: &Matrix) -> f64 {
    let mut acc = -rhs.clone();
    for (l, r) in terms {
        acc += *l * x * *r;
    }
    acc.norm()
}

/// Solve `Σᵢ Lᵢ X Rᵢ = RHS` through `Σᵢ (Rᵢᵀ ⊗ Lᵢ) vec(X) = vec(RHS)`.
///
/// The dense operator is factored by SVD, so rank-deficient but consistent
/// systems return the minimum-norm solution with `unique = false`.
pub fn solve_linear_matrix_equation(
    terms: &[(&Matrix, &Matrix)],
    rhs: &Matrix,
    tol: f64,
) -> Result<LinearSolution> {
    let (first_l, first_r) = terms
        .first()
        .ok_or_else(|| dim_err("matrix equation needs at least one term"))?;
    let (p, r) = (first_l.nrows(), first_l.ncols());
    let (s, c) = (first_r.nrows(), first_r.ncols());
    for (i, (l, rr)) in terms.iter().enumerate() {
        if l.shape() != (p, r) || rr.shape() != (s, c) {
            return Err(dim_err(format!(
                "term {i}: L is {:?}, R is {:?}; expected {:?} and {:?}",
                l.shape(),
                rr.shape(),
                (p, r),
                (s, c)
            )));
        }
    }
    if rhs.shape() != (p, c) {
        return Err(dim_err(format!(
            "rhs is {:?}, expected {:?}",
            rhs.shape(),
            (p, c)
        )));
    }

    let unknowns = r * s;
    let equations = p * c;
    let (x, rank) = if unknowns == 0 || equations == 0 {
        (zeros(r, s), 0)
    } else {
        let mut op = zeros(equations, unknowns);
        for (l, rr) in terms {
            op += kron(&rr.transpose(), l);
        }
        let b = nalgebra::DVector::from_column_slice(rhs.as_slice());
        let svd = op.svd(true, true);
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let cut = tol * smax;
        let rank = svd.singular_values.iter().filter(|&&v| v > cut).count();
        let sol = if smax == 0.0 {
            nalgebra::DVector::zeros(unknowns)
        } else {
            svd.solve(&b, cut)
                .map_err(|e| Error::Numeric(format!("SVD solve failed: {e}")))?
        };
        (Matrix::from_column_slice(r, s, sol.as_slice()), rank)
    };

    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix equation produced non-finite values".into()));
    }
    let residual = substitution_residual(terms, &x, rhs);
    let scale = rhs.norm()
        + terms
            .iter()
            .map(|(l, rr)| l.norm() * rr.norm())
            .sum::<f64>()
            * x.norm();
    if residual > tol * scale.max(1.0) {
        return Err(Error::NoSolution(format!(
            "inconsistent matrix equation: residual {residual:.3e}, operator rank {rank} of {unknowns}"
        )));
    }
    Ok(LinearSolution {
        x,
        residual,
        rank,
        unknowns,
        unique: rank == unknowns,
    })
}

fn symmetrize(x: &Matrix) -> Matrix {
    (x + x.transpose()) * 0.5
}

/// Continuous Lyapunov equation `AᵀX + XA = −Q`.
pub fn solve_lyapunov(a: &Matrix, q: &Matrix, tol: f64) -> Result<Matrix> {
    let n = a.nrows();
    let at = a.transpose();
    let i = identity(n);
    let sol = solve_linear_matrix_equation(&[(&at, &i), (&i, a)], &(-q), tol)?;
    if !sol.unique {
        return Err(Error::Numeric(
            "Lyapunov operator singular (eigenvalues of A and -A overlap)".into(),
        ));
    }
    Ok(symmetrize(&sol.x))
}

/// Discrete Lyapunov (Stein) equation `AᵀXA − X = −Q`.
pub fn solve_stein(a: &Matrix, q: &Matrix, tol: f64) -> Result<Matrix> {
    let n = a.nrows();
    let at = a.transpose();
    let neg_i = -identity(n);
    let i = identity(n);
    let sol = solve_linear_matrix_equation(&[(&at, a), (&neg_i, &i)], &(-q), tol)?;
    if !sol.unique {
        return Err(Error::Numeric(
            "Stein operator singular (reciprocal eigenvalue pair in A)".into(),
        ));
    }
    Ok(symmetrize(&sol.x))
}

/// Stein equation `AᵀXA − X = −Q` by Smith doubling, for Schur `A`
/// whose spectral radius is too close to one for the Kronecker solve.
pub fn solve_stein_doubling(a: &Matrix, q: &Matrix, max_iter: usize) -> Result<Matrix> {
    let n = a.nrows();
    if a.ncols() != n || q.shape() != (n, n) {
        return Err(dim_err("solve_stein_doubling: A and Q must be square and equal size"));
    }
    let mut x = q.clone();
    let mut ak = a.clone();
    for _ in 0..max_iter {
        let inc = ak.transpose() * &x * &ak;
        x += &inc;
        ak = &ak * &ak;
        if !x.norm().is_finite() {
            return Err(Error::Numeric("Stein doubling diverged; A is not Schur".into()));
        }
        if inc.norm() <= 1e-17 * x.norm() || ak.amax() == 0.0 {
            let x = symmetrize(&x);
            let res = (a.transpose() * &x * a - &x + q).norm();
            let scale = a.norm().powi(2) * x.norm() + x.norm() + q.norm();
            if res > 1e-9 * scale {
                return Err(Error::Numeric(format!("Stein doubling residual {res:.3e}")));
            }
            return Ok(x);
        }
    }
    Err(Error::Numeric("Stein doubling did not converge".into()))
}
