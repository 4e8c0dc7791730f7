use super::{identity, is_hurwitz, is_schur, solve_lyapunov, solve_stein, vstack, Matrix};
use crate::error::{dim_err, Error, Result};

const SDA_MAX_ITER: usize = 200;
const SIGN_MAX_ITER: usize = 200;
const REFINE_STEPS: usize = 4;
const RESIDUAL_TOL: f64 = 1e-9;

fn check_dims(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<()> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(dim_err(format!(
            "Riccati data: A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    Ok(())
}

fn inverse(m: &Matrix, what: &str) -> Result<Matrix> {
    m.clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Numeric(format!("{what} is singular")))
}

fn inverse_spd(r: &Matrix) -> Result<Matrix> {
    r.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Precondition("R must be symmetric positive definite".into()))
}

fn sym(x: &Matrix) -> Matrix {
    (x + x.transpose()) * 0.5
}

fn finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// `‖AᵀXA − X − AᵀXB(R+BᵀXB)⁻¹BᵀXA + Q‖_F`.
pub fn dare_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, x: &Matrix) -> f64 {
    let bx = b.transpose() * x;
    let Some(inv) = (r + &bx * b).lu().try_inverse() else {
        return f64::INFINITY;
    };
    let atxa = a.transpose() * x * a;
    let cross = a.transpose() * bx.transpose() * inv * &bx * a;
    (atxa - x - cross + q).norm()
}

/// `‖AᵀX + XA − XBR⁻¹BᵀX + Q‖_F`.
pub fn care_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, x: &Matrix) -> f64 {
    let Some(rinv) = r.clone().lu().try_inverse() else {
        return f64::INFINITY;
    };
    let g = b * rinv * b.transpose();
    (a.transpose() * x + x * a - x * g * x + q).norm()
}

fn dare_gain(a: &Matrix, b: &Matrix, r: &Matrix, x: &Matrix) -> Result<Matrix> {
    let bx = b.transpose() * x;
    Ok(inverse(&(r + &bx * b), "R + BᵀXB")? * bx * a)
}

/// Stabilizing solution of `X = AᵀXA − AᵀXB(R+BᵀXB)⁻¹BᵀXA + Q`.
///
/// Structure-preserving doubling followed by a few Hewer (Newton) steps.
/// Fails with a synthesis error when the result does not stabilize
/// `A − BK`, which is what a non-stabilizable pair produces.
pub fn solve_dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix> {
    check_dims(a, b, q, r)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let rinv = inverse_spd(r)?;
    let i = identity(n);

    let mut ak = a.clone();
    let mut gk = sym(&(b * &rinv * b.transpose()));
    let mut hk = sym(q);
    let mut converged = false;
    for _ in 0..SDA_MAX_ITER {
        let w = inverse(&(&i + &gk * &hk), "I + GH")
            .map_err(|_| Error::Synthesis("doubling iteration broke down".into()))?;
        let aw = &ak * &w;
        let a_next = &aw * &ak;
        let g_next = sym(&(&gk + &aw * &gk * ak.transpose()));
        let h_next = sym(&(&hk + ak.transpose() * &hk * &w * &ak));
        if !finite(&h_next) || !finite(&g_next) || !finite(&a_next) {
            return Err(Error::Synthesis("doubling iteration diverged".into()));
        }
        let delta = (&h_next - &hk).norm();
        ak = a_next;
        gk = g_next;
        hk = h_next;
        if delta <= 1e-15 * hk.norm().max(1.0) || ak.norm() <= 1e-300 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Synthesis(
            "doubling iteration did not converge; (A, B) may not be stabilizable".into(),
        ));
    }

    let mut x = hk;
    let mut res = dare_residual(a, b, q, r, &x);
    for _ in 0..REFINE_STEPS {
        let k = dare_gain(a, b, r, &x)?;
        let acl = a - b * &k;
        if !is_schur(&acl, 0.0)? {
            break;
        }
        let Ok(next) = solve_stein(&acl, &(q + k.transpose() * r * &k), 1e-13) else {
            break;
        };
        let next_res = dare_residual(a, b, q, r, &next);
        if next_res < res {
            x = next;
            res = next_res;
        } else {
            break;
        }
    }

    let k = dare_gain(a, b, r, &x)?;
    let acl = a - b * &k;
    if !is_schur(&acl, 0.0)? {
        return Err(Error::Synthesis(
            "Riccati solution is not stabilizing; (A, B) is not stabilizable".into(),
        ));
    }
    let scale = q.norm() + (a.transpose() * &x * a).norm();
    if res > RESIDUAL_TOL * scale.max(1.0) {
        return Err(Error::Synthesis(format!("DARE residual {res:.3e} too large")));
    }
    Ok(x)
}

fn log_abs_det(m: &Matrix) -> Option<f64> {
    let lu = m.clone().lu();
    let u = lu.u();
    let mut acc = 0.0;
    for k in 0..u.nrows() {
        let d = u[(k, k)].abs();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        acc += d.ln();
    }
    Some(acc)
}

/// Stabilizing solution of `AᵀX + XA − XBR⁻¹BᵀX + Q = 0`.
///
/// Matrix sign function of the Hamiltonian with determinant scaling,
/// then Newton–Kleinman refinement.
pub fn solve_care(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix> {
    check_dims(a, b, q, r)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let rinv = inverse_spd(r)?;
    let g = sym(&(b * &rinv * b.transpose()));

    let mut z = Matrix::zeros(2 * n, 2 * n);
    z.view_mut((0, 0), (n, n)).copy_from(a);
    z.view_mut((0, n), (n, n)).copy_from(&(-&g));
    z.view_mut((n, 0), (n, n)).copy_from(&(-q));
    z.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let dim = (2 * n) as f64;
    let mut converged = false;
    for it in 0..SIGN_MAX_ITER {
        let zinv = inverse(&z, "Hamiltonian iterate").map_err(|_| {
            Error::Synthesis("Hamiltonian has eigenvalues on the imaginary axis".into())
        })?;
        // Determinant scaling only in the early phase; plain Newton after.
        let c = if it < 20 {
            log_abs_det(&z).map(|l| (l / dim).exp()).unwrap_or(1.0)
        } else {
            1.0
        };
        let next = (&z / c + &zinv * c) * 0.5;
        if !finite(&next) {
            return Err(Error::Synthesis("sign iteration diverged".into()));
        }
        let delta = (&next - &z).norm();
        z = next;
        if delta <= 1e-13 * z.norm() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Synthesis("sign iteration did not converge".into()));
    }

    let i = identity(n);
    let w11 = z.view((0, 0), (n, n)).into_owned();
    let w12 = z.view((0, n), (n, n)).into_owned();
    let w21 = z.view((n, 0), (n, n)).into_owned();
    let w22 = z.view((n, n), (n, n)).into_owned();
    let lhs = vstack(&[&w12, &(w22 + &i)])?;
    let rhs = -vstack(&[&(w11 + &i), &w21])?;
    let svd = lhs.svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut x = sym(
        &svd.solve(&rhs, 1e-14 * smax)
            .map_err(|e| Error::Numeric(format!("CARE extraction failed: {e}")))?,
    );

    let mut res = care_residual(a, b, q, r, &x);
    for _ in 0..REFINE_STEPS {
        let k = &rinv * b.transpose() * &x;
        let acl = a - b * &k;
        if !is_hurwitz(&acl, 0.0)? {
            break;
        }
        let Ok(next) = solve_lyapunov(&acl, &(q + k.transpose() * r * &k), 1e-13) else {
            break;
        };
        let next_res = care_residual(a, b, q, r, &next);
        if next_res < res {
            x = next;
            res = next_res;
        } else {
            break;
        }
    }

    let acl = a - b * &rinv * b.transpose() * &x;
    if !is_hurwitz(&acl, 0.0)? {
        return Err(Error::Synthesis(
            "CARE solution is not stabilizing; (A, B) is not stabilizable".into(),
        ));
    }
    let scale = q.norm() + 2.0 * (a.transpose() * &x).norm();
    if res > RESIDUAL_TOL * scale.max(1.0) {
        return Err(Error::Synthesis(format!("CARE residual {res:.3e} too large")));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn dare_scalar_cases() {
        let x = solve_dare(&s(0.0), &s(1.0), &s(1.0), &s(1.0)).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-12);
        let x = solve_dare(&s(1.0), &s(1.0), &s(1.0), &s(1.0)).unwrap();
        assert!((x[(0, 0)] - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn dare_unstabilizable_fails() {
        let err = solve_dare(&s(2.0), &s(0.0), &s(1.0), &s(1.0));
        assert!(matches!(err, Err(Error::Synthesis(_))));
    }

    #[test]
    fn care_scalar_cases() {
        // 2aX − X² + 1 = 0 with a = 0 ⇒ X = 1; a = 1 ⇒ X = 1 + √2
        let x = solve_care(&s(0.0), &s(1.0), &s(1.0), &s(1.0)).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-12);
        let x = solve_care(&s(1.0), &s(1.0), &s(1.0), &s(1.0)).unwrap();
        assert!((x[(0, 0)] - (1.0 + 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn care_unstabilizable_fails() {
        assert!(solve_care(&s(1.0), &s(0.0), &s(1.0), &s(1.0)).is_err());
    }

    #[test]
    fn riccati_rejects_bad_r() {
        let err = solve_dare(&s(0.5), &s(1.0), &s(1.0), &s(-1.0));
        assert!(matches!(err, Err(Error::Precondition(_))));
    }
}
