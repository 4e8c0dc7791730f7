use super::{identity, zeros, Matrix};
use crate::error::{dim_err, Error, Result};

/// `e^{M t}` by scaling-and-squaring with a degree-13 Padé approximant.
pub fn matexp(m: &Matrix, t: f64) -> Result<Matrix> {
    if m.nrows() != m.ncols() {
        return Err(dim_err(format!(
            "matexp needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !t.is_finite() {
        return Err(Error::Numeric("matexp: non-finite time".into()));
    }
    if m.nrows() == 0 {
        return Ok(zeros(0, 0));
    }
    let scaled = m * t;
    if scaled.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matexp: non-finite entries".into()));
    }
    Ok(scaled.exp())
}

/// `(e^{M t}, ∫₀ᵗ e^{M r} dr)` from one exponential of `[[M, I], [0, 0]]`.
pub fn matexp_with_integral(m: &Matrix, t: f64) -> Result<(Matrix, Matrix)> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(dim_err("matexp_with_integral needs a square matrix"));
    }
    let mut big = zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(m);
    big.view_mut((0, n), (n, n)).copy_from(&identity(n));
    let e = matexp(&big, t)?;
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, n)).into_owned(),
    ))
}

/// `∫₀ᵗ e^{M1 (t-r)} K e^{M2 r} dr`, read off the upper-right block of
/// `exp([[M1, K], [0, M2]] t)`.
pub fn cross_integral(m1: &Matrix, k: &Matrix, m2: &Matrix, t: f64) -> Result<Matrix> {
    let (a, b) = (m1.nrows(), m2.nrows());
    if m1.ncols() != a || m2.ncols() != b {
        return Err(dim_err("cross_integral: M1 and M2 must be square"));
    }
    if k.nrows() != a || k.ncols() != b {
        return Err(dim_err(format!(
            "cross_integral: K is {}x{}, expected {a}x{b}",
            k.nrows(),
            k.ncols()
        )));
    }
    let mut big = zeros(a + b, a + b);
    big.view_mut((0, 0), (a, a)).copy_from(m1);
    big.view_mut((0, a), (a, b)).copy_from(k);
    big.view_mut((a, a), (b, b)).copy_from(m2);
    let e = matexp(&big, t)?;
    Ok(e.view((0, a), (a, b)).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::from_rows;

    fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
        (a - b).amax() <= tol
    }

    #[test]
    fn identity_and_diagonal() {
        assert!(close(&matexp(&zeros(2, 2), 1.0).unwrap(), &identity(2), 0.0));
        let d = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, -2.0]));
        let e = matexp(&d, 1.0).unwrap();
        assert!((e[(0, 0)] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((e[(1, 1)] - (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn harmonic_oscillator_closed_form() {
        // [[cos Ωt, sin Ωt / Ω], [-Ω sin Ωt, cos Ωt]] with Ω = 5, t = 0.1
        let a = from_rows(&[vec![0.0, 1.0], vec![-25.0, 0.0]], 2).unwrap();
        let e = matexp(&a, 0.1).unwrap();
        let (c, s) = (0.5f64.cos(), 0.5f64.sin());
        let expected = from_rows(&[vec![c, s / 5.0], vec![-5.0 * s, c]], 2).unwrap();
        assert!(close(&e, &expected, 1e-14));
        assert!((e[(0, 0)] - 0.87758).abs() < 1e-5);
        assert!((e[(0, 1)] - 0.09589).abs() < 1e-5);
        assert!((e[(1, 0)] + 2.39713).abs() < 1e-5);
    }

    #[test]
    fn integral_trivial_cases() {
        let (e, i) = matexp_with_integral(&zeros(3, 3), 0.7).unwrap();
        assert!(close(&e, &identity(3), 0.0));
        assert!(close(&i, &(identity(3) * 0.7), 1e-15));
        let (e, i) = matexp_with_integral(&Matrix::from_element(1, 1, 1.0), 1.0).unwrap();
        assert!((e[(0, 0)] - std::f64::consts::E).abs() < 1e-14);
        assert!((i[(0, 0)] - (std::f64::consts::E - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn cross_integral_trivial_cases() {
        let c = cross_integral(&zeros(2, 2), &identity(2), &zeros(2, 2), 0.3).unwrap();
        assert!(close(&c, &(identity(2) * 0.3), 1e-15));
        let one = Matrix::from_element(1, 1, 1.0);
        let c = cross_integral(&zeros(1, 1), &one, &one, 1.0).unwrap();
        assert!((c[(0, 0)] - (std::f64::consts::E - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn dimension_errors() {
        assert!(matexp(&zeros(2, 3), 1.0).is_err());
        assert!(cross_integral(&zeros(2, 2), &zeros(3, 1), &zeros(1, 1), 1.0).is_err());
    }
}
