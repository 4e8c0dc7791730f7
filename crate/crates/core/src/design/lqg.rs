//! Observer-based output-feedback stabilizers from LQG weights.

use serde::Serialize;

use crate::error::{dim_err, Error, Result};
use crate::model::LqgWeights;
use crate::numkit::{identity, solve_care, solve_dare, Matrix};

/// `θ⁺ = A_θθ + B_θy` (or `θ̇ = …`), `v = C_θθ + D_θy`.
#[derive(Debug, Clone, Serialize)]
pub struct Stabilizer {
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub a: Matrix,
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub b: Matrix,
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub c: Matrix,
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub d: Matrix,
    /// State-feedback gain `K` (`v = −Kθ`).
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub k: Matrix,
    /// Observer gain `H`.
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub h: Matrix,
}

fn weights_matrices(a: &Matrix, b: &Matrix, c: &Matrix, w: &LqgWeights) -> (Matrix, Matrix, Matrix, Matrix) {
    let n = a.nrows();
    let q = identity(n) * w.state;
    let r = identity(b.ncols()) * w.input;
    let qo = identity(n) * w.process + b * b.transpose() * w.input_noise;
    let ro = identity(c.nrows()) * w.measurement;
    (q, r, qo, ro)
}

fn check(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || c.ncols() != n {
        return Err(dim_err(format!(
            "LQG: A {:?}, B {:?}, C {:?}",
            a.shape(),
            b.shape(),
            c.shape()
        )));
    }
    Ok(())
}

/// Discrete predictor-form LQG: `θ⁺ = (A − BK − HC)θ + Hy`, `v = −Kθ`.
///
/// Both Riccati equations are solved for `(A, B)/radius`, so `A − BK` and
/// `A − HC` have spectral radius below `w.radius`.
pub fn discrete_lqg(a0: &Matrix, b0: &Matrix, c: &Matrix, w: &LqgWeights) -> Result<Stabilizer> {
    check(a0, b0, c)?;
    let rad = w.radius;
    let a = &(a0 / rad);
    let b = &(b0 / rad);
    let (q, r, qo, ro) = weights_matrices(a0, b0, c, w);
    let x = solve_dare(a, b, &q, &r)
        .map_err(|e| Error::Synthesis(format!("state-feedback DARE: {e}")))?;
    let bx = b.transpose() * &x;
    let k = (&r + &bx * b)
        .lu()
        .solve(&(&bx * a))
        .ok_or_else(|| Error::Synthesis("R + BᵀXB singular".into()))?;
    let y = solve_dare(&a.transpose(), &c.transpose(), &qo, &ro)
        .map_err(|e| Error::Synthesis(format!("observer DARE: {e}")))?;
    let cy = c * &y;
    let h = (&ro + &cy * c.transpose())
        .lu()
        .solve(&(&cy * a.transpose()))
        .ok_or_else(|| Error::Synthesis("R_o + CYCᵀ singular".into()))?
        .transpose()
        * rad;
    Ok(Stabilizer {
        a: a0 - b0 * &k - &h * c,
        b: h.clone(),
        c: -&k,
        d: Matrix::zeros(b0.ncols(), c.nrows()),
        k,
        h,
    })
}

/// Continuous LQG: `θ̇ = (A − BK − HC)θ + Hy`, `v = −Kθ`.
pub fn continuous_lqg(a: &Matrix, b: &Matrix, c: &Matrix, w: &LqgWeights) -> Result<Stabilizer> {
    check(a, b, c)?;
    let (q, r, qo, ro) = weights_matrices(a, b, c, w);
    let x = solve_care(a, b, &q, &r)
        .map_err(|e| Error::Synthesis(format!("state-feedback CARE: {e}")))?;
    let k = (b.transpose() * &x) / w.input;
    let y = solve_care(&a.transpose(), &c.transpose(), &qo, &ro)
        .map_err(|e| Error::Synthesis(format!("observer CARE: {e}")))?;
    let h = &y * c.transpose() / w.measurement;
    Ok(Stabilizer {
        a: a - b * &k - &h * c,
        b: h.clone(),
        c: -&k,
        d: Matrix::zeros(b.ncols(), c.nrows()),
        k,
        h,
    })
}

/// State matrix of a plant `(A, B, C)` in feedback with `stab` (`D_θ = 0`).
pub fn closed_loop(a: &Matrix, b: &Matrix, c: &Matrix, stab: &Stabilizer) -> Matrix {
    let n = a.nrows();
    let nt = stab.a.nrows();
    let mut m = Matrix::zeros(n + nt, n + nt);
    m.view_mut((0, 0), (n, n)).copy_from(&(a + b * &stab.d * c));
    m.view_mut((0, n), (n, nt)).copy_from(&(b * &stab.c));
    m.view_mut((n, 0), (nt, n)).copy_from(&(&stab.b * c));
    m.view_mut((n, n), (nt, nt)).copy_from(&stab.a);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{is_hurwitz, spectral_radius};

    fn s(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_discrete_toy() {
        let st = discrete_lqg(&s(1.5), &s(1.0), &s(1.0), &LqgWeights::default()).unwrap();
        let cl = closed_loop(&s(1.5), &s(1.0), &s(1.0), &st);
        assert!(spectral_radius(&cl).unwrap() < 1.0);
    }

    #[test]
    fn schur_plant_still_gets_gains() {
        let st = discrete_lqg(&s(0.5), &s(1.0), &s(1.0), &LqgWeights::default()).unwrap();
        assert!(st.k[(0, 0)].abs() > 0.0);
        let cl = closed_loop(&s(0.5), &s(1.0), &s(1.0), &st);
        assert!(spectral_radius(&cl).unwrap() < 1.0);
    }

    #[test]
    fn radius_bounds_both_loops() {
        let w = LqgWeights {
            radius: 0.3,
            ..LqgWeights::default()
        };
        let st = discrete_lqg(&s(1.5), &s(1.0), &s(1.0), &w).unwrap();
        assert!((1.5 - st.k[(0, 0)]).abs() < 0.3);
        assert!((1.5 - st.h[(0, 0)]).abs() < 0.3);
    }

    #[test]
    fn scalar_continuous_toy() {
        let st = continuous_lqg(&s(2.0), &s(1.0), &s(1.0), &LqgWeights::default()).unwrap();
        let cl = closed_loop(&s(2.0), &s(1.0), &s(1.0), &st);
        assert!(is_hurwitz(&cl, 1e-9).unwrap());
    }
}
