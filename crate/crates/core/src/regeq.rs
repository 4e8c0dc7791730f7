//! Steady-state matrix equations: continuous regulator equations, the hold
//! reconstruction, the discrete equations and the washout steady state.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::assumptions::{check_non_resonance, pbh_detectable, Region};
use crate::design::hold::DiscretizedPlant;
use crate::error::{dim_err, Error, Result};
use crate::model::PlantModel;
use crate::numkit::{
    identity, is_schur, kron, solve_linear_matrix_equation, vstack, zeros, Matrix,
};

/// Steady-state maps `x = Π_x w`, `u = Ψ w`, `ζ = Π_ζ w`, … with the
/// substitution residual of every equation that produced them.
#[derive(Debug, Clone, Serialize)]
pub struct RegulatorSolution {
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub pi_x: Matrix,
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub psi: Matrix,
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub pi_zeta: Matrix,
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub pi_f: Matrix,
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub pi_eta: Matrix,
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub pi_z: Matrix,
    /// `Y_m = C_m Π_x + Q_m`.
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub y_m: Matrix,
    pub residuals: BTreeMap<String, f64>,
}

/// `[[I],[0]]` with `top` identity rows above `extra` zero rows.
fn lift(top: usize, extra: usize, cols: usize) -> Matrix {
    let mut m = zeros(top + extra, cols);
    m.view_mut((0, 0), (top, top.min(cols))).fill_with_identity();
    m
}

/// `Π_x S = AΠ_x + BΨ + P`, `0 = C_eΠ_x + Q_e`.
///
/// Returns `(Π_x, Ψ, [line-1 residual, line-2 residual])`. With more inputs
/// than errors the minimum-norm `Ψ` is returned.
pub fn solve_continuous_regulator_equations(
    plant: &PlantModel,
    tol: f64,
) -> Result<(Matrix, Matrix, [f64; 2])> {
    plant.check_dimensions()?;
    let (n, m, d, qe) = (plant.n(), plant.m(), plant.d(), plant.q_e());
    let mut e1 = zeros(n + qe, n + m);
    e1.view_mut((0, 0), (n, n)).fill_with_identity();
    let mut pencil = zeros(n + qe, n + m);
    pencil.view_mut((0, 0), (n, n)).copy_from(&(-&plant.a));
    pencil.view_mut((0, n), (n, m)).copy_from(&(-&plant.b));
    pencil.view_mut((n, 0), (qe, n)).copy_from(&(-&plant.ce));
    let rhs = vstack(&[&plant.p, &plant.qe])?;
    let id = identity(d);
    let sol = match solve_linear_matrix_equation(&[(&e1, &plant.s), (&pencil, &id)], &rhs, tol) {
        Ok(s) => s,
        Err(Error::NoSolution(msg)) => {
            let nr = check_non_resonance(&plant.a, &plant.b, &plant.ce, &plant.s, tol)?;
            let names: Vec<String> = nr
                .witnesses
                .iter()
                .map(|w| format!("{:.6}{:+.6}i", w.lambda[0], w.lambda[1]))
                .collect();
            return Err(Error::NoSolution(format!(
                "regulator equations unsolvable (resonance at {}): {msg}",
                if names.is_empty() { "unknown λ".to_string() } else { names.join(", ") }
            )));
        }
        Err(e) => return Err(e),
    };
    let pi_x = sol.x.view((0, 0), (n, d)).into_owned();
    let psi = sol.x.view((n, 0), (m, d)).into_owned();
    let r1 = (&pi_x * &plant.s - &plant.a * &pi_x - &plant.b * &psi - &plant.p).norm();
    let r2 = (&plant.ce * &pi_x + &plant.qe).norm();
    Ok((pi_x, psi, [r1, r2]))
}

/// Unique `Π_ζ` with `Π_ζ S = (Φ⊗I)Π_ζ` and `Ψ = LΠ_ζ`.
pub fn solve_pi_zeta(flow: &Matrix, l: &Matrix, psi: &Matrix, s: &Matrix, tol: f64) -> Result<Matrix> {
    let k = flow.nrows();
    let (m, d) = (l.nrows(), s.nrows());
    if flow.ncols() != k || l.ncols() != k || psi.shape() != (m, d) {
        return Err(dim_err("solve_pi_zeta: inconsistent Φ⊗I, L, Ψ, S"));
    }
    let obs = pbh_detectable(flow, l, Region::Everywhere, tol)?;
    if !obs.holds {
        return Err(Error::Precondition(
            "(Φ⊗I, L) is not observable; Π_ζ is not unique".into(),
        ));
    }
    let top = lift(k, m, k);
    let mut right = zeros(k + m, k);
    right.view_mut((0, 0), (k, k)).copy_from(&(-flow));
    right.view_mut((k, 0), (m, k)).copy_from(l);
    let rhs = vstack(&[&zeros(k, d), psi])?;
    let id = identity(d);
    let sol = solve_linear_matrix_equation(&[(&top, s), (&right, &id)], &rhs, tol)?;
    if !sol.unique {
        return Err(Error::Numeric("Π_ζ operator rank-deficient".into()));
    }
    Ok(sol.x)
}

/// Residuals of the three discrete steady-state equations.
pub fn verify_discrete_regulator_equations(
    pi_x: &Matrix,
    pi_zeta: &Matrix,
    disc: &DiscretizedPlant,
    plant: &PlantModel,
) -> [f64; 3] {
    let r1 = (pi_x * &disc.s_d - &disc.a_d * pi_x - &disc.l_d * pi_zeta - &disc.p_d).norm();
    let r2 = (pi_zeta * &disc.s_d - &disc.flow_d * pi_zeta).norm();
    let r3 = (&plant.ce * pi_x + &plant.qe).norm();
    [r1, r2, r3]
}

/// Unique `Π_f` with `Π_f S_D = F_fΠ_f + G_f Y_m` and `Y_m = Γ_fΠ_f`.
pub fn solve_washout_steady_state(
    f: &Matrix,
    g: &Matrix,
    gamma: &Matrix,
    y_m: &Matrix,
    s_d: &Matrix,
    tol: f64,
) -> Result<(Matrix, [f64; 2])> {
    let k = f.nrows();
    let (qm, d) = (gamma.nrows(), s_d.nrows());
    if f.ncols() != k || g.shape() != (k, qm) || gamma.ncols() != k || y_m.shape() != (qm, d) {
        return Err(dim_err("washout steady state: inconsistent F, G, Γ, Y_m"));
    }
    if k > 0 && !is_schur(f, 0.0)? {
        return Err(Error::Precondition("washout F_f is not Schur".into()));
    }
    let top = lift(k, qm, k);
    let mut right = zeros(k + qm, k);
    right.view_mut((0, 0), (k, k)).copy_from(&(-f));
    right.view_mut((k, 0), (qm, k)).copy_from(gamma);
    let rhs = vstack(&[&(g * y_m), y_m])?;
    let id = identity(d);
    let sol = solve_linear_matrix_equation(&[(&top, s_d), (&right, &id)], &rhs, tol)?;
    if !sol.unique {
        return Err(Error::Numeric("washout steady-state operator singular".into()));
    }
    let pi_f = sol.x;
    let r1 = (&pi_f * s_d - f * &pi_f - g * y_m).norm();
    let r2 = (y_m - gamma * &pi_f).norm();
    Ok((pi_f, [r1, r2]))
}

/// `Π_z = [Π_f; Π_η; 0]` with `n_z` rows.
pub fn build_pi_z(pi_f: &Matrix, pi_eta: &Matrix, n_z: usize) -> Result<Matrix> {
    if pi_f.ncols() != pi_eta.ncols() {
        return Err(dim_err("Π_f and Π_η column counts differ"));
    }
    let used = pi_f.nrows() + pi_eta.nrows();
    if n_z < used {
        return Err(dim_err(format!("n_z = {n_z} is smaller than {used}")));
    }
    vstack(&[pi_f, pi_eta, &zeros(n_z - used, pi_f.ncols())])
}

/// `(Φ ⊗ I_copies)`.
pub fn kron_identity(phi: &Matrix, copies: usize) -> Matrix {
    kron(phi, &identity(copies))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_pendulum;

    fn s(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn scalar_plant() -> PlantModel {
        PlantModel {
            a: s(-1.0),
            b: s(1.0),
            p: s(1.0),
            s: s(0.0),
            ce: s(1.0),
            qe: s(0.0),
            cm: zeros(0, 1),
            qm: zeros(0, 1),
        }
    }

    #[test]
    fn scalar_regulator_equations() {
        let (pi_x, psi, res) = solve_continuous_regulator_equations(&scalar_plant(), 1e-9).unwrap();
        assert!(pi_x[(0, 0)].abs() < 1e-14);
        assert!((psi[(0, 0)] + 1.0).abs() < 1e-14);
        assert!(res[0] < 1e-14 && res[1] < 1e-14);
    }

    #[test]
    fn pendulum_regulator_equations() {
        let p = build_pendulum().plant;
        let (pi_x, _psi, res) = solve_continuous_regulator_equations(&p, 1e-9).unwrap();
        assert!(res[0] < 1e-10 && res[1] < 1e-10);
        assert!((&p.ce * &pi_x).amax() < 1e-12);
    }

    #[test]
    fn resonance_reports_lambda() {
        let mut p = scalar_plant();
        p.b = s(0.0);
        p.a = s(0.0);
        let err = solve_continuous_regulator_equations(&p, 1e-9).unwrap_err();
        assert!(matches!(err, Error::NoSolution(_)));
    }

    #[test]
    fn pi_zeta_trivial() {
        let pz = solve_pi_zeta(&s(0.0), &s(1.0), &s(3.5), &s(0.0), 1e-9).unwrap();
        assert!((pz[(0, 0)] - 3.5).abs() < 1e-14);
        let h = crate::numkit::from_rows(&[vec![0.0, 1.0], vec![-25.0, 0.0]], 2).unwrap();
        let l = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let pz = solve_pi_zeta(&h, &l, &zeros(1, 2), &h, 1e-9).unwrap();
        assert_eq!(pz.amax(), 0.0);
    }

    #[test]
    fn pi_zeta_unobservable_rejected() {
        let l = Matrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let flow = zeros(2, 2);
        let err = solve_pi_zeta(&flow, &l, &zeros(1, 1), &s(0.0), 1e-9).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn washout_scalar_oracle() {
        // F + GΓ = s_D = 1 with F = 0.5, Γ = 1 ⇒ G = 0.5; Π_f = Y_m.
        let (pf, res) =
            solve_washout_steady_state(&s(0.5), &s(0.5), &s(1.0), &s(2.0), &s(1.0), 1e-9).unwrap();
        assert!((pf[(0, 0)] - 2.0).abs() < 1e-14);
        assert!(res[0] < 1e-14 && res[1] < 1e-14);
        let (pf, _) =
            solve_washout_steady_state(&s(0.5), &s(0.5), &s(1.0), &s(0.0), &s(1.0), 1e-9).unwrap();
        assert_eq!(pf[(0, 0)], 0.0);
    }

    #[test]
    fn pi_z_stacking() {
        let pz = build_pi_z(&zeros(2, 2), &zeros(2, 2), 7).unwrap();
        assert_eq!(pz.shape(), (7, 2));
        assert_eq!(pz.amax(), 0.0);
        assert!(build_pi_z(&zeros(2, 2), &zeros(2, 2), 3).is_err());
    }
}
