//! Emulation regulator: a continuous-time robust regulator, its sampled
//! digital form and the dwell-time certificate `τ_max`.

use serde::Serialize;

use crate::assumptions::{companion_from_minimal_polynomial, pbh_detectable, pbh_stabilizable, Region};
use crate::design::lqg::{continuous_lqg, Stabilizer};
use crate::error::{Error, Result};
use crate::model::{EmulationOptions, PlantModel};
use crate::numkit::{
    identity, is_hurwitz, matexp, matexp_with_integral, norm2, selector_first, solve_care,
    solve_linear_matrix_equation, solve_lyapunov, spectral_abscissa, vstack, zeros, Matrix,
};
use crate::regeq::{kron_identity, solve_continuous_regulator_equations};

/// Continuous washout `ξ̇ = Fξ + G y_m`, `y_f = y_m − Γξ`, with
/// `F + GΓ = Φ ⊗ I_{q_m}` and `F` Hurwitz.
pub fn continuous_washout(phi: &Matrix, q_m: usize) -> Result<(Matrix, Matrix, Matrix)> {
    let gamma = selector_first(phi.nrows(), q_m);
    let big = kron_identity(phi, q_m);
    let k = big.nrows();
    if k == 0 {
        return Ok((zeros(0, 0), zeros(0, q_m), gamma));
    }
    let y = solve_care(&big.transpose(), &gamma.transpose(), &identity(k), &identity(q_m))
        .map_err(|e| Error::Synthesis(format!("continuous washout gain: {e}")))?;
    let g = &y * gamma.transpose();
    let f = &big - &g * &gamma;
    Ok((f, g, gamma))
}

/// `ẋ_c = A_c x_c + B_c ŷ`, `u = C_c x_c`, with its sampled form and
/// dwell-time certificate.
#[derive(Debug, Clone, Serialize)]
pub struct EmulationRegulator {
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub a_c: Matrix,
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub b_c: Matrix,
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub c_c: Matrix,
    pub period: f64,
    /// `e^{A_cT}`.
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub m: Matrix,
    /// `∫₀ᵀ e^{A_c r}dr · B_c`.
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub gamma_d: Matrix,
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub pi_xc: Matrix,
    pub pi_xc_residual: f64,
    /// Spectral abscissa of the continuous closed loop.
    pub abscissa: f64,
    pub certificate: Option<DwellCertificate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DwellCertificate {
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub p: Matrix,
    pub kappa: f64,
    pub gamma: f64,
    pub tau_max: f64,
    /// Largest eigenvalue of the certified block matrix.
    pub max_eig: f64,
    pub k_em: f64,
    /// `k_em/√(γκ)·‖[Y_m S; Ψ S]‖`.
    pub error_bound: f64,
}

/// Continuous closed-loop matrices `(𝐀, 𝐁, 𝐂)` of plant and regulator.
pub fn certificate_matrices(plant: &PlantModel, a_c: &Matrix, b_c: &Matrix, c_c: &Matrix) -> (Matrix, Matrix, Matrix) {
    let (n, m, nc) = (plant.n(), plant.m(), a_c.nrows());
    let q = plant.q_e() + plant.q_m();
    let c = plant.c();
    let a = &plant.a;
    let b = &plant.b;
    let mut big_a = zeros(n + nc, n + nc);
    big_a.view_mut((0, 0), (n, n)).copy_from(a);
    big_a.view_mut((0, n), (n, nc)).copy_from(&(b * c_c));
    big_a.view_mut((n, 0), (nc, n)).copy_from(&(b_c * &c));
    big_a.view_mut((n, n), (nc, nc)).copy_from(a_c);
    let mut big_b = zeros(n + nc, q + m);
    big_b.view_mut((0, q), (n, m)).copy_from(b);
    big_b.view_mut((n, 0), (nc, q)).copy_from(b_c);
    let mut big_c = zeros(q + m, n + nc);
    big_c.view_mut((0, 0), (q, n)).copy_from(&(&c * a));
    big_c.view_mut((0, n), (q, nc)).copy_from(&(&c * b * c_c));
    big_c.view_mut((q, 0), (m, n)).copy_from(&(c_c * b_c * &c));
    big_c.view_mut((q, n), (m, nc)).copy_from(&(c_c * a_c));
    (big_a, big_b, big_c)
}

/// Design-model augmentation: washout, optional Padé input lag, internal
/// model. State `(ξ, x, [p], η)`, input `(v_u, v_η)`, output `(e, y_f)`.
fn augmented_design_model(
    plant: &PlantModel,
    f: &Matrix,
    g: &Matrix,
    gamma: &Matrix,
    flow: &Matrix,
    l: &Matrix,
    delay: Option<f64>,
) -> (Matrix, Matrix, Matrix) {
    let (n, m, qe, qm) = (plant.n(), plant.m(), plant.q_e(), plant.q_m());
    let (nf, ne) = (f.nrows(), flow.nrows());
    let np = if delay.is_some() { m } else { 0 };
    let (ox, op, oe) = (nf, nf + n, nf + n + np);
    let dim = oe + ne;
    let mut a = zeros(dim, dim);
    let mut b = zeros(dim, m + ne);
    a.view_mut((0, 0), (nf, nf)).copy_from(f);
    a.view_mut((0, ox), (nf, n)).copy_from(&(g * &plant.cm));
    a.view_mut((ox, ox), (n, n)).copy_from(&plant.a);
    match delay {
        Some(td) => {
            // u_plant = 2p − u_c, ṗ = (2/td)(u_c − p), u_c = Lη + v_u.
            let k = 2.0 / td;
            a.view_mut((ox, op), (n, m)).copy_from(&(&plant.b * 2.0));
            a.view_mut((ox, oe), (n, ne)).copy_from(&(-&plant.b * l));
            a.view_mut((op, op), (m, m)).copy_from(&(-identity(m) * k));
            a.view_mut((op, oe), (m, ne)).copy_from(&(l * k));
            b.view_mut((ox, 0), (n, m)).copy_from(&(-&plant.b));
            b.view_mut((op, 0), (m, m)).copy_from(&(identity(m) * k));
        }
        None => {
            a.view_mut((ox, oe), (n, ne)).copy_from(&(&plant.b * l));
            b.view_mut((ox, 0), (n, m)).copy_from(&plant.b);
        }
    }
    a.view_mut((oe, oe), (ne, ne)).copy_from(flow);
    b.view_mut((oe, m), (ne, ne)).fill_with_identity();
    let mut c = zeros(qe + qm, dim);
    c.view_mut((0, ox), (qe, n)).copy_from(&plant.ce);
    c.view_mut((qe, 0), (qm, nf)).copy_from(&(-gamma));
    c.view_mut((qe, ox), (qm, n)).copy_from(&plant.cm);
    (a, b, c)
}

/// Continuous regulator `(A_c, B_c, C_c)` and `Π_{x_c}`.
pub fn build_continuous_regulator(
    plant: &PlantModel,
    options: &EmulationOptions,
    tol: f64,
) -> Result<(Matrix, Matrix, Matrix, Matrix, f64)> {
    plant.check_dimensions()?;
    let (m, qe, qm) = (plant.m(), plant.q_e(), plant.q_m());
    if m != qe {
        return Err(Error::Precondition(format!(
            "emulation design requires as many inputs as regulated errors (m = {m}, q_e = {qe})"
        )));
    }
    let q = qe + qm;
    let comp = companion_from_minimal_polynomial(&plant.s, tol)?;
    let flow = kron_identity(&comp.phi, qe);
    let l = selector_first(comp.degree, qe);
    let (f, g, gamma) = continuous_washout(&comp.phi, qm)?;
    let (aa, bb, cc) = augmented_design_model(plant, &f, &g, &gamma, &flow, &l, options.delay_compensation);
    let stab = pbh_stabilizable(&aa, &bb, Region::Continuous, tol)?;
    if let Some(w) = stab.witnesses.first() {
        return Err(Error::Synthesis(format!(
            "continuous augmented system not stabilizable at λ = {:.6}{:+.6}i",
            w.lambda[0], w.lambda[1]
        )));
    }
    let det = pbh_detectable(&aa, &cc, Region::Continuous, tol)?;
    if let Some(w) = det.witnesses.first() {
        return Err(Error::Synthesis(format!(
            "continuous augmented system not detectable at λ = {:.6}{:+.6}i",
            w.lambda[0], w.lambda[1]
        )));
    }
    let st: Stabilizer = continuous_lqg(&aa, &bb, &cc, &options.weights)?;
    let (nf, ne, nt) = (f.nrows(), flow.nrows(), st.a.nrows());
    let k_u = st.k.view((0, 0), (m, nt)).into_owned();
    let k_eta = st.k.view((m, 0), (ne, nt)).into_owned();
    let mut gamma_bar = zeros(q, nf);
    gamma_bar.view_mut((qe, 0), (qm, nf)).copy_from(&gamma);
    let mut e_m = zeros(qm, q);
    e_m.view_mut((0, qe), (qm, qm)).fill_with_identity();

    let nc = nf + ne + nt;
    let mut a_c = zeros(nc, nc);
    a_c.view_mut((0, 0), (nf, nf)).copy_from(&f);
    a_c.view_mut((nf, nf), (ne, ne)).copy_from(&flow);
    a_c.view_mut((nf, nf + ne), (ne, nt)).copy_from(&(-&k_eta));
    a_c.view_mut((nf + ne, 0), (nt, nf)).copy_from(&(-&st.h * &gamma_bar));
    a_c.view_mut((nf + ne, nf + ne), (nt, nt)).copy_from(&st.a);
    let b_c = vstack(&[&(&g * &e_m), &zeros(ne, q), &st.h])?;
    let mut c_c = zeros(m, nc);
    c_c.view_mut((0, nf), (m, ne)).copy_from(&l);
    c_c.view_mut((0, nf + ne), (m, nt)).copy_from(&(-&k_u));

    let (big_a, _, _) = certificate_matrices(plant, &a_c, &b_c, &c_c);
    if !is_hurwitz(&big_a, 0.0)? {
        return Err(Error::Synthesis(format!(
            "continuous closed loop not Hurwitz (abscissa {:.6})",
            spectral_abscissa(&big_a)?
        )));
    }
    let (pi_x, psi, _) = solve_continuous_regulator_equations(plant, tol)?;
    let (pi_xc, res) = solve_pi_xc(plant, &pi_x, &psi, &a_c, &b_c, &c_c, tol)?;
    Ok((a_c, b_c, c_c, pi_xc, res))
}

/// `Π_{x_c}S = A_cΠ_{x_c} + B_c(CΠ_x + Q)`, `Ψ = C_cΠ_{x_c}` solved jointly.
pub fn solve_pi_xc(
    plant: &PlantModel,
    pi_x: &Matrix,
    psi: &Matrix,
    a_c: &Matrix,
    b_c: &Matrix,
    c_c: &Matrix,
    tol: f64,
) -> Result<(Matrix, f64)> {
    let (nc, m) = (a_c.nrows(), c_c.nrows());
    let y_bar = plant.c() * pi_x + plant.q();
    let mut top = zeros(nc + m, nc);
    top.view_mut((0, 0), (nc, nc)).fill_with_identity();
    let right = vstack(&[&(-a_c), c_c])?;
    let rhs = vstack(&[&(b_c * &y_bar), psi])?;
    let id = identity(plant.d());
    let sol = solve_linear_matrix_equation(&[(&top, &plant.s), (&right, &id)], &rhs, tol)?;
    let pi_xc = sol.x;
    let res = (&pi_xc * &plant.s - a_c * &pi_xc - b_c * &y_bar).norm() + (c_c * &pi_xc - psi).norm();
    if res > 1e-8 {
        return Err(Error::Certification(format!(
            "regulator steady-state residual {res:.3e} exceeds 1e-8"
        )));
    }
    Ok((pi_xc, res))
}

/// `(e^{A_cT}, ∫₀ᵀ e^{A_c r}dr·B_c)`.
pub fn emulate(a_c: &Matrix, b_c: &Matrix, period: f64) -> Result<(Matrix, Matrix)> {
    if !(period.is_finite() && period > 0.0) {
        return Err(Error::Invalid(format!("sampling period must be positive, got {period}")));
    }
    let (m, int) = matexp_with_integral(a_c, period)?;
    Ok((m, int * b_c))
}

/// Three-branch dwell-time bound with `r = √|γ²/κ² − 1|`.
pub fn tau_max(kappa: f64, gamma: f64) -> f64 {
    let r = (gamma * gamma / (kappa * kappa) - 1.0).abs().sqrt();
    if r == 0.0 {
        1.0 / kappa
    } else if gamma > kappa {
        r.atan() / (kappa * r)
    } else {
        r.atanh() / (kappa * r)
    }
}

pub const LMI_TOL: f64 = 1e-8;
const KAPPA_GRID: usize = 40;

fn block_matrix(p: &Matrix, a: &Matrix, b: &Matrix, c: &Matrix, kappa: f64, gamma: f64) -> Matrix {
    let n = a.nrows();
    let k = b.ncols();
    let top = a.transpose() * p + p * a + p * (2.0 * kappa) + c.transpose() * c * (2.0 / gamma);
    let pb = p * b;
    let mut out = zeros(n + k, n + k);
    out.view_mut((0, 0), (n, n)).copy_from(&top);
    out.view_mut((0, n), (n, k)).copy_from(&pb);
    out.view_mut((n, 0), (k, n)).copy_from(&pb.transpose());
    out.view_mut((n, n), (k, k)).copy_from(&(-identity(k) * gamma));
    out
}

pub fn max_block_eigenvalue(p: &Matrix, a: &Matrix, b: &Matrix, c: &Matrix, kappa: f64, gamma: f64) -> f64 {
    let m = block_matrix(p, a, b, c, kappa, gamma);
    let sym = (&m + m.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.max()
}

/// Smallest feasible `γ` for fixed `κ`, by doubling then bisection.
fn smallest_gamma(p: &Matrix, a: &Matrix, b: &Matrix, c: &Matrix, kappa: f64) -> Option<f64> {
    let feasible = |g: f64| max_block_eigenvalue(p, a, b, c, kappa, g) <= LMI_TOL;
    let floor = 1e-9;
    if feasible(floor) {
        return Some(floor);
    }
    let mut hi = 1.0;
    while !feasible(hi) {
        hi *= 2.0;
        if hi > 1e15 {
            return None;
        }
    }
    let mut lo = floor.max(hi / 2.0).min(hi);
    if lo == hi {
        lo = floor;
    }
    for _ in 0..200 {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// `(𝐏, κ, γ*)` with `𝐏` from `𝐀ᵀ𝐏 + 𝐏𝐀 = −I`, choosing the grid `κ`
/// whose smallest feasible `γ` gives the largest `τ_max`.
pub fn find_kappa_gamma(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<(Matrix, f64, f64)> {
    if !is_hurwitz(a, 0.0)? {
        return Err(Error::Precondition("𝐀 must be Hurwitz".into()));
    }
    let n = a.nrows();
    let p = solve_lyapunov(a, &identity(n), 1e-12)?;
    let lmax = p.clone().symmetric_eigen().eigenvalues.max();
    let kappa_max = 1.0 / (2.0 * lmax);
    let mut best: Option<(f64, f64, f64)> = None;
    for i in 1..=KAPPA_GRID {
        let kappa = kappa_max * i as f64 / (KAPPA_GRID + 1) as f64;
        if let Some(g) = smallest_gamma(&p, a, b, c, kappa) {
            let t = tau_max(kappa, g);
            if best.is_none_or(|(_, _, bt)| t > bt) {
                best = Some((kappa, g, t));
            }
        }
    }
    match best {
        Some((k, g, _)) => Ok((p, k, g)),
        None => Err(Error::Certification(
            "no feasible (κ, γ) on the search grid".into(),
        )),
    }
}

/// Full emulation pipeline. The dwell-time certificate is attached when
/// the search succeeds; its absence is not an error.
pub fn design_emulation(
    plant: &PlantModel,
    period: f64,
    options: &EmulationOptions,
    w_bound: f64,
    tol: f64,
) -> Result<EmulationRegulator> {
    let (a_c, b_c, c_c, pi_xc, res) = build_continuous_regulator(plant, options, tol)?;
    let (m, gamma_d) = emulate(&a_c, &b_c, period)?;
    let (big_a, big_b, big_c) = certificate_matrices(plant, &a_c, &b_c, &c_c);
    let abscissa = spectral_abscissa(&big_a)?;
    let certificate = find_kappa_gamma(&big_a, &big_b, &big_c).ok().map(|(p, kappa, gamma)| {
        let max_eig = max_block_eigenvalue(&p, &big_a, &big_b, &big_c, kappa, gamma);
        let k_em = norm2(&plant.ce) * w_bound / norm2(&p).sqrt();
        let (pi_x, psi, _) =
            solve_continuous_regulator_equations(plant, tol).expect("solved above");
        let y_m = &plant.cm * &pi_x + &plant.qm;
        let drift = vstack(&[&(&y_m * &plant.s), &(&psi * &plant.s)])
            .map(|m| norm2(&m))
            .unwrap_or(f64::NAN);
        DwellCertificate {
            tau_max: tau_max(kappa, gamma),
            error_bound: k_em / (gamma * kappa).sqrt() * drift,
            p,
            kappa,
            gamma,
            max_eig,
            k_em,
        }
    });
    Ok(EmulationRegulator {
        a_c,
        b_c,
        c_c,
        period,
        m,
        gamma_d,
        pi_xc,
        pi_xc_residual: res,
        abscissa,
        certificate,
    })
}

/// `e^{A_c t}` convenience used by the simulator's consistency tests.
pub fn regulator_propagator(reg: &EmulationRegulator, t: f64) -> Result<Matrix> {
    matexp(&reg.a_c, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_pendulum;

    fn s(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn tau_max_branches() {
        assert!((tau_max(1.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((tau_max(1.0, 2f64.sqrt()) - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        let r = 3f64.sqrt() / 2.0;
        assert!((tau_max(2.0, 1.0) - r.atanh() / (2.0 * r)).abs() < 1e-12);
        assert!((tau_max(2.0, 1.0) - 0.7603).abs() < 1e-4);
    }

    #[test]
    fn tau_max_continuous_and_decreasing() {
        for k in [0.3, 1.0, 4.0] {
            assert!((tau_max(k, k + 1e-6) - 1.0 / k).abs() <= 1e-4);
            assert!((tau_max(k, k - 1e-6) - 1.0 / k).abs() <= 1e-4);
            let mut prev = f64::INFINITY;
            for i in 1..200 {
                let t = tau_max(k, 0.05 * i as f64);
                assert!(t < prev);
                prev = t;
            }
        }
    }

    #[test]
    fn emulate_scalar() {
        let (m, g) = emulate(&s(-1.0), &s(1.0), 1.0).unwrap();
        assert!((m[(0, 0)] - (-1f64).exp()).abs() < 1e-15);
        assert!((g[(0, 0)] - (1.0 - (-1f64).exp())).abs() < 1e-14);
        let (m, g) = emulate(&s(0.0), &s(2.0), 0.5).unwrap();
        assert_eq!(m[(0, 0)], 1.0);
        assert!((g[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_kappa() {
        let (p, k, g) = find_kappa_gamma(&s(-1.0), &zeros(1, 0), &zeros(0, 1)).unwrap();
        assert!((p[(0, 0)] - 0.5).abs() < 1e-12);
        assert!(k > 0.0 && k <= 1.0);
        assert!(max_block_eigenvalue(&p, &s(-1.0), &zeros(1, 0), &zeros(0, 1), k, g) <= LMI_TOL);
    }

    #[test]
    fn scalar_plant_regulator() {
        let plant = PlantModel {
            a: s(-1.0),
            b: s(1.0),
            p: s(1.0),
            s: s(0.0),
            ce: s(1.0),
            qe: s(0.0),
            cm: zeros(0, 1),
            qm: zeros(0, 1),
        };
        let (a_c, b_c, c_c, pi_xc, res) =
            build_continuous_regulator(&plant, &EmulationOptions::default(), 1e-9).unwrap();
        assert!(res < 1e-9);
        let (big_a, _, _) = certificate_matrices(&plant, &a_c, &b_c, &c_c);
        assert!(is_hurwitz(&big_a, 0.0).unwrap());
        assert_eq!(pi_xc.nrows(), a_c.nrows());
    }

    #[test]
    fn zero_exosystem_influence() {
        let mut plant = build_pendulum().plant;
        plant.p.fill(0.0);
        plant.qe.fill(0.0);
        plant.qm.fill(0.0);
        let opts = build_pendulum().design.emulation;
        let (_, _, _, pi_xc, _) = build_continuous_regulator(&plant, &opts, 1e-9).unwrap();
        assert!(pi_xc.amax() < 1e-12);
    }

    #[test]
    fn pendulum_certificate() {
        let sc = build_pendulum();
        let reg = design_emulation(&sc.plant, 0.025, &sc.design.emulation, sc.w_bound, 1e-9).unwrap();
        assert!(reg.abscissa < 0.0);
        let cert = reg.certificate.expect("feasible triple");
        assert!(cert.max_eig <= LMI_TOL && cert.kappa > 0.0 && cert.gamma > 0.0);
        assert!(cert.p.clone().symmetric_eigen().eigenvalues.min() > 0.0);
    }
}
