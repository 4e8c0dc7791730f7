//! Generalized-hold regulator: hold device, extended discretization,
//! washout filter, discrete internal model, stabilizer and the assembled
//! discrete controller with its closed-loop certificate.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::assumptions::{
    check_pathological, companion_from_minimal_polynomial, pbh_detectable, pbh_stabilizable,
    CompanionForm, Region,
};
use crate::design::lqg::{discrete_lqg, Stabilizer};
use crate::error::{dim_err, Error, Result};
use crate::model::{LqgWeights, PlantModel};
use crate::numkit::{
    block_diag, cross_integral, hstack, identity, is_schur, matexp, matexp_with_integral,
    selector_first, solve_dare, spectral_radius, vstack, zeros, Matrix,
};
use crate::regeq::{
    build_pi_z, kron_identity, solve_continuous_regulator_equations, solve_pi_zeta,
    solve_washout_steady_state, verify_discrete_regulator_equations, RegulatorSolution,
};

/// `ζ̇ = (Φ⊗I_{q_e})ζ`, `u = Lζ + v_u`.
#[derive(Debug, Clone, Serialize)]
pub struct HoldDevice {
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub phi: Matrix,
    /// `Φ ⊗ I_{q_e}`.
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub flow: Matrix,
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub l: Matrix,
}

impl HoldDevice {
    pub fn dim(&self) -> usize {
        self.flow.nrows()
    }
}

/// First-coordinate hold output `L = e₁ᵀ ⊗ I_{q_e}`; needs `m = q_e`.
pub fn build_hold(plant: &PlantModel, companion: &CompanionForm, tol: f64) -> Result<HoldDevice> {
    let (m, qe) = (plant.m(), plant.q_e());
    if m != qe {
        return Err(Error::Precondition(format!(
            "hold design requires as many inputs as regulated errors (m = {m}, q_e = {qe})"
        )));
    }
    let flow = kron_identity(&companion.phi, qe);
    let l = selector_first(companion.degree, qe);
    let obs = pbh_detectable(&flow, &l, Region::Everywhere, tol)?;
    if !obs.holds {
        return Err(Error::Numeric("(Φ⊗I, L) unexpectedly unobservable".into()));
    }
    Ok(HoldDevice {
        phi: companion.phi.clone(),
        flow,
        l,
    })
}

/// Sample-data matrices of the plant cascaded with the hold device.
#[derive(Debug, Clone, Serialize)]
pub struct DiscretizedPlant {
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub s_d: Matrix,
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub a_d: Matrix,
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub b_d: Matrix,
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub l_d: Matrix,
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub p_d: Matrix,
    /// `Φ_D = e^{ΦT}`.
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub phi_d: Matrix,
    /// `Φ_D ⊗ I_{q_e}`.
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub flow_d: Matrix,
}

pub fn discretize_extended(
    plant: &PlantModel,
    hold: &HoldDevice,
    period: f64,
    tol: f64,
) -> Result<DiscretizedPlant> {
    let path = check_pathological(&plant.a, &plant.s, period, tol)?;
    if path.pathological {
        let w = &path.witnesses[0];
        return Err(Error::Precondition(format!(
            "sampling period T = {period} is pathological: eigenvalues {:.6}{:+.6}i and {:.6}{:+.6}i differ by 2π·{}i/T",
            w.lambda[0],
            w.lambda[1],
            w.partner.map(|p| p[0]).unwrap_or(0.0),
            w.partner.map(|p| p[1]).unwrap_or(0.0),
            w.deficiency
        )));
    }
    let (a_d, int_a) = matexp_with_integral(&plant.a, period)?;
    let b_d = int_a * &plant.b;
    let l_d = cross_integral(&plant.a, &(&plant.b * &hold.l), &hold.flow, period)?;
    let p_d = cross_integral(&plant.a, &plant.p, &plant.s, period)?;
    let s_d = matexp(&plant.s, period)?;
    let phi_d = matexp(&hold.phi, period)?;
    let flow_d = kron_identity(&phi_d, plant.q_e());
    Ok(DiscretizedPlant {
        s_d,
        a_d,
        b_d,
        l_d,
        p_d,
        phi_d,
        flow_d,
    })
}

/// `ξ⁺ = F_fξ + G_f ŷ_m`, `y_f = ŷ_m − Γ_fξ`.
#[derive(Debug, Clone, Serialize)]
pub struct Washout {
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub f: Matrix,
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub g: Matrix,
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub gamma: Matrix,
}

/// Make `f + g` round to exactly `target` by nudging `g` by a few ulps.
fn exact_split(target: f64, f: f64, g: f64) -> f64 {
    if f + g == target {
        return g;
    }
    let mut cand = target - f;
    for _ in 0..64 {
        let s = f + cand;
        if s == target {
            return cand;
        }
        cand = if s < target { next_up(cand) } else { next_down(cand) };
    }
    g
}

fn next_up(x: f64) -> f64 {
    if x.is_nan() || x == f64::INFINITY {
        return x;
    }
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    f64::from_bits(if x > 0.0 { bits + 1 } else { bits - 1 })
}

fn next_down(x: f64) -> f64 {
    -next_up(-x)
}

/// Washout with `F_f + G_fΓ_f = Φ_D ⊗ I_{q_m}` holding bit for bit.
///
/// `Γ_f` is the first-coordinate selector and `G_f` the steady-state
/// Kalman gain of `(Φ_D ⊗ I, Γ_f)` with identity covariances.
pub fn build_washout(phi_d: &Matrix, q_m: usize) -> Result<Washout> {
    let degree = phi_d.nrows();
    let gamma = selector_first(degree, q_m);
    let big = kron_identity(phi_d, q_m);
    let k = big.nrows();
    if k == 0 {
        return Ok(Washout {
            f: zeros(0, 0),
            g: zeros(0, q_m),
            gamma,
        });
    }
    let y = solve_dare(&big.transpose(), &gamma.transpose(), &identity(k), &identity(q_m))
        .map_err(|e| Error::Synthesis(format!("washout gain: {e}")))?;
    let gy = &gamma * &y;
    let mut g = (identity(q_m) + &gy * gamma.transpose())
        .lu()
        .solve(&(&gy * big.transpose()))
        .ok_or_else(|| Error::Synthesis("washout gain system singular".into()))?
        .transpose();
    let f = &big - &g * &gamma;
    // Γ_f is a 0/1 selector, so (GΓ)_{ij} is exactly G_{i,j} on the
    // selected columns; fix those entries so the sum is exact.
    for i in 0..k {
        for j in 0..q_m {
            g[(i, j)] = exact_split(big[(i, j)], f[(i, j)], g[(i, j)]);
        }
    }
    if !is_schur(&f, 0.0)? {
        return Err(Error::Synthesis("washout F_f is not Schur".into()));
    }
    Ok(Washout { f, g, gamma })
}

/// Discrete plant + washout + internal model, state `(ξ, x_D, ζ_D, η)`,
/// input `(v_u, v̄_ζ, v_η)`, output `(ê, y_f)`.
#[derive(Debug, Clone, Serialize)]
pub struct AugmentedSystem {
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub a: Matrix,
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub b: Matrix,
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub c: Matrix,
}

pub fn assemble_augmented(
    plant: &PlantModel,
    disc: &DiscretizedPlant,
    washout: &Washout,
    tol: f64,
) -> Result<AugmentedSystem> {
    let (n, m, qe, qm) = (plant.n(), plant.m(), plant.q_e(), plant.q_m());
    let nf = washout.f.nrows();
    let nz = disc.flow_d.nrows();
    let dim = nf + n + 2 * nz;
    let (ox, oz, oe) = (nf, nf + n, nf + n + nz);

    let mut a = zeros(dim, dim);
    a.view_mut((0, 0), (nf, nf)).copy_from(&washout.f);
    a.view_mut((0, ox), (nf, n)).copy_from(&(&washout.g * &plant.cm));
    a.view_mut((ox, ox), (n, n)).copy_from(&disc.a_d);
    a.view_mut((ox, oz), (n, nz)).copy_from(&disc.l_d);
    a.view_mut((oz, oe), (nz, nz)).fill_with_identity();
    a.view_mut((oe, oe), (nz, nz)).copy_from(&disc.flow_d);

    let mut b = zeros(dim, m + 2 * nz);
    b.view_mut((ox, 0), (n, m)).copy_from(&disc.b_d);
    b.view_mut((oz, m), (nz, nz)).fill_with_identity();
    b.view_mut((oe, m + nz), (nz, nz)).fill_with_identity();

    let mut c = zeros(qe + qm, dim);
    c.view_mut((0, ox), (qe, n)).copy_from(&plant.ce);
    c.view_mut((qe, 0), (qm, nf)).copy_from(&(-&washout.gamma));
    c.view_mut((qe, ox), (qm, n)).copy_from(&plant.cm);

    let stab = pbh_stabilizable(&a, &b, Region::Discrete, tol)?;
    if let Some(w) = stab.witnesses.first() {
        return Err(Error::Precondition(format!(
            "augmented system not stabilizable at λ = {:.6}{:+.6}i (rank deficiency {})",
            w.lambda[0], w.lambda[1], w.deficiency
        )));
    }
    let det = pbh_detectable(&a, &c, Region::Discrete, tol)?;
    if let Some(w) = det.witnesses.first() {
        return Err(Error::Precondition(format!(
            "augmented system not detectable at λ = {:.6}{:+.6}i (rank deficiency {})",
            w.lambda[0], w.lambda[1], w.deficiency
        )));
    }
    Ok(AugmentedSystem { a, b, c })
}

/// LQG stabilizer of the augmented system, verified Schur in closed loop.
pub fn synthesize_stabilizer(aug: &AugmentedSystem, weights: &LqgWeights) -> Result<Stabilizer> {
    let st = discrete_lqg(&aug.a, &aug.b, &aug.c, weights)?;
    let cl = crate::design::lqg::closed_loop(&aug.a, &aug.b, &aug.c, &st);
    let rho = spectral_radius(&cl)?;
    if rho >= 1.0 {
        return Err(Error::Synthesis(format!(
            "augmented closed loop not Schur (ρ = {rho:.6})"
        )));
    }
    Ok(st)
}

/// `z⁺ = A_z z + B_z ŷ`, `v = K_z z + L_z ŷ`, `z = (ξ, η, θ)`.
#[derive(Debug, Clone, Serialize)]
pub struct DiscreteController {
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub a_z: Matrix,
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub b_z: Matrix,
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub k_z: Matrix,
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub l_z: Matrix,
    /// Number of plant inputs; splits `K_z`, `L_z` into `u` and `ζ` rows.
    pub m: usize,
}

impl DiscreteController {
    pub fn n_z(&self) -> usize {
        self.a_z.nrows()
    }
    fn rows(m: &Matrix, start: usize, count: usize) -> Matrix {
        m.view((start, 0), (count, m.ncols())).into_owned()
    }
    pub fn k_zu(&self) -> Matrix {
        Self::rows(&self.k_z, 0, self.m)
    }
    pub fn k_zzeta(&self) -> Matrix {
        Self::rows(&self.k_z, self.m, self.k_z.nrows() - self.m)
    }
    pub fn l_zu(&self) -> Matrix {
        Self::rows(&self.l_z, 0, self.m)
    }
    pub fn l_zzeta(&self) -> Matrix {
        Self::rows(&self.l_z, self.m, self.l_z.nrows() - self.m)
    }
}

/// Cascade washout → internal model → stabilizer as one controller.
pub fn assemble_controller(
    plant: &PlantModel,
    disc: &DiscretizedPlant,
    washout: &Washout,
    stab: &Stabilizer,
) -> Result<DiscreteController> {
    let (m, qe, qm) = (plant.m(), plant.q_e(), plant.q_m());
    let q = qe + qm;
    let nf = washout.f.nrows();
    let ne = disc.flow_d.nrows();
    let nt = stab.a.nrows();
    if stab.c.nrows() != m + 2 * ne || stab.b.ncols() != q {
        return Err(dim_err("stabilizer does not match the augmented system"));
    }
    let n_z = nf + ne + nt;
    let c_u = stab.c.view((0, 0), (m, nt)).into_owned();
    let c_zeta = stab.c.view((m, 0), (ne, nt)).into_owned();
    let c_eta = stab.c.view((m + ne, 0), (ne, nt)).into_owned();
    let mut gamma_bar = zeros(q, nf);
    gamma_bar.view_mut((qe, 0), (qm, nf)).copy_from(&washout.gamma);
    let mut e_m = zeros(qm, q);
    e_m.view_mut((0, qe), (qm, qm)).fill_with_identity();

    let mut a_z = zeros(n_z, n_z);
    a_z.view_mut((0, 0), (nf, nf)).copy_from(&washout.f);
    a_z.view_mut((nf, nf), (ne, ne)).copy_from(&disc.flow_d);
    a_z.view_mut((nf, nf + ne), (ne, nt)).copy_from(&c_eta);
    a_z.view_mut((nf + ne, 0), (nt, nf)).copy_from(&(-&stab.b * &gamma_bar));
    a_z.view_mut((nf + ne, nf + ne), (nt, nt)).copy_from(&stab.a);

    let b_z = vstack(&[&(&washout.g * &e_m), &zeros(ne, q), &stab.b])?;

    let mut k_z = zeros(m + ne, n_z);
    k_z.view_mut((0, nf + ne), (m, nt)).copy_from(&c_u);
    k_z.view_mut((m, nf), (ne, ne)).fill_with_identity();
    k_z.view_mut((m, nf + ne), (ne, nt)).copy_from(&c_zeta);

    if stab.d.amax() != 0.0 {
        return Err(Error::Invalid("stabilizer must be strictly proper".into()));
    }
    let l_z = zeros(m + ne, q);
    Ok(DiscreteController {
        a_z,
        b_z,
        k_z,
        l_z,
        m,
    })
}

/// Closed-loop matrix over `(x_D, ζ_D, z)`.
pub fn closed_loop_matrix(plant: &PlantModel, disc: &DiscretizedPlant, ctrl: &DiscreteController) -> Matrix {
    let c = plant.c();
    let (n, ne, nz) = (plant.n(), disc.flow_d.nrows(), ctrl.n_z());
    let mut acl = zeros(n + ne + nz, n + ne + nz);
    acl.view_mut((0, 0), (n, n))
        .copy_from(&(&disc.a_d + &disc.b_d * ctrl.l_zu() * &c));
    acl.view_mut((0, n), (n, ne)).copy_from(&disc.l_d);
    acl.view_mut((0, n + ne), (n, nz))
        .copy_from(&(&disc.b_d * ctrl.k_zu()));
    acl.view_mut((n, 0), (ne, n)).copy_from(&(ctrl.l_zzeta() * &c));
    acl.view_mut((n, n + ne), (ne, nz)).copy_from(&ctrl.k_zzeta());
    acl.view_mut((n + ne, 0), (nz, n)).copy_from(&(&ctrl.b_z * &c));
    acl.view_mut((n + ne, n + ne), (nz, nz)).copy_from(&ctrl.a_z);
    acl
}

/// Flow/jump matrices of the hybrid closed loop over
/// `ρ = (x, ζ, ê, ŷ_m, z)`: `ρ̇ = F_cl ρ + P_F w`, `ρ⁺ = J_cl ρ + P_J w`.
pub struct HybridClosedLoop {
    pub f_cl: Matrix,
    pub p_f: Matrix,
    pub j_cl: Matrix,
    pub p_j: Matrix,
}

pub fn hybrid_closed_loop(plant: &PlantModel, hold: &HoldDevice, ctrl: &DiscreteController) -> HybridClosedLoop {
    let (n, d, q) = (plant.n(), plant.d(), plant.q_e() + plant.q_m());
    let ne = hold.dim();
    let nz = ctrl.n_z();
    let (ox, oz, oy, ow) = (0, n, n + ne, n + ne + q);
    let dim = ow + nz;
    let c = plant.c();

    let mut f = zeros(dim, dim);
    f.view_mut((ox, ox), (n, n)).copy_from(&plant.a);
    f.view_mut((ox, oz), (n, ne)).copy_from(&(&plant.b * &hold.l));
    f.view_mut((ox, oy), (n, q)).copy_from(&(&plant.b * ctrl.l_zu()));
    f.view_mut((ox, ow), (n, nz)).copy_from(&(&plant.b * ctrl.k_zu()));
    f.view_mut((oz, oz), (ne, ne)).copy_from(&hold.flow);
    let mut p_f = zeros(dim, d);
    p_f.view_mut((0, 0), (n, d)).copy_from(&plant.p);

    let mut j = zeros(dim, dim);
    j.view_mut((ox, ox), (n, n)).fill_with_identity();
    j.view_mut((oz, oy), (ne, q)).copy_from(&ctrl.l_zzeta());
    j.view_mut((oz, ow), (ne, nz)).copy_from(&ctrl.k_zzeta());
    j.view_mut((oy, ox), (q, n)).copy_from(&c);
    j.view_mut((ow, oy), (nz, q)).copy_from(&ctrl.b_z);
    j.view_mut((ow, ow), (nz, nz)).copy_from(&ctrl.a_z);
    let mut p_j = zeros(dim, d);
    p_j.view_mut((oy, 0), (q, d)).copy_from(&plant.q());
    HybridClosedLoop { f_cl: f, p_f, j_cl: j, p_j }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClosedLoopCertificate {
    pub spectral_radius: f64,
    /// Residuals keyed by equation.
    pub residuals: BTreeMap<String, f64>,
    /// Largest steady-state hybrid residual over the τ grid.
    pub hybrid_residual: f64,
    pub tau_points: usize,
    pub valid: bool,
}

/// Steady-state manifold `Π̂(τ)` over `ρ = (x, ζ, ê, ŷ_m, z)`.
pub fn hybrid_manifold(sol: &RegulatorSolution, s: &Matrix, qe: usize, tau: f64) -> Result<Matrix> {
    let back = matexp(s, -tau)?;
    let e_rows = zeros(qe, s.nrows());
    vstack(&[&sol.pi_x, &sol.pi_zeta, &e_rows, &(&sol.y_m * &back), &(&sol.pi_z * &back)])
}

/// Flow and boundary residuals of `Π̂(τ)` on `points` interior τ values
/// plus both endpoints.
pub fn hybrid_steady_state_residual(
    plant: &PlantModel,
    hcl: &HybridClosedLoop,
    sol: &RegulatorSolution,
    period: f64,
    points: usize,
) -> Result<f64> {
    let qe = plant.q_e();
    let s = &plant.s;
    let mut worst: f64 = 0.0;
    for i in 0..points + 2 {
        let tau = period * i as f64 / (points + 1) as f64;
        let pi = hybrid_manifold(sol, s, qe, tau)?;
        let back = matexp(s, -tau)?;
        // dΠ̂/dτ: only the sampled blocks depend on τ.
        let mut dpi = zeros(pi.nrows(), pi.ncols());
        let off = sol.pi_x.nrows() + sol.pi_zeta.nrows() + qe;
        let ym_dot = -(&sol.y_m * s * &back);
        let z_dot = -(&sol.pi_z * s * &back);
        dpi.view_mut((off, 0), (ym_dot.nrows(), ym_dot.ncols())).copy_from(&ym_dot);
        dpi.view_mut((off + ym_dot.nrows(), 0), (z_dot.nrows(), z_dot.ncols()))
            .copy_from(&z_dot);
        let r = (&dpi + &pi * s - &hcl.f_cl * &pi - &hcl.p_f).norm();
        worst = worst.max(r);
    }
    let pi0 = hybrid_manifold(sol, s, qe, 0.0)?;
    let pit = hybrid_manifold(sol, s, qe, period)?;
    let boundary = (&pi0 - &hcl.j_cl * &pit - &hcl.p_j).norm();
    Ok(worst.max(boundary))
}

/// Everything produced by the hold design for one plant and period.
#[derive(Debug, Clone, Serialize)]
pub struct HoldDesign {
    pub period: f64,
    pub companion: CompanionForm,
    pub hold: HoldDevice,
    pub discretized: DiscretizedPlant,
    pub washout: Washout,
    pub augmented: AugmentedSystem,
    pub stabilizer: Stabilizer,
    pub controller: DiscreteController,
    pub solution: RegulatorSolution,
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub a_cl: Matrix,
    pub certificate: ClosedLoopCertificate,
}

impl HoldDesign {
    pub fn require_valid(&self) -> Result<()> {
        if self.certificate.valid {
            Ok(())
        } else {
            Err(Error::Certification(format!(
                "closed-loop certificate invalid: ρ = {:.6}, residuals {:?}, hybrid {:.3e}",
                self.certificate.spectral_radius,
                self.certificate.residuals,
                self.certificate.hybrid_residual
            )))
        }
    }
}

pub const TAU_GRID_POINTS: usize = 32;
const CERT_TOL: f64 = 1e-8;
const HYBRID_TOL: f64 = 1e-7;

/// Full hold-regulator pipeline.
pub fn design_hold(plant: &PlantModel, period: f64, weights: &LqgWeights, tol: f64) -> Result<HoldDesign> {
    plant.check_dimensions()?;
    let companion = companion_from_minimal_polynomial(&plant.s, tol)?;
    let hold = build_hold(plant, &companion, tol)?;
    let disc = discretize_extended(plant, &hold, period, tol)?;
    let washout = build_washout(&disc.phi_d, plant.q_m())?;
    let augmented = assemble_augmented(plant, &disc, &washout, tol)?;
    let stabilizer = synthesize_stabilizer(&augmented, weights)?;
    let controller = assemble_controller(plant, &disc, &washout, &stabilizer)?;

    let mut residuals = BTreeMap::new();
    let (pi_x, psi, r) = solve_continuous_regulator_equations(plant, tol)?;
    residuals.insert("regulator_dynamics".to_string(), r[0]);
    residuals.insert("regulator_error".to_string(), r[1]);
    let pi_zeta = solve_pi_zeta(&hold.flow, &hold.l, &psi, &plant.s, tol)?;
    residuals.insert(
        "hold_reconstruction".to_string(),
        (&pi_zeta * &plant.s - &hold.flow * &pi_zeta).norm() + (&hold.l * &pi_zeta - &psi).norm(),
    );
    let dr = verify_discrete_regulator_equations(&pi_x, &pi_zeta, &disc, plant);
    residuals.insert("discrete_state".to_string(), dr[0]);
    residuals.insert("discrete_hold".to_string(), dr[1]);
    residuals.insert("discrete_error".to_string(), dr[2]);
    let y_m = &plant.cm * &pi_x + &plant.qm;
    let (pi_f, wr) =
        solve_washout_steady_state(&washout.f, &washout.g, &washout.gamma, &y_m, &disc.s_d, tol)?;
    residuals.insert("washout_state".to_string(), wr[0]);
    residuals.insert("washout_output".to_string(), wr[1]);
    let pi_eta = &pi_zeta * &disc.s_d;
    let pi_z = build_pi_z(&pi_f, &pi_eta, controller.n_z())?;

    let q = plant.q_e() + plant.q_m();
    let mut y_bar = zeros(q, plant.d());
    y_bar
        .view_mut((plant.q_e(), 0), (plant.q_m(), plant.d()))
        .copy_from(&y_m);
    let line1 = (&pi_z * &disc.s_d - &controller.a_z * &pi_z - &controller.b_z * &y_bar).norm();
    let block = (controller.k_zu() * &pi_z + controller.l_zu() * &y_bar).norm();
    let repro = (&pi_zeta * &disc.s_d - controller.k_zzeta() * &pi_z - controller.l_zzeta() * &y_bar)
        .norm();
    residuals.insert("controller_state".to_string(), line1);
    residuals.insert("controller_blocking".to_string(), block);
    residuals.insert("controller_reproduction".to_string(), repro);

    let solution = RegulatorSolution {
        pi_x,
        psi,
        pi_zeta,
        pi_f,
        pi_eta,
        pi_z,
        y_m,
        residuals: BTreeMap::new(),
    };
    let a_cl = closed_loop_matrix(plant, &disc, &controller);
    let rho = spectral_radius(&a_cl)?;
    if rho >= 1.0 {
        return Err(Error::Certification(format!(
            "closed loop not exponentially stable: ρ(A_cl) = {rho:.6}"
        )));
    }
    let hcl = hybrid_closed_loop(plant, &hold, &controller);
    let hybrid_residual =
        hybrid_steady_state_residual(plant, &hcl, &solution, period, TAU_GRID_POINTS)?;
    let valid = residuals.values().all(|r| *r <= CERT_TOL) && hybrid_residual <= HYBRID_TOL;
    let solution = RegulatorSolution {
        residuals: residuals.clone(),
        ..solution
    };
    Ok(HoldDesign {
        period,
        companion,
        hold,
        discretized: disc,
        washout,
        augmented,
        stabilizer,
        controller,
        solution,
        a_cl,
        certificate: ClosedLoopCertificate {
            spectral_radius: rho,
            residuals,
            hybrid_residual,
            tau_points: TAU_GRID_POINTS + 2,
            valid,
        },
    })
}

/// `blockdiag` re-export used by callers building observers by hand.
pub fn stack_blocks(blocks: &[&Matrix]) -> Matrix {
    block_diag(blocks)
}

/// `[A | B]`, used by tests.
pub fn side_by_side(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    hstack(&[a, b])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_pendulum, build_pendulum_constant};
    use crate::numkit::{eigenvalues, from_rows};

    #[test]
    fn hold_selectors() {
        let sc = build_pendulum();
        let comp = companion_from_minimal_polynomial(&sc.plant.s, 1e-9).unwrap();
        let h = build_hold(&sc.plant, &comp, 1e-9).unwrap();
        assert_eq!(h.l, Matrix::from_row_slice(1, 2, &[1.0, 0.0]));
        let c = build_pendulum_constant();
        let comp = companion_from_minimal_polynomial(&c.plant.s, 1e-9).unwrap();
        let h = build_hold(&c.plant, &comp, 1e-9).unwrap();
        assert_eq!(h.flow, Matrix::zeros(1, 1));
    }

    #[test]
    fn washout_identity_is_exact() {
        let phi = from_rows(&[vec![0.0, 1.0], vec![-25.0, 0.0]], 2).unwrap();
        let phi_d = matexp(&phi, 0.1).unwrap();
        let w = build_washout(&phi_d, 1).unwrap();
        assert_eq!(&w.f + &w.g * &w.gamma, phi_d);
        assert!(spectral_radius(&w.f).unwrap() < 1.0);
        let w0 = build_washout(&phi_d, 0).unwrap();
        assert_eq!(w0.f.nrows(), 0);
    }

    #[test]
    fn pendulum_design_certifies() {
        let sc = build_pendulum();
        let d = design_hold(&sc.plant, 0.1, &sc.design.hold, 1e-9).unwrap();
        assert!(d.certificate.spectral_radius < 1.0);
        assert!(d.certificate.valid, "{:?}", d.certificate);
        let spec = eigenvalues(&d.discretized.a_d).unwrap();
        let cont = eigenvalues(&sc.plant.a).unwrap();
        for l in cont.iter() {
            let mapped = (l * 0.1).exp();
            assert!(spec.iter().any(|m| (m - mapped).norm() < 1e-8));
        }
    }
}
