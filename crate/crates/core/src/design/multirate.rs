//! Purely digital multirate regulator built from the hold design, and the
//! conservative rate estimate `N*`.

use serde::Serialize;

use crate::design::hold::HoldDesign;
use crate::error::{Error, Result};
use crate::model::PlantModel;
use crate::numkit::{identity, matexp, norm2, solve_stein_doubling, Matrix};

/// Hold-design gains executed at `N` control ticks per sample period.
#[derive(Debug, Clone, Serialize)]
pub struct MultiRateRegulator {
    pub design: HoldDesign,
    pub rate: usize,
    /// `e^{(Φ⊗I)·iT/N}` for `i = 0 … N−1`.
    #[serde(skip)]
    pub propagators: Vec<Matrix>,
    /// `e^{(Φ⊗I)·T/N}`.
    #[serde(skip)]
    pub step: Matrix,
}

impl MultiRateRegulator {
    pub fn period(&self) -> f64 {
        self.design.period
    }

    /// Input issued at tick `i` of a sample interval, given the post-jump
    /// `ζ`, `z` and `ŷ`.
    pub fn tick_input(&self, i: usize, zeta: &Matrix, z: &Matrix, y: &Matrix) -> Matrix {
        let c = &self.design.controller;
        &self.design.hold.l * &self.propagators[i] * zeta + c.k_zu() * z + c.l_zu() * y
    }
}

pub fn build_multirate(design: &HoldDesign, rate: usize) -> Result<MultiRateRegulator> {
    if rate == 0 {
        return Err(Error::Invalid("multirate N must be at least 1".into()));
    }
    let flow = &design.hold.flow;
    let h = design.period / rate as f64;
    let step = matexp(flow, h)?;
    let propagators = (0..rate)
        .map(|i| matexp(flow, h * i as f64))
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiRateRegulator {
        design: design.clone(),
        rate,
        propagators,
        step,
    })
}

/// Constants of the sufficient rate condition.
#[derive(Debug, Clone, Serialize)]
pub struct RateEstimate {
    pub lambda_cl: f64,
    pub k1: f64,
    pub alpha_star: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub sigma_m: f64,
    /// Unrounded value of the bound.
    pub n_star_raw: f64,
    pub n_star: u64,
}

const GRID: usize = 4001;
const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Golden-section maximum of `f` on `[a, b]`.
fn golden_max(f: &dyn Fn(f64) -> Result<f64>, mut a: f64, mut b: f64) -> Result<(f64, f64)> {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..80 {
        if (b - a).abs() <= 1e-14 * (1.0 + b.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc > fd { (c, fc) } else { (d, fd) })
}

/// `max_{τ∈[0,T]} f(τ)`: uniform grid, then golden refinement around the
/// best node.
pub fn maximize_on_interval(f: &dyn Fn(f64) -> Result<f64>, period: f64, nodes: usize) -> Result<f64> {
    let nodes = nodes.max(2);
    let h = period / (nodes - 1) as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for i in 0..nodes {
        let v = f(h * i as f64)?;
        if v > best.1 {
            best = (i, v);
        }
    }
    let lo = (best.0 as f64 - 1.0).max(0.0) * h;
    let hi = ((best.0 + 1) as f64 * h).min(period);
    let (_, refined) = golden_max(f, lo, hi)?;
    Ok(best.1.max(refined))
}

/// `(a e^α + b)/α` is minimized where `a e^α (α − 1) = b`.
fn minimize_alpha(a: f64, b: f64) -> (f64, f64) {
    let obj = |al: f64| (a * al.exp() + b) / al;
    let neg = |al: f64| -> Result<f64> { Ok(-obj(al)) };
    let (al, _) = golden_max(&neg, 1e-9, 50.0).expect("infallible objective");
    (al, obj(al))
}

/// Rate estimate from a certified hold design.
pub fn estimate_n_star(design: &HoldDesign, plant: &PlantModel, period: f64) -> Result<RateEstimate> {
    let rho = design.certificate.spectral_radius;
    let lambda = rho * rho + 1e-6;
    if lambda.is_nan() || lambda >= 1.0 {
        return Err(Error::Precondition(format!(
            "rate estimate needs a contracting closed loop (λ_cl = {lambda:.6})"
        )));
    }
    let scaled = &design.a_cl / lambda.sqrt();
    let n = scaled.nrows();
    // The λ_cl margin leaves the Kronecker operator too ill-conditioned.
    let p_cl = solve_stein_doubling(&scaled, &(identity(n) / lambda), 80)?;
    let p_norm = norm2(&p_cl);
    let sigma_m = p_cl.clone().symmetric_eigen().eigenvalues.min();
    if sigma_m.is_nan() || sigma_m <= 0.0 {
        return Err(Error::Numeric("P_cl is not positive definite".into()));
    }
    let a = &plant.a;
    let b = &plant.b;
    let f1 = |tau: f64| -> Result<f64> { Ok(norm2(&(matexp(a, -tau)? * b))) };
    let phi1 = maximize_on_interval(&f1, period, GRID)? * p_norm;
    let l_norm = norm2(&design.hold.l);
    let flow = &design.hold.flow;
    let f2 = |tau: f64| -> Result<f64> { Ok(norm2(&(flow * matexp(flow, tau)?))) };
    let phi2 = l_norm * maximize_on_interval(&f2, period, GRID)?;
    let k1 = (1.0 / lambda).ln() / period;
    let (alpha_star, ratio) = minimize_alpha(32.0 * phi1 * phi1, 8.0 * phi2 * lambda);
    let n_star_raw = ratio / (k1 * k1 * sigma_m * lambda * lambda);
    let n_star = if n_star_raw.is_finite() {
        n_star_raw.ceil().clamp(1.0, u64::MAX as f64) as u64
    } else {
        u64::MAX
    };
    Ok(RateEstimate {
        lambda_cl: lambda,
        k1,
        alpha_star,
        phi1,
        phi2,
        sigma_m,
        n_star_raw,
        n_star,
    })
}
