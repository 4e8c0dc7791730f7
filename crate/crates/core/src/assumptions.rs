//! Stabilizability, detectability, non-resonance and sampling checks, plus
//! the companion realization of the exosystem's minimal polynomial.

use serde::Serialize;

use crate::error::{dim_err, Error, Result};
use crate::model::PlantModel;
use crate::numkit::{
    eigenvalues, hstack, identity, rank_svd_complex, to_complex, vstack, CMatrix, Complex64,
    Matrix, Spectrum,
};

/// Which eigenvalues a PBH test must examine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// `Re λ ≥ 0`.
    Continuous,
    /// `|λ| ≥ 1`.
    Discrete,
    /// Every eigenvalue (controllability / observability).
    Everywhere,
}

impl Region {
    fn contains(self, l: Complex64, tol: f64) -> bool {
        match self {
            Region::Continuous => l.re >= -tol,
            Region::Discrete => l.norm() >= 1.0 - tol,
            Region::Everywhere => true,
        }
    }
}

/// A failed rank test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub test: String,
    /// `[re, im]`.
    pub lambda: [f64; 2],
    /// Missing rank, or the integer `k` for a pathological pair.
    pub deficiency: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partner: Option<[f64; 2]>,
}

impl Witness {
    fn at(test: &str, l: Complex64, deficiency: usize) -> Self {
        Witness {
            test: test.into(),
            lambda: [l.re, l.im],
            deficiency,
            partner: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankTest {
    pub holds: bool,
    pub witnesses: Vec<Witness>,
}

fn shifted(a: &Matrix, l: Complex64) -> CMatrix {
    let n = a.nrows();
    to_complex(a) - identity(n).map(|v| l * v)
}

fn pbh(test: &str, a: &Matrix, b: &Matrix, region: Region, tol: f64) -> Result<RankTest> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(dim_err(format!(
            "PBH: A is {:?}, B is {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let spec = eigenvalues(a)?;
    let bc = to_complex(b);
    let mut witnesses = Vec::new();
    for l in spec.distinct(1e-8) {
        if !region.contains(l, tol) {
            continue;
        }
        let mut pencil = CMatrix::zeros(n, n + b.ncols());
        pencil.view_mut((0, 0), (n, n)).copy_from(&shifted(a, l));
        pencil.view_mut((0, n), (n, b.ncols())).copy_from(&bc);
        let rank = rank_svd_complex(&pencil, tol);
        if rank < n {
            witnesses.push(Witness::at(test, l, n - rank));
        }
    }
    Ok(RankTest {
        holds: witnesses.is_empty(),
        witnesses,
    })
}

/// PBH: `rank [A − λI, B] = n` for every eigenvalue in `region`.
pub fn pbh_stabilizable(a: &Matrix, b: &Matrix, region: Region, tol: f64) -> Result<RankTest> {
    pbh("stabilizable", a, b, region, tol)
}

/// PBH: `rank [A − λI; C] = n` for every eigenvalue in `region`.
pub fn pbh_detectable(a: &Matrix, c: &Matrix, region: Region, tol: f64) -> Result<RankTest> {
    if c.ncols() != a.nrows() {
        return Err(dim_err(format!(
            "PBH: A is {:?}, C is {:?}",
            a.shape(),
            c.shape()
        )));
    }
    pbh("detectable", &a.transpose(), &c.transpose(), region, tol)
}

/// `rank [[A − λI, B], [C_e, 0]] = n + q_e` for every `λ ∈ σ(S)`.
pub fn check_non_resonance(
    a: &Matrix,
    b: &Matrix,
    ce: &Matrix,
    s: &Matrix,
    tol: f64,
) -> Result<RankTest> {
    let (n, m, qe) = (a.nrows(), b.ncols(), ce.nrows());
    if a.ncols() != n || b.nrows() != n || ce.ncols() != n {
        return Err(dim_err("non-resonance: inconsistent A, B, Ce"));
    }
    let mut witnesses = Vec::new();
    for l in eigenvalues(s)?.distinct(1e-8) {
        let mut pencil = CMatrix::zeros(n + qe, n + m);
        pencil.view_mut((0, 0), (n, n)).copy_from(&shifted(a, l));
        pencil.view_mut((0, n), (n, m)).copy_from(&to_complex(b));
        pencil.view_mut((n, 0), (qe, n)).copy_from(&to_complex(ce));
        let rank = rank_svd_complex(&pencil, tol);
        if rank < n + qe {
            witnesses.push(Witness::at("non_resonant", l, n + qe - rank));
        }
    }
    Ok(RankTest {
        holds: witnesses.is_empty(),
        witnesses,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathologicalReport {
    pub pathological: bool,
    pub witnesses: Vec<Witness>,
}

/// Pathological iff two distinct `λᵢ, λⱼ ∈ σ(A) ∪ σ(S)` satisfy
/// `λᵢ − λⱼ = 2πk·i/T` for a nonzero integer `k`.
pub fn check_pathological(a: &Matrix, s: &Matrix, period: f64, tol: f64) -> Result<PathologicalReport> {
    check_pathological_bounded(a, s, period, tol, 0)
}

/// As [`check_pathological`], searching `extra_k` integers beyond the
/// default bound `⌈|Im(λᵢ − λⱼ)|·T/(2π)⌉ + 1`.
pub fn check_pathological_bounded(
    a: &Matrix,
    s: &Matrix,
    period: f64,
    tol: f64,
    extra_k: usize,
) -> Result<PathologicalReport> {
    if !(period.is_finite() && period > 0.0) {
        return Err(Error::Invalid(format!("sampling period must be positive, got {period}")));
    }
    let mut all: Vec<Complex64> = eigenvalues(a)?.eigenvalues;
    all.extend(eigenvalues(s)?.eigenvalues);
    let merged = Spectrum { eigenvalues: all };
    let mut pts: Vec<Complex64> = Vec::new();
    for l in merged.iter() {
        if pts.iter().all(|o| (o - l).norm() > 1e-8 * (1.0 + l.norm())) {
            pts.push(*l);
        }
    }
    let base = 2.0 * std::f64::consts::PI / period;
    let mut witnesses = Vec::new();
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            let diff = pts[i] - pts[j];
            let scale = 1.0 + diff.norm();
            if diff.re.abs() > tol.max(1e-12) * scale * 10.0 {
                continue;
            }
            let bound = (diff.im.abs() * period / (2.0 * std::f64::consts::PI)).ceil() as usize
                + 1
                + extra_k;
            for k in 1..=bound {
                let target = base * k as f64;
                if (diff.im.abs() - target).abs() <= 1e-8 * scale {
                    witnesses.push(Witness {
                        test: "pathological".into(),
                        lambda: [pts[i].re, pts[i].im],
                        deficiency: k,
                        partner: Some([pts[j].re, pts[j].im]),
                    });
                }
            }
        }
    }
    Ok(PathologicalReport {
        pathological: !witnesses.is_empty(),
        witnesses,
    })
}

/// Companion realization `Φ` of the minimal polynomial
/// `λ^d̄ + s_{d̄−1}λ^{d̄−1} + … + s_0` of `S`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompanionForm {
    #[serde(serialize_with = "crate::serde_matrix::serialize")]
    pub phi: Matrix,
    /// `s_0 … s_{d̄−1}`.
    pub coefficients: Vec<f64>,
    pub degree: usize,
    /// `‖𝒫_S(S)‖_F` relative to the magnitude of its terms.
    pub annihilation_residual: f64,
    /// Smallest relative singular value of the normalized Krylov stack
    /// `vec(S⁰) … vec(S^{d̄−1})`: evidence that no lower degree works.
    pub independence_margin: f64,
}

impl CompanionForm {
    /// `Φ` with the given coefficients.
    pub fn from_coefficients(coefficients: &[f64]) -> Matrix {
        let k = coefficients.len();
        let mut phi = Matrix::zeros(k, k);
        for i in 0..k.saturating_sub(1) {
            phi[(i, i + 1)] = 1.0;
        }
        for (j, c) in coefficients.iter().enumerate() {
            phi[(k - 1, j)] = -c;
        }
        phi
    }
}

fn smallest_relative_sv(cols: &[Matrix]) -> f64 {
    let refs: Vec<&Matrix> = cols.iter().collect();
    let stack = hstack(&refs).expect("same length columns");
    let sv = stack.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        0.0
    } else {
        min / max
    }
}

/// Minimal polynomial via successive rank tests on `vec(Sⁱ)`.
pub fn companion_from_minimal_polynomial(s: &Matrix, tol: f64) -> Result<CompanionForm> {
    let d = s.nrows();
    if s.ncols() != d {
        return Err(dim_err("S must be square"));
    }
    if d == 0 {
        return Ok(CompanionForm {
            phi: Matrix::zeros(0, 0),
            coefficients: Vec::new(),
            degree: 0,
            annihilation_residual: 0.0,
            independence_margin: 1.0,
        });
    }
    let gray_hi = tol.sqrt();
    let mut powers: Vec<Matrix> = vec![identity(d)];
    let mut normalized: Vec<Matrix> = vec![vec_of(&identity(d)) / (d as f64).sqrt()];
    let mut margin = 1.0;
    for k in 1..=d {
        let next = &powers[k - 1] * s;
        let v = vec_of(&next);
        let nv = v.norm();
        let mut trial = normalized.clone();
        trial.push(if nv > 0.0 { &v / nv } else { v.clone() });
        let ratio = if nv == 0.0 { 0.0 } else { smallest_relative_sv(&trial) };
        if ratio <= tol {
            // S^k depends on lower powers: degree k.
            let basis: Vec<Matrix> = powers.iter().map(vec_of).collect();
            let refs: Vec<&Matrix> = basis.iter().collect();
            let k_mat = hstack(&refs)?;
            let svd = k_mat.svd(true, true);
            let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
            let coeff = svd
                .solve(&(-&v), tol * smax)
                .map_err(|e| Error::Numeric(format!("minimal polynomial fit failed: {e}")))?;
            let coefficients: Vec<f64> = coeff.iter().copied().collect();
            let mut poly = next.clone();
            let mut mag = next.norm();
            for (i, c) in coefficients.iter().enumerate() {
                poly += &powers[i] * *c;
                mag += c.abs() * powers[i].norm();
            }
            let residual = poly.norm() / mag.max(f64::MIN_POSITIVE);
            if residual > 1e-9 {
                return Err(Error::Numeric(format!(
                    "minimal polynomial degenerate: annihilation residual {residual:.3e}"
                )));
            }
            return Ok(CompanionForm {
                phi: CompanionForm::from_coefficients(&coefficients),
                coefficients,
                degree: k,
                annihilation_residual: residual,
                independence_margin: margin,
            });
        }
        if ratio < gray_hi {
            return Err(Error::Numeric(format!(
                "minimal polynomial rank test inconclusive at degree {k} (margin {ratio:.3e})"
            )));
        }
        margin = ratio;
        normalized = trial;
        powers.push(next);
    }
    Err(Error::Numeric(
        "minimal polynomial search exceeded the matrix dimension".into(),
    ))
}

fn vec_of(m: &Matrix) -> Matrix {
    Matrix::from_column_slice(m.len(), 1, m.as_slice())
}

/// Outcome of all checks for one plant and sampling period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub stabilizable: bool,
    pub detectable_full: bool,
    pub detectable_errors_only: bool,
    pub non_resonant: bool,
    pub pathological: bool,
    pub witnesses: Vec<Witness>,
}

impl AssumptionReport {
    /// Both standing assumptions hold. Detectability from `e` alone is
    /// informational only.
    pub fn passes(&self) -> bool {
        self.stabilizable && self.detectable_full && self.non_resonant && !self.pathological
    }

    pub fn render_text(&self) -> String {
        let yn = |b: bool| if b { "yes" } else { "no" };
        let mut out = String::new();
        out += &format!("stabilizable (A, B):            {}\n", yn(self.stabilizable));
        out += &format!("detectable (A, [Ce; Cm]):       {}\n", yn(self.detectable_full));
        out += &format!("detectable (A, Ce):             {}\n", yn(self.detectable_errors_only));
        out += &format!("non-resonant on spec(S):        {}\n", yn(self.non_resonant));
        out += &format!("pathological sampling period:   {}\n", yn(self.pathological));
        for w in &self.witnesses {
            out += &format!(
                "  {} fails at {:.6}{:+.6}i (deficiency {})",
                w.test, w.lambda[0], w.lambda[1], w.deficiency
            );
            if let Some(p) = w.partner {
                out += &format!(" with partner {:.6}{:+.6}i", p[0], p[1]);
            }
            out.push('\n');
        }
        out += if self.passes() { "assumptions: PASS\n" } else { "assumptions: FAIL\n" };
        out
    }
}

pub fn check_assumptions(plant: &PlantModel, period: f64, tol: f64) -> Result<AssumptionReport> {
    plant.check_dimensions()?;
    let stab = pbh_stabilizable(&plant.a, &plant.b, Region::Continuous, tol)?;
    let c = vstack(&[&plant.ce, &plant.cm])?;
    let det_full = pbh_detectable(&plant.a, &c, Region::Continuous, tol)?;
    let det_e = pbh_detectable(&plant.a, &plant.ce, Region::Continuous, tol)?;
    let nr = check_non_resonance(&plant.a, &plant.b, &plant.ce, &plant.s, tol)?;
    let path = check_pathological(&plant.a, &plant.s, period, tol)?;
    let mut witnesses = Vec::new();
    witnesses.extend(stab.witnesses);
    witnesses.extend(det_full.witnesses);
    witnesses.extend(det_e.witnesses.into_iter().map(|mut w| {
        w.test = "detectable_errors_only".into();
        w
    }));
    witnesses.extend(nr.witnesses);
    witnesses.extend(path.witnesses);
    Ok(AssumptionReport {
        stabilizable: stab.holds,
        detectable_full: det_full.holds,
        detectable_errors_only: det_e.holds,
        non_resonant: nr.holds,
        pathological: path.pathological,
        witnesses,
    })
}
