//! Plant/exosystem data, sampling configuration and scenario files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{
    eigenvalues, from_rows, identity, matexp, rank_svd_complex, to_complex, vstack, Complex64,
    Matrix, Vector, DEFAULT_TOL,
};

/// `ẇ = Sw`, `ẋ = Ax + Bu + Pw`, `e = C_e x + Q_e w`, `y_m = C_m x + Q_m w`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub a: Matrix,
    pub b: Matrix,
    pub p: Matrix,
    pub s: Matrix,
    pub ce: Matrix,
    pub qe: Matrix,
    pub cm: Matrix,
    pub qm: Matrix,
}

impl PlantModel {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    pub fn d(&self) -> usize {
        self.s.nrows()
    }
    pub fn q_e(&self) -> usize {
        self.ce.nrows()
    }
    pub fn q_m(&self) -> usize {
        self.cm.nrows()
    }

    /// `C = [C_e; C_m]`.
    pub fn c(&self) -> Matrix {
        vstack(&[&self.ce, &self.cm]).expect("validated dimensions")
    }

    /// `Q = [Q_e; Q_m]`.
    pub fn q(&self) -> Matrix {
        vstack(&[&self.qe, &self.qm]).expect("validated dimensions")
    }

    pub fn check_dimensions(&self) -> Result<()> {
        let (n, m, d, qe, qm) = (self.n(), self.m(), self.d(), self.q_e(), self.q_m());
        let expect = [
            ("A", &self.a, (n, n)),
            ("B", &self.b, (n, m)),
            ("P", &self.p, (n, d)),
            ("S", &self.s, (d, d)),
            ("Ce", &self.ce, (qe, n)),
            ("Qe", &self.qe, (qe, d)),
            ("Cm", &self.cm, (qm, n)),
            ("Qm", &self.qm, (qm, d)),
        ];
        for (name, mat, shape) in expect {
            if mat.shape() != shape {
                return Err(Error::Dimension(format!(
                    "{name} is {}x{}, expected {}x{}",
                    mat.nrows(),
                    mat.ncols(),
                    shape.0,
                    shape.1
                )));
            }
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("{name} has non-finite entries")));
            }
        }
        Ok(())
    }

    /// Dimensions, finiteness and neutral stability of `S`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        self.check_dimensions()?;
        check_neutrally_stable(&self.s, tol)
    }
}

/// Every eigenvalue of `S` on the imaginary axis and semisimple.
pub fn check_neutrally_stable(s: &Matrix, tol: f64) -> Result<()> {
    let spec = eigenvalues(s)?;
    let scale = 1.0 + s.norm();
    let cluster = 1e-6 * scale;
    let mut seen: Vec<Complex64> = Vec::new();
    for l in spec.iter() {
        if l.re.abs() > tol.max(1e-9) * scale * 1e3 {
            return Err(Error::Invalid(format!(
                "S not neutrally stable: eigenvalue {:.6}{:+.6}i off the imaginary axis",
                l.re, l.im
            )));
        }
        if seen.iter().any(|o| (o - l).norm() <= cluster) {
            continue;
        }
        seen.push(*l);
        let algebraic = spec.iter().filter(|o| (*o - l).norm() <= cluster).count();
        let lambda = Complex64::new(0.0, l.im);
        let shifted = to_complex(s) - identity(s.nrows()).map(|v| lambda * v);
        let rank = if shifted.iter().all(|v| v.norm() <= 1e-12 * scale) {
            0
        } else {
            rank_svd_complex(&shifted, 1e-8)
        };
        let geometric = s.nrows() - rank;
        if geometric != algebraic {
            return Err(Error::Invalid(format!(
                "S not semisimple: eigenvalue {:.6}{:+.6}i has algebraic multiplicity {algebraic} but geometric {geometric}",
                l.re, l.im
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Measurement sampling period `T`.
    #[serde(rename = "T")]
    pub period: f64,
    /// Control updates per measurement interval.
    #[serde(rename = "N")]
    pub rate: usize,
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(Error::Invalid(format!(
                "sampling period T must be positive, got {}",
                self.period
            )));
        }
        if self.rate == 0 {
            return Err(Error::Invalid("rate multiplier N must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Emulation,
    Hold,
    Multirate,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "emulation" => Ok(Method::Emulation),
            "hold" => Ok(Method::Hold),
            "multirate" => Ok(Method::Multirate),
            other => Err(Error::Parse(format!("unknown method `{other}`"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Emulation => "emulation",
            Method::Hold => "hold",
            Method::Multirate => "multirate",
        })
    }
}

/// Scalar LQG weights.
///
/// Regulator: `Q = state·I`, `R = input·I`. Observer: process covariance
/// `process·I + input_noise·B Bᵀ`, measurement covariance `measurement·I`.
/// The `input_noise` term is loop-transfer recovery at the plant input.
/// `radius` (discrete designs only) places every regulator and observer
/// pole inside that circle by solving the Riccati equations for
/// `(A, B)/radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LqgWeights {
    pub state: f64,
    pub input: f64,
    pub process: f64,
    pub input_noise: f64,
    pub measurement: f64,
    pub radius: f64,
}

impl Default for LqgWeights {
    fn default() -> Self {
        LqgWeights {
            state: 1.0,
            input: 1.0,
            process: 1.0,
            input_noise: 0.0,
            measurement: 1.0,
            radius: 1.0,
        }
    }
}

impl LqgWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.state, self.process, self.input_noise]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
            && self.input.is_finite()
            && self.input > 0.0
            && self.measurement.is_finite()
            && self.measurement > 0.0
            && self.radius > 0.0
            && self.radius <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(
                "LQG weights must be finite, input and measurement weights positive, radius in (0, 1]".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EmulationOptions {
    pub weights: LqgWeights,
    /// When set, the continuous design accounts for a first-order Padé
    /// model of this input delay (seconds).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delay_compensation: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignOptions {
    pub hold: LqgWeights,
    pub emulation: EmulationOptions,
    /// Relative rank / stability tolerance.
    pub tol: f64,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions {
            hold: LqgWeights::default(),
            emulation: EmulationOptions::default(),
            tol: DEFAULT_TOL,
        }
    }
}

impl DesignOptions {
    pub fn validate(&self) -> Result<()> {
        self.hold.validate()?;
        self.emulation.weights.validate()?;
        if let Some(td) = self.emulation.delay_compensation {
            if !(td.is_finite() && td > 0.0) {
                return Err(Error::Invalid("delay_compensation must be positive".into()));
            }
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Invalid("tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub plant: PlantModel,
    pub sampling: SamplingConfig,
    pub method: Method,
    pub horizon: f64,
    pub x0: Vector,
    pub w0: Vector,
    /// `|𝒲|`, an upper bound on `‖w(t)‖`.
    pub w_bound: f64,
    pub design: DesignOptions,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.plant.validate(self.design.tol)?;
        self.sampling.validate()?;
        self.design.validate()?;
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Invalid(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.x0.len() != self.plant.n() {
            return Err(Error::Dimension(format!(
                "x0 has {} entries, expected n = {}",
                self.x0.len(),
                self.plant.n()
            )));
        }
        if self.w0.len() != self.plant.d() {
            return Err(Error::Dimension(format!(
                "w0 has {} entries, expected d = {}",
                self.w0.len(),
                self.plant.d()
            )));
        }
        if self.x0.iter().chain(self.w0.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("initial state has non-finite entries".into()));
        }
        if !(self.w_bound.is_finite() && self.w_bound >= self.w0.norm()) {
            return Err(Error::Invalid(format!(
                "|W| = {} must be at least ‖w0‖ = {}",
                self.w_bound,
                self.w0.norm()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = ScenarioFile::from(self);
        serde_json::to_string_pretty(&file).expect("scenario serializes") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// Largest `‖e^{St} w0‖` over one period of the slowest oscillation
/// (or `‖w0‖` for a constant exosystem).
pub fn default_w_bound(s: &Matrix, w0: &Vector) -> Result<f64> {
    let base = w0.norm();
    if s.nrows() == 0 || base == 0.0 {
        return Ok(base);
    }
    let omega = eigenvalues(s)?
        .iter()
        .map(|l| l.im.abs())
        .filter(|w| *w > 1e-9)
        .fold(f64::INFINITY, f64::min);
    if !omega.is_finite() {
        return Ok(base);
    }
    let period = 2.0 * std::f64::consts::PI / omega;
    let samples = 512;
    let step = matexp(s, period / samples as f64)?;
    let mut w = w0.clone();
    let mut best = base;
    for _ in 0..samples {
        w = &step * w;
        best = best.max(w.norm());
    }
    Ok(best)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Dims {
    n: usize,
    m: usize,
    d: usize,
    qe: usize,
    qm: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    dims: Dims,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
    #[serde(rename = "S")]
    s: Vec<Vec<f64>>,
    #[serde(rename = "Ce")]
    ce: Vec<Vec<f64>>,
    #[serde(rename = "Qe")]
    qe: Vec<Vec<f64>>,
    #[serde(rename = "Cm")]
    cm: Vec<Vec<f64>>,
    #[serde(rename = "Qm")]
    qm: Vec<Vec<f64>>,
    sampling: SamplingConfig,
    method: Method,
    horizon: f64,
    x0: Vec<f64>,
    w0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w_bound: Option<f64>,
    #[serde(default)]
    design: DesignOptions,
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        let p = &s.plant;
        ScenarioFile {
            name: s.name.clone(),
            dims: Dims {
                n: p.n(),
                m: p.m(),
                d: p.d(),
                qe: p.q_e(),
                qm: p.q_m(),
            },
            a: rows_of(&p.a),
            b: rows_of(&p.b),
            p: rows_of(&p.p),
            s: rows_of(&p.s),
            ce: rows_of(&p.ce),
            qe: rows_of(&p.qe),
            cm: rows_of(&p.cm),
            qm: rows_of(&p.qm),
            sampling: s.sampling,
            method: s.method,
            horizon: s.horizon,
            x0: s.x0.iter().copied().collect(),
            w0: s.w0.iter().copied().collect(),
            w_bound: Some(s.w_bound),
            design: s.design,
        }
    }
}

fn matrix_field(name: &str, rows: &[Vec<f64>], r: usize, c: usize) -> Result<Matrix> {
    if rows.len() != r {
        return Err(Error::Dimension(format!(
            "{name} has {} rows, expected {r}",
            rows.len()
        )));
    }
    from_rows(rows, c).map_err(|e| Error::Dimension(format!("{name}: {e}")))
}

impl ScenarioFile {
    fn into_scenario(self) -> Result<Scenario> {
        let Dims { n, m, d, qe, qm } = self.dims;
        let plant = PlantModel {
            a: matrix_field("A", &self.a, n, n)?,
            b: matrix_field("B", &self.b, n, m)?,
            p: matrix_field("P", &self.p, n, d)?,
            s: matrix_field("S", &self.s, d, d)?,
            ce: matrix_field("Ce", &self.ce, qe, n)?,
            qe: matrix_field("Qe", &self.qe, qe, d)?,
            cm: matrix_field("Cm", &self.cm, qm, n)?,
            qm: matrix_field("Qm", &self.qm, qm, d)?,
        };
        let w0 = Vector::from_vec(self.w0);
        if w0.len() != d {
            return Err(Error::Dimension(format!(
                "w0 has {} entries, expected d = {d}",
                w0.len()
            )));
        }
        let w_bound = match self.w_bound {
            Some(v) => v,
            None => default_w_bound(&plant.s, &w0)?,
        };
        let scenario = Scenario {
            name: self.name,
            plant,
            sampling: self.sampling,
            method: self.method,
            horizon: self.horizon,
            x0: Vector::from_vec(self.x0),
            w0,
            w_bound,
            design: self.design,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.into_scenario()
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("file not found: {}", path.display()),
            ))
        } else {
            Error::Io(e)
        }
    })?;
    parse_scenario(&text)
}

/// Physical parameters of the cart-pendulum.
#[derive(Debug, Clone, Copy)]
pub struct PendulumParams {
    pub cart_mass: f64,
    pub bob_mass: f64,
    pub friction: f64,
    pub gravity: f64,
    pub length: f64,
    pub omega: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            cart_mass: 0.5,
            bob_mass: 2.0,
            friction: 0.2,
            gravity: 9.8,
            length: 0.3,
            omega: 5.0,
        }
    }
}

/// Linearized cart-pendulum, state `(q + ℓθ, q̇ + ℓθ̇, θ, θ̇)`.
/// `p1`, `p2` are the disturbance channels into the cart and pendulum
/// dynamics (rows of length `d`).
pub fn pendulum_plant(par: &PendulumParams, p1: &[f64], p2: &[f64], s: Matrix) -> PlantModel {
    let PendulumParams {
        cart_mass: m0,
        bob_mass: m,
        friction: mu,
        gravity: g,
        length: l,
        ..
    } = *par;
    let d = s.nrows();
    let a = from_rows(
        &[
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, g, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![0.0, mu / (m0 * l), (m0 + m) * g / (m0 * l), -mu / m0],
        ],
        4,
    )
    .expect("4x4");
    let b = Matrix::from_column_slice(4, 1, &[0.0, 0.0, 0.0, -1.0 / (m0 * l)]);
    let mut p = Matrix::zeros(4, d);
    for j in 0..d {
        p[(1, j)] = (p1[j] + p2[j]) / m0;
        p[(3, j)] = p2[j] / (m0 * l);
    }
    PlantModel {
        a,
        b,
        p,
        s,
        ce: Matrix::from_row_slice(1, 4, &[0.0, 0.0, 1.0, 0.0]),
        qe: Matrix::zeros(1, d),
        cm: Matrix::from_row_slice(1, 4, &[1.0, 0.0, 0.0, 0.0]),
        qm: Matrix::zeros(1, d),
    }
}

/// Weights used for the bundled pendulum designs.
pub fn pendulum_design_options() -> DesignOptions {
    DesignOptions {
        hold: LqgWeights {
            state: 1.0,
            input: 0.01,
            process: 1e-3,
            input_noise: 1000.0,
            measurement: 1e-3,
            radius: 0.9,
        },
        emulation: EmulationOptions {
            weights: LqgWeights {
                measurement: 1e-4,
                ..LqgWeights::default()
            },
            delay_compensation: Some(0.025),
        },
        tol: DEFAULT_TOL,
    }
}

/// The harmonic-disturbance pendulum: `e = θ`, `y_m = q + ℓθ`, `T = 0.1`,
/// `N = 4`, `x(0) = 0`, `w(0) = (1, 0)`.
pub fn build_pendulum() -> Scenario {
    let par = PendulumParams::default();
    let w2 = par.omega * par.omega;
    let s = from_rows(&[vec![0.0, 1.0], vec![-w2, 0.0]], 2).expect("2x2");
    let plant = pendulum_plant(&par, &[1.0, 0.0], &[0.0, 1.0], s);
    let w0 = Vector::from_vec(vec![1.0, 0.0]);
    let w_bound = default_w_bound(&plant.s, &w0).expect("harmonic exosystem");
    Scenario {
        name: "pendulum".into(),
        plant,
        sampling: SamplingConfig {
            period: 0.1,
            rate: 4,
        },
        method: Method::Hold,
        horizon: 20.0,
        x0: Vector::zeros(4),
        w0,
        w_bound,
        design: pendulum_design_options(),
    }
}

/// Pendulum under a constant disturbance (`S = 0`), regulating the
/// pendulum-top position `q + ℓθ` and measuring `θ` as extra output.
pub fn build_pendulum_constant() -> Scenario {
    let par = PendulumParams::default();
    let mut plant = pendulum_plant(&par, &[1.0], &[1.0], Matrix::zeros(1, 1));
    plant.ce = Matrix::from_row_slice(1, 4, &[1.0, 0.0, 0.0, 0.0]);
    plant.cm = Matrix::from_row_slice(1, 4, &[0.0, 0.0, 1.0, 0.0]);
    Scenario {
        name: "pendulum-constant".into(),
        plant,
        sampling: SamplingConfig {
            period: 0.1,
            rate: 2,
        },
        method: Method::Multirate,
        horizon: 20.0,
        x0: Vector::zeros(4),
        w0: Vector::from_vec(vec![1.0]),
        w_bound: 1.0,
        design: pendulum_design_options(),
    }
}
