//! Design → closed loop → simulation pipeline shared by the subcommands.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use regulata::design::design_regulator;
use regulata::design::multirate::{estimate_n_star, RateEstimate};
use regulata::hybridsim::{
    closed_loop, compute_metrics, initial_state, simulate, ControllerInit, HybridTrajectory,
    Regulator, SimOptions, SimulationReport,
};
use regulata::model::{Method, PlantModel, Scenario};
use regulata::numkit::Matrix;
use regulata::{Error, Result};

/// Resolved design point.
#[derive(Debug, Clone, Copy)]
pub struct Point {
    pub method: Method,
    pub period: f64,
    pub rate: usize,
}

/// Compact certificate numbers for tables and sweeps.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateSummary {
    pub method: Method,
    pub period: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<usize>,
    /// Hold/multirate: closed-loop certificate valid. Emulation: dwell
    /// bound found and `τ_max ≥ T`.
    pub certified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectral_radius: Option<f64>,
    /// Rounded-up rate bound, kept as a float because it can exceed `u64`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abscissa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_max: Option<f64>,
}

pub fn summarize(reg: &Regulator, estimate: Option<&RateEstimate>) -> CertificateSummary {
    let mut s = CertificateSummary {
        method: reg.method(),
        period: reg.period(),
        rate: None,
        certified: false,
        spectral_radius: None,
        n_star: None,
        abscissa: None,
        kappa: None,
        gamma: None,
        tau_max: None,
    };
    match reg {
        Regulator::Hold(d) => {
            s.certified = d.certificate.valid;
            s.spectral_radius = Some(d.certificate.spectral_radius);
        }
        Regulator::Multirate(r) => {
            s.rate = Some(r.rate);
            s.certified = r.design.certificate.valid;
            s.spectral_radius = Some(r.design.certificate.spectral_radius);
            s.n_star = estimate.map(|e| e.n_star_raw.ceil().max(1.0));
        }
        Regulator::Emulation(r) => {
            s.abscissa = Some(r.abscissa);
            if let Some(c) = &r.certificate {
                s.kappa = Some(c.kappa);
                s.gamma = Some(c.gamma);
                s.tau_max = Some(c.tau_max);
                s.certified = r.abscissa < 0.0 && c.tau_max >= r.period;
            }
        }
    }
    s
}

pub fn design(sc: &Scenario, pt: Point) -> Result<Regulator> {
    design_regulator(sc, pt.method, pt.period, pt.rate)
}

pub fn rate_estimate(sc: &Scenario, reg: &Regulator) -> Option<Result<RateEstimate>> {
    match reg {
        Regulator::Multirate(r) => Some(estimate_n_star(&r.design, &sc.plant, r.period())),
        _ => None,
    }
}

pub struct SimSettings {
    pub horizon: f64,
    pub init: ControllerInit,
    pub dense: usize,
    /// Relative size of the seeded plant perturbation (0 = nominal).
    pub perturb: f64,
    pub seed: u64,
}

fn perturb_matrix(m: &Matrix, rel: f64, rng: &mut ChaCha8Rng) -> Matrix {
    m.map(|v| v * (1.0 + rel * rng.gen_range(-1.0..=1.0)))
}

/// Multiply every entry of `A, B, P, C_e, Q_e, C_m, Q_m` by `1 + rel·U[−1, 1]`.
/// `S` is left alone: the internal model must match the exosystem.
pub fn perturbed_plant(plant: &PlantModel, rel: f64, seed: u64) -> PlantModel {
    if rel == 0.0 {
        return plant.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PlantModel {
        a: perturb_matrix(&plant.a, rel, &mut rng),
        b: perturb_matrix(&plant.b, rel, &mut rng),
        p: perturb_matrix(&plant.p, rel, &mut rng),
        s: plant.s.clone(),
        ce: perturb_matrix(&plant.ce, rel, &mut rng),
        qe: perturb_matrix(&plant.qe, rel, &mut rng),
        cm: perturb_matrix(&plant.cm, rel, &mut rng),
        qm: perturb_matrix(&plant.qm, rel, &mut rng),
    }
}

pub fn run_simulation(
    sc: &Scenario,
    reg: &Regulator,
    settings: &SimSettings,
) -> Result<(HybridTrajectory, SimulationReport)> {
    let plant = perturbed_plant(&sc.plant, settings.perturb, settings.seed);
    let cl = closed_loop(&plant, reg)?;
    let x0 = initial_state(&cl, reg, &sc.x0, &sc.w0, settings.init)?;
    let opts = SimOptions {
        dense_per_period: settings.dense,
        ..SimOptions::default()
    };
    let traj = simulate(&cl, &x0, settings.horizon, &opts)?;
    let report = compute_metrics(&traj)?;
    Ok((traj, report))
}

/// `‖e‖` and `y_m` panels of a trajectory.
pub fn trajectory_svg(traj: &HybridTrajectory, title: &str, log: bool) -> String {
    use crate::plot::{render, Panel, Series};
    let e = Series {
        label: "‖e‖".into(),
        points: traj.samples.iter().map(|s| (s.t, s.e.norm())).collect(),
    };
    let q_m = traj.samples.first().map_or(0, |s| s.y_m.len());
    let ym = (0..q_m)
        .map(|i| Series {
            label: format!("y_m[{}]", i + 1),
            points: traj.samples.iter().map(|s| (s.t, s.y_m[i])).collect(),
        })
        .collect();
    let panels = [
        Panel {
            label: "‖e‖".into(),
            log,
            series: vec![e],
        },
        Panel {
            label: "y_m".into(),
            log: false,
            series: ym,
        },
    ];
    render(title, "t [s]", &panels)
}

/// Write through a temporary sibling and rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Invalid(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable value") + "\n"
}
