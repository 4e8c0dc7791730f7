//! Parameter sweeps over the sampling period or the control rate.

use std::fmt::Write;

use rayon::prelude::*;
use serde::Serialize;

use regulata::hybridsim::SimulationReport;
use regulata::model::{Method, Scenario};
use regulata::{Error, Result};

use crate::run::{design, rate_estimate, run_simulation, summarize, CertificateSummary, Point, SimSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
pub enum Axis {
    #[serde(rename = "T")]
    #[value(name = "T")]
    Period,
    #[serde(rename = "N")]
    #[value(name = "N")]
    Rate,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<SimulationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub scenario: String,
    pub method: Method,
    pub axis: Axis,
    pub values: Vec<f64>,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| p.error.is_some()).count()
    }
}

/// Values must be finite, positive and strictly increasing; rates must be
/// whole numbers.
pub fn validate_axis(axis: Axis, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Invalid("sweep needs at least one value".into()));
    }
    for v in values {
        if !(v.is_finite() && *v > 0.0) {
            return Err(Error::Invalid(format!("sweep value {v} must be positive")));
        }
        if axis == Axis::Rate && v.fract() != 0.0 {
            return Err(Error::Invalid(format!("N values must be integers, got {v}")));
        }
    }
    if let Some(w) = values.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::Invalid(format!(
            "sweep values must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

fn run_point(sc: &Scenario, pt: Point, settings: &SimSettings, value: f64) -> SweepPoint {
    let attempt = || -> Result<(CertificateSummary, SimulationReport)> {
        let reg = design(sc, pt)?;
        let est = rate_estimate(sc, &reg).transpose()?;
        let summary = summarize(&reg, est.as_ref());
        let (_, report) = run_simulation(sc, &reg, settings)?;
        Ok((summary, report))
    };
    match attempt() {
        Ok((c, r)) => SweepPoint {
            value,
            certificate: Some(c),
            report: Some(r),
            error: None,
        },
        Err(e) => SweepPoint {
            value,
            certificate: None,
            report: None,
            error: Some(e.to_string()),
        },
    }
}

/// Points run in parallel; the result keeps the order of `values`.
pub fn sweep(sc: &Scenario, method: Method, axis: Axis, values: &[f64], settings: &SimSettings) -> Result<SweepResult> {
    validate_axis(axis, values)?;
    let points = values
        .par_iter()
        .map(|&v| {
            let pt = match axis {
                Axis::Period => Point {
                    method,
                    period: v,
                    rate: sc.sampling.rate,
                },
                Axis::Rate => Point {
                    method,
                    period: sc.sampling.period,
                    rate: v as usize,
                },
            };
            run_point(sc, pt, settings, v)
        })
        .collect();
    Ok(SweepResult {
        scenario: sc.name.clone(),
        method,
        axis,
        values: values.to_vec(),
        points,
    })
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

fn sci(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| format!("{v:.16e}"))
}

pub fn table_csv(res: &SweepResult) -> String {
    let mut out = String::from(
        "value,certified,spectral_radius,n_star,tau_max,bounded,peak_e,tail_sup_e,terminal_e,decay_rate,error\n",
    );
    for p in &res.points {
        let c = p.certificate.as_ref();
        let r = p.report.as_ref();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            p.value,
            opt(c.map(|c| c.certified)),
            sci(c.and_then(|c| c.spectral_radius)),
            sci(c.and_then(|c| c.n_star)),
            sci(c.and_then(|c| c.tau_max)),
            opt(r.map(|r| r.bounded)),
            sci(r.map(|r| r.peak_e)),
            sci(r.map(|r| r.tail_sup_e)),
            sci(r.map(|r| r.terminal_e)),
            sci(r.and_then(|r| r.decay_rate)),
            p.error.as_deref().map_or(String::new(), |e| format!("\"{}\"", e.replace('"', "'"))),
        );
    }
    out
}
