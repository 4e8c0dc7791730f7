//! Exact simulation of the sampled-data closed loops on the hybrid time
//! domain `(t, j)`.
//!
//! Every closed loop is linear with the exosystem state included, so
//! between events the flow is advanced with one matrix exponential and
//! jumps are plain matrix products.

use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use crate::design::emulation::EmulationRegulator;
use crate::design::hold::HoldDesign;
use crate::design::multirate::MultiRateRegulator;
use crate::error::{dim_err, Error, Result};
use crate::model::{Method, PlantModel};
use crate::numkit::{matexp, Matrix, Vector};

/// A designed regulator ready to be closed around a plant.
#[derive(Debug, Clone)]
pub enum Regulator {
    Emulation(EmulationRegulator),
    Hold(HoldDesign),
    Multirate(MultiRateRegulator),
}

impl Regulator {
    pub fn method(&self) -> Method {
        match self {
            Regulator::Emulation(_) => Method::Emulation,
            Regulator::Hold(_) => Method::Hold,
            Regulator::Multirate(_) => Method::Multirate,
        }
    }

    pub fn period(&self) -> f64 {
        match self {
            Regulator::Emulation(r) => r.period,
            Regulator::Hold(d) => d.period,
            Regulator::Multirate(r) => r.period(),
        }
    }
}

/// `(offset, length)` of each block of the closed-loop state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Layout {
    pub w: (usize, usize),
    pub x: (usize, usize),
    pub zeta: (usize, usize),
    pub y_hat: (usize, usize),
    pub controller: (usize, usize),
    pub u: (usize, usize),
}

/// `X = (w, x, …)`: `Ẋ = F X` between events, `X⁺ = J X` at `t = kT`
/// and, for multirate loops, `X⁺ = J_tick X` at `t = kT + iT/N`.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub method: Method,
    pub period: f64,
    /// Control ticks per sample period (0 when there are none).
    pub ticks: usize,
    pub flow: Matrix,
    pub measurement_jump: Matrix,
    pub tick_jump: Option<Matrix>,
    pub e_map: Matrix,
    pub ym_map: Matrix,
    pub u_map: Matrix,
    pub layout: Layout,
}

impl ClosedLoop {
    pub fn dim(&self) -> usize {
        self.flow.nrows()
    }
}

struct Blocks {
    sizes: Vec<usize>,
}

impl Blocks {
    fn offset(&self, i: usize) -> usize {
        self.sizes[..i].iter().sum()
    }
    fn span(&self, i: usize) -> (usize, usize) {
        (self.offset(i), self.sizes[i])
    }
    fn total(&self) -> usize {
        self.sizes.iter().sum()
    }
}

fn put(m: &mut Matrix, r: (usize, usize), c: (usize, usize), block: &Matrix) {
    if r.1 > 0 && c.1 > 0 {
        m.view_mut((r.0, c.0), (r.1, c.1)).copy_from(block);
    }
}

fn keep(m: &mut Matrix, r: (usize, usize)) {
    for i in 0..r.1 {
        m[(r.0 + i, r.0 + i)] = 1.0;
    }
}

fn output_maps(plant: &PlantModel, w: (usize, usize), x: (usize, usize), dim: usize) -> (Matrix, Matrix) {
    let (qe, qm) = (plant.q_e(), plant.q_m());
    let mut e = Matrix::zeros(qe, dim);
    put(&mut e, (0, qe), w, &plant.qe);
    put(&mut e, (0, qe), x, &plant.ce);
    let mut ym = Matrix::zeros(qm, dim);
    put(&mut ym, (0, qm), w, &plant.qm);
    put(&mut ym, (0, qm), x, &plant.cm);
    (e, ym)
}

fn check_plant(plant: &PlantModel, n: usize, m: usize, d: usize) -> Result<()> {
    plant.check_dimensions()?;
    if plant.n() != n || plant.m() != m || plant.d() != d {
        return Err(dim_err(format!(
            "regulator designed for (n, m, d) = ({n}, {m}, {d}), plant has ({}, {}, {})",
            plant.n(),
            plant.m(),
            plant.d()
        )));
    }
    Ok(())
}

/// Hold loop over `(w, x, ζ, ŷ, z)`.
fn hold_loop(plant: &PlantModel, d: &HoldDesign) -> Result<ClosedLoop> {
    let ctrl = &d.controller;
    check_plant(plant, d.discretized.a_d.nrows(), ctrl.m, d.discretized.s_d.nrows())?;
    let q = plant.q_e() + plant.q_m();
    let b = Blocks {
        sizes: vec![plant.d(), plant.n(), d.hold.dim(), q, ctrl.n_z()],
    };
    let (w, x, z, y, c) = (b.span(0), b.span(1), b.span(2), b.span(3), b.span(4));
    let dim = b.total();
    let bl = &plant.b;

    let mut f = Matrix::zeros(dim, dim);
    put(&mut f, w, w, &plant.s);
    put(&mut f, x, w, &plant.p);
    put(&mut f, x, x, &plant.a);
    put(&mut f, x, z, &(bl * &d.hold.l));
    put(&mut f, x, y, &(bl * ctrl.l_zu()));
    put(&mut f, x, c, &(bl * ctrl.k_zu()));
    put(&mut f, z, z, &d.hold.flow);

    let mut j = Matrix::zeros(dim, dim);
    keep(&mut j, w);
    keep(&mut j, x);
    put(&mut j, z, y, &ctrl.l_zzeta());
    put(&mut j, z, c, &ctrl.k_zzeta());
    put(&mut j, y, w, &plant.q());
    put(&mut j, y, x, &plant.c());
    put(&mut j, c, y, &ctrl.b_z);
    put(&mut j, c, c, &ctrl.a_z);

    let mut u = Matrix::zeros(plant.m(), dim);
    let mr = (0, plant.m());
    put(&mut u, mr, z, &d.hold.l);
    put(&mut u, mr, y, &ctrl.l_zu());
    put(&mut u, mr, c, &ctrl.k_zu());
    let (e_map, ym_map) = output_maps(plant, w, x, dim);
    Ok(ClosedLoop {
        method: Method::Hold,
        period: d.period,
        ticks: 0,
        flow: f,
        measurement_jump: j,
        tick_jump: None,
        e_map,
        ym_map,
        u_map: u,
        layout: Layout {
            w,
            x,
            zeta: z,
            y_hat: y,
            controller: c,
            u: (dim, 0),
        },
    })
}

/// Multirate loop over `(w, x, ζ, ŷ, z, u)`; `ζ` lives in the controller.
fn multirate_loop(plant: &PlantModel, r: &MultiRateRegulator) -> Result<ClosedLoop> {
    let hold = hold_loop(plant, &r.design)?;
    let m = plant.m();
    let old = hold.dim();
    let dim = old + m;
    let lay = hold.layout;
    let u = (old, m);
    let bl = &plant.b;

    let mut f = Matrix::zeros(dim, dim);
    put(&mut f, lay.w, lay.w, &plant.s);
    put(&mut f, lay.x, lay.w, &plant.p);
    put(&mut f, lay.x, lay.x, &plant.a);
    put(&mut f, lay.x, u, bl);
    put(&mut f, lay.zeta, lay.zeta, &r.design.hold.flow);

    let mut j = Matrix::zeros(dim, dim);
    j.view_mut((0, 0), (old, old)).copy_from(&hold.measurement_jump);
    keep(&mut j, u);

    let mut tick = Matrix::identity(dim, dim);
    tick.view_mut((u.0, 0), (m, dim)).fill(0.0);
    tick.view_mut((u.0, 0), (m, old)).copy_from(&hold.u_map);

    let mut u_map = Matrix::zeros(m, dim);
    keep_rect(&mut u_map, u.0);
    let (e_map, ym_map) = output_maps(plant, lay.w, lay.x, dim);
    Ok(ClosedLoop {
        method: Method::Multirate,
        period: r.period(),
        ticks: r.rate,
        flow: f,
        measurement_jump: j,
        tick_jump: Some(tick),
        e_map,
        ym_map,
        u_map,
        layout: Layout { u, ..lay },
    })
}

fn keep_rect(m: &mut Matrix, col: usize) {
    for i in 0..m.nrows() {
        m[(i, col + i)] = 1.0;
    }
}

/// Emulation loop over `(w, x, ŷ, x_c, u)`.
fn emulation_loop(plant: &PlantModel, r: &EmulationRegulator) -> Result<ClosedLoop> {
    plant.check_dimensions()?;
    let q = plant.q_e() + plant.q_m();
    if r.b_c.ncols() != q || r.c_c.nrows() != plant.m() {
        return Err(dim_err("emulation regulator does not match the plant"));
    }
    let b = Blocks {
        sizes: vec![plant.d(), plant.n(), q, r.a_c.nrows(), plant.m()],
    };
    let (w, x, y, c, u) = (b.span(0), b.span(1), b.span(2), b.span(3), b.span(4));
    let dim = b.total();

    let mut f = Matrix::zeros(dim, dim);
    put(&mut f, w, w, &plant.s);
    put(&mut f, x, w, &plant.p);
    put(&mut f, x, x, &plant.a);
    put(&mut f, x, u, &plant.b);
    put(&mut f, c, c, &r.a_c);
    put(&mut f, c, y, &r.b_c);

    let mut j = Matrix::zeros(dim, dim);
    keep(&mut j, w);
    keep(&mut j, x);
    keep(&mut j, c);
    put(&mut j, y, w, &plant.q());
    put(&mut j, y, x, &plant.c());
    put(&mut j, u, c, &r.c_c);

    let mut u_map = Matrix::zeros(plant.m(), dim);
    keep_rect(&mut u_map, u.0);
    let (e_map, ym_map) = output_maps(plant, w, x, dim);
    Ok(ClosedLoop {
        method: Method::Emulation,
        period: r.period,
        ticks: 0,
        flow: f,
        measurement_jump: j,
        tick_jump: None,
        e_map,
        ym_map,
        u_map,
        layout: Layout {
            w,
            x,
            zeta: (w.0, 0),
            y_hat: y,
            controller: c,
            u,
        },
    })
}

/// Close `regulator` around `plant` (which may differ from the design
/// plant, e.g. under parameter perturbation).
pub fn closed_loop(plant: &PlantModel, regulator: &Regulator) -> Result<ClosedLoop> {
    match regulator {
        Regulator::Emulation(r) => emulation_loop(plant, r),
        Regulator::Hold(d) => hold_loop(plant, d),
        Regulator::Multirate(r) => multirate_loop(plant, r),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerInit {
    /// Controller, hold and held signals start at zero.
    Zero,
    /// Hold loop only: start on the steady-state manifold, so that the
    /// first sample at `t = 0` lands exactly on it.
    SteadyState,
}

/// Full initial state (pre-jump at `t = 0`).
pub fn initial_state(
    cl: &ClosedLoop,
    regulator: &Regulator,
    x0: &Vector,
    w0: &Vector,
    init: ControllerInit,
) -> Result<Vector> {
    let lay = cl.layout;
    if x0.len() != lay.x.1 || w0.len() != lay.w.1 {
        return Err(dim_err(format!(
            "initial condition sizes x0 {} / w0 {} do not match n = {}, d = {}",
            x0.len(),
            w0.len(),
            lay.x.1,
            lay.w.1
        )));
    }
    let mut s = Vector::zeros(cl.dim());
    s.rows_mut(lay.w.0, lay.w.1).copy_from(w0);
    match init {
        ControllerInit::Zero => {
            s.rows_mut(lay.x.0, lay.x.1).copy_from(x0);
        }
        ControllerInit::SteadyState => {
            let Regulator::Hold(d) = regulator else {
                return Err(Error::Precondition(
                    "steady-state initialization is defined for the hold loop only".into(),
                ));
            };
            let sol = &d.solution;
            let s_d_inv = d
                .discretized
                .s_d
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Numeric("e^{ST} not invertible".into()))?;
            let w_prev = &s_d_inv * w0;
            let qe = lay.y_hat.1 - sol.y_m.nrows();
            s.rows_mut(lay.x.0, lay.x.1).copy_from(&(&sol.pi_x * w0));
            s.rows_mut(lay.zeta.0, lay.zeta.1).copy_from(&(&sol.pi_zeta * w0));
            s.rows_mut(lay.y_hat.0 + qe, sol.y_m.nrows())
                .copy_from(&(&sol.y_m * &w_prev));
            s.rows_mut(lay.controller.0, lay.controller.1)
                .copy_from(&(&sol.pi_z * &w_prev));
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum JumpKind {
    MeasurementSample,
    ControlTick,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub t: f64,
    /// Jump counter after the jump.
    pub j: u64,
    pub kind: JumpKind,
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub t: f64,
    pub j: u64,
    pub state: Vector,
    pub e: Vector,
    pub y_m: Vector,
    pub u: Vector,
}

#[derive(Debug, Clone)]
pub struct HybridTrajectory {
    pub method: Method,
    pub layout: Layout,
    pub horizon: f64,
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    /// False once the state norm passed the divergence threshold; the
    /// trajectory is truncated there.
    pub bounded: bool,
}

impl HybridTrajectory {
    pub fn block(&self, sample: &Sample, span: (usize, usize)) -> Vector {
        sample.state.rows(span.0, span.1).into_owned()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// Uniform output points per sample period.
    pub dense_per_period: usize,
    pub divergence_threshold: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            dense_per_period: 20,
            divergence_threshold: 1e9,
        }
    }
}

struct Propagator<'a> {
    flow: &'a Matrix,
    cache: HashMap<u64, Matrix>,
}

impl Propagator<'_> {
    fn advance(&mut self, x: &Vector, dt: f64) -> Result<Vector> {
        if dt <= 0.0 {
            return Ok(x.clone());
        }
        let key = dt.to_bits();
        if !self.cache.contains_key(&key) {
            let e = matexp(self.flow, dt)?;
            self.cache.insert(key, e);
        }
        Ok(&self.cache[&key] * x)
    }
}

/// Offsets inside one period: `(τ, is_tick)`, increasing, ending at `T`.
fn period_offsets(period: f64, ticks: usize, dense: usize) -> Vec<(f64, bool)> {
    let mut pts: Vec<(f64, bool)> = Vec::new();
    for i in 1..dense.max(1) {
        pts.push((period * i as f64 / dense as f64, false));
    }
    for i in 1..ticks {
        pts.push((period * i as f64 / ticks as f64, true));
    }
    pts.push((period, false));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, bool)> = Vec::new();
    for p in pts {
        match out.last_mut() {
            Some(last) if (p.0 - last.0).abs() <= 1e-12 * period => last.1 |= p.1,
            _ => out.push(p),
        }
    }
    out
}

/// Propagate the closed loop from `x0` (pre-jump at `t = 0`) to `horizon`.
pub fn simulate(cl: &ClosedLoop, x0: &Vector, horizon: f64, opts: &SimOptions) -> Result<HybridTrajectory> {
    if x0.len() != cl.dim() {
        return Err(dim_err(format!("initial state has {} entries, loop has {}", x0.len(), cl.dim())));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Invalid(format!("horizon must be positive, got {horizon}")));
    }
    let period = cl.period;
    let offsets = period_offsets(period, cl.ticks, opts.dense_per_period);
    let mut prop = Propagator {
        flow: &cl.flow,
        cache: HashMap::new(),
    };
    let mut traj = HybridTrajectory {
        method: cl.method,
        layout: cl.layout,
        horizon,
        samples: Vec::new(),
        events: Vec::new(),
        bounded: true,
    };
    let record = |traj: &mut HybridTrajectory, t: f64, j: u64, x: &Vector| {
        traj.samples.push(Sample {
            t,
            j,
            state: x.clone(),
            e: &cl.e_map * x,
            y_m: &cl.ym_map * x,
            u: &cl.u_map * x,
        });
    };
    let end_tol = 1e-12 * horizon.max(period);
    let mut x = x0.clone();
    let mut j: u64 = 0;
    record(&mut traj, 0.0, j, &x);
    let mut k: u64 = 0;
    'outer: loop {
        let tk = period * k as f64;
        if k > 0 && tk >= horizon - end_tol {
            break;
        }
        x = &cl.measurement_jump * &x;
        j += 1;
        traj.events.push(Event {
            t: tk,
            j,
            kind: JumpKind::MeasurementSample,
        });
        record(&mut traj, tk, j, &x);
        if let Some(tick) = &cl.tick_jump {
            x = tick * &x;
            j += 1;
            traj.events.push(Event {
                t: tk,
                j,
                kind: JumpKind::ControlTick,
            });
            record(&mut traj, tk, j, &x);
        }
        let mut prev = 0.0;
        for &(off, is_tick) in &offsets {
            let t = tk + off;
            if t >= horizon - end_tol {
                x = prop.advance(&x, horizon - (tk + prev))?;
                record(&mut traj, horizon, j, &x);
                break 'outer;
            }
            x = prop.advance(&x, off - prev)?;
            prev = off;
            if x.norm() > opts.divergence_threshold || !x.norm().is_finite() {
                record(&mut traj, t, j, &x);
                traj.bounded = false;
                break 'outer;
            }
            let at_period_end = (off - period).abs() <= 1e-12 * period;
            record(&mut traj, if at_period_end { period * (k + 1) as f64 } else { t }, j, &x);
            if is_tick {
                if let Some(tick) = &cl.tick_jump {
                    x = tick * &x;
                    j += 1;
                    traj.events.push(Event {
                        t,
                        j,
                        kind: JumpKind::ControlTick,
                    });
                    record(&mut traj, t, j, &x);
                }
            }
        }
        k += 1;
    }
    Ok(traj)
}

/// Summary numbers for one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub bounded: bool,
    /// `sup ‖e‖` over the final 20% of the simulated time.
    pub tail_sup_e: f64,
    /// Least-squares slope of `ln‖e‖` over the final half.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay_rate: Option<f64>,
    pub peak_state_norm: f64,
    pub peak_e: f64,
    pub peak_y_m: f64,
    pub terminal_e: f64,
}

pub fn compute_metrics(traj: &HybridTrajectory) -> Result<SimulationReport> {
    let last = traj
        .samples
        .last()
        .ok_or_else(|| Error::Invalid("empty trajectory".into()))?;
    let t_end = last.t;
    let mut tail = 0.0f64;
    let mut peak_state = 0.0f64;
    let mut peak_e = 0.0f64;
    let mut peak_ym = 0.0f64;
    let (mut n, mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for s in &traj.samples {
        let ne = s.e.norm();
        peak_state = peak_state.max(s.state.norm());
        peak_e = peak_e.max(ne);
        peak_ym = peak_ym.max(s.y_m.amax());
        if s.t >= 0.8 * t_end {
            tail = tail.max(ne);
        }
        if s.t >= 0.5 * t_end && ne > 0.0 && ne.is_finite() {
            let y = ne.ln();
            n += 1.0;
            st += s.t;
            sy += y;
            stt += s.t * s.t;
            sty += s.t * y;
        }
    }
    let denom = n * stt - st * st;
    let decay_rate = if traj.bounded && n >= 2.0 && denom > 0.0 {
        Some((n * sty - st * sy) / denom)
    } else {
        None
    };
    Ok(SimulationReport {
        bounded: traj.bounded,
        tail_sup_e: tail,
        decay_rate,
        peak_state_norm: peak_state,
        peak_e,
        peak_y_m: peak_ym,
        terminal_e: last.e.norm(),
    })
}

/// CSV with header `t,j,e_1..,ym_1..,u_1..,norm_e`.
pub fn write_csv<W: Write>(traj: &HybridTrajectory, mut out: W) -> Result<()> {
    let first = traj
        .samples
        .first()
        .ok_or_else(|| Error::Invalid("empty trajectory".into()))?;
    let mut header = vec!["t".to_string(), "j".to_string()];
    header.extend((1..=first.e.len()).map(|i| format!("e_{i}")));
    header.extend((1..=first.y_m.len()).map(|i| format!("ym_{i}")));
    header.extend((1..=first.u.len()).map(|i| format!("u_{i}")));
    header.push("norm_e".into());
    writeln!(out, "{}", header.join(","))?;
    for s in &traj.samples {
        let mut row = format!("{:.16e},{}", s.t, s.j);
        for v in s.e.iter().chain(s.y_m.iter()).chain(s.u.iter()) {
            row += &format!(",{v:.16e}");
        }
        row += &format!(",{:.16e}", s.e.norm());
        writeln!(out, "{row}")?;
    }
    Ok(())
}
