use regulata::design::design_regulator;
use regulata::design::emulation::emulate;
use regulata::hybridsim::{
    closed_loop, initial_state, simulate, write_csv, ControllerInit, HybridTrajectory, JumpKind,
    Regulator, SimOptions,
};
use regulata::model::{build_pendulum, Method};
use regulata::numkit::{matexp, Matrix};

fn run(method: Method, period: f64, dense: usize, horizon: f64) -> (Regulator, HybridTrajectory) {
    let sc = build_pendulum();
    let reg = design_regulator(&sc, method, period, 4).unwrap();
    let cl = closed_loop(&sc.plant, &reg).unwrap();
    let x0 = initial_state(&cl, &reg, &sc.x0, &sc.w0, ControllerInit::Zero).unwrap();
    let opts = SimOptions {
        dense_per_period: dense,
        ..SimOptions::default()
    };
    (reg, simulate(&cl, &x0, horizon, &opts).unwrap())
}

#[test]
fn output_grid_does_not_change_the_solution() {
    for method in [Method::Hold, Method::Multirate, Method::Emulation] {
        let period = if method == Method::Emulation { 0.025 } else { 0.1 };
        let (_, coarse) = run(method, period, 20, 3.0);
        let (_, fine) = run(method, period, 40, 3.0);
        let mut compared = 0;
        for a in &coarse.samples {
            for b in fine.samples.iter().filter(|b| b.j == a.j && (b.t - a.t).abs() <= 1e-12) {
                let scale = 1.0 + a.state.amax();
                assert!(
                    (&a.state - &b.state).amax() <= 1e-10 * scale,
                    "{method} at t = {}: {:e}",
                    a.t,
                    (&a.state - &b.state).amax()
                );
                compared += 1;
            }
        }
        assert!(compared >= coarse.samples.len(), "{method}: {compared} common samples");
    }
}

#[test]
fn jump_counter_and_events_are_consistent() {
    let (_, traj) = run(Method::Multirate, 0.1, 8, 1.0);
    let mut last_j = 0;
    for ev in &traj.events {
        assert_eq!(ev.j, last_j + 1);
        last_j = ev.j;
    }
    let meas = traj
        .events
        .iter()
        .filter(|e| e.kind == JumpKind::MeasurementSample)
        .count();
    let ticks = traj.events.len() - meas;
    assert_eq!(meas, 10);
    assert_eq!(ticks, 4 * meas);
    assert!(traj.samples.windows(2).all(|w| w[1].t >= w[0].t && w[1].j >= w[0].j));
}

/// Simpson's rule for `∫₀ᵀ e^{A r} dr · B` on `2n` panels.
fn simpson(a: &Matrix, b: &Matrix, period: f64, n: usize) -> Matrix {
    let panels = 2 * n;
    let h = period / panels as f64;
    let step = matexp(a, h).unwrap();
    let mut e = Matrix::identity(a.nrows(), a.nrows());
    let mut acc = Matrix::zeros(a.nrows(), b.ncols());
    for i in 0..=panels {
        let w = if i == 0 || i == panels {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += (&e * b) * w;
        e = &step * e;
    }
    acc * (h / 3.0)
}

#[test]
fn emulated_input_matrix_matches_quadrature() {
    let sc = build_pendulum();
    let Regulator::Emulation(r) = design_regulator(&sc, Method::Emulation, 0.025, 1).unwrap() else {
        unreachable!()
    };
    let oracle = simpson(&r.a_c, &r.b_c, 0.025, 5_000);
    let (m, g) = emulate(&r.a_c, &r.b_c, 0.025).unwrap();
    assert!((&g - &oracle).amax() <= 1e-8 * (1.0 + oracle.amax()));
    assert_eq!(m, r.m);
    assert_eq!(g, r.gamma_d);
}

#[test]
fn emulation_loop_samples_follow_the_discrete_controller() {
    let (reg, traj) = run(Method::Emulation, 0.025, 4, 1.0);
    let Regulator::Emulation(r) = reg else { unreachable!() };
    let lay = traj.layout;
    // No control ticks here, so the measurement at kT is jump k + 1.
    let at = |j: u64, t: f64| traj.samples.iter().find(|s| s.j == j && (s.t - t).abs() < 1e-12);
    let mut checked = 0;
    for k in 0..30 {
        let tk = 0.025 * k as f64;
        let t1 = 0.025 * (k + 1) as f64;
        let (Some(start), Some(end)) = (at(k + 1, tk), at(k + 1, t1)) else { continue };
        let xc = traj.block(start, lay.controller);
        let y = traj.block(start, lay.y_hat);
        let predicted = &r.m * xc + &r.gamma_d * y;
        let got = traj.block(end, lay.controller);
        assert!((&predicted - &got).amax() <= 1e-10 * (1.0 + got.amax()));
        checked += 1;
    }
    assert!(checked >= 30);
}

#[test]
fn csv_is_deterministic_and_well_formed() {
    let (_, a) = run(Method::Hold, 0.1, 5, 1.0);
    let (_, b) = run(Method::Hold, 0.1, 5, 1.0);
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    write_csv(&a, &mut ca).unwrap();
    write_csv(&b, &mut cb).unwrap();
    assert_eq!(ca, cb);
    let text = String::from_utf8(ca).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,j,e_1,ym_1,u_1,norm_e"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 6);
    let digits = row[0].split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(digits.len(), 17);
    assert!(!text.contains('\r'));
}
