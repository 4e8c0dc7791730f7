//! `regulata`: assumption checks, regulator design, hybrid simulation and
//! parameter sweeps for sampled-data output regulation.
//!
//! Exit codes: 0 success, 2 malformed input, 3 assumptions fail (`check`),
//! 4 design or certification failure.

mod plot;
mod run;
mod sweep;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use regulata::assumptions::{check_assumptions, AssumptionReport};
use regulata::design::multirate::RateEstimate;
use regulata::hybridsim::{write_csv, ControllerInit, Regulator, SimulationReport};
use regulata::model::{build_pendulum, build_pendulum_constant, load_scenario, Method, Scenario};
use regulata::regeq::solve_continuous_regulator_equations;
use regulata::numkit::Matrix;
use regulata::Error;

use run::{
    design, rate_estimate, run_simulation, summarize, to_json, trajectory_svg, write_atomic,
    CertificateSummary, Point, SimSettings,
};
use sweep::{sweep, table_csv, Axis};

#[derive(Parser)]
#[command(name = "regulata", version, about = "Robust output regulation of sampled-data linear systems")]
struct Cli {
    /// Seed for the plant perturbations drawn by `--perturb`.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

fn method_parser() -> impl TypedValueParser<Value = Method> {
    PossibleValuesParser::new(["emulation", "hold", "multirate"])
        .map(|s| s.parse::<Method>().expect("listed value"))
}

#[derive(Clone, Copy, ValueEnum)]
enum Init {
    Zero,
    SteadyState,
}

#[derive(Clone, Copy, ValueEnum)]
enum Bundled {
    Pendulum,
    PendulumConstant,
}

#[derive(clap::Args)]
struct DesignArgs {
    /// Scenario file (JSON).
    scenario: PathBuf,
    /// Defaults to the scenario's method.
    #[arg(long, value_parser = method_parser())]
    method: Option<Method>,
    /// Sampling period; defaults to the scenario's.
    #[arg(long = "T")]
    period: Option<f64>,
    /// Control ticks per sampling period (multirate); defaults to the scenario's.
    #[arg(long = "N")]
    rate: Option<usize>,
}

#[derive(clap::Args)]
struct SimArgs {
    /// Simulated time; defaults to the scenario's horizon.
    #[arg(long)]
    horizon: Option<f64>,
    /// Controller initial state. `steady-state` is available for the hold loop.
    #[arg(long, value_enum, default_value_t = Init::Zero)]
    init: Init,
    /// Output samples per sampling period.
    #[arg(long, default_value_t = 20)]
    dense: usize,
    /// Relative perturbation of the plant matrices, drawn with `--seed`.
    #[arg(long, default_value_t = 0.0)]
    perturb: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Check the standing assumptions (exit 3 when they fail).
    Check {
        scenario: PathBuf,
        #[arg(long = "T")]
        period: Option<f64>,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Design a regulator and print its gains and certificate as JSON.
    Design {
        #[command(flatten)]
        args: DesignArgs,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the closed loop; CSV to `--out` or stdout.
    Simulate {
        #[command(flatten)]
        args: DesignArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// SVG plot of ‖e‖ and y_m against time.
        #[arg(long)]
        plot: Option<PathBuf>,
        /// Logarithmic ‖e‖ axis in the plot.
        #[arg(long)]
        log_scale: bool,
        /// Summary metrics as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Design and simulate over a grid of T or N values (exit 4 if any point fails).
    Sweep {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Strictly increasing, comma separated.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
        /// Defaults to multirate for an N sweep, else the scenario's method.
        #[arg(long, value_parser = method_parser())]
        method: Option<Method>,
        #[command(flatten)]
        sim: SimArgs,
        /// SweepResult JSON; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV table, one row per point; stderr when omitted.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run a bundled scenario end to end, writing every artifact to a directory.
    Demo {
        #[arg(value_enum)]
        name: Bundled,
        #[arg(long, default_value = "regulata-demo")]
        out_dir: PathBuf,
    },
}

enum Failure {
    Input(String),
    Assumptions,
    Design(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Design(e.to_string())
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn global_tol() -> CliResult<Option<f64>> {
    match std::env::var("REGULATA_TOL") {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(Some(v)),
            _ => Err(Failure::Input(format!("REGULATA_TOL must be a positive number, got `{s}`"))),
        },
    }
}

fn load(path: &Path) -> CliResult<Scenario> {
    let mut sc = load_scenario(path)?;
    if let Some(tol) = global_tol()? {
        sc.design.tol = tol;
    }
    Ok(sc)
}

fn resolve(sc: &Scenario, args: &DesignArgs) -> CliResult<Point> {
    let pt = Point {
        method: args.method.unwrap_or(sc.method),
        period: args.period.unwrap_or(sc.sampling.period),
        rate: args.rate.unwrap_or(sc.sampling.rate),
    };
    if !(pt.period.is_finite() && pt.period > 0.0) {
        return Err(Failure::Input(format!("T must be positive, got {}", pt.period)));
    }
    if pt.rate == 0 {
        return Err(Failure::Input("N must be at least 1".into()));
    }
    Ok(pt)
}

fn settings(sc: &Scenario, sim: &SimArgs, method: Method, seed: u64) -> CliResult<SimSettings> {
    let horizon = sim.horizon.unwrap_or(sc.horizon);
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Failure::Input(format!("horizon must be positive, got {horizon}")));
    }
    if sim.dense == 0 {
        return Err(Failure::Input("--dense must be at least 1".into()));
    }
    if !(sim.perturb.is_finite() && (0.0..1.0).contains(&sim.perturb)) {
        return Err(Failure::Input("--perturb must be in [0, 1)".into()));
    }
    let init = match sim.init {
        Init::Zero => ControllerInit::Zero,
        Init::SteadyState if method == Method::Hold => ControllerInit::SteadyState,
        Init::SteadyState => {
            return Err(Failure::Input("--init steady-state needs --method hold".into()));
        }
    };
    Ok(SimSettings {
        horizon,
        init,
        dense: sim.dense,
        perturb: sim.perturb,
        seed,
    })
}

fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => write_atomic(p, text.as_bytes())?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(Error::from)?;
        }
    }
    Ok(())
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[derive(Serialize)]
struct RegulatorEquations {
    pi_x: Vec<Vec<f64>>,
    psi: Vec<Vec<f64>>,
    residuals: [f64; 2],
}

#[derive(Serialize)]
struct DesignOutput<'a> {
    scenario: &'a str,
    certificate: CertificateSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate_estimate: Option<RateEstimate>,
    regulator_equations: RegulatorEquations,
    regulator: serde_json::Value,
}

fn regulator_json(reg: &Regulator) -> serde_json::Value {
    let v = match reg {
        Regulator::Emulation(r) => serde_json::to_value(r),
        Regulator::Hold(d) => serde_json::to_value(d),
        Regulator::Multirate(r) => serde_json::to_value(r),
    };
    v.expect("regulator serializes")
}

fn certification_error(c: &CertificateSummary) -> Failure {
    let detail = match c.method {
        Method::Emulation => match c.tau_max {
            Some(t) => format!("dwell bound τ_max = {t:.6e} is below T = {}", c.period),
            None => "no dwell-time certificate found".into(),
        },
        _ => format!("closed-loop certificate invalid (ρ = {:?})", c.spectral_radius),
    };
    Failure::Design(format!("{} design not certified: {detail}", c.method))
}

/// Design at one point; returns the JSON document and the summary.
fn design_document(sc: &Scenario, pt: Point) -> CliResult<(Regulator, String, CertificateSummary)> {
    let reg = design(sc, pt)?;
    let est = rate_estimate(sc, &reg).transpose()?;
    let summary = summarize(&reg, est.as_ref());
    let (pi_x, psi, residuals) = solve_continuous_regulator_equations(&sc.plant, sc.design.tol)?;
    let doc = DesignOutput {
        scenario: &sc.name,
        certificate: summary.clone(),
        rate_estimate: est,
        regulator_equations: RegulatorEquations {
            pi_x: rows(&pi_x),
            psi: rows(&psi),
            residuals,
        },
        regulator: regulator_json(&reg),
    };
    Ok((reg, to_json(&doc), summary))
}

fn cmd_check(scenario: &Path, period: Option<f64>, json: bool) -> CliResult<()> {
    let sc = load(scenario)?;
    let period = period.unwrap_or(sc.sampling.period);
    let report: AssumptionReport = check_assumptions(&sc.plant, period, sc.design.tol)?;
    if json {
        emit(None, &to_json(&report))?;
    } else {
        emit(None, &report.render_text())?;
    }
    if report.passes() {
        Ok(())
    } else {
        Err(Failure::Assumptions)
    }
}

fn cmd_design(args: &DesignArgs, out: Option<&Path>) -> CliResult<()> {
    let sc = load(&args.scenario)?;
    let pt = resolve(&sc, args)?;
    let (_, doc, summary) = design_document(&sc, pt)?;
    emit(out, &doc)?;
    if summary.certified {
        Ok(())
    } else {
        Err(certification_error(&summary))
    }
}

fn report_line(r: &SimulationReport) -> String {
    format!(
        "bounded={} peak_e={:.3e} tail_sup_e={:.3e} terminal_e={:.3e}",
        r.bounded, r.peak_e, r.tail_sup_e, r.terminal_e
    )
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    args: &DesignArgs,
    sim: &SimArgs,
    seed: u64,
    out: Option<&Path>,
    plot: Option<&Path>,
    log_scale: bool,
    report_path: Option<&Path>,
) -> CliResult<()> {
    let sc = load(&args.scenario)?;
    let pt = resolve(&sc, args)?;
    let st = settings(&sc, sim, pt.method, seed)?;
    let reg = design(&sc, pt)?;
    let (traj, report) = run_simulation(&sc, &reg, &st)?;
    let mut csv = Vec::new();
    write_csv(&traj, &mut csv)?;
    match out {
        Some(p) => write_atomic(p, &csv)?,
        None => emit(None, std::str::from_utf8(&csv).expect("ascii csv"))?,
    }
    if let Some(p) = plot {
        let title = format!("{}: {} regulator, T = {}", sc.name, pt.method, pt.period);
        write_atomic(p, trajectory_svg(&traj, &title, log_scale).as_bytes())?;
    }
    if let Some(p) = report_path {
        write_atomic(p, to_json(&report).as_bytes())?;
    }
    eprintln!("{}", report_line(&report));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    scenario: &Path,
    axis: Axis,
    values: &[f64],
    method: Option<Method>,
    sim: &SimArgs,
    seed: u64,
    out: Option<&Path>,
    csv: Option<&Path>,
) -> CliResult<()> {
    let sc = load(scenario)?;
    let method = match (axis, method) {
        (Axis::Rate, None) => Method::Multirate,
        (Axis::Rate, Some(Method::Multirate)) => Method::Multirate,
        (Axis::Rate, Some(m)) => {
            return Err(Failure::Input(format!("an N sweep needs the multirate method, got {m}")));
        }
        (Axis::Period, m) => m.unwrap_or(sc.method),
    };
    let st = settings(&sc, sim, method, seed)?;
    let res = sweep(&sc, method, axis, values, &st)?;
    emit(out, &to_json(&res))?;
    let table = table_csv(&res);
    match csv {
        Some(p) => write_atomic(p, table.as_bytes())?,
        None => eprint!("{table}"),
    }
    match res.failures() {
        0 => Ok(()),
        n => Err(Failure::Design(format!("{n} of {} sweep points failed", res.points.len()))),
    }
}

#[derive(Serialize)]
struct DemoEntry {
    label: String,
    certificate: CertificateSummary,
    report: SimulationReport,
}

fn cmd_demo(name: Bundled, dir: &Path) -> CliResult<()> {
    let (sc, points) = match name {
        Bundled::Pendulum => (
            build_pendulum(),
            vec![
                ("hold", Method::Hold, 0.1, 1),
                ("emulation_T0.025", Method::Emulation, 0.025, 1),
                ("emulation_T0.1", Method::Emulation, 0.1, 1),
                ("multirate_N4", Method::Multirate, 0.1, 4),
            ],
        ),
        Bundled::PendulumConstant => (
            build_pendulum_constant(),
            vec![
                ("hold", Method::Hold, 0.1, 1),
                ("multirate_N2", Method::Multirate, 0.1, 2),
            ],
        ),
    };
    std::fs::create_dir_all(dir).map_err(Error::from)?;
    let file = |f: &str| dir.join(f);
    write_atomic(&file("scenario.json"), sc.to_json().as_bytes())?;

    let report = check_assumptions(&sc.plant, sc.sampling.period, sc.design.tol)?;
    write_atomic(&file("check.json"), to_json(&report).as_bytes())?;
    print!("{}", report.render_text());
    if !report.passes() {
        return Err(Failure::Assumptions);
    }

    let mut entries = Vec::new();
    println!();
    println!("{:<18} {:>9} {:>8} {:>11} {:>11} {:>11}", "run", "certified", "bounded", "peak ‖e‖", "tail ‖e‖", "final ‖e‖");
    for (label, method, period, rate) in points {
        let pt = Point { method, period, rate };
        let (reg, doc, summary) = design_document(&sc, pt)?;
        write_atomic(&file(&format!("design_{label}.json")), doc.as_bytes())?;
        let st = SimSettings {
            horizon: sc.horizon,
            init: ControllerInit::Zero,
            dense: 20,
            perturb: 0.0,
            seed: 0,
        };
        let (traj, rep) = run_simulation(&sc, &reg, &st)?;
        let mut csv = Vec::new();
        write_csv(&traj, &mut csv)?;
        write_atomic(&file(&format!("{label}.csv")), &csv)?;
        let title = format!("{}: {label}", sc.name);
        write_atomic(&file(&format!("{label}.svg")), trajectory_svg(&traj, &title, true).as_bytes())?;
        println!(
            "{:<18} {:>9} {:>8} {:>11.3e} {:>11.3e} {:>11.3e}",
            label, summary.certified, rep.bounded, rep.peak_e, rep.tail_sup_e, rep.terminal_e
        );
        entries.push(DemoEntry {
            label: label.to_string(),
            certificate: summary,
            report: rep,
        });
    }
    write_atomic(&file("summary.json"), to_json(&entries).as_bytes())?;
    println!("\nartifacts written to {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let seed = cli.seed;
    let result = match &cli.command {
        Command::Check { scenario, period, json } => cmd_check(scenario, *period, *json),
        Command::Design { args, out } => cmd_design(args, out.as_deref()),
        Command::Simulate {
            args,
            sim,
            out,
            plot,
            log_scale,
            report,
        } => cmd_simulate(args, sim, seed, out.as_deref(), plot.as_deref(), *log_scale, report.as_deref()),
        Command::Sweep {
            scenario,
            axis,
            values,
            method,
            sim,
            out,
            csv,
        } => cmd_sweep(scenario, *axis, values, *method, sim, seed, out.as_deref(), csv.as_deref()),
        Command::Demo { name, out_dir } => cmd_demo(*name, out_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Assumptions) => ExitCode::from(3),
        Err(Failure::Design(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(4)
        }
    }
}
