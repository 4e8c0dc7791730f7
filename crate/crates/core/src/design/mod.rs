//! Regulator synthesis for the three sampled-data architectures.

pub mod emulation;
pub mod hold;
pub mod lqg;
pub mod multirate;

use crate::error::Result;
use crate::hybridsim::Regulator;
use crate::model::{Method, Scenario};

/// Design the requested regulator for a scenario's plant at period `T`
/// and rate `N` (ignored unless multirate).
pub fn design_regulator(scenario: &Scenario, method: Method, period: f64, rate: usize) -> Result<Regulator> {
    let opts = &scenario.design;
    let plant = &scenario.plant;
    Ok(match method {
        Method::Emulation => Regulator::Emulation(emulation::design_emulation(
            plant,
            period,
            &opts.emulation,
            scenario.w_bound,
            opts.tol,
        )?),
        Method::Hold => {
            let d = hold::design_hold(plant, period, &opts.hold, opts.tol)?;
            d.require_valid()?;
            Regulator::Hold(d)
        }
        Method::Multirate => {
            let d = hold::design_hold(plant, period, &opts.hold, opts.tol)?;
            d.require_valid()?;
            Regulator::Multirate(multirate::build_multirate(&d, rate)?)
        }
    })
}
