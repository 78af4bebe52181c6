//! Constant, delayed and linear protocols at a long and a short duration,
//! propagated with the full Hamiltonian in the moment engine.

use std::f64::consts::TAU;

use optosqueeze::analysis::squeezing_db;
use optosqueeze::model::{Mode, SystemParams};
use optosqueeze::protocols::{grid_for, make_pulses, simulate_moments, Delay, ProtocolSpec};

fn report(
    label: &str,
    spec: &ProtocolSpec,
    periods: f64,
    params: &SystemParams,
) -> optosqueeze::Result<()> {
    let mode = Mode::Full;
    let grid = grid_for(
        periods * params.cavity_period(),
        params,
        spec.max_amplitude(),
        mode,
    )?;
    let traj = simulate_moments(&make_pulses(spec, grid, params, mode)?, params, mode)?;
    println!(
        "T = {periods:>2} periods  {label:<9} {:6.3} dB",
        squeezing_db(traj.min_var_x1())?
    );
    Ok(())
}

fn main() -> optosqueeze::Result<()> {
    let params = SystemParams::reference();
    let (gm, gp0) = (TAU * 70e3, TAU * 25e3);
    report("constant", &ProtocolSpec::constant(gm, 0.86), 42.0, &params)?;
    report(
        "delayed",
        &ProtocolSpec::delayed(gm, 0.86, Delay::Auto),
        42.0,
        &params,
    )?;
    report(
        "linear",
        &ProtocolSpec::linear(gm, gp0, 0.95),
        42.0,
        &params,
    )?;

    let gm = TAU * 93e3;
    report("constant", &ProtocolSpec::constant(gm, 0.70), 8.0, &params)?;
    report(
        "delayed",
        &ProtocolSpec::delayed(gm, 0.71, Delay::Auto),
        8.0,
        &params,
    )?;
    report("linear", &ProtocolSpec::linear(gm, gp0, 0.91), 8.0, &params)?;
    Ok(())
}
