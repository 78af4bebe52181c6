//! Cross-check of Fock-space propagation against the Gaussian moment
//! equations on the same pulses.

use std::f64::consts::TAU;

use optosqueeze::analysis::FockObserver;
use optosqueeze::fock::{initial_state, FockCutoffs};
use optosqueeze::model::{FockModel, Mode, SystemParams};
use optosqueeze::propagator::propagate_forward;
use optosqueeze::protocols::{grid_for, make_pulses, simulate_moments, ProtocolSpec};

fn main() -> optosqueeze::Result<()> {
    let params = SystemParams::reference().with_n_th(0.5);
    let cutoffs = FockCutoffs::new(6, 20)?;
    let model = FockModel::new(params, cutoffs)?;
    let spec = ProtocolSpec::constant(TAU * 20e3, 0.8);
    let grid = grid_for(
        10.0 * params.cavity_period(),
        &params,
        spec.max_amplitude(),
        Mode::Rwa,
    )?;
    let pulses = make_pulses(&spec, grid, &params, Mode::Rwa)?;

    let fock = propagate_forward(
        &model,
        &initial_state(params.n_th, cutoffs)?,
        &pulses,
        Mode::Rwa,
    )?;
    let gauss = simulate_moments(&pulses, &params, Mode::Rwa)?;
    let obs = FockObserver::new(cutoffs);

    let mut worst: f64 = 0.0;
    for (rho, g) in fock.states().iter().zip(gauss.states()) {
        let vf = obs.var_x1(rho)?;
        worst = worst.max((vf - g.var_x1()).abs() / g.var_x1());
    }
    println!(
        "nodes {}, worst relative deviation of var X1: {worst:.3e}",
        fock.len()
    );
    println!(
        "terminal purity: fock {:.6}, gaussian {:.6}",
        obs.observe(fock.last())?.purity_mech,
        gauss.last().purity_mech()
    );
    Ok(())
}
