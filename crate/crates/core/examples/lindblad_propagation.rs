//! Lindblad propagation of a constant two-tone drive in truncated Fock
//! space, with trace, purity and squeezing along the trajectory.

use std::f64::consts::TAU;

use optosqueeze::analysis::FockObserver;
use optosqueeze::fock::{initial_state, FockCutoffs};
use optosqueeze::model::{FockModel, Mode, SystemParams};
use optosqueeze::propagator::{propagate_forward_with, PropagationOptions};
use optosqueeze::protocols::{grid_for, make_pulses, ProtocolSpec};

fn main() -> optosqueeze::Result<()> {
    let params = SystemParams::reference().with_n_th(0.5);
    let cutoffs = FockCutoffs::new(6, 20)?;
    let model = FockModel::new(params, cutoffs)?;
    let rho0 = initial_state(params.n_th, cutoffs)?;

    let spec = ProtocolSpec::constant(TAU * 20e3, 0.8);
    let t = 10.0 * params.cavity_period();
    let grid = grid_for(t, &params, spec.max_amplitude(), Mode::Rwa)?;
    let pulses = make_pulses(&spec, grid, &params, Mode::Rwa)?;

    let traj = propagate_forward_with(
        &model,
        &rho0,
        &pulses,
        Mode::Rwa,
        &PropagationOptions::stored_every(grid.n_steps() / 10),
    )?;
    let obs = FockObserver::new(cutoffs);
    println!(
        "{:>10} {:>10} {:>10} {:>10} {:>8}",
        "t_us", "trace", "var_x1", "purity_m", "dB"
    );
    for (i, rho) in traj.states().iter().enumerate() {
        let o = obs.observe(rho)?;
        let tr: f64 = rho.trace().re;
        println!(
            "{:>10.3} {:>10.7} {:>10.6} {:>10.6} {:>8.3}",
            grid.time(traj.node(i)) * 1e6,
            tr,
            o.var_x1,
            o.purity_mech,
            o.db()
        );
    }
    Ok(())
}
