//! A linear force on the quadratures shifts the means but leaves the
//! covariance untouched.

use std::f64::consts::TAU;

use optosqueeze::model::{Mode, SystemParams};
use optosqueeze::moments::{evolve_moments, ForceModel, GaussianState};
use optosqueeze::protocols::{grid_for, make_pulses, ProtocolSpec};

fn main() -> optosqueeze::Result<()> {
    let params = SystemParams::reference();
    let spec = ProtocolSpec::constant(TAU * 70e3, 0.86);
    let grid = grid_for(
        8.0 * params.cavity_period(),
        &params,
        spec.max_amplitude(),
        Mode::Full,
    )?;
    let pulses = make_pulses(&spec, grid, &params, Mode::Full)?;
    let gs0 = GaussianState::thermal(params.n_th);

    let free = evolve_moments(&gs0, &pulses, &params, Mode::Full, &ForceModel::None)?;
    let driven = evolve_moments(
        &gs0,
        &pulses,
        &params,
        Mode::Full,
        &ForceModel::Displacement { photon_number: 1.0 },
    )?;

    let (a, b) = (free.last(), driven.last());
    println!("terminal mean (free):   {:?}", a.mean.as_slice());
    println!("terminal mean (driven): {:?}", b.mean.as_slice());
    let identical = free
        .states()
        .iter()
        .zip(driven.states())
        .all(|(x, y)| x.cov == y.cov);
    println!("covariance trajectories bit-identical: {identical}");
    Ok(())
}
