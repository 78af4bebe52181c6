//! Krotov optimization of both drive envelopes on a small Fock space,
//! optimized in the RWA and re-evaluated with the counterrotating terms.

use std::f64::consts::TAU;

use optosqueeze::fock::{initial_state, FockCutoffs};
use optosqueeze::krotov::{evaluate, optimize, KrotovConfig};
use optosqueeze::model::{FockModel, Mode, PulsePair, SystemParams};
use optosqueeze::protocols::grid_for;

fn main() -> optosqueeze::Result<()> {
    let params = SystemParams::reference().with_n_th(0.5);
    let cutoffs = FockCutoffs::new(4, 12)?;
    let model = FockModel::new(params, cutoffs)?;
    let rho0 = initial_state(params.n_th, cutoffs)?;
    let gm = TAU * 5.8e3;
    let grid = grid_for(5.0 * params.cavity_period(), &params, gm, Mode::Rwa)?;
    let guess = PulsePair::constant(grid, 0.7 * gm, gm)?;

    let config = KrotovConfig {
        max_iters: 20,
        ..KrotovConfig::default()
    };
    let record = optimize(&model, &rho0, &guess, &config)?;
    for it in record.iterations.iter().step_by(5) {
        println!(
            "iter {:>3}  J_T {:.6}  accepted {}",
            it.iter, it.j_t, it.accepted
        );
    }
    println!(
        "J_T {:.6} -> {:.6}, monotonic {}",
        record.iterations[0].j_t,
        record.final_j_t(),
        record.monotonic
    );

    let rwa = evaluate(&model, &rho0, &record.pulses_final, Mode::Rwa)?;
    let full_grid = grid_for(
        grid.t_final(),
        &params,
        record.pulses_final.max_amplitude(),
        Mode::Full,
    )?;
    let full = evaluate(
        &model,
        &rho0,
        &record.pulses_final.resampled(full_grid)?,
        Mode::Full,
    )?;
    println!(
        "optimized pulses: rwa {:.3} dB, full {:.3} dB",
        rwa.max_db, full.max_db
    );
    Ok(())
}
