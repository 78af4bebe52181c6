//! Steady-state squeezing of the RWA moment equations versus the drive
//! ratio, next to the Bogoliubov squeeze parameter and effective coupling.

use std::f64::consts::TAU;

use optosqueeze::analysis::{effective_coupling, squeeze_parameter, squeezing_db};
use optosqueeze::model::SystemParams;
use optosqueeze::moments::steady_state;

fn main() -> optosqueeze::Result<()> {
    let params = SystemParams::reference();
    let gm = TAU * 70e3;
    println!(
        "{:>6} {:>8} {:>12} {:>10} {:>8}",
        "ratio", "r", "G_eff/2pi", "var_x1", "dB"
    );
    for ratio in [0.0, 0.2, 0.4, 0.6, 0.8, 0.86, 0.9, 0.95] {
        let gp = ratio * gm;
        let ss = steady_state(gp, gm, &params)?;
        println!(
            "{ratio:>6.2} {:>8.4} {:>12.1} {:>10.5} {:>8.3}",
            squeeze_parameter(gp, gm)?,
            effective_coupling(gp, gm)? / TAU,
            ss.var_x1(),
            squeezing_db(ss.var_x1())?
        );
    }
    Ok(())
}
