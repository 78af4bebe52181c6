//! Line search over the final drive ratio for each protocol family.

use std::f64::consts::TAU;

use optosqueeze::model::{Mode, SystemParams};
use optosqueeze::protocols::{
    default_ratio_grid, line_search_ratio, Delay, Objective, ProtocolSpec,
};

fn main() -> optosqueeze::Result<()> {
    let params = SystemParams::reference();
    let ratios = default_ratio_grid();
    for (periods, gm) in [(42.0, TAU * 70e3), (8.0, TAU * 93e3)] {
        let t = periods * params.cavity_period();
        for (name, spec) in [
            ("constant", ProtocolSpec::constant(gm, 0.5)),
            ("delayed", ProtocolSpec::delayed(gm, 0.5, Delay::Auto)),
            ("linear", ProtocolSpec::linear(gm, TAU * 25e3, 0.5)),
        ] {
            let best = line_search_ratio(
                &spec,
                t,
                &params,
                Mode::Full,
                Objective::MaxOverTime,
                &ratios,
            )?;
            println!(
                "T = {periods:>2} periods  {name:<9} ratio {:.3}  {:6.3} dB",
                best.ratio, best.db
            );
        }
    }
    Ok(())
}
