//! Variance dynamics of the same constant pulses at zero temperature under
//! artificially reduced cavity decay rates.

use optosqueeze::config::RunConfig;
use optosqueeze::harness::cmd_kappa_study;

fn main() -> optosqueeze::Result<()> {
    let cfg = RunConfig::parse("[kappa_study]\nreductions = [1, 10, 100]\nn_th = 0\n", None)?;
    let out = std::env::temp_dir().join("optosqueeze_kappa_study");
    let summary = cmd_kappa_study(&cfg, &out)?;
    for r in &summary.runs {
        println!(
            "kappa/{:<4} first minimum {:7.3} us (var {:.5}), extrema {:>2}, plateau {:.5}",
            r.kappa_reduction,
            r.first_min_time_s * 1e6,
            r.first_min_var_x1,
            r.extrema,
            r.plateau_var_x1
        );
    }
    println!("trajectories written to {}", out.display());
    Ok(())
}
