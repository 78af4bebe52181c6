//! Best achievable squeezing versus protocol duration, driven through the
//! same configuration layer as the command-line front end.

use optosqueeze::config::RunConfig;
use optosqueeze::harness::qsl_point;

fn main() -> optosqueeze::Result<()> {
    let cfg = RunConfig::parse("[sweep]\nT_kappa_units = [0.5, 1, 2, 4, 8, 16, 32]\n", None)?;
    println!(
        "{:>8} {:>10} {:>9} {:>7} {:>9} {:>9}",
        "T/2pi*k", "T_us", "family", "ratio", "full_dB", "rwa_dB"
    );
    for &t in &cfg.sweep.durations {
        let p = qsl_point(&cfg, t)?;
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        println!(
            "{:>8.2} {:>10.3} {:>9} {:>7} {:>9} {:>9}",
            p.t_kappa_units,
            p.t_s * 1e6,
            p.best_family.as_deref().unwrap_or("-"),
            fmt(p.best_ratio),
            fmt(p.max_db_full),
            fmt(p.max_db_rwa)
        );
    }
    Ok(())
}
