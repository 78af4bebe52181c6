//! Truncated two-mode Fock space: ladder operators, thermal states,
//! quadrature variances and reduced purities.

use optosqueeze::analysis::{partial_trace, squeezing_db, variance};
use optosqueeze::fock::{
    initial_state, ladder_ops, quadrature_ops, thermal_state, FockCutoffs, Subsystem,
};

fn main() -> optosqueeze::Result<()> {
    let cutoffs = FockCutoffs::new(4, 30)?;
    let ops = ladder_ops(cutoffs);
    println!(
        "dim {} (cavity {} x mechanics {})",
        cutoffs.dim(),
        cutoffs.n_cav(),
        cutoffs.n_mech()
    );
    println!("b nnz {}", ops.b.to_sparse().nnz());

    for n_th in [0.0, 0.5, 2.0] {
        let th = thermal_state(n_th, cutoffs.n_mech())?;
        let rho = initial_state(n_th, cutoffs)?;
        let q = quadrature_ops(cutoffs);
        let v = variance(&rho, &q.x1)?;
        let mech = partial_trace(&rho, Subsystem::Mech, cutoffs)?;
        println!(
            "n_th {n_th}: var X1 {v:.6} ({:+.3} dB), mechanical purity {:.6}, truncation deficit {:.2e}",
            squeezing_db(v)?,
            mech.purity(),
            th.truncation_deficit
        );
    }
    Ok(())
}
