//! Forward and adjoint propagation contracts on small Fock spaces.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use optosqueeze::fock::{
    hermiticity_error, initial_state, thermal_state, CMatrix, DensityMatrix, FockCutoffs, C64,
};
use optosqueeze::model::{FockModel, Mode, PulsePair, SystemParams};
use optosqueeze::propagator::{propagate_backward, propagate_forward};
use optosqueeze::protocols::grid_for;

fn random_hermitian(dim: usize, seed: u64) -> CMatrix {
    let mut s = seed;
    let mut next = || {
        s = s
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    let m = DMatrix::from_fn(dim, dim, |_, _| C64::new(next(), next()));
    (&m + m.adjoint()) * C64::new(0.5, 0.0)
}

fn wavy_pulses(params: &SystemParams, periods: f64, mode: Mode) -> PulsePair {
    let gm = TAU * 30e3;
    let t = periods * params.cavity_period();
    let grid = grid_for(t, params, 1.5 * gm, mode).unwrap();
    PulsePair::from_fn(grid, |s| {
        (
            0.6 * gm * (1.0 + 0.3 * (TAU * s / t).sin()),
            gm * (1.0 + 0.4 * (2.0 * TAU * s / t).cos()),
        )
    })
    .unwrap()
}

#[test]
fn pairing_is_conserved_in_both_modes() {
    let params = SystemParams::reference().with_n_th(0.5);
    let cutoffs = FockCutoffs::new(3, 8).unwrap();
    let model = FockModel::new(params, cutoffs).unwrap();
    let rho0 = initial_state(params.n_th, cutoffs).unwrap();
    let chi_t = random_hermitian(cutoffs.dim(), 7);
    for mode in [Mode::Rwa, Mode::Full] {
        let pulses = wavy_pulses(&params, if mode == Mode::Full { 0.5 } else { 3.0 }, mode);
        let fwd = propagate_forward(&model, &rho0, &pulses, mode).unwrap();
        let bwd = propagate_backward(&model, &chi_t, &pulses, mode).unwrap();
        let pair: Vec<f64> = fwd
            .states()
            .iter()
            .zip(bwd.states())
            .map(|(r, c)| (c * r).trace().re)
            .collect();
        for v in &pair {
            assert!((v - pair[0]).abs() <= 1e-7, "{mode:?}: {v} vs {}", pair[0]);
        }
        for c in bwd.states() {
            assert!(hermiticity_error(c) <= 1e-10);
        }
    }
}

#[test]
fn unitary_round_trip_returns_terminal_state() {
    let params = SystemParams::reference().with_n_th(0.0);
    let params = SystemParams {
        kappa: 1e-300,
        gamma: 1e-300,
        ..params
    };
    let cutoffs = FockCutoffs::new(3, 6).unwrap();
    let model = FockModel::new(params, cutoffs).unwrap();
    let gm = TAU * 30e3;
    let grid = optosqueeze::model::TimeGrid::new(20e-6, 4000).unwrap();
    let pulses = PulsePair::constant(grid, 0.5 * gm, gm).unwrap();
    let th = thermal_state(0.7, cutoffs.n_mech()).unwrap();
    let cav = thermal_state(0.3, cutoffs.n_cav()).unwrap();
    let chi_t = DensityMatrix::product(&cav.state, &th.state);
    let bwd = propagate_backward(&model, chi_t.matrix(), &pulses, Mode::Rwa).unwrap();
    let chi0 = DensityMatrix::new(bwd.states()[0].clone()).unwrap();
    let again = propagate_forward(&model, &chi0, &pulses, Mode::Rwa).unwrap();
    let err = (again.last() - chi_t.matrix()).camax();
    assert!(err <= 1e-8, "round trip error {err}");
}

#[test]
fn trace_and_hermiticity_along_full_mode_run() {
    let params = SystemParams::reference().with_n_th(0.5);
    let cutoffs = FockCutoffs::new(3, 10).unwrap();
    let model = FockModel::new(params, cutoffs).unwrap();
    let rho0 = initial_state(params.n_th, cutoffs).unwrap();
    let pulses = wavy_pulses(&params, 0.5, Mode::Full);
    let traj = propagate_forward(&model, &rho0, &pulses, Mode::Full).unwrap();
    for i in 0..traj.len() {
        let rho = traj.density(i);
        assert!((rho.trace() - 1.0).abs() <= 1e-8);
        assert!(hermiticity_error(rho.matrix()) <= 1e-10);
    }
    assert!(traj.density(traj.len() - 1).min_eigenvalue() >= -1e-6);
}
