//! Gaussian moment oracle against Fock propagation and analytic limits.

use std::f64::consts::TAU;

use optosqueeze::analysis::FockObserver;
use optosqueeze::fock::{initial_state, FockCutoffs};
use optosqueeze::model::{FockModel, Mode, PulsePair, SystemParams, TimeGrid};
use optosqueeze::moments::{evolve_moments, steady_state, ForceModel, GaussianState};
use optosqueeze::propagator::propagate_forward;
use optosqueeze::protocols::{grid_for, make_pulses, simulate_moments, Delay, ProtocolSpec};

#[test]
fn full_mode_fock_matches_moments() {
    let params = SystemParams::reference().with_n_th(0.5);
    let cutoffs = FockCutoffs::new(5, 20).unwrap();
    let model = FockModel::new(params, cutoffs).unwrap();
    let spec = ProtocolSpec::linear(TAU * 40e3, TAU * 10e3, 0.8);
    let grid = grid_for(
        params.cavity_period(),
        &params,
        spec.max_amplitude(),
        Mode::Full,
    )
    .unwrap();
    let pulses = make_pulses(&spec, grid, &params, Mode::Full).unwrap();
    let fock = propagate_forward(
        &model,
        &initial_state(params.n_th, cutoffs).unwrap(),
        &pulses,
        Mode::Full,
    )
    .unwrap();
    let gauss = simulate_moments(&pulses, &params, Mode::Full).unwrap();
    let obs = FockObserver::new(cutoffs);
    for (rho, g) in fock.states().iter().zip(gauss.states()) {
        let o = obs.observe(rho).unwrap();
        assert!((o.var_x1 - g.var_x1()).abs() <= 1e-3 * g.var_x1());
        assert!((o.var_x2 - g.var_x2()).abs() <= 1e-3 * g.var_x2());
        assert!((o.purity_mech - g.purity_mech()).abs() <= 1e-3 * g.purity_mech());
        assert!((o.purity_cav - g.purity_cav()).abs() <= 1e-3 * g.purity_cav());
        assert!((o.purity_total - g.purity_total()).abs() <= 1e-3 * g.purity_total());
    }
}

#[test]
fn heisenberg_floor_holds_for_all_protocols() {
    let params = SystemParams::reference();
    let gm = TAU * 70e3;
    for spec in [
        ProtocolSpec::constant(gm, 0.86),
        ProtocolSpec::delayed(gm, 0.9, Delay::Auto),
        ProtocolSpec::linear(gm, TAU * 25e3, 0.95),
    ] {
        for mode in [Mode::Rwa, Mode::Full] {
            let grid = grid_for(
                20.0 * params.cavity_period(),
                &params,
                spec.max_amplitude(),
                mode,
            )
            .unwrap();
            let traj = simulate_moments(
                &make_pulses(&spec, grid, &params, mode).unwrap(),
                &params,
                mode,
            )
            .unwrap();
            for s in traj.states() {
                assert!(s.var_x1() * s.var_x2() >= 0.25 - 1e-9);
                assert!(s.uncertainty_min_eigenvalue() >= -1e-9);
            }
        }
    }
}

#[test]
fn long_constant_run_reaches_lyapunov_steady_state() {
    let params = SystemParams::reference();
    let (gm, gp) = (TAU * 70e3, 0.86 * TAU * 70e3);
    let ss = steady_state(gp, gm, &params).unwrap();
    let cooling_rate = 4.0 * (gm * gm - gp * gp) / params.kappa;
    let t = 40.0 / cooling_rate.min(params.kappa);
    let grid = grid_for(t, &params, gm, Mode::Rwa).unwrap();
    let traj = simulate_moments(
        &PulsePair::constant(grid, gp, gm).unwrap(),
        &params,
        Mode::Rwa,
    )
    .unwrap();
    let last = traj.last();
    assert!((last.var_x1() - ss.var_x1()).abs() <= 1e-4);
    assert!((last.cov - ss.cov).amax() <= 1e-6 * ss.cov.amax());
}

#[test]
fn pure_two_mode_state_has_equal_reduced_purities() {
    let params = SystemParams {
        kappa: 1e-300,
        gamma: 1e-300,
        ..SystemParams::reference().with_n_th(0.0)
    };
    let grid = TimeGrid::new(2e-6, 400).unwrap();
    let pulses = PulsePair::constant(grid, TAU * 50e3, 0.0).unwrap();
    let traj = evolve_moments(
        &GaussianState::thermal(0.0),
        &pulses,
        &params,
        Mode::Rwa,
        &ForceModel::None,
    )
    .unwrap();
    let s = traj.last();
    assert!(s.purity_mech() < 0.9);
    assert!((s.purity_mech() - s.purity_cav()).abs() <= 1e-10);
    assert!((s.purity_total() - 1.0).abs() <= 1e-10);
}
