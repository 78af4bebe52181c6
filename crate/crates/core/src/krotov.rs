//! First-order Krotov optimization of `G+(t)`, `G-(t)` minimizing the
//! terminal variance `J_T = ⟨X1²⟩ - ⟨X1⟩²`.
//!
//! One iteration propagates the costate `χ` backward under the old pulses,
//! then sweeps forward, updating each sample with
//!
//! ```text
//! ΔG_l(t) = (1/λ_l) Re tr{ χ_old(t) (∂𝔏/∂G_l) ρ_new(t) }
//! ```
//!
//! and advancing `ρ` with the updated value. `H` is linear in `G`, so
//! `∂𝔏/∂G_l` does not depend on the new amplitude.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::analysis::{min_with_index, squeezing_db, FockObserver};
use crate::error::{Error, Result};
use crate::fock::{CMatrix, DensityMatrix, FockCutoffs, Operator, C64};
use crate::model::{Control, FockModel, Mode, PulsePair};
use crate::propagator::{propagate_backward, propagate_forward, step_generator, Rk4};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KrotovConfig {
    /// Step-size weight for `G+`; `None` picks it from the first gradient.
    pub lambda_plus: Option<f64>,
    pub lambda_minus: Option<f64>,
    pub max_iters: usize,
    /// Stop once `|ΔJ_T|` between accepted iterations falls below this.
    pub stop_delta_j: f64,
    /// Optional bound on `|G±|` (rad/s).
    pub amplitude_cap: Option<f64>,
    pub mode: Mode,
    /// Target `max|ΔG| / mean G-` of the first update when `λ` is automatic.
    pub initial_step_fraction: f64,
    /// `λ` doublings allowed when an iteration raises `J_T`.
    pub max_retries: usize,
    /// Keep a pulse snapshot every this many iterations.
    pub snapshot_every: Option<usize>,
    /// Re-evaluate the update once with the state after the step
    /// (trapezoidal estimate over the step).
    pub reevaluate: bool,
}

impl Default for KrotovConfig {
    fn default() -> Self {
        Self {
            lambda_plus: None,
            lambda_minus: None,
            max_iters: 50,
            stop_delta_j: 1e-9,
            amplitude_cap: None,
            mode: Mode::Rwa,
            initial_step_fraction: 0.05,
            max_retries: 5,
            snapshot_every: None,
            reevaluate: true,
        }
    }
}

impl KrotovConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, l) in [
            ("lambda_plus", self.lambda_plus),
            ("lambda_minus", self.lambda_minus),
        ] {
            if let Some(l) = l {
                if !(l.is_finite() && l > 0.0) {
                    return Err(Error::param(name, "must be positive"));
                }
            }
        }
        if !(self.stop_delta_j > 0.0) {
            return Err(Error::param("stop_delta_j", "must be positive"));
        }
        if let Some(c) = self.amplitude_cap {
            if !(c > 0.0) {
                return Err(Error::param("amplitude_cap", "must be positive"));
            }
        }
        if !(self.initial_step_fraction > 0.0) {
            return Err(Error::param("initial_step_fraction", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub j_t: f64,
    /// `Σ_l λ_l ∫ ΔG_l² dt` of the accepted update.
    pub j_running: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub retries: usize,
    /// False when `J_T` rose relative to the previous accepted iteration.
    pub monotonic: bool,
    pub accepted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationRecord {
    pub iterations: Vec<IterationRecord>,
    pub pulses_guess: PulsePair,
    pub pulses_final: PulsePair,
    pub snapshots: Vec<(usize, PulsePair)>,
    pub converged: bool,
    /// False when some iteration could not be made monotonic.
    pub monotonic: bool,
}

impl OptimizationRecord {
    pub fn accepted_j_t(&self) -> Vec<f64> {
        self.iterations
            .iter()
            .filter(|r| r.accepted)
            .map(|r| r.j_t)
            .collect()
    }

    pub fn final_j_t(&self) -> f64 {
        *self
            .accepted_j_t()
            .last()
            .expect("guess is always recorded")
    }
}

/// `J_T = ΔX1²` of a joint state.
pub fn terminal_functional(rho: &CMatrix, model: &FockModel) -> f64 {
    let x = model.quadrature(0);
    let m = x.expect(rho).re;
    let x2 = x.to_dense();
    let second = (&x2 * &x2).component_mul(&rho.transpose()).sum().re;
    second - m * m
}

/// `χ(T) = -∇_ρ J_T = -(X1² - 2⟨X1⟩ X1)`.
pub fn terminal_costate(rho_t: &DensityMatrix, cutoffs: FockCutoffs) -> Result<Operator> {
    if rho_t.dim() != cutoffs.dim() {
        return Err(Error::Shape {
            expected: cutoffs.dim(),
            actual: rho_t.dim(),
        });
    }
    let x1 = crate::fock::quadrature_ops(cutoffs).x1.into_matrix();
    let mean = rho_t.expect(&x1).re;
    let chi = -(&x1 * &x1) + &x1 * C64::new(2.0 * mean, 0.0);
    Operator::hermitian(chi, "chi_T")
}

fn costate_matrix(rho_t: &CMatrix, model: &FockModel) -> CMatrix {
    let x1 = model.quadrature(0).to_dense();
    let mean = model.quadrature(0).expect(rho_t).re;
    -(&x1 * &x1) + &x1 * C64::new(2.0 * mean, 0.0)
}

/// `Re tr{χ (∂𝔏/∂G) ρ}` with `(∂𝔏/∂G)ρ = -i[∂H/∂G, ρ]`.
fn sensitivity(
    model: &FockModel,
    chi: &CMatrix,
    rho: &CMatrix,
    control: Control,
    t_mid: f64,
    mode: Mode,
) -> f64 {
    let dh = model.hamiltonian_derivative(control, t_mid, mode);
    let d = model.deriv_apply(&dh, rho);
    // χ Hermitian: tr(χ M) = Σ conj(χ_ij) M_ij
    chi.dotc(&d).re
}

const CONTROLS: [Control; 2] = [Control::Plus, Control::Minus];

/// `∂J_T/∂G_l[k]` for every step `k` (sample `k` acts on step `k`),
/// using a trapezoidal estimate over each step.
pub fn gradient(
    model: &FockModel,
    rho0: &DensityMatrix,
    pulses: &PulsePair,
    mode: Mode,
) -> Result<[Vec<f64>; 2]> {
    let fwd = propagate_forward(model, rho0, pulses, mode)?;
    let chi_t = costate_matrix(fwd.last(), model);
    let bwd = propagate_backward(model, &chi_t, pulses, mode)?;
    let grid = pulses.grid();
    let n = grid.n_steps();
    let mut out = [vec![0.0; n], vec![0.0; n]];
    for k in 0..n {
        let t_mid = grid.midpoint(k);
        for (i, &c) in CONTROLS.iter().enumerate() {
            let a = sensitivity(model, &bwd.states()[k], &fwd.states()[k], c, t_mid, mode);
            let b = sensitivity(
                model,
                &bwd.states()[k + 1],
                &fwd.states()[k + 1],
                c,
                t_mid,
                mode,
            );
            out[i][k] = -grid.dt() * 0.5 * (a + b);
        }
    }
    Ok(out)
}

struct Sweep {
    pulses: PulsePair,
    j_t: f64,
    j_running: f64,
    max_update: f64,
}

fn forward_sweep(
    model: &FockModel,
    rho0: &DensityMatrix,
    old: &PulsePair,
    chi: &[CMatrix],
    lambda: [f64; 2],
    config: &KrotovConfig,
) -> Result<Sweep> {
    let grid = *old.grid();
    let n = grid.n_steps();
    let dt = grid.dt();
    let mode = config.mode;
    let mut new = old.clone();
    let mut rho = rho0.matrix().clone();
    let mut trial = rho.clone();
    let mut rk = Rk4::new(model.dim());
    let mut j_running = 0.0;
    let mut max_update: f64 = 0.0;
    let cap = config.amplitude_cap.unwrap_or(f64::INFINITY);
    let clamp = |g: f64| g.clamp(-cap, cap);
    for k in 0..n {
        let t_mid = grid.midpoint(k);
        let (gp_old, gm_old) = old.step(k);
        let a = CONTROLS.map(|c| sensitivity(model, &chi[k], &rho, c, t_mid, mode));
        let mut gp = clamp(gp_old + a[0] / lambda[0]);
        let mut gm = clamp(gm_old + a[1] / lambda[1]);
        if config.reevaluate {
            trial.copy_from(&rho);
            let gen = step_generator(model, &grid, k, gp, gm, mode, None);
            rk.advance(&gen, &mut trial, dt, false);
            let b = CONTROLS.map(|c| sensitivity(model, &chi[k + 1], &trial, c, t_mid, mode));
            gp = clamp(gp_old + 0.5 * (a[0] + b[0]) / lambda[0]);
            gm = clamp(gm_old + 0.5 * (a[1] + b[1]) / lambda[1]);
        }
        let (dp, dm) = (gp - gp_old, gm - gm_old);
        max_update = max_update.max(dp.abs()).max(dm.abs());
        j_running += (lambda[0] * dp * dp + lambda[1] * dm * dm) * dt;
        new.samples_mut(Control::Plus)[k] = gp;
        new.samples_mut(Control::Minus)[k] = gm;
        let gen = step_generator(model, &grid, k, gp, gm, mode, None);
        rk.advance(&gen, &mut rho, dt, false);
    }
    new.samples_mut(Control::Plus)[n] = new.g_plus()[n - 1];
    new.samples_mut(Control::Minus)[n] = new.g_minus()[n - 1];
    if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Integration {
            time: grid.t_final(),
            reason: "non-finite state in forward sweep".into(),
        });
    }
    Ok(Sweep {
        pulses: new,
        j_t: terminal_functional(&rho, model),
        j_running,
        max_update,
    })
}

/// Update bound above which an iteration counts as diverged.
fn divergence_limit(config: &KrotovConfig, guess: &PulsePair, model: &FockModel) -> f64 {
    10.0 * config
        .amplitude_cap
        .unwrap_or_else(|| guess.max_amplitude().max(model.params().kappa))
}

/// `λ` for which the first update's largest step is `initial_step_fraction`
/// of the mean `G-`.
fn auto_lambda(
    model: &FockModel,
    fwd: &[CMatrix],
    chi: &[CMatrix],
    pulses: &PulsePair,
    config: &KrotovConfig,
) -> [f64; 2] {
    let grid = pulses.grid();
    let mut peak: f64 = 0.0;
    for k in 0..grid.n_steps() {
        for c in CONTROLS {
            peak = peak
                .max(sensitivity(model, &chi[k], &fwd[k], c, grid.midpoint(k), config.mode).abs());
        }
    }
    let scale = pulses.mean_g_minus().abs().max(f64::MIN_POSITIVE);
    let lambda = if peak > 0.0 {
        peak / (config.initial_step_fraction * scale)
    } else {
        1.0
    };
    [
        config.lambda_plus.unwrap_or(lambda),
        config.lambda_minus.unwrap_or(lambda),
    ]
}

/// One Krotov iteration from `pulses` with weights `lambda`.
pub fn krotov_update_step(
    model: &FockModel,
    rho0: &DensityMatrix,
    pulses: &PulsePair,
    lambda: [f64; 2],
    config: &KrotovConfig,
) -> Result<(PulsePair, f64)> {
    let fwd = propagate_forward(model, rho0, pulses, config.mode)?;
    let chi_t = costate_matrix(fwd.last(), model);
    let chi = propagate_backward(model, &chi_t, pulses, config.mode)?;
    let sweep = forward_sweep(model, rho0, pulses, chi.states(), lambda, config)?;
    Ok((sweep.pulses, sweep.j_t))
}

/// Runs Krotov iterations from `guess`.
pub fn optimize(
    model: &FockModel,
    rho0: &DensityMatrix,
    guess: &PulsePair,
    config: &KrotovConfig,
) -> Result<OptimizationRecord> {
    config.validate()?;
    let mode = config.mode;
    let limit = divergence_limit(config, guess, model);
    let mut pulses = guess.clone();
    let fwd = propagate_forward(model, rho0, &pulses, mode)?;
    let mut j_old = terminal_functional(fwd.last(), model);
    let chi_t = costate_matrix(fwd.last(), model);
    let chi0 = propagate_backward(model, &chi_t, &pulses, mode)?;
    let mut lambda = auto_lambda(model, fwd.states(), chi0.states(), &pulses, config);
    let mut iterations = vec![IterationRecord {
        iter: 0,
        j_t: j_old,
        j_running: 0.0,
        lambda_plus: lambda[0],
        lambda_minus: lambda[1],
        retries: 0,
        monotonic: true,
        accepted: true,
    }];
    let mut snapshots = Vec::new();
    let mut converged = false;
    let mut monotonic = true;
    let mut chi = chi0.states().to_vec();
    for iter in 1..=config.max_iters {
        let mut retries = 0;
        let sweep = loop {
            let sweep = forward_sweep(model, rho0, &pulses, &chi, lambda, config)?;
            if sweep.max_update > limit {
                return Err(Error::UpdateDiverged {
                    max_update: sweep.max_update,
                });
            }
            if sweep.j_t <= j_old + 1e-12 || retries == config.max_retries {
                break sweep;
            }
            retries += 1;
            lambda = lambda.map(|l| 2.0 * l);
            debug!("iteration {iter}: J_T rose, retrying with λ = {lambda:?}");
        };
        let ok = sweep.j_t <= j_old + 1e-12;
        iterations.push(IterationRecord {
            iter,
            j_t: sweep.j_t,
            j_running: sweep.j_running,
            lambda_plus: lambda[0],
            lambda_minus: lambda[1],
            retries,
            monotonic: ok,
            accepted: ok,
        });
        if !ok {
            warn!("iteration {iter}: J_T increased after {retries} retries; stopping");
            monotonic = false;
            break;
        }
        let delta = (j_old - sweep.j_t).abs();
        pulses = sweep.pulses;
        j_old = sweep.j_t;
        debug!("iteration {iter}: J_T = {j_old:e}");
        if let Some(every) = config.snapshot_every {
            if every > 0 && iter % every == 0 {
                snapshots.push((iter, pulses.clone()));
            }
        }
        if delta < config.stop_delta_j {
            converged = true;
            break;
        }
        if iter < config.max_iters {
            pulses.check_step_rule(model.params(), mode)?;
            let fwd = propagate_forward(model, rho0, &pulses, mode)?;
            let chi_t = costate_matrix(fwd.last(), model);
            chi = propagate_backward(model, &chi_t, &pulses, mode)?
                .states()
                .to_vec();
        }
    }
    Ok(OptimizationRecord {
        iterations,
        pulses_guess: guess.clone(),
        pulses_final: pulses,
        snapshots,
        converged,
        monotonic,
    })
}

/// Squeezing figures of a Fock-space run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mode: Mode,
    pub terminal_var_x1: f64,
    pub min_var_x1: f64,
    pub t_of_min: f64,
    pub max_db: f64,
}

/// Propagates `pulses` in `mode` and reports terminal and best squeezing.
pub fn evaluate(
    model: &FockModel,
    rho0: &DensityMatrix,
    pulses: &PulsePair,
    mode: Mode,
) -> Result<Evaluation> {
    let traj = propagate_forward(model, rho0, pulses, mode)?;
    let obs = FockObserver::new(model.cutoffs());
    let vars: Vec<f64> = traj
        .states()
        .iter()
        .map(|r| obs.var_x1(r))
        .collect::<Result<_>>()?;
    let (i, min) = min_with_index(&vars);
    Ok(Evaluation {
        mode,
        terminal_var_x1: *vars.last().expect("non-empty"),
        min_var_x1: min,
        t_of_min: pulses.grid().time(traj.node(i)),
        max_db: squeezing_db(min)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{initial_state, ladder_ops, LadderOps};
    use crate::model::{SystemParams, TimeGrid};
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use std::f64::consts::TAU;

    fn desk() -> (FockModel, DensityMatrix, PulsePair) {
        let params = SystemParams::reference().with_n_th(0.5);
        let cut = FockCutoffs::new(4, 12).unwrap();
        let model = FockModel::new(params, cut).unwrap();
        let rho0 = initial_state(0.5, cut).unwrap();
        let grid = TimeGrid::covering(5.0 * params.cavity_period(), params.kappa).unwrap();
        let gm = TAU * 5.8e3;
        let guess = PulsePair::constant(grid, 0.7 * gm, gm).unwrap();
        (model, rho0, guess)
    }

    #[test]
    fn centered_state_costate_is_minus_x1_squared() {
        let cut = FockCutoffs::new(2, 5).unwrap();
        let rho = initial_state(1.0, cut).unwrap();
        let chi = terminal_costate(&rho, cut).unwrap();
        let x1 = crate::fock::quadrature_ops(cut).x1.into_matrix();
        assert!((chi.matrix() + &x1 * &x1).camax() < 1e-14);
    }

    #[test]
    fn displaced_costate_gains_linear_term() {
        let cut = FockCutoffs::new(2, 30).unwrap();
        let alpha = 0.3;
        // coherent amplitude β real gives ⟨X1⟩ = √2 β
        let beta = alpha / 2f64.sqrt();
        let mut psi = DVector::from_element(cut.dim(), C64::new(0.0, 0.0));
        let mut c = (-beta * beta / 2.0).exp();
        for n in 0..30 {
            psi[cut.index(0, n)] = C64::new(c, 0.0);
            c *= beta / ((n + 1) as f64).sqrt();
        }
        let rho = DensityMatrix::pure(&psi.normalize()).unwrap();
        let chi = terminal_costate(&rho, cut).unwrap();
        let x1 = crate::fock::quadrature_ops(cut).x1.into_matrix();
        let expected = -(&x1 * &x1) + &x1 * C64::new(2.0 * alpha, 0.0);
        assert!((chi.matrix() - expected).camax() < 1e-9);
    }

    #[test]
    fn costate_is_negative_gradient() {
        let cut = FockCutoffs::new(2, 4).unwrap();
        let model = FockModel::new(SystemParams::reference(), cut).unwrap();
        let LadderOps { b, .. } = ladder_ops(cut);
        // slightly displaced, mixed reference state
        let mut m = initial_state(0.8, cut).unwrap().into_matrix();
        let bm = b.matrix();
        m += (bm + bm.adjoint()) * C64::new(0.05, 0.0);
        let n = cut.dim();
        let mut seed = 7u64;
        let mut rnd = || {
            seed = seed
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut delta = CMatrix::from_fn(n, n, |_, _| C64::new(rnd(), rnd()));
        delta = &delta + delta.adjoint();
        let tr = delta.trace() / C64::new(n as f64, 0.0);
        for i in 0..n {
            delta[(i, i)] -= tr;
        }
        let rho = DensityMatrix::from_matrix_unchecked(m.clone());
        let chi = terminal_costate(&rho, cut).unwrap();
        let eps = 1e-6;
        let fd = (terminal_functional(&(&m + &delta * C64::new(eps, 0.0)), &model)
            - terminal_functional(&m, &model))
            / eps;
        let analytic = -chi.matrix().dotc(&delta).re;
        assert!(
            (fd - analytic).abs() <= 1e-3 * analytic.abs(),
            "{fd} {analytic}"
        );
    }

    #[test]
    fn infinite_penalty_leaves_pulses_unchanged() {
        let (model, rho0, guess) = desk();
        let cfg = KrotovConfig::default();
        let (new, _) = krotov_update_step(&model, &rho0, &guess, [1e300, 1e300], &cfg).unwrap();
        for c in CONTROLS {
            for (a, b) in new.samples(c).iter().zip(guess.samples(c)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stationary_point_is_fixed() {
        // from the joint vacuum, first-order drive changes only create
        // cavity-resonator coherences invisible to ⟨X1²⟩
        let mut params = SystemParams::reference();
        params.kappa = 1e-300;
        params.gamma = 1e-300;
        params.n_th = 0.0;
        let cut = FockCutoffs::new(2, 3).unwrap();
        let model = FockModel::new(params, cut).unwrap();
        let rho0 = initial_state(0.0, cut).unwrap();
        let grid = TimeGrid::new(1e-7, 20).unwrap();
        let guess = PulsePair::zeros(grid);
        let rec = optimize(
            &model,
            &rho0,
            &guess,
            &KrotovConfig {
                max_iters: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(rec.pulses_final, guess);
        let js = rec.accepted_j_t();
        assert!(js.iter().all(|&j| (j - js[0]).abs() < 1e-15));
    }

    #[test]
    fn one_update_decreases_cost_on_desk_instance() {
        let (model, rho0, guess) = desk();
        let rec = optimize(
            &model,
            &rho0,
            &guess,
            &KrotovConfig {
                max_iters: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let js = rec.accepted_j_t();
        assert_eq!(js.len(), 2);
        assert!(js[1] < js[0], "{js:?}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (model, rho0, guess) = desk();
        let grid = *guess.grid();
        let grad = gradient(&model, &rho0, &guess, Mode::Rwa).unwrap();
        let j = |p: &PulsePair| {
            let t = propagate_forward(&model, &rho0, p, Mode::Rwa).unwrap();
            terminal_functional(t.last(), &model)
        };
        let n = grid.n_steps();
        for (ci, c) in CONTROLS.iter().enumerate() {
            for k in [n / 10, n / 2, n - 2] {
                let h = 1e-3 * guess.g_minus()[0];
                let mut up = guess.clone();
                up.samples_mut(*c)[k] += h;
                let mut dn = guess.clone();
                dn.samples_mut(*c)[k] -= h;
                let fd = (j(&up) - j(&dn)) / (2.0 * h);
                let rel = (grad[ci][k] - fd).abs() / fd.abs();
                assert!(rel < 0.05, "{c:?} k={k}: {} vs {fd}", grad[ci][k]);
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(KrotovConfig {
            lambda_plus: Some(-1.0),
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(KrotovConfig {
            stop_delta_j: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert_abs_diff_eq!(KrotovConfig::default().initial_step_fraction, 0.05);
    }
}
