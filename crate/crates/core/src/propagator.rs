//! Fixed-step RK4 propagation of density matrices (forward) and costates
//! (backward under the adjoint Liouvillian) with piecewise-constant controls.
//!
//! The generator is frozen on each control step; in full mode the
//! counterrotating phase is taken at the step midpoint. Each control step may
//! be split into equal RK4 substeps when the truncated generator norm would
//! otherwise leave the RK4 stability region. Because the generator is constant
//! on a step, the forward map is a polynomial `P(𝔏 dt)` and the backward map
//! is exactly its adjoint `P(𝔏† dt)`, so `tr(χ ρ)` is conserved step to step.

use crate::error::{Error, Result};
use crate::fock::{hermiticity_error, CMatrix, DensityMatrix, SparseOperator};
use crate::model::{FockModel, ForceFn, Generator, Mode, PulsePair, TimeGrid};

/// Max `dt · ‖𝔏‖` per RK4 substep.
const STABILITY_LIMIT: f64 = 2.5;

pub const TRACE_TOL: f64 = 1e-8;
pub const HERMITIAN_TOL: f64 = 1e-10;
pub const NEGATIVITY_TOL: f64 = -1e-6;

/// States (or costates) at every `stored_every`-th grid node, plus the final
/// node.
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: TimeGrid,
    stored_every: usize,
    states: Vec<CMatrix>,
}

impl Trajectory {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn stored_every(&self) -> usize {
        self.stored_every
    }

    pub fn states(&self) -> &[CMatrix] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Grid node index of the `i`-th stored state.
    pub fn node(&self, i: usize) -> usize {
        i * self.stored_every
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len())
            .map(|i| self.grid.time(self.node(i)))
            .collect()
    }

    pub fn last(&self) -> &CMatrix {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn density(&self, i: usize) -> DensityMatrix {
        DensityMatrix::from_matrix_unchecked(self.states[i].clone())
    }
}

/// How often positivity is verified (an eigendecomposition per check).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PositivityCheck {
    #[default]
    Terminal,
    EveryStored,
}

#[derive(Clone, Default)]
pub struct PropagationOptions {
    /// Thinning factor; `0` and `1` both store every node.
    pub stored_every: usize,
    pub force: Option<ForceFn>,
    pub positivity: PositivityCheck,
}

impl std::fmt::Debug for PropagationOptions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PropagationOptions")
            .field("stored_every", &self.stored_every)
            .field("force", &self.force.is_some())
            .field("positivity", &self.positivity)
            .finish()
    }
}

impl PropagationOptions {
    pub fn stored_every(n: usize) -> Self {
        Self {
            stored_every: n,
            ..Self::default()
        }
    }

    fn thinning(&self) -> usize {
        self.stored_every.max(1)
    }
}

/// Number of stored states for a grid and thinning factor.
pub fn stored_len(n_steps: usize, stored_every: usize) -> usize {
    n_steps / stored_every + 1
}

/// Generator on step `k` for amplitudes `(gp, gm)`.
pub(crate) fn step_generator<'a>(
    model: &'a FockModel,
    grid: &TimeGrid,
    k: usize,
    gp: f64,
    gm: f64,
    mode: Mode,
    force: Option<&ForceFn>,
) -> Generator<'a> {
    let t_mid = grid.midpoint(k);
    let mut h: SparseOperator = model.hamiltonian(gp, gm, t_mid, mode);
    if let Some(f) = force {
        model.add_force(&mut h, f(t_mid));
    }
    model.generator(h)
}

/// RK4 workspace reused across steps.
pub(crate) struct Rk4 {
    k1: CMatrix,
    k2: CMatrix,
    k3: CMatrix,
    k4: CMatrix,
    tmp: CMatrix,
}

impl Rk4 {
    pub(crate) fn new(dim: usize) -> Self {
        let z = CMatrix::zeros(dim, dim);
        Self {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z,
        }
    }

    /// Advances `x` by `dt` under `gen` (or its adjoint).
    pub(crate) fn advance(&mut self, gen: &Generator<'_>, x: &mut CMatrix, dt: f64, adjoint: bool) {
        let substeps = ((dt * gen.norm_bound()) / STABILITY_LIMIT).ceil().max(1.0) as usize;
        let h = dt / substeps as f64;
        let apply = |src: &CMatrix, dst: &mut CMatrix| {
            if adjoint {
                gen.apply_adjoint_into(src, dst)
            } else {
                gen.apply_into(src, dst)
            }
        };
        let axpy = |y: &mut CMatrix, a: f64, x: &CMatrix| {
            y.as_mut_slice()
                .iter_mut()
                .zip(x.as_slice())
                .for_each(|(yi, xi)| *yi += xi * a);
        };
        for _ in 0..substeps {
            apply(x, &mut self.k1);
            self.tmp.copy_from(x);
            axpy(&mut self.tmp, 0.5 * h, &self.k1);
            apply(&self.tmp, &mut self.k2);
            self.tmp.copy_from(x);
            axpy(&mut self.tmp, 0.5 * h, &self.k2);
            apply(&self.tmp, &mut self.k3);
            self.tmp.copy_from(x);
            axpy(&mut self.tmp, h, &self.k3);
            apply(&self.tmp, &mut self.k4);
            let w = h / 6.0;
            axpy(x, w, &self.k1);
            axpy(x, 2.0 * w, &self.k2);
            axpy(x, 2.0 * w, &self.k3);
            axpy(x, w, &self.k4);
        }
    }
}

fn check_state(x: &CMatrix, time: f64, is_density: bool) -> Result<()> {
    let scale = if is_density { 1.0 } else { x.norm().max(1.0) };
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Integration {
            time,
            reason: "non-finite entries".into(),
        });
    }
    let herm = hermiticity_error(x);
    if herm > HERMITIAN_TOL * scale {
        return Err(Error::Integration {
            time,
            reason: format!("Hermiticity lost ({herm:e})"),
        });
    }
    if is_density {
        let drift = (x.trace().re - 1.0).abs();
        if drift > TRACE_TOL {
            return Err(Error::Integration {
                time,
                reason: format!("trace drift {drift:e}"),
            });
        }
    }
    Ok(())
}

fn check_positive(x: &CMatrix, time: f64) -> Result<()> {
    let min = DensityMatrix::from_matrix_unchecked(x.clone()).min_eigenvalue();
    if min < NEGATIVITY_TOL {
        return Err(Error::Integration {
            time,
            reason: format!("eigenvalue {min:e} below {NEGATIVITY_TOL:e}; cutoffs too small?"),
        });
    }
    Ok(())
}

fn validate_inputs(model: &FockModel, dim: usize, pulses: &PulsePair, mode: Mode) -> Result<()> {
    if dim != model.dim() {
        return Err(Error::Shape {
            expected: model.dim(),
            actual: dim,
        });
    }
    pulses.check_step_rule(model.params(), mode)
}

pub fn propagate_forward(
    model: &FockModel,
    rho0: &DensityMatrix,
    pulses: &PulsePair,
    mode: Mode,
) -> Result<Trajectory> {
    propagate_forward_with(model, rho0, pulses, mode, &PropagationOptions::default())
}

pub fn propagate_forward_with(
    model: &FockModel,
    rho0: &DensityMatrix,
    pulses: &PulsePair,
    mode: Mode,
    opts: &PropagationOptions,
) -> Result<Trajectory> {
    validate_inputs(model, rho0.dim(), pulses, mode)?;
    let grid = *pulses.grid();
    let every = opts.thinning();
    let mut states = Vec::with_capacity(stored_len(grid.n_steps(), every));
    let mut rho = rho0.matrix().clone();
    let mut rk = Rk4::new(model.dim());
    check_state(&rho, 0.0, true)?;
    states.push(rho.clone());
    for k in 0..grid.n_steps() {
        let (gp, gm) = pulses.step(k);
        let gen = step_generator(model, &grid, k, gp, gm, mode, opts.force.as_ref());
        rk.advance(&gen, &mut rho, grid.dt(), false);
        let node = k + 1;
        if node % every == 0 {
            let t = grid.time(node);
            check_state(&rho, t, true)?;
            if opts.positivity == PositivityCheck::EveryStored {
                check_positive(&rho, t)?;
            }
            states.push(rho.clone());
        }
    }
    check_positive(&rho, grid.t_final())?;
    Ok(Trajectory {
        grid,
        stored_every: every,
        states,
    })
}

/// Solves `dχ/dt = -𝔏†χ` from `T` back to `0`. Stored states are returned in
/// forward time order (index 0 is `χ(0)`).
pub fn propagate_backward(
    model: &FockModel,
    chi_t: &CMatrix,
    pulses: &PulsePair,
    mode: Mode,
) -> Result<Trajectory> {
    propagate_backward_with(model, chi_t, pulses, mode, &PropagationOptions::default())
}

pub fn propagate_backward_with(
    model: &FockModel,
    chi_t: &CMatrix,
    pulses: &PulsePair,
    mode: Mode,
    opts: &PropagationOptions,
) -> Result<Trajectory> {
    validate_inputs(model, chi_t.nrows(), pulses, mode)?;
    if hermiticity_error(chi_t) > HERMITIAN_TOL * chi_t.norm().max(1.0) {
        return Err(Error::NotHermitian("terminal costate".into()));
    }
    let grid = *pulses.grid();
    let every = opts.thinning();
    let n = grid.n_steps();
    let mut states = vec![CMatrix::zeros(0, 0); stored_len(n, every)];
    let mut chi = chi_t.clone();
    let mut rk = Rk4::new(model.dim());
    if n.is_multiple_of(every) {
        *states.last_mut().expect("non-empty") = chi.clone();
    }
    for k in (0..n).rev() {
        let (gp, gm) = pulses.step(k);
        let gen = step_generator(model, &grid, k, gp, gm, mode, opts.force.as_ref());
        rk.advance(&gen, &mut chi, grid.dt(), true);
        if k % every == 0 {
            check_state(&chi, grid.time(k), false)?;
            states[k / every] = chi.clone();
        }
    }
    Ok(Trajectory {
        grid,
        stored_every: every,
        states,
    })
}
