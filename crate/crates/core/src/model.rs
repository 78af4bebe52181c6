//! Linearized two-tone optomechanical model: Hamiltonians (with and without
//! the rotating-wave approximation), jump operators and the Liouvillian.
//!
//! Units: ħ = 1 and every frequency is angular (rad/s). The joint space is
//! cavity ⊗ resonator with the ordering documented in [`crate::fock`].
//!
//! The drive tones at `ω± = ω_cav ± Ω` have complex amplitudes
//! `α±(t) = ±Ω ā±(t)`, and the rescaled real envelopes stored in
//! [`PulsePair`] are `G±(t) = g0 ā±(t)`. The tones themselves are removed by
//! the displacement transformation and never simulated; only `G±` enter the
//! dynamics.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    ladder_ops, quadrature_ops, CMatrix, DensityMatrix, FockCutoffs, LadderOps, Operator,
    SparseOperator, C64, I, ONE, ZERO,
};

/// Physical rates of the cavity + resonator, all angular.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub omega_cav: f64,
    /// Mechanical frequency Ω.
    pub omega_mech: f64,
    pub g0: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub n_th: f64,
}

impl SystemParams {
    /// Parameters of the microwave electromechanics experiment used as the
    /// reference point throughout (ν_cav = 6.23 GHz, ν_m = 3.6 MHz,
    /// g0/2π = 36 Hz, κ/2π = 450 kHz, Γ/2π = 3 Hz, n_th = 2).
    pub fn reference() -> Self {
        Self::from_hz(6.23e9, 3.6e6, 36.0, 450e3, 3.0, 2.0).expect("reference values are valid")
    }

    /// Builds parameters from ordinary frequencies (Hz), converting by 2π.
    pub fn from_hz(
        nu_cav: f64,
        nu_mech: f64,
        g0_hz: f64,
        kappa_hz: f64,
        gamma_hz: f64,
        n_th: f64,
    ) -> Result<Self> {
        let p = Self {
            omega_cav: TAU * nu_cav,
            omega_mech: TAU * nu_mech,
            g0: TAU * g0_hz,
            kappa: TAU * kappa_hz,
            gamma: TAU * gamma_hz,
            n_th,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("omega_cav", self.omega_cav),
            ("omega_mech", self.omega_mech),
            ("g0", self.g0),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(
                    name,
                    format!("must be positive and finite, got {v}"),
                ));
            }
        }
        if !(self.n_th >= 0.0) || !self.n_th.is_finite() {
            return Err(Error::param("n_th", "must be finite and >= 0"));
        }
        if self.kappa / self.omega_mech > 0.5 {
            log::warn!(
                "kappa/Omega = {:.3} > 0.5: far outside the resolved-sideband regime",
                self.kappa / self.omega_mech
            );
        }
        Ok(())
    }

    /// One cavity decay period `2π/κ` in seconds; durations are often quoted
    /// in multiples of it.
    pub fn cavity_period(&self) -> f64 {
        TAU / self.kappa
    }

    pub fn with_n_th(mut self, n_th: f64) -> Self {
        self.n_th = n_th;
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }
}

/// Whether the counterrotating `e^{±2iΩt}` terms are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Rwa,
    Full,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Rwa => "rwa",
            Mode::Full => "full",
        }
    }
}

/// Which drive envelope: blue-detuned `G+` or red-detuned `G-`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Control {
    Plus,
    Minus,
}

/// Uniform grid `t_k = k T / n_steps`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_final: f64,
    n_steps: usize,
}

/// Minimum samples per period of the fastest rate in the problem.
pub const SAMPLES_PER_PERIOD: f64 = 20.0;

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(Error::param("t_final", "must be positive and finite"));
        }
        if n_steps == 0 {
            return Err(Error::param("n_steps", "must be positive"));
        }
        Ok(Self { t_final, n_steps })
    }

    /// Smallest grid over `t_final` satisfying the step rule for `max_rate`.
    pub fn covering(t_final: f64, max_rate: f64) -> Result<Self> {
        Self::new(t_final, required_steps(t_final, max_rate))
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    pub fn midpoint(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.dt()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |k| self.time(k))
    }
}

/// Steps needed so that `dt ≤ (2π/20) / max_rate`.
pub fn required_steps(t_final: f64, max_rate: f64) -> usize {
    let dt_max = TAU / SAMPLES_PER_PERIOD / max_rate;
    // guard against 1e-16 overshoot turning an exact fit into an extra step
    ((t_final / dt_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// Fastest rate the step rule must resolve.
pub fn fastest_rate(params: &SystemParams, max_amplitude: f64, mode: Mode) -> f64 {
    let mut rate = params.kappa.max(max_amplitude);
    if mode == Mode::Full {
        rate = rate.max(2.0 * params.omega_mech);
    }
    rate
}

/// Sampled real drive envelopes `G+(t)`, `G-(t)` in rad/s.
///
/// Samples sit on the grid nodes; the value used on step `k` (between nodes
/// `k` and `k+1`) is the node-`k` sample, so the final sample only matters
/// for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulsePair {
    grid: TimeGrid,
    g_plus: Vec<f64>,
    g_minus: Vec<f64>,
}

impl PulsePair {
    pub fn new(grid: TimeGrid, g_plus: Vec<f64>, g_minus: Vec<f64>) -> Result<Self> {
        let n = grid.n_steps + 1;
        for (name, v) in [("g_plus", &g_plus), ("g_minus", &g_minus)] {
            if v.len() != n {
                return Err(Error::Shape {
                    expected: n,
                    actual: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(name.into()));
            }
        }
        Ok(Self {
            grid,
            g_plus,
            g_minus,
        })
    }

    pub fn constant(grid: TimeGrid, g_plus: f64, g_minus: f64) -> Result<Self> {
        let n = grid.n_steps + 1;
        Self::new(grid, vec![g_plus; n], vec![g_minus; n])
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> (f64, f64)) -> Result<Self> {
        let (gp, gm): (Vec<f64>, Vec<f64>) = grid.times().map(f).unzip();
        Self::new(grid, gp, gm)
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self::constant(grid, 0.0, 0.0).expect("zeros are finite")
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn g_plus(&self) -> &[f64] {
        &self.g_plus
    }

    pub fn g_minus(&self) -> &[f64] {
        &self.g_minus
    }

    pub fn samples(&self, control: Control) -> &[f64] {
        match control {
            Control::Plus => &self.g_plus,
            Control::Minus => &self.g_minus,
        }
    }

    pub fn samples_mut(&mut self, control: Control) -> &mut [f64] {
        match control {
            Control::Plus => &mut self.g_plus,
            Control::Minus => &mut self.g_minus,
        }
    }

    /// `(G+, G-)` applied on step `k`.
    pub fn step(&self, k: usize) -> (f64, f64) {
        (self.g_plus[k], self.g_minus[k])
    }

    pub fn max_amplitude(&self) -> f64 {
        self.g_plus
            .iter()
            .chain(&self.g_minus)
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Time average of `G-` over the piecewise-constant steps.
    pub fn mean_g_minus(&self) -> f64 {
        let n = self.grid.n_steps;
        self.g_minus[..n].iter().sum::<f64>() / n as f64
    }

    /// Holds each step's value over a new grid with the same duration.
    pub fn resampled(&self, grid: TimeGrid) -> Result<Self> {
        if (grid.t_final - self.grid.t_final).abs() > 1e-12 * self.grid.t_final {
            return Err(Error::param("grid", "resampling must keep the duration"));
        }
        let n = self.grid.n_steps;
        let dt = self.grid.dt();
        Self::from_fn(grid, |t| {
            let k = ((t / dt) * (1.0 + 1e-12)).floor().min((n - 1) as f64) as usize;
            self.step(k)
        })
    }

    /// Checks the step rule; on failure reports the required step count.
    pub fn check_step_rule(&self, params: &SystemParams, mode: Mode) -> Result<()> {
        let rate = fastest_rate(params, self.max_amplitude(), mode);
        let required = required_steps(self.grid.t_final, rate);
        if self.grid.n_steps < required {
            return Err(Error::StepTooLarge {
                required_steps: required,
                actual_steps: self.grid.n_steps,
            });
        }
        Ok(())
    }

    /// Central-difference derivative of the envelopes at step midpoints.
    pub(crate) fn midpoint_slope(&self, k: usize) -> (f64, f64) {
        let dt = self.grid.dt();
        let k1 = (k + 1).min(self.grid.n_steps);
        (
            (self.g_plus[k1] - self.g_plus[k]) / dt,
            (self.g_minus[k1] - self.g_minus[k]) / dt,
        )
    }
}

/// Counterrotating phase `2Ωt`.
pub fn counter_phase(omega_mech: f64, t: f64) -> f64 {
    2.0 * omega_mech * t
}

fn dense_pair_ops(cutoffs: FockCutoffs) -> (CMatrix, CMatrix) {
    let LadderOps { d, b } = ladder_ops(cutoffs);
    let dd = d.matrix().adjoint();
    // P = d†b† (two-mode squeezing), Q = d†b (beam splitter)
    (&dd * b.matrix().adjoint(), &dd * b.matrix())
}

fn assemble_dense(gp: f64, gm: f64, phase: Option<f64>, cutoffs: FockCutoffs) -> CMatrix {
    let (p, q) = dense_pair_ops(cutoffs);
    let mut h = (&p + p.adjoint()) * C64::new(-gp, 0.0) + (&q + q.adjoint()) * C64::new(-gm, 0.0);
    if let Some(phi) = phase {
        let e = C64::from_polar(1.0, phi);
        let rot = (&q * e.conj() + q.adjoint() * e) * C64::new(-gp, 0.0)
            + (&p * e + p.adjoint() * e.conj()) * C64::new(-gm, 0.0);
        h += rot;
    }
    h
}

/// `H = -[d†(G+ b† + G- b) + h.c.]`.
pub fn hamiltonian_rwa(gp: f64, gm: f64, cutoffs: FockCutoffs) -> Result<Operator> {
    Operator::hermitian(assemble_dense(gp, gm, None, cutoffs), "H_rwa")
}

/// RWA part plus `-[d†(G+ b e^{-2iΩt} + G- b† e^{2iΩt}) + h.c.]`.
pub fn hamiltonian_full(
    gp: f64,
    gm: f64,
    t: f64,
    omega_mech: f64,
    cutoffs: FockCutoffs,
) -> Result<Operator> {
    let phase = counter_phase(omega_mech, t);
    Operator::hermitian(assemble_dense(gp, gm, Some(phase), cutoffs), "H_full")
}

/// `√κ d`, `√(Γ n_th) b†`, `√(Γ(n_th+1)) b` on the joint space.
pub fn lindblad_ops(params: &SystemParams, cutoffs: FockCutoffs) -> [Operator; 3] {
    let LadderOps { d, b } = ladder_ops(cutoffs);
    let scale = |m: CMatrix, s: f64, label: &str| {
        Operator::new(m * C64::new(s, 0.0), label).expect("finite rates")
    };
    [
        scale(d.matrix().clone(), params.kappa.sqrt(), "L_cav"),
        scale(
            b.matrix().adjoint(),
            (params.gamma * params.n_th).sqrt(),
            "L_heat",
        ),
        scale(
            b.matrix().clone(),
            (params.gamma * (params.n_th + 1.0)).sqrt(),
            "L_damp",
        ),
    ]
}

/// Dense reference Lindblad generator
/// `-i[H,ρ] + Σ (L ρ L† - ½{L†L, ρ})`.
pub fn liouvillian_apply(rho: &CMatrix, h: &Operator, jumps: &[Operator]) -> Result<CMatrix> {
    let dim = rho.nrows();
    for op in std::iter::once(h).chain(jumps) {
        if op.dim() != dim {
            return Err(Error::Shape {
                expected: dim,
                actual: op.dim(),
            });
        }
    }
    let hm = h.matrix();
    let mut out = (hm * rho - rho * hm) * (-I);
    for l in jumps {
        let lm = l.matrix();
        let ld = lm.adjoint();
        let ldl = &ld * lm;
        out += lm * rho * &ld - (&ldl * rho + rho * &ldl) * C64::new(0.5, 0.0);
    }
    Ok(out)
}

/// `∂H/∂G` for the given control; in full mode includes the phase terms.
pub fn hamiltonian_derivative(
    control: Control,
    mode: Mode,
    t: f64,
    omega_mech: f64,
    cutoffs: FockCutoffs,
) -> Operator {
    let phase = (mode == Mode::Full).then(|| counter_phase(omega_mech, t));
    let m = match control {
        Control::Plus => assemble_dense(1.0, 0.0, phase, cutoffs),
        Control::Minus => assemble_dense(0.0, 1.0, phase, cutoffs),
    };
    Operator::hermitian(m, "dH/dG").expect("derivative is Hermitian")
}

/// Dense reference `(∂𝔏/∂G) ρ = -i[∂H/∂G, ρ]`.
pub fn liouvillian_deriv(
    rho: &CMatrix,
    control: Control,
    mode: Mode,
    t: f64,
    omega_mech: f64,
    cutoffs: FockCutoffs,
) -> Result<CMatrix> {
    if rho.nrows() != cutoffs.dim() {
        return Err(Error::Shape {
            expected: cutoffs.dim(),
            actual: rho.nrows(),
        });
    }
    let dh = hamiltonian_derivative(control, mode, t, omega_mech, cutoffs);
    let dhm = dh.matrix();
    Ok((dhm * rho - rho * dhm) * (-I))
}

/// Time-dependent force on the quadratures `(X1, X2, Y1, Y2)`, in 1/s.
///
/// In the Fock engine this is realized by the linear Hamiltonian
/// `H = Σ h_i ξ_i` with `h = -J f`, which produces `dξ/dt = f` exactly.
pub type ForceFn = std::sync::Arc<dyn Fn(f64) -> [f64; 4] + Send + Sync>;

/// Precomputed sparse building blocks for fast Liouvillian application.
#[derive(Debug, Clone)]
pub struct FockModel {
    params: SystemParams,
    cutoffs: FockCutoffs,
    pair_p: SparseOperator,
    pair_q: SparseOperator,
    jumps: Vec<SparseOperator>,
    jumps_adj: Vec<SparseOperator>,
    decay_diag: Vec<f64>,
    quadratures: [SparseOperator; 4],
    jump_norm_sq: f64,
}

impl FockModel {
    pub fn new(params: SystemParams, cutoffs: FockCutoffs) -> Result<Self> {
        params.validate()?;
        let (p, q) = dense_pair_ops(cutoffs);
        let dense_jumps = lindblad_ops(&params, cutoffs);
        let dim = cutoffs.dim();
        let mut decay = CMatrix::zeros(dim, dim);
        for l in &dense_jumps {
            decay += l.matrix().adjoint() * l.matrix();
        }
        let decay_diag: Vec<f64> = (0..dim).map(|i| decay[(i, i)].re).collect();
        debug_assert!((0..dim).all(|i| (0..dim).all(|j| i == j || decay[(i, j)].norm() < 1e-12)));
        let jumps: Vec<SparseOperator> = dense_jumps
            .iter()
            .map(|l| l.to_sparse())
            .filter(|s| s.nnz() > 0)
            .collect();
        let jumps_adj = jumps.iter().map(|s| s.adjoint()).collect();
        let jump_norm_sq = jumps.iter().map(|s| s.norm_bound().powi(2)).sum();
        let quad = quadrature_ops(cutoffs);
        Ok(Self {
            params,
            cutoffs,
            pair_p: SparseOperator::from_dense(&p),
            pair_q: SparseOperator::from_dense(&q),
            jumps,
            jumps_adj,
            decay_diag,
            quadratures: quad.as_array().map(|o| o.to_sparse()),
            jump_norm_sq,
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn cutoffs(&self) -> FockCutoffs {
        self.cutoffs
    }

    pub fn dim(&self) -> usize {
        self.cutoffs.dim()
    }

    /// `-(∂H/∂G)` coefficient structure, i.e. the Hamiltonian for unit `G`.
    fn add_control_terms(
        &self,
        h: &mut SparseOperator,
        control: Control,
        amplitude: f64,
        phase: Option<f64>,
    ) {
        let (same, other) = match control {
            Control::Plus => (&self.pair_p, &self.pair_q),
            Control::Minus => (&self.pair_q, &self.pair_p),
        };
        let g = C64::new(-amplitude, 0.0);
        if amplitude != 0.0 {
            h.push_scaled(g, same);
            h.push_scaled(g, &same.adjoint());
            if let Some(phi) = phase {
                // G+ pairs with e^{-iφ} Q, G- with e^{+iφ} P
                let e = match control {
                    Control::Plus => C64::from_polar(1.0, -phi),
                    Control::Minus => C64::from_polar(1.0, phi),
                };
                h.push_scaled(g * e, other);
                h.push_scaled(g * e.conj(), &other.adjoint());
            }
        }
    }

    /// Sparse Hamiltonian at amplitudes `(gp, gm)` and time `t`.
    pub fn hamiltonian(&self, gp: f64, gm: f64, t: f64, mode: Mode) -> SparseOperator {
        let phase = (mode == Mode::Full).then(|| counter_phase(self.params.omega_mech, t));
        let mut h = SparseOperator::empty(self.dim());
        self.add_control_terms(&mut h, Control::Plus, gp, phase);
        self.add_control_terms(&mut h, Control::Minus, gm, phase);
        h
    }

    pub fn hamiltonian_derivative(&self, control: Control, t: f64, mode: Mode) -> SparseOperator {
        let phase = (mode == Mode::Full).then(|| counter_phase(self.params.omega_mech, t));
        let mut h = SparseOperator::empty(self.dim());
        self.add_control_terms(&mut h, control, 1.0, phase);
        h
    }

    /// Adds `Σ h_i ξ_i` with `h = -J f` so that the quadrature means obey
    /// `dξ/dt ⊃ f`.
    pub fn add_force(&self, h: &mut SparseOperator, force: [f64; 4]) {
        let coeffs = [-force[1], force[0], -force[3], force[2]];
        for (c, q) in coeffs.iter().zip(&self.quadratures) {
            h.push_scaled(C64::new(*c, 0.0), q);
        }
    }

    /// Generator for one piecewise-constant step.
    pub fn generator(&self, hamiltonian: SparseOperator) -> Generator<'_> {
        Generator {
            model: self,
            hamiltonian,
        }
    }

    pub fn quadrature(&self, index: usize) -> &SparseOperator {
        &self.quadratures[index]
    }

    /// `(∂𝔏/∂G) ρ = -i[∂H/∂G, ρ]` via the sparse path.
    pub fn deriv_apply(&self, dh: &SparseOperator, rho: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim(), self.dim());
        dh.left_mul_acc(-I, rho, &mut out);
        dh.right_mul_acc(I, rho, &mut out);
        out
    }
}

/// Lindblad generator with a fixed Hamiltonian.
#[derive(Debug, Clone)]
pub struct Generator<'a> {
    model: &'a FockModel,
    hamiltonian: SparseOperator,
}

impl Generator<'_> {
    pub fn hamiltonian(&self) -> &SparseOperator {
        &self.hamiltonian
    }

    /// Upper bound on the generator norm, used to size integrator substeps.
    pub fn norm_bound(&self) -> f64 {
        2.0 * self.hamiltonian.norm_bound() + 2.0 * self.model.jump_norm_sq
    }

    fn decay_term(&self, x: &CMatrix, out: &mut CMatrix) {
        let n = self.model.dim();
        let k = &self.model.decay_diag;
        let src = x.as_slice();
        let dst = out.as_mut_slice();
        for j in 0..n {
            for i in 0..n {
                dst[i + j * n] -= 0.5 * (k[i] + k[j]) * src[i + j * n];
            }
        }
    }

    /// `out = 𝔏 ρ`.
    pub fn apply_into(&self, rho: &CMatrix, out: &mut CMatrix) {
        out.fill(ZERO);
        self.hamiltonian.left_mul_acc(-I, rho, out);
        self.hamiltonian.right_mul_acc(I, rho, out);
        for l in &self.model.jumps {
            l.sandwich_acc(ONE, rho, out);
        }
        self.decay_term(rho, out);
    }

    /// `out = 𝔏† χ`, defined by `tr(A 𝔏B) = tr((𝔏†A) B)`.
    pub fn apply_adjoint_into(&self, chi: &CMatrix, out: &mut CMatrix) {
        out.fill(ZERO);
        self.hamiltonian.left_mul_acc(I, chi, out);
        self.hamiltonian.right_mul_acc(-I, chi, out);
        for l in &self.model.jumps_adj {
            l.sandwich_acc(ONE, chi, out);
        }
        self.decay_term(chi, out);
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(rho.nrows(), rho.ncols());
        self.apply_into(rho, &mut out);
        out
    }

    pub fn apply_adjoint(&self, chi: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(chi.nrows(), chi.ncols());
        self.apply_adjoint_into(chi, &mut out);
        out
    }
}

/// Convenience for tests and examples: the dense operator set at one time.
pub fn dense_generator_parts(
    params: &SystemParams,
    cutoffs: FockCutoffs,
    gp: f64,
    gm: f64,
    t: f64,
    mode: Mode,
) -> (Operator, [Operator; 3]) {
    let h = match mode {
        Mode::Rwa => hamiltonian_rwa(gp, gm, cutoffs),
        Mode::Full => hamiltonian_full(gp, gm, t, params.omega_mech, cutoffs),
    }
    .expect("Hamiltonian is Hermitian");
    (h, lindblad_ops(params, cutoffs))
}

impl DensityMatrix {
    /// Applies the dense reference Liouvillian; mainly for cross-checks.
    pub fn liouvillian(&self, h: &Operator, jumps: &[Operator]) -> Result<CMatrix> {
        liouvillian_apply(self.matrix(), h, jumps)
    }
}
