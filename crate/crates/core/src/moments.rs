//! Exact Gaussian moment dynamics for the quadratures `ξ = (X1, X2, Y1, Y2)`.
//!
//! The linearized model is quadratic with linear jump operators, so first and
//! second moments close:
//!
//! ```text
//! dm/dt = A(t) m + f(t)
//! dV/dt = A(t) V + V A(t)ᵀ + D
//! ```
//!
//! with `V_ij = ½⟨{Δξ_i, Δξ_j}⟩`. A linear force `f` only enters the means,
//! which is why drive and radiation-force terms cannot change the variances.

use nalgebra::{Matrix2, Matrix4, SMatrix, SVector, Vector4};

use crate::analysis::Observables;
use crate::error::{Error, Result};
use crate::fock::C64;
use crate::model::{counter_phase, Mode, PulsePair, SystemParams, TimeGrid};

/// Symplectic form for `[X1, X2] = [Y1, Y2] = i`.
pub fn symplectic_form() -> Matrix4<f64> {
    Matrix4::new(
        0.0, 1.0, 0.0, 0.0, //
        -1.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, 1.0, //
        0.0, 0.0, -1.0, 0.0,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianState {
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
}

impl GaussianState {
    /// Mechanical thermal state with the cavity in vacuum.
    pub fn thermal(n_th: f64) -> Self {
        Self {
            mean: Vector4::zeros(),
            cov: Matrix4::from_diagonal(&Vector4::new(n_th + 0.5, n_th + 0.5, 0.5, 0.5)),
        }
    }

    pub fn new(mean: Vector4<f64>, cov: Matrix4<f64>) -> Result<Self> {
        let s = Self { mean, cov };
        s.validate()?;
        Ok(s)
    }

    /// Symmetry, non-negative diagonal and `V + (i/2)J ⪰ 0`.
    pub fn validate(&self) -> Result<()> {
        if (self.cov - self.cov.transpose()).amax() > 1e-12 * self.cov.amax().max(1.0) {
            return Err(Error::InvalidState("covariance not symmetric".into()));
        }
        if self.cov.diagonal().iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidState(
                "negative variance on the diagonal".into(),
            ));
        }
        let min = self.uncertainty_min_eigenvalue();
        if min < -1e-9 {
            return Err(Error::InvalidState(format!(
                "violates the uncertainty relation (min eigenvalue {min:e})"
            )));
        }
        Ok(())
    }

    /// Smallest eigenvalue of the Hermitian matrix `V + (i/2)J`.
    pub fn uncertainty_min_eigenvalue(&self) -> f64 {
        let j = symplectic_form();
        let m: SMatrix<C64, 4, 4> =
            SMatrix::from_fn(|r, c| C64::new(self.cov[(r, c)], 0.5 * j[(r, c)]));
        m.symmetric_eigenvalues().min()
    }

    pub fn var_x1(&self) -> f64 {
        self.cov[(0, 0)]
    }

    pub fn var_x2(&self) -> f64 {
        self.cov[(1, 1)]
    }

    fn block(&self, offset: usize) -> Matrix2<f64> {
        self.cov.fixed_view::<2, 2>(offset, offset).into_owned()
    }

    /// `1 / (2 √det V_mech)`.
    pub fn purity_mech(&self) -> f64 {
        0.5 / self.block(0).determinant().sqrt()
    }

    pub fn purity_cav(&self) -> f64 {
        0.5 / self.block(2).determinant().sqrt()
    }

    /// `1 / (4 √det V)` for the two-mode state.
    pub fn purity_total(&self) -> f64 {
        0.25 / self.cov.determinant().sqrt()
    }

    pub fn observables(&self) -> Observables {
        Observables {
            var_x1: self.var_x1(),
            var_x2: self.var_x2(),
            purity_mech: self.purity_mech(),
            purity_cav: self.purity_cav(),
            purity_total: self.purity_total(),
        }
    }
}

/// `A`, `D` and `f` of the moment equations at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianGenerator {
    pub drift: Matrix4<f64>,
    pub diffusion: Matrix4<f64>,
    pub force: Vector4<f64>,
}

/// Optional linear force on the quadrature means.
#[derive(Clone, Default)]
pub enum ForceModel {
    #[default]
    None,
    /// Radiation-pressure and pulse-derivative terms of the displaced frame,
    /// with the intracavity photon number held at a constant value.
    Displacement { photon_number: f64 },
    /// Arbitrary force `f(t)` in 1/s.
    Custom(crate::model::ForceFn),
}

impl std::fmt::Debug for ForceModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ForceModel::None => write!(f, "None"),
            ForceModel::Displacement { photon_number } => {
                write!(f, "Displacement {{ photon_number: {photon_number} }}")
            }
            ForceModel::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl ForceModel {
    pub fn is_none(&self) -> bool {
        matches!(self, ForceModel::None)
    }
}

/// Displaced-frame force `(-𝒢 sin Ωt, 𝒢 cos Ωt, ᾱ cos Ωt, Δα sin Ωt)` where
/// `𝒢 = √2/g0 (G+² + G-² + 2G+G- cos 2Ωt) + √2 g0 ⟨d†d⟩`,
/// `ᾱ = -√2/g0 d(G- + G+)/dt` and `Δα = -√2/g0 d(G- - G+)/dt`.
pub fn displacement_force(
    gp: f64,
    gm: f64,
    dgp_dt: f64,
    dgm_dt: f64,
    t: f64,
    params: &SystemParams,
    photon_number: f64,
) -> Vector4<f64> {
    let s2 = std::f64::consts::SQRT_2;
    let g0 = params.g0;
    let w = params.omega_mech;
    let radiation = s2 / g0 * (gp * gp + gm * gm + 2.0 * gp * gm * (2.0 * w * t).cos())
        + s2 * g0 * photon_number;
    let alpha_bar = -s2 / g0 * (dgm_dt + dgp_dt);
    let delta_alpha = -s2 / g0 * (dgm_dt - dgp_dt);
    let (s, c) = (w * t).sin_cos();
    Vector4::new(
        -radiation * s,
        radiation * c,
        alpha_bar * c,
        delta_alpha * s,
    )
}

/// Drift, diffusion and (optional) force at time `t`.
///
/// RWA drift, rows/columns `(X1, X2, Y1, Y2)`, with `Ḡ = G- + G+` and
/// `ΔG = G- - G+`:
///
/// ```text
/// [ -Γ/2    0     0    -ΔG ]
/// [   0   -Γ/2    Ḡ     0  ]
/// [   0   -ΔG   -κ/2    0  ]
/// [   Ḡ     0     0   -κ/2 ]
/// ```
///
/// Full mode adds the `sin 2Ωt` / `cos 2Ωt` couplings of the counterrotating
/// terms.
pub fn build_generator(
    gp: f64,
    gm: f64,
    t: f64,
    params: &SystemParams,
    mode: Mode,
    force: Vector4<f64>,
) -> GaussianGenerator {
    let sum = gm + gp;
    let diff = gm - gp;
    let (hg, hk) = (params.gamma / 2.0, params.kappa / 2.0);
    #[rustfmt::skip]
    let mut drift = Matrix4::new(
        -hg, 0.0, 0.0, -diff,
        0.0, -hg, sum, 0.0,
        0.0, -diff, -hk, 0.0,
        sum, 0.0, 0.0, -hk,
    );
    if mode == Mode::Full {
        let (s, c) = counter_phase(params.omega_mech, t).sin_cos();
        #[rustfmt::skip]
        let rot = Matrix4::new(
            0.0, 0.0, -s * sum, c * diff,
            0.0, 0.0, c * sum, s * diff,
            -s * diff, c * diff, 0.0, 0.0,
            c * sum, s * sum, 0.0, 0.0,
        );
        drift += rot;
    }
    let dm = params.gamma * (params.n_th + 0.5);
    let diffusion = Matrix4::from_diagonal(&Vector4::new(dm, dm, hk, hk));
    GaussianGenerator {
        drift,
        diffusion,
        force,
    }
}

/// Gaussian states at every grid node.
#[derive(Debug, Clone)]
pub struct MomentTrajectory {
    grid: TimeGrid,
    states: Vec<GaussianState>,
}

impl MomentTrajectory {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn states(&self) -> &[GaussianState] {
        &self.states
    }

    pub fn last(&self) -> &GaussianState {
        self.states.last().expect("never empty")
    }

    pub fn var_x1(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.var_x1()).collect()
    }

    pub fn min_var_x1(&self) -> f64 {
        self.states
            .iter()
            .map(|s| s.var_x1())
            .fold(f64::INFINITY, f64::min)
    }
}

fn force_at(
    force: &ForceModel,
    pulses: &PulsePair,
    k: usize,
    t: f64,
    params: &SystemParams,
) -> Vector4<f64> {
    match force {
        ForceModel::None => Vector4::zeros(),
        ForceModel::Displacement { photon_number } => {
            let (gp, gm) = pulses.step(k);
            let (dp, dm) = pulses.midpoint_slope(k);
            displacement_force(gp, gm, dp, dm, t, params, *photon_number)
        }
        ForceModel::Custom(f) => Vector4::from(f(t)),
    }
}

/// Integrates the moment equations with one RK4 step per control sample
/// (generator frozen at the step midpoint).
pub fn evolve_moments(
    gs0: &GaussianState,
    pulses: &PulsePair,
    params: &SystemParams,
    mode: Mode,
    force: &ForceModel,
) -> Result<MomentTrajectory> {
    gs0.validate()?;
    pulses.check_step_rule(params, mode)?;
    let grid = *pulses.grid();
    let dt = grid.dt();
    let mut states = Vec::with_capacity(grid.n_steps() + 1);
    let mut state = *gs0;
    states.push(state);
    for k in 0..grid.n_steps() {
        let t_mid = grid.midpoint(k);
        let (gp, gm) = pulses.step(k);
        let f = force_at(force, pulses, k, t_mid, params);
        let gen = build_generator(gp, gm, t_mid, params, mode, f);
        state = rk4_moments(&gen, &state, dt);
        if !state.cov.iter().all(|x| x.is_finite()) {
            return Err(Error::Integration {
                time: grid.time(k + 1),
                reason: "non-finite covariance".into(),
            });
        }
        states.push(state);
    }
    Ok(MomentTrajectory { grid, states })
}

fn rk4_moments(gen: &GaussianGenerator, s: &GaussianState, dt: f64) -> GaussianState {
    let a = gen.drift;
    let at = a.transpose();
    let dcov = |v: &Matrix4<f64>| a * v + v * at + gen.diffusion;
    let dmean = |m: &Vector4<f64>| a * m + gen.force;

    let v = s.cov;
    let k1 = dcov(&v);
    let k2 = dcov(&(v + k1 * (0.5 * dt)));
    let k3 = dcov(&(v + k2 * (0.5 * dt)));
    let k4 = dcov(&(v + k3 * dt));
    let mut cov = v + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    cov = (cov + cov.transpose()) * 0.5;

    let m = s.mean;
    let l1 = dmean(&m);
    let l2 = dmean(&(m + l1 * (0.5 * dt)));
    let l3 = dmean(&(m + l2 * (0.5 * dt)));
    let l4 = dmean(&(m + l3 * dt));
    let mean = m + (l1 + l2 * 2.0 + l3 * 2.0 + l4) * (dt / 6.0);
    GaussianState { mean, cov }
}

/// Largest real part of the eigenvalues of `a`.
pub fn spectral_abscissa(a: &Matrix4<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Solves `A V + V Aᵀ + D = 0` by Kronecker linearization.
pub fn solve_lyapunov(a: &Matrix4<f64>, d: &Matrix4<f64>) -> Result<Matrix4<f64>> {
    let abscissa = spectral_abscissa(a);
    if abscissa >= 0.0 {
        return Err(Error::NoSteadyState { max_real: abscissa });
    }
    let id = Matrix4::<f64>::identity();
    // column-major vec: vec(AV) = (I⊗A) vec V, vec(VAᵀ) = (A⊗I) vec V
    let lhs: SMatrix<f64, 16, 16> = id.kronecker(a) + a.kronecker(&id);
    let rhs: SVector<f64, 16> = SVector::from_column_slice((-d).as_slice());
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or(Error::NoSteadyState { max_real: abscissa })?;
    let v = Matrix4::from_column_slice(sol.as_slice());
    Ok((v + v.transpose()) * 0.5)
}

/// Steady state under constant RWA drives; requires `G- > G+`.
pub fn steady_state(gp: f64, gm: f64, params: &SystemParams) -> Result<GaussianState> {
    if !(gm > gp) && !(gp == 0.0 && gm == 0.0) {
        return Err(Error::SqueezeUndefined {
            g_plus: gp,
            g_minus: gm,
        });
    }
    let gen = build_generator(gp, gm, 0.0, params, Mode::Rwa, Vector4::zeros());
    let cov = solve_lyapunov(&gen.drift, &gen.diffusion)?;
    Ok(GaussianState {
        mean: Vector4::zeros(),
        cov,
    })
}
