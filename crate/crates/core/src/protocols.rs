//! Analytic pulse families (constant, linear ramp, delayed blue tone), the
//! cooling-only delay trigger and the ratio line search.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{first_crossing, squeezing_db, ZERO_POINT};
use crate::error::{Error, Result};
use crate::model::{fastest_rate, Mode, PulsePair, SystemParams, TimeGrid};
use crate::moments::{evolve_moments, ForceModel, GaussianState, MomentTrajectory};

/// Relative margin above the zero-point variance that counts as "cooled".
///
/// Cooling-only evolution approaches `½` asymptotically (the resonator bath
/// keeps a tiny excess), so an exact `ΔX1² ≤ ½` test is never met.
pub const COOLED_MARGIN: f64 = 0.1;

/// How the blue-tone switch-on time of the delayed protocol is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delay {
    /// First time cooling alone brings `ΔX1²` to the zero-point level.
    Auto,
    Seconds(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProtocolKind {
    Constant,
    /// `G+` ramps linearly from `g_plus_initial` to `ratio_final · G-`.
    Linear {
        g_plus_initial: f64,
    },
    /// `G+ = 0` until the delay, then `ratio_final · G-`.
    Delayed {
        delay: Delay,
    },
    /// Pulse CSV with columns `t_s, g_plus_rad_s, g_minus_rad_s`.
    File {
        path: PathBuf,
    },
}

impl ProtocolKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProtocolKind::Constant => "constant",
            ProtocolKind::Linear { .. } => "linear",
            ProtocolKind::Delayed { .. } => "delayed",
            ProtocolKind::File { .. } => "file",
        }
    }
}

/// Pulse family with its amplitudes (rad/s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    #[serde(flatten)]
    pub kind: ProtocolKind,
    pub g_minus: f64,
    /// `G+(T) / G-(T)`.
    pub ratio_final: f64,
}

impl ProtocolSpec {
    pub fn constant(g_minus: f64, ratio: f64) -> Self {
        Self {
            kind: ProtocolKind::Constant,
            g_minus,
            ratio_final: ratio,
        }
    }

    pub fn linear(g_minus: f64, g_plus_initial: f64, ratio_final: f64) -> Self {
        Self {
            kind: ProtocolKind::Linear { g_plus_initial },
            g_minus,
            ratio_final,
        }
    }

    pub fn delayed(g_minus: f64, ratio: f64, delay: Delay) -> Self {
        Self {
            kind: ProtocolKind::Delayed { delay },
            g_minus,
            ratio_final: ratio,
        }
    }

    pub fn with_ratio(&self, ratio: f64) -> Self {
        Self {
            ratio_final: ratio,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if matches!(self.kind, ProtocolKind::File { .. }) {
            return Ok(());
        }
        // an undriven constant protocol is allowed as a reference run
        let floor_ok = match self.kind {
            ProtocolKind::Constant => self.g_minus >= 0.0,
            _ => self.g_minus > 0.0,
        };
        if !(self.g_minus.is_finite() && floor_ok) {
            return Err(Error::param(
                "g_minus",
                "must be positive (or zero for a constant protocol)",
            ));
        }
        if !(0.0..1.0).contains(&self.ratio_final) {
            return Err(Error::param("ratio_final", "must lie in [0, 1)"));
        }
        match self.kind {
            ProtocolKind::Linear { g_plus_initial } => {
                if !(0.0..self.g_minus).contains(&g_plus_initial) {
                    return Err(Error::param("g_plus_initial", "must lie in [0, G-)"));
                }
            }
            ProtocolKind::Delayed {
                delay: Delay::Seconds(t),
            } if !(t.is_finite() && t >= 0.0) => {
                return Err(Error::param("t_delay", "must be non-negative"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Largest amplitude the family reaches.
    pub fn max_amplitude(&self) -> f64 {
        self.g_minus
    }
}

/// Grid over `[0, t_final]` fine enough for the step rule at `max_amplitude`.
pub fn grid_for(
    t_final: f64,
    params: &SystemParams,
    max_amplitude: f64,
    mode: Mode,
) -> Result<TimeGrid> {
    TimeGrid::covering(t_final, fastest_rate(params, max_amplitude, mode))
}

/// Samples a protocol on `grid`. `Delay::Auto` is resolved with
/// [`cooling_delay_time`] in `mode`.
pub fn make_pulses(
    spec: &ProtocolSpec,
    grid: TimeGrid,
    params: &SystemParams,
    mode: Mode,
) -> Result<PulsePair> {
    spec.validate()?;
    let gm = spec.g_minus;
    let gp_final = spec.ratio_final * gm;
    match &spec.kind {
        ProtocolKind::Constant => PulsePair::constant(grid, gp_final, gm),
        ProtocolKind::Linear { g_plus_initial } => {
            let t_final = grid.t_final();
            let g0 = *g_plus_initial;
            PulsePair::from_fn(grid, |t| (g0 + (gp_final - g0) * t / t_final, gm))
        }
        ProtocolKind::Delayed { delay } => {
            let t_delay = match *delay {
                Delay::Seconds(t) => t,
                Delay::Auto => cooling_delay_time(gm, params, grid, mode)?,
            };
            if t_delay > grid.t_final() {
                return Err(Error::param("t_delay", "exceeds the protocol duration"));
            }
            // the switch lands on the first node at or after the delay
            let gp: Vec<f64> = grid
                .times()
                .map(|t| {
                    if t + 1e-9 * grid.dt() < t_delay {
                        0.0
                    } else {
                        gp_final
                    }
                })
                .collect();
            PulsePair::new(grid, gp, vec![gm; grid.n_steps() + 1])
        }
        ProtocolKind::File { path } => load_pulse_csv(path),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PulseRow {
    t_s: f64,
    g_plus_rad_s: f64,
    g_minus_rad_s: f64,
}

/// Reads a pulse CSV; samples must lie on a uniform grid starting at 0.
pub fn load_pulse_csv(path: &Path) -> Result<PulsePair> {
    let mut rdr = csv::Reader::from_path(path)?;
    let rows: Vec<PulseRow> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
    if rows.len() < 2 {
        return Err(Error::param("pulse file", "needs at least two samples"));
    }
    let n = rows.len() - 1;
    let t_final = rows[n].t_s;
    let grid = TimeGrid::new(t_final, n)?;
    for (k, r) in rows.iter().enumerate() {
        if (r.t_s - grid.time(k)).abs() > 1e-9 * grid.dt() {
            return Err(Error::param(
                "pulse file",
                format!("non-uniform time at row {k}"),
            ));
        }
    }
    let (gp, gm) = rows
        .iter()
        .map(|r| (r.g_plus_rad_s, r.g_minus_rad_s))
        .unzip();
    PulsePair::new(grid, gp, gm)
}

pub fn write_pulse_csv(pulses: &PulsePair, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (k, t) in pulses.grid().times().enumerate() {
        let (gp, gm) = (pulses.g_plus()[k], pulses.g_minus()[k]);
        w.serialize(PulseRow {
            t_s: t,
            g_plus_rad_s: gp,
            g_minus_rad_s: gm,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Moment trajectory from the thermal initial state.
pub fn simulate_moments(
    pulses: &PulsePair,
    params: &SystemParams,
    mode: Mode,
) -> Result<MomentTrajectory> {
    evolve_moments(
        &GaussianState::thermal(params.n_th),
        pulses,
        params,
        mode,
        &ForceModel::None,
    )
}

/// First time cooling alone (`G+ ≡ 0`) brings `ΔX1²` within
/// [`COOLED_MARGIN`] of the zero-point variance, searched over `grid`.
pub fn cooling_delay_time(
    g_minus: f64,
    params: &SystemParams,
    grid: TimeGrid,
    mode: Mode,
) -> Result<f64> {
    if !(g_minus > 0.0) {
        return Err(Error::param("g_minus", "must be positive"));
    }
    let pulses = PulsePair::constant(grid, 0.0, g_minus)?;
    let traj = simulate_moments(&pulses, params, mode)?;
    let threshold = ZERO_POINT * (1.0 + COOLED_MARGIN);
    first_crossing(&traj.var_x1(), threshold)
        .map(|k| grid.time(k))
        .ok_or(Error::NotReached)
}

/// What the line search maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Largest squeezing at any time in `[0, T]`.
    MaxOverTime,
    Terminal,
}

/// Squeezing in dB achieved by a trajectory under `objective`.
pub fn score(traj: &MomentTrajectory, objective: Objective) -> Result<f64> {
    let var = match objective {
        Objective::MaxOverTime => traj.min_var_x1(),
        Objective::Terminal => traj.last().var_x1(),
    };
    squeezing_db(var)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearchResult {
    pub ratio: f64,
    pub db: f64,
}

/// Ratio tolerance of the golden-section refinement.
pub const RATIO_TOL: f64 = 0.005;

/// Default coarse grid of candidate ratios.
pub fn default_ratio_grid() -> Vec<f64> {
    (0..20).map(|i| 0.05 * i as f64).collect()
}

/// Finds the final ratio maximizing squeezing for `spec` on a duration
/// `t_final`: coarse scan over `ratios`, then golden-section refinement
/// inside the bracket around the best candidate.
pub fn line_search_ratio(
    spec: &ProtocolSpec,
    t_final: f64,
    params: &SystemParams,
    mode: Mode,
    objective: Objective,
    ratios: &[f64],
) -> Result<LineSearchResult> {
    if ratios.is_empty() || ratios.iter().any(|r| !(0.0..1.0).contains(r)) {
        return Err(Error::param(
            "ratios",
            "must be a non-empty subset of [0, 1)",
        ));
    }
    let grid = grid_for(t_final, params, spec.max_amplitude(), mode)?;
    // resolve an automatic delay once; it does not depend on the ratio
    let spec = match spec.kind {
        ProtocolKind::Delayed { delay: Delay::Auto } => ProtocolSpec::delayed(
            spec.g_minus,
            spec.ratio_final,
            Delay::Seconds(cooling_delay_time(spec.g_minus, params, grid, mode)?),
        ),
        _ => spec.clone(),
    };
    let eval = |r: f64| -> Result<f64> {
        let pulses = make_pulses(&spec.with_ratio(r), grid, params, mode)?;
        score(&simulate_moments(&pulses, params, mode)?, objective)
    };
    let mut sorted = ratios.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let scores: Vec<f64> = sorted.par_iter().map(|&r| eval(r)).collect::<Result<_>>()?;
    let best = scores
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty");
    let lo = if best == 0 {
        sorted[0]
    } else {
        sorted[best - 1]
    };
    let hi = if best + 1 == sorted.len() {
        sorted[best].max((sorted[best] + RATIO_TOL).min(0.999))
    } else {
        sorted[best + 1]
    };
    let (mut ratio, mut db) = golden_max(&eval, lo, hi)?;
    if scores[best] > db {
        ratio = sorted[best];
        db = scores[best];
    }
    Ok(LineSearchResult { ratio, db })
}

fn golden_max(
    f: &(dyn Fn(f64) -> Result<f64> + Sync),
    mut a: f64,
    mut b: f64,
) -> Result<(f64, f64)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > RATIO_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc >= fd { (c, fc) } else { (d, fd) })
}
