//! Run configuration in TOML. Frequencies are entered in Hz under keys
//! ending in `_hz` and converted to rad/s at parse time; durations are given
//! either in seconds (`T_s`) or in cavity periods `2π/κ` (`T_kappa_units`).
//!
//! ```toml
//! [params]
//! kappa_hz = 450e3
//! n_th = 2
//!
//! [grid]
//! T_kappa_units = 42
//!
//! [run]
//! engine = "moments"
//! mode = "full"
//!
//! [protocol]
//! kind = "constant"
//! g_minus_hz = 70e3
//! ratio_final = 0.86
//! ```

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fock::FockCutoffs;
use crate::krotov::KrotovConfig;
use crate::model::{Mode, SystemParams, TimeGrid};
use crate::protocols::{grid_for, Delay, Objective, ProtocolKind, ProtocolSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Fock,
    Moments,
}

impl Engine {
    pub fn as_str(&self) -> &'static str {
        match self {
            Engine::Fock => "fock",
            Engine::Moments => "moments",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawParams {
    pub nu_cav_hz: f64,
    pub nu_mech_hz: f64,
    pub g0_hz: f64,
    pub kappa_hz: f64,
    pub gamma_hz: f64,
    pub n_th: f64,
}

impl Default for RawParams {
    fn default() -> Self {
        Self {
            nu_cav_hz: 6.23e9,
            nu_mech_hz: 3.6e6,
            g0_hz: 36.0,
            kappa_hz: 450e3,
            gamma_hz: 3.0,
            n_th: 2.0,
        }
    }
}

impl RawParams {
    pub fn to_params(&self) -> Result<SystemParams> {
        SystemParams::from_hz(
            self.nu_cav_hz,
            self.nu_mech_hz,
            self.g0_hz,
            self.kappa_hz,
            self.gamma_hz,
            self.n_th,
        )
        .map_err(|e| match e {
            Error::InvalidParameter { name, reason } => {
                Error::config(&format!("params.{name}"), reason)
            }
            other => other,
        })
    }

    pub fn from_params(p: &SystemParams) -> Self {
        Self {
            nu_cav_hz: p.omega_cav / TAU,
            nu_mech_hz: p.omega_mech / TAU,
            g0_hz: p.g0 / TAU,
            kappa_hz: p.kappa / TAU,
            gamma_hz: p.gamma / TAU,
            n_th: p.n_th,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCutoffs {
    pub n_cav: usize,
    pub n_mech: usize,
}

impl Default for RawCutoffs {
    fn default() -> Self {
        Self {
            n_cav: 6,
            n_mech: 20,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawGrid {
    #[serde(rename = "T_s")]
    pub t_s: Option<f64>,
    #[serde(rename = "T_kappa_units")]
    pub t_kappa_units: Option<f64>,
    /// Step count; the step-rule minimum when absent.
    pub n_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawRun {
    pub engine: Engine,
    pub mode: Mode,
    /// Store every n-th node of Fock trajectories.
    pub stored_every: usize,
}

impl Default for RawRun {
    fn default() -> Self {
        Self {
            engine: Engine::Moments,
            mode: Mode::Full,
            stored_every: 1,
        }
    }
}

/// Protocol table; `t_delay_s` absent means the automatic cooling trigger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawProtocol {
    pub label: Option<String>,
    pub kind: String,
    pub g_minus_hz: Option<f64>,
    pub ratio_final: Option<f64>,
    pub g_plus_initial_hz: Option<f64>,
    pub t_delay_s: Option<f64>,
    pub pulse_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawKrotov {
    pub lambda_plus: Option<f64>,
    pub lambda_minus: Option<f64>,
    pub max_iters: usize,
    pub stop_delta_j: f64,
    pub amplitude_cap_hz: Option<f64>,
    pub mode: Mode,
    pub initial_step_fraction: f64,
    pub max_retries: usize,
    pub snapshot_every: Option<usize>,
}

impl Default for RawKrotov {
    fn default() -> Self {
        let k = KrotovConfig::default();
        Self {
            lambda_plus: k.lambda_plus,
            lambda_minus: k.lambda_minus,
            max_iters: k.max_iters,
            stop_delta_j: k.stop_delta_j,
            amplitude_cap_hz: None,
            mode: k.mode,
            initial_step_fraction: k.initial_step_fraction,
            max_retries: k.max_retries,
            snapshot_every: k.snapshot_every,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepPolicy {
    /// Best of the line-searched analytic families.
    LineSearch,
    /// Krotov from a constant guess (Fock engine).
    Krotov,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawSweep {
    #[serde(rename = "T_s")]
    pub t_s: Option<Vec<f64>>,
    #[serde(rename = "T_kappa_units")]
    pub t_kappa_units: Option<Vec<f64>>,
    /// Log-spaced range `[start_s, stop_s]` with `points` entries.
    pub start_s: f64,
    pub stop_s: f64,
    pub points: usize,
    pub policy: SweepPolicy,
    pub families: Vec<String>,
    pub g_minus_hz: f64,
    pub g_plus_initial_hz: f64,
    pub amplitude_cap_hz: Option<f64>,
    pub threshold_db: f64,
    pub objective: Objective,
}

impl Default for RawSweep {
    fn default() -> Self {
        Self {
            t_s: None,
            t_kappa_units: None,
            start_s: 0.1e-6,
            stop_s: 150e-6,
            points: 12,
            policy: SweepPolicy::LineSearch,
            families: vec!["constant".into(), "delayed".into(), "linear".into()],
            g_minus_hz: 70e3,
            g_plus_initial_hz: 25e3,
            amplitude_cap_hz: Some(200e3),
            threshold_db: 3.0,
            objective: Objective::MaxOverTime,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawKappaStudy {
    pub reductions: Vec<f64>,
    pub n_th: f64,
}

impl Default for RawKappaStudy {
    fn default() -> Self {
        Self {
            reductions: vec![1.0, 10.0, 100.0],
            n_th: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawOutput {
    /// Write every n-th trajectory row (0 or 1 writes all).
    pub every: usize,
}

/// File-level layout; every table is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawConfig {
    pub params: RawParams,
    pub cutoffs: RawCutoffs,
    pub grid: RawGrid,
    pub run: RawRun,
    pub protocol: Option<RawProtocol>,
    pub protocols: Vec<RawProtocol>,
    pub krotov: RawKrotov,
    pub sweep: RawSweep,
    pub kappa_study: RawKappaStudy,
    pub output: RawOutput,
}

/// Protocol with a display label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledProtocol {
    pub label: String,
    pub spec: ProtocolSpec,
}

/// Validated configuration in internal units.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub hash: String,
    pub params: SystemParams,
    pub cutoffs: FockCutoffs,
    pub t_final: Option<f64>,
    pub n_steps: Option<usize>,
    pub engine: Engine,
    pub mode: Mode,
    pub stored_every: usize,
    pub output_every: usize,
    pub protocol: Option<LabeledProtocol>,
    pub protocols: Vec<LabeledProtocol>,
    pub krotov: KrotovConfig,
    pub sweep: SweepConfig,
    pub kappa_reductions: Vec<f64>,
    pub kappa_study_n_th: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub durations: Vec<f64>,
    pub policy: SweepPolicy,
    pub families: Vec<String>,
    pub g_minus: f64,
    pub g_plus_initial: f64,
    pub amplitude_cap: Option<f64>,
    pub threshold_db: f64,
    pub objective: Objective,
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::config(
            field,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

fn resolve_protocol(
    raw: &RawProtocol,
    field: &str,
    base: Option<&Path>,
) -> Result<LabeledProtocol> {
    let need = |name: &str, v: Option<f64>| {
        v.ok_or_else(|| Error::config(&format!("{field}.{name}"), "missing"))
    };
    let kind = match raw.kind.as_str() {
        "constant" => ProtocolKind::Constant,
        "linear" => ProtocolKind::Linear {
            g_plus_initial: TAU * need("g_plus_initial_hz", raw.g_plus_initial_hz)?,
        },
        "delayed" => ProtocolKind::Delayed {
            delay: raw.t_delay_s.map_or(Delay::Auto, Delay::Seconds),
        },
        "file" => {
            let path = raw
                .pulse_file
                .clone()
                .ok_or_else(|| Error::config(&format!("{field}.pulse_file"), "missing"))?;
            let path = match base {
                Some(b) if path.is_relative() => b.join(path),
                _ => path,
            };
            ProtocolKind::File { path }
        }
        other => {
            return Err(Error::config(
                &format!("{field}.kind"),
                format!("unknown kind `{other}` (constant|linear|delayed|file)"),
            ))
        }
    };
    let is_file = matches!(kind, ProtocolKind::File { .. });
    let spec = ProtocolSpec {
        g_minus: if is_file {
            0.0
        } else {
            TAU * need("g_minus_hz", raw.g_minus_hz)?
        },
        ratio_final: if is_file {
            0.0
        } else {
            need("ratio_final", raw.ratio_final)?
        },
        kind,
    };
    spec.validate().map_err(|e| match e {
        Error::InvalidParameter { name, reason } => {
            Error::config(&format!("{field}.{name}"), reason)
        }
        other => other,
    })?;
    let label = raw
        .label
        .clone()
        .unwrap_or_else(|| spec.kind.name().to_string());
    Ok(LabeledProtocol { label, spec })
}

fn log_space(start: f64, stop: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![start];
    }
    let (a, b) = (start.ln(), stop.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

impl RunConfig {
    pub fn from_raw(raw: RawConfig, base: Option<&Path>) -> Result<Self> {
        let params = raw.params.to_params()?;
        let cutoffs = FockCutoffs::new(raw.cutoffs.n_cav, raw.cutoffs.n_mech)
            .map_err(|e| Error::config("cutoffs", e.to_string()))?;
        let t_final = match (raw.grid.t_s, raw.grid.t_kappa_units) {
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "grid",
                    "give either T_s or T_kappa_units, not both",
                ))
            }
            (Some(t), None) => Some(positive("grid.T_s", t)?),
            (None, Some(u)) => Some(positive("grid.T_kappa_units", u)? * params.cavity_period()),
            (None, None) => None,
        };
        if raw.grid.n_steps == Some(0) {
            return Err(Error::config("grid.n_steps", "must be positive"));
        }
        let protocol = raw
            .protocol
            .as_ref()
            .map(|p| resolve_protocol(p, "protocol", base))
            .transpose()?;
        let protocols = raw
            .protocols
            .iter()
            .enumerate()
            .map(|(i, p)| resolve_protocol(p, &format!("protocols[{i}]"), base))
            .collect::<Result<Vec<_>>>()?;

        let rk = &raw.krotov;
        let krotov = KrotovConfig {
            lambda_plus: rk.lambda_plus,
            lambda_minus: rk.lambda_minus,
            max_iters: rk.max_iters,
            stop_delta_j: rk.stop_delta_j,
            amplitude_cap: rk.amplitude_cap_hz.map(|c| TAU * c),
            mode: rk.mode,
            initial_step_fraction: rk.initial_step_fraction,
            max_retries: rk.max_retries,
            snapshot_every: rk.snapshot_every,
            reevaluate: true,
        };
        krotov.validate().map_err(|e| match e {
            Error::InvalidParameter { name, reason } => {
                Error::config(&format!("krotov.{name}"), reason)
            }
            other => other,
        })?;

        let rs = &raw.sweep;
        let durations = match (&rs.t_s, &rs.t_kappa_units) {
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "sweep",
                    "give either T_s or T_kappa_units, not both",
                ))
            }
            (Some(ts), None) => ts.clone(),
            (None, Some(us)) => us.iter().map(|u| u * params.cavity_period()).collect(),
            (None, None) => {
                positive("sweep.start_s", rs.start_s)?;
                positive("sweep.stop_s", rs.stop_s)?;
                if rs.points == 0 {
                    return Err(Error::config("sweep.points", "must be positive"));
                }
                log_space(rs.start_s, rs.stop_s, rs.points)
            }
        };
        if durations.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::config("sweep.T", "durations must be positive"));
        }
        if durations.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config(
                "sweep.T",
                "durations must be strictly increasing",
            ));
        }
        for f in &rs.families {
            if !["constant", "delayed", "linear"].contains(&f.as_str()) {
                return Err(Error::config(
                    "sweep.families",
                    format!("unknown family `{f}`"),
                ));
            }
        }
        if rs.families.is_empty() {
            return Err(Error::config("sweep.families", "must not be empty"));
        }
        let g_minus = TAU * positive("sweep.g_minus_hz", rs.g_minus_hz)?;
        let amplitude_cap = rs
            .amplitude_cap_hz
            .map(|c| positive("sweep.amplitude_cap_hz", c).map(|c| TAU * c))
            .transpose()?;
        if let Some(cap) = amplitude_cap {
            if g_minus > cap {
                return Err(Error::config(
                    "sweep.g_minus_hz",
                    "exceeds sweep.amplitude_cap_hz",
                ));
            }
        }
        let sweep = SweepConfig {
            durations,
            policy: rs.policy,
            families: rs.families.clone(),
            g_minus,
            g_plus_initial: TAU * rs.g_plus_initial_hz,
            amplitude_cap,
            threshold_db: rs.threshold_db,
            objective: rs.objective,
        };
        if raw.kappa_study.reductions.iter().any(|r| !(*r >= 1.0)) {
            return Err(Error::config(
                "kappa_study.reductions",
                "entries must be >= 1",
            ));
        }
        let hash = config_hash(&raw);
        Ok(Self {
            hash,
            params,
            cutoffs,
            t_final,
            n_steps: raw.grid.n_steps,
            engine: raw.run.engine,
            mode: raw.run.mode,
            stored_every: raw.run.stored_every.max(1),
            output_every: raw.output.every.max(1),
            protocol,
            protocols,
            krotov,
            sweep,
            kappa_reductions: raw.kappa_study.reductions.clone(),
            kappa_study_n_th: raw.kappa_study.n_th,
            raw,
        })
    }

    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| Error::config("toml", e.to_string()))?;
        Self::from_raw(raw, base)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent())
    }

    pub fn require_t_final(&self) -> Result<f64> {
        self.t_final
            .ok_or_else(|| Error::config("grid", "a duration (T_s or T_kappa_units) is required"))
    }

    /// Grid over the configured duration: the explicit step count if given,
    /// otherwise the step-rule minimum for `max_amplitude` in `mode`.
    pub fn grid(&self, max_amplitude: f64, mode: Mode) -> Result<TimeGrid> {
        let t = self.require_t_final()?;
        match self.n_steps {
            Some(n) => TimeGrid::new(t, n),
            None => grid_for(t, &self.params, max_amplitude, mode),
        }
    }
}

/// SHA-256 of the canonical JSON form of the parsed configuration.
pub fn config_hash(raw: &RawConfig) -> String {
    let json = serde_json::to_vec(raw).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}
