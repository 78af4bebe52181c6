//! Batch commands behind the CLI: each reads a [`RunConfig`], writes tidy CSV
//! and a versioned summary JSON into an output directory, and returns the
//! summary.
//!
//! Trajectory CSV columns: `t_s, g_plus_rad_s, g_minus_rad_s, var_x1,
//! var_x2, db, purity_mech, purity_cav, purity_total, engine, mode,
//! protocol`. Outputs depend only on the configuration; wall-clock times go
//! to a separate `run.log`.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{squeezing_db, FockObserver, Observables};
use crate::config::{Engine, LabeledProtocol, RawConfig, RunConfig, SweepPolicy};
use crate::error::{Error, Result};
use crate::fock::initial_state;
use crate::krotov::{evaluate, optimize, Evaluation, IterationRecord};
use crate::model::{FockModel, Mode, PulsePair, SystemParams};
use crate::moments::steady_state;
use crate::propagator::{propagate_forward_with, PropagationOptions};
use crate::protocols::{
    default_ratio_grid, grid_for, line_search_ratio, make_pulses, simulate_moments,
    write_pulse_csv, Delay, LineSearchResult, ProtocolKind, ProtocolSpec,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Observables along one run.
#[derive(Debug, Clone)]
pub struct RunTrajectory {
    pub label: String,
    pub engine: Engine,
    pub mode: Mode,
    pub times: Vec<f64>,
    pub g_plus: Vec<f64>,
    pub g_minus: Vec<f64>,
    pub observables: Vec<Observables>,
}

impl RunTrajectory {
    pub fn var_x1(&self) -> Vec<f64> {
        self.observables.iter().map(|o| o.var_x1).collect()
    }

    /// Index and value of the smallest `ΔX1²`.
    fn best(&self) -> (usize, f64) {
        crate::analysis::min_with_index(&self.var_x1())
    }

    pub fn max_db(&self) -> f64 {
        self.observables[self.best().0].db()
    }

    pub fn t_of_max(&self) -> f64 {
        self.times[self.best().0]
    }

    pub fn terminal_db(&self) -> f64 {
        self.observables.last().expect("non-empty").db()
    }

    /// First time the squeezing reaches `db`.
    pub fn time_to_db(&self, db: f64) -> Option<f64> {
        self.observables
            .iter()
            .position(|o| o.db() >= db)
            .map(|i| self.times[i])
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryRow<'a> {
    t_s: f64,
    g_plus_rad_s: f64,
    g_minus_rad_s: f64,
    var_x1: f64,
    var_x2: f64,
    db: f64,
    purity_mech: f64,
    purity_cav: f64,
    purity_total: f64,
    engine: &'a str,
    mode: &'a str,
    protocol: &'a str,
}

fn write_rows<W: Write>(w: &mut csv::Writer<W>, run: &RunTrajectory, every: usize) -> Result<()> {
    let n = run.times.len();
    for i in (0..n).filter(|i| i % every == 0 || *i == n - 1) {
        let o = &run.observables[i];
        w.serialize(TrajectoryRow {
            t_s: run.times[i],
            g_plus_rad_s: run.g_plus[i],
            g_minus_rad_s: run.g_minus[i],
            var_x1: o.var_x1,
            var_x2: o.var_x2,
            db: o.db(),
            purity_mech: o.purity_mech,
            purity_cav: o.purity_cav,
            purity_total: o.purity_total,
            engine: run.engine.as_str(),
            mode: run.mode.as_str(),
            protocol: &run.label,
        })?;
    }
    Ok(())
}

/// Writes runs to one trajectory CSV.
pub fn write_trajectory_csv(path: &Path, runs: &[RunTrajectory], every: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for run in runs {
        write_rows(&mut w, run, every.max(1))?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_log(out: &Path, command: &str, started: Instant) -> Result<()> {
    let line = format!(
        "{command}: wall time {:.3} s\n",
        started.elapsed().as_secs_f64()
    );
    fs::write(out.join("run.log"), line)?;
    Ok(())
}

/// Samples a configured protocol on the run grid.
pub fn protocol_pulses(
    cfg: &RunConfig,
    protocol: &LabeledProtocol,
    params: &SystemParams,
    mode: Mode,
) -> Result<PulsePair> {
    if let ProtocolKind::File { .. } = protocol.spec.kind {
        // the file carries its own grid
        let grid = crate::model::TimeGrid::new(1.0, 1)?;
        return make_pulses(&protocol.spec, grid, params, mode);
    }
    let grid = cfg.grid(protocol.spec.max_amplitude(), mode)?;
    make_pulses(&protocol.spec, grid, params, mode)
}

/// Runs `pulses` through the chosen engine from the thermal initial state.
pub fn run_pulses(
    cfg: &RunConfig,
    params: &SystemParams,
    pulses: &PulsePair,
    engine: Engine,
    mode: Mode,
    label: &str,
) -> Result<RunTrajectory> {
    let grid = *pulses.grid();
    let (nodes, observables): (Vec<usize>, Vec<Observables>) = match engine {
        Engine::Moments => {
            let traj = simulate_moments(pulses, params, mode)?;
            traj.states()
                .iter()
                .enumerate()
                .map(|(i, s)| (i, s.observables()))
                .unzip()
        }
        Engine::Fock => {
            let model = FockModel::new(*params, cfg.cutoffs)?;
            let rho0 = initial_state(params.n_th, cfg.cutoffs)?;
            let opts = PropagationOptions::stored_every(cfg.stored_every);
            let traj = propagate_forward_with(&model, &rho0, pulses, mode, &opts)?;
            let obs = FockObserver::new(cfg.cutoffs);
            let values = obs.observe_trajectory(&traj)?;
            ((0..traj.len()).map(|i| traj.node(i)).collect(), values)
        }
    };
    Ok(RunTrajectory {
        label: label.to_string(),
        engine,
        mode,
        times: nodes.iter().map(|&k| grid.time(k)).collect(),
        g_plus: nodes.iter().map(|&k| pulses.g_plus()[k]).collect(),
        g_minus: nodes.iter().map(|&k| pulses.g_minus()[k]).collect(),
        observables,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    pub engine: Engine,
    pub mode: Mode,
    pub protocol: String,
    pub max_db: f64,
    pub t_of_max_s: f64,
    pub terminal_db: f64,
}

fn require_protocol(cfg: &RunConfig) -> Result<&LabeledProtocol> {
    cfg.protocol
        .as_ref()
        .ok_or_else(|| Error::config("protocol", "a [protocol] table is required"))
}

/// Single run; writes `trajectory.csv` and `summary.json`.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<SimulateSummary> {
    let started = Instant::now();
    fs::create_dir_all(out)?;
    let protocol = require_protocol(cfg)?;
    let pulses = protocol_pulses(cfg, protocol, &cfg.params, cfg.mode)?;
    let run = run_pulses(
        cfg,
        &cfg.params,
        &pulses,
        cfg.engine,
        cfg.mode,
        &protocol.label,
    )?;
    write_trajectory_csv(
        &out.join("trajectory.csv"),
        std::slice::from_ref(&run),
        cfg.output_every,
    )?;
    let summary = SimulateSummary {
        schema_version: SCHEMA_VERSION,
        command: "simulate".into(),
        config_hash: cfg.hash.clone(),
        engine: cfg.engine,
        mode: cfg.mode,
        protocol: protocol.label.clone(),
        max_db: run.max_db(),
        t_of_max_s: run.t_of_max(),
        terminal_db: run.terminal_db(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    write_log(out, "simulate", started)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareEntry {
    pub label: String,
    pub kind: String,
    pub max_db: f64,
    pub t_of_max_s: f64,
    pub terminal_db: f64,
    /// First time the squeezing reaches `threshold_db`.
    pub time_to_threshold_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    pub engine: Engine,
    pub mode: Mode,
    pub threshold_db: f64,
    pub protocols: Vec<CompareEntry>,
}

/// Runs every `[[protocols]]` entry; writes `trajectories.csv` and
/// `summary.json`.
pub fn cmd_compare(cfg: &RunConfig, out: &Path) -> Result<CompareSummary> {
    let started = Instant::now();
    if cfg.protocols.len() < 2 {
        return Err(Error::config(
            "protocols",
            "compare needs at least two entries",
        ));
    }
    fs::create_dir_all(out)?;
    let runs: Vec<RunTrajectory> = cfg
        .protocols
        .par_iter()
        .map(|p| {
            let pulses = protocol_pulses(cfg, p, &cfg.params, cfg.mode)?;
            run_pulses(cfg, &cfg.params, &pulses, cfg.engine, cfg.mode, &p.label)
        })
        .collect::<Result<_>>()?;
    write_trajectory_csv(&out.join("trajectories.csv"), &runs, cfg.output_every)?;
    let threshold = cfg.sweep.threshold_db;
    let protocols = runs
        .iter()
        .zip(&cfg.protocols)
        .map(|(run, p)| CompareEntry {
            label: p.label.clone(),
            kind: p.spec.kind.name().into(),
            max_db: run.max_db(),
            t_of_max_s: run.t_of_max(),
            terminal_db: run.terminal_db(),
            time_to_threshold_s: run.time_to_db(threshold),
        })
        .collect();
    let summary = CompareSummary {
        schema_version: SCHEMA_VERSION,
        command: "compare".into(),
        config_hash: cfg.hash.clone(),
        engine: cfg.engine,
        mode: cfg.mode,
        threshold_db: threshold,
        protocols,
    };
    write_json(&out.join("summary.json"), &summary)?;
    write_log(out, "compare", started)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizeSummary {
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    pub config: RawConfig,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    pub monotonic: bool,
    pub j_t_guess: f64,
    pub j_t_final: f64,
    pub guess_rwa: Evaluation,
    pub final_rwa: Evaluation,
    /// Final pulses re-evaluated with counterrotating terms.
    pub final_full: Evaluation,
    pub pulses_csv: String,
    pub guess_pulses_csv: String,
}

/// Optimizes in the configured Krotov mode, then re-evaluates the final
/// pulses in both modes. Writes `optimization.json`, `pulses_final.csv` and
/// `pulses_guess.csv`.
pub fn cmd_optimize(cfg: &RunConfig, out: &Path) -> Result<OptimizeSummary> {
    let started = Instant::now();
    if cfg.engine != Engine::Fock {
        return Err(Error::config(
            "run.engine",
            "optimize requires the fock engine",
        ));
    }
    fs::create_dir_all(out)?;
    let protocol = require_protocol(cfg)?;
    let kmode = cfg.krotov.mode;
    let guess = protocol_pulses(cfg, protocol, &cfg.params, kmode)?;
    let model = FockModel::new(cfg.params, cfg.cutoffs)?;
    let rho0 = initial_state(cfg.params.n_th, cfg.cutoffs)?;
    let record = optimize(&model, &rho0, &guess, &cfg.krotov)?;
    let final_pulses = &record.pulses_final;
    let full_grid = grid_for(
        guess.grid().t_final(),
        &cfg.params,
        final_pulses.max_amplitude(),
        Mode::Full,
    )?;
    let eval_in = |pulses: &PulsePair, mode: Mode| -> Result<Evaluation> {
        match mode {
            Mode::Rwa => evaluate(&model, &rho0, pulses, Mode::Rwa),
            Mode::Full if pulses.check_step_rule(&cfg.params, Mode::Full).is_ok() => {
                evaluate(&model, &rho0, pulses, Mode::Full)
            }
            Mode::Full => evaluate(&model, &rho0, &pulses.resampled(full_grid)?, Mode::Full),
        }
    };
    let guess_rwa = eval_in(&guess, Mode::Rwa)?;
    let final_rwa = eval_in(final_pulses, Mode::Rwa)?;
    let final_full = eval_in(final_pulses, Mode::Full)?;
    write_pulse_csv(final_pulses, &out.join("pulses_final.csv"))?;
    write_pulse_csv(&guess, &out.join("pulses_guess.csv"))?;
    let summary = OptimizeSummary {
        schema_version: SCHEMA_VERSION,
        command: "optimize".into(),
        config_hash: cfg.hash.clone(),
        config: cfg.raw.clone(),
        j_t_guess: record.accepted_j_t()[0],
        j_t_final: record.final_j_t(),
        iterations: record.iterations,
        converged: record.converged,
        monotonic: record.monotonic,
        guess_rwa,
        final_rwa,
        final_full,
        pulses_csv: "pulses_final.csv".into(),
        guess_pulses_csv: "pulses_guess.csv".into(),
    };
    write_json(&out.join("optimization.json"), &summary)?;
    write_log(out, "optimize", started)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyResult {
    pub family: String,
    pub ratio: Option<f64>,
    pub max_db: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QslPoint {
    pub t_s: f64,
    pub t_kappa_units: f64,
    pub families: Vec<FamilyResult>,
    pub best_family: Option<String>,
    pub best_ratio: Option<f64>,
    pub max_db_full: Option<f64>,
    pub max_db_rwa: Option<f64>,
    /// Smallest `ΔX1²` with counterrotating terms over the RWA value.
    pub var_ratio_full_rwa: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QslSummary {
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    pub threshold_db: f64,
    pub g_minus_rad_s: f64,
    pub points: Vec<QslPoint>,
    /// Shortest duration whose full-mode squeezing exceeds the threshold.
    pub smallest_t_above_threshold_s: Option<f64>,
    pub max_db_non_decreasing: bool,
}

fn family_spec(family: &str, g_minus: f64, g_plus_initial: f64) -> ProtocolSpec {
    match family {
        "delayed" => ProtocolSpec::delayed(g_minus, 0.5, Delay::Auto),
        "linear" => ProtocolSpec::linear(g_minus, g_plus_initial, 0.5),
        _ => ProtocolSpec::constant(g_minus, 0.5),
    }
}

/// Best simplified protocol at duration `t_final`, scored in full mode, then
/// re-run in RWA for the breakdown ratio.
pub fn qsl_point(cfg: &RunConfig, t_final: f64) -> Result<QslPoint> {
    let sw = &cfg.sweep;
    let params = &cfg.params;
    let searches: Vec<(String, Result<(ProtocolSpec, LineSearchResult)>)> = sw
        .families
        .par_iter()
        .map(|f| {
            let spec = family_spec(f, sw.g_minus, sw.g_plus_initial);
            let r = line_search_ratio(
                &spec,
                t_final,
                params,
                Mode::Full,
                sw.objective,
                &default_ratio_grid(),
            )
            .map(|ls| (spec, ls));
            (f.clone(), r)
        })
        .collect();
    let families: Vec<FamilyResult> = searches
        .iter()
        .map(|(f, r)| match r {
            Ok((_, ls)) => FamilyResult {
                family: f.clone(),
                ratio: Some(ls.ratio),
                max_db: Some(ls.db),
                error: None,
            },
            Err(e) => FamilyResult {
                family: f.clone(),
                ratio: None,
                max_db: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let best = searches
        .iter()
        .filter_map(|(f, r)| r.as_ref().ok().map(|(s, ls)| (f, s, ls)))
        .max_by(|a, b| a.2.db.total_cmp(&b.2.db));
    let t_kappa_units = t_final / params.cavity_period();
    let Some((family, spec, ls)) = best else {
        return Ok(QslPoint {
            t_s: t_final,
            t_kappa_units,
            families,
            best_family: None,
            best_ratio: None,
            max_db_full: None,
            max_db_rwa: None,
            var_ratio_full_rwa: None,
            error: Some("no family succeeded".into()),
        });
    };
    let (max_db_full, max_db_rwa, best_ratio) = match sw.policy {
        SweepPolicy::LineSearch => {
            let grid = grid_for(t_final, params, spec.max_amplitude(), Mode::Full)?;
            let pulses = make_pulses(&spec.with_ratio(ls.ratio), grid, params, Mode::Full)?;
            let full = simulate_moments(&pulses, params, Mode::Full)?.min_var_x1();
            let rwa = simulate_moments(&pulses, params, Mode::Rwa)?.min_var_x1();
            (squeezing_db(full)?, squeezing_db(rwa)?, ls.ratio)
        }
        SweepPolicy::Krotov => {
            let rwa_grid = grid_for(t_final, params, spec.max_amplitude(), Mode::Rwa)?;
            let guess = make_pulses(&spec.with_ratio(ls.ratio), rwa_grid, params, Mode::Rwa)?;
            let model = FockModel::new(*params, cfg.cutoffs)?;
            let rho0 = initial_state(params.n_th, cfg.cutoffs)?;
            let mut kcfg = cfg.krotov.clone();
            kcfg.mode = Mode::Rwa;
            kcfg.amplitude_cap = sw.amplitude_cap.or(kcfg.amplitude_cap);
            let rec = optimize(&model, &rho0, &guess, &kcfg)?;
            let fin = &rec.pulses_final;
            let rwa = evaluate(&model, &rho0, fin, Mode::Rwa)?;
            let full_grid = grid_for(t_final, params, fin.max_amplitude(), Mode::Full)?;
            let full = evaluate(&model, &rho0, &fin.resampled(full_grid)?, Mode::Full)?;
            (full.max_db, rwa.max_db, ls.ratio)
        }
    };
    Ok(QslPoint {
        t_s: t_final,
        t_kappa_units,
        families,
        best_family: Some(family.clone()),
        best_ratio: Some(best_ratio),
        max_db_full: Some(max_db_full),
        max_db_rwa: Some(max_db_rwa),
        var_ratio_full_rwa: Some(10f64.powf((max_db_rwa - max_db_full) / 10.0)),
        error: None,
    })
}

/// Duration sweep; writes `qsl.json` and `qsl.csv`.
pub fn cmd_qsl_sweep(cfg: &RunConfig, out: &Path) -> Result<QslSummary> {
    let started = Instant::now();
    fs::create_dir_all(out)?;
    let mut points: Vec<QslPoint> = cfg
        .sweep
        .durations
        .par_iter()
        .map(|&t| {
            qsl_point(cfg, t).unwrap_or_else(|e| QslPoint {
                t_s: t,
                t_kappa_units: t / cfg.params.cavity_period(),
                families: Vec::new(),
                best_family: None,
                best_ratio: None,
                max_db_full: None,
                max_db_rwa: None,
                var_ratio_full_rwa: None,
                error: Some(e.to_string()),
            })
        })
        .collect();
    points.sort_by(|a, b| a.t_s.total_cmp(&b.t_s));
    let threshold = cfg.sweep.threshold_db;
    let smallest = points
        .iter()
        .find(|p| p.max_db_full.is_some_and(|d| d > threshold))
        .map(|p| p.t_s);
    let dbs: Vec<f64> = points.iter().filter_map(|p| p.max_db_full).collect();
    let non_decreasing = dbs.windows(2).all(|w| w[1] >= w[0] - QSL_MONOTONE_TOL_DB);
    let mut w = csv::Writer::from_path(out.join("qsl.csv"))?;
    w.write_record([
        "t_s",
        "t_kappa_units",
        "best_family",
        "best_ratio",
        "max_db_full",
        "max_db_rwa",
        "var_ratio_full_rwa",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for p in &points {
        w.write_record([
            p.t_s.to_string(),
            p.t_kappa_units.to_string(),
            p.best_family.clone().unwrap_or_default(),
            opt(p.best_ratio),
            opt(p.max_db_full),
            opt(p.max_db_rwa),
            opt(p.var_ratio_full_rwa),
        ])?;
    }
    w.flush()?;
    let summary = QslSummary {
        schema_version: SCHEMA_VERSION,
        command: "qsl-sweep".into(),
        config_hash: cfg.hash.clone(),
        threshold_db: threshold,
        g_minus_rad_s: cfg.sweep.g_minus,
        points,
        smallest_t_above_threshold_s: smallest,
        max_db_non_decreasing: non_decreasing,
    };
    write_json(&out.join("qsl.json"), &summary)?;
    write_log(out, "qsl-sweep", started)?;
    Ok(summary)
}

/// Slack for the monotonicity flag; the golden-section ratio tolerance
/// leaves sub-millidecibel noise on plateaus.
pub const QSL_MONOTONE_TOL_DB: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaRun {
    pub kappa_reduction: f64,
    pub kappa_rad_s: f64,
    pub first_min_time_s: f64,
    pub first_min_var_x1: f64,
    pub extrema: usize,
    pub oscillating: bool,
    pub terminal_var_x1: f64,
    /// Late-time mean of `ΔX1²` over a run long enough to settle.
    pub plateau_var_x1: f64,
    /// Lyapunov steady state of the RWA dynamics.
    pub steady_var_x1_rwa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaSummary {
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    pub mode: Mode,
    pub n_th: f64,
    pub runs: Vec<KappaRun>,
}

/// Relative reversal needed before a turning point counts as an extremum.
pub const EXTREMUM_HYSTERESIS: f64 = 0.01;

/// Turning points of `v` that reverse by more than `EXTREMUM_HYSTERESIS`
/// of its range; returns their indices.
pub fn turning_points(v: &[f64]) -> Vec<usize> {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    let tol = EXTREMUM_HYSTERESIS * (hi - lo);
    let mut out = Vec::new();
    if v.len() < 3 || !(tol > 0.0) {
        return out;
    }
    // direction: +1 rising, -1 falling, 0 undecided
    let mut dir = 0i8;
    let mut pivot = 0usize;
    for i in 1..v.len() {
        match dir {
            0 => {
                if v[i] > v[pivot] + tol {
                    dir = 1;
                    pivot = i;
                } else if v[i] < v[pivot] - tol {
                    dir = -1;
                    pivot = i;
                }
            }
            1 => {
                if v[i] > v[pivot] {
                    pivot = i;
                } else if v[i] < v[pivot] - tol {
                    out.push(pivot);
                    dir = -1;
                    pivot = i;
                }
            }
            _ => {
                if v[i] < v[pivot] {
                    pivot = i;
                } else if v[i] > v[pivot] + tol {
                    out.push(pivot);
                    dir = 1;
                    pivot = i;
                }
            }
        }
    }
    out
}

/// Settling horizon in units of the cavity lifetime `1/κ`.
pub const PLATEAU_LIFETIMES: f64 = 40.0;

/// Mean `ΔX1²` over the last 5 % of a constant-drive run lasting at least
/// [`PLATEAU_LIFETIMES`] cavity lifetimes; in full mode this averages the
/// periodic steady state.
pub fn plateau_variance(
    gp: f64,
    gm: f64,
    params: &SystemParams,
    mode: Mode,
    t_min: f64,
) -> Result<f64> {
    let t = t_min.max(PLATEAU_LIFETIMES / params.kappa);
    let grid = grid_for(t, params, gp.abs().max(gm.abs()), mode)?;
    let v = simulate_moments(&PulsePair::constant(grid, gp, gm)?, params, mode)?.var_x1();
    let tail = &v[v.len() - (v.len() / 20).max(1)..];
    Ok(tail.iter().sum::<f64>() / tail.len() as f64)
}

/// Default pulses for the cavity-decay study: constant, `G-/2π = 70 kHz`,
/// ratio 0.86.
pub fn kappa_study_protocol() -> LabeledProtocol {
    LabeledProtocol {
        label: "constant".into(),
        spec: ProtocolSpec::constant(std::f64::consts::TAU * 70e3, 0.86),
    }
}

/// Same pulses under reduced cavity decay; writes `kappa_study.csv` and
/// `kappa_study.json`.
pub fn cmd_kappa_study(cfg: &RunConfig, out: &Path) -> Result<KappaSummary> {
    let started = Instant::now();
    fs::create_dir_all(out)?;
    let protocol = cfg.protocol.clone().unwrap_or_else(kappa_study_protocol);
    let base = cfg.params.with_n_th(cfg.kappa_study_n_th);
    let t_final = cfg.t_final.unwrap_or(42.0 * cfg.params.cavity_period());
    let mode = cfg.mode;
    let results: Vec<(KappaRun, RunTrajectory)> = cfg
        .kappa_reductions
        .par_iter()
        .map(|&r| {
            let params = base.with_kappa(base.kappa / r);
            let grid = match cfg.n_steps {
                Some(n) => crate::model::TimeGrid::new(t_final, n)?,
                None => grid_for(t_final, &params, protocol.spec.max_amplitude(), mode)?,
            };
            let pulses = make_pulses(&protocol.spec, grid, &params, mode)?;
            let label = format!("{}@kappa/{r}", protocol.label);
            let run = run_pulses(cfg, &params, &pulses, Engine::Moments, mode, &label)?;
            let v = run.var_x1();
            let turns = turning_points(&v);
            let first_min = turns
                .iter()
                .copied()
                .find(|&i| i > 0 && v[i] < v[0])
                .unwrap_or_else(|| crate::analysis::min_with_index(&v).0);
            let (gp, gm) = pulses.step(grid.n_steps() - 1);
            let steady = steady_state(gp, gm, &params).ok().map(|s| s.var_x1());
            let plateau = plateau_variance(gp, gm, &params, mode, t_final)?;
            Ok((
                KappaRun {
                    kappa_reduction: r,
                    kappa_rad_s: params.kappa,
                    first_min_time_s: run.times[first_min],
                    first_min_var_x1: v[first_min],
                    extrema: turns.len(),
                    oscillating: turns.len() >= 2,
                    terminal_var_x1: *v.last().expect("non-empty"),
                    plateau_var_x1: plateau,
                    steady_var_x1_rwa: steady,
                },
                run,
            ))
        })
        .collect::<Result<_>>()?;
    let mut w = csv::Writer::from_path(out.join("kappa_study.csv"))?;
    for (_, run) in &results {
        write_rows(&mut w, run, cfg.output_every)?;
    }
    w.flush()?;
    let summary = KappaSummary {
        schema_version: SCHEMA_VERSION,
        command: "kappa-study".into(),
        config_hash: cfg.hash.clone(),
        mode,
        n_th: cfg.kappa_study_n_th,
        runs: results.into_iter().map(|(k, _)| k).collect(),
    };
    write_json(&out.join("kappa_study.json"), &summary)?;
    write_log(out, "kappa-study", started)?;
    Ok(summary)
}
