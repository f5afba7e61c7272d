//! Command implementations behind the `mechkit` binary: ingest system
//! definitions, run derivations / simulations / checks, and emit
//! machine-readable reports.
//!
//! Reports are deterministic for fixed inputs: random sample points come
//! from a fixed seed, and the only nondeterministic field, `wall_time_ms`,
//! is excluded from the determinism guarantee.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;
use serde_json::{json, Value};

use crate::contact::conserved_quotient;
use crate::error::{MechError, Result};
use crate::expr::{parse, Expr, VarLayout};
use crate::integrate::{integrate, sample_times, IntegratorConfig, Method, MonitorDef, Trajectory};
use crate::registry;
use crate::symmetry::{
    dynamical_symmetry_residual, monitor, noether_check, GeneratorField, MonitorMode,
};
use crate::system::{Behavior, Formalism, SystemFile, SystemSpec};
use crate::unified::ON_CONSTRAINT_TOL;

const CHECK_SEED: u64 = 0x6d65_6368;
const QUOTIENT_ZERO_GUARD: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Logging
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
}

/// Verbosity from `MECHKIT_LOG` (error|warn|info|debug); numeric output is
/// unaffected by the level.
pub fn log_level() -> LogLevel {
    match std::env::var("MECHKIT_LOG").as_deref() {
        Ok("error") => LogLevel::Error,
        Ok("info") => LogLevel::Info,
        Ok("debug") => LogLevel::Debug,
        _ => LogLevel::Warn,
    }
}

pub fn log(level: LogLevel, msg: &str) {
    if level <= log_level() {
        eprintln!("mechkit[{level:?}]: {msg}");
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// One pass/fail line of a report.
#[derive(Debug, Clone, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub observed: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl CheckLine {
    fn new(name: impl Into<String>, observed: f64, threshold: f64) -> CheckLine {
        CheckLine {
            name: name.into(),
            observed,
            threshold,
            pass: observed.is_finite() && observed <= threshold,
        }
    }

    fn failed(name: impl Into<String>, threshold: f64) -> CheckLine {
        CheckLine {
            name: name.into(),
            observed: f64::INFINITY,
            threshold,
            pass: false,
        }
    }
}

/// Machine-readable run report. Everything except `wall_time_ms` is
/// byte-identical across repeated runs with the same inputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub system: String,
    pub config: Value,
    pub results: Value,
    pub checks: Vec<CheckLine>,
    pub pass: bool,
    pub wall_time_ms: u64,
}

impl RunReport {
    fn finish(
        command: &str,
        system: &str,
        config: Value,
        results: Value,
        checks: Vec<CheckLine>,
        started: Instant,
    ) -> RunReport {
        let pass = checks.iter().all(|c| c.pass);
        RunReport {
            command: command.to_owned(),
            system: system.to_owned(),
            config,
            results,
            checks,
            pass,
            wall_time_ms: started.elapsed().as_millis() as u64,
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// The deterministic portion of the report (timestamp removed).
    pub fn deterministic_body(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("wall_time_ms");
        }
        v
    }
}

// ---------------------------------------------------------------------------
// Input loading and small parsers
// ---------------------------------------------------------------------------

/// Resolve `--system`: a path to a JSON file, or a registry id.
pub fn load_system(arg: &str) -> Result<SystemSpec> {
    if std::path::Path::new(arg).exists() {
        let text = std::fs::read_to_string(arg)
            .map_err(|e| MechError::Validation(format!("cannot read `{arg}`: {e}")))?;
        SystemFile::from_json(&text)?.validate()
    } else {
        registry::get(arg)
    }
}

/// Parse `k=v,...` bindings.
pub fn parse_bindings(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    if text.trim().is_empty() {
        return Ok(out);
    }
    for piece in text.split(',') {
        let (name, value) = piece
            .split_once('=')
            .ok_or_else(|| MechError::Validation(format!("expected name=value, got `{piece}`")))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| MechError::Validation(format!("invalid number `{value}`")))?;
        out.insert(name.trim().to_owned(), v);
    }
    Ok(out)
}

/// Parse `a,b` into a time span.
pub fn parse_tspan(text: &str) -> Result<(f64, f64)> {
    let (a, b) = text
        .split_once(',')
        .ok_or_else(|| MechError::Validation(format!("expected a,b for --tspan, got `{text}`")))?;
    let t0: f64 = a
        .trim()
        .parse()
        .map_err(|_| MechError::Validation(format!("invalid number `{a}`")))?;
    let t1: f64 = b
        .trim()
        .parse()
        .map_err(|_| MechError::Validation(format!("invalid number `{b}`")))?;
    if !(t1 > t0) {
        return Err(MechError::Validation(format!(
            "time span must be increasing, got [{t0}, {t1}]"
        )));
    }
    Ok((t0, t1))
}

/// Parse a sampling grid `name=start:stop:count[,name=...]` into the
/// Cartesian product of per-coordinate ranges.
pub fn parse_grid(text: &str, coords: &[String]) -> Result<Vec<Vec<f64>>> {
    let mut ranges: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for piece in text.split(',') {
        let (name, spec) = piece.split_once('=').ok_or_else(|| {
            MechError::Validation(format!("expected name=start:stop:count, got `{piece}`"))
        })?;
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(MechError::Validation(format!(
                "expected start:stop:count in `{spec}`"
            )));
        }
        let start: f64 = parts[0]
            .trim()
            .parse()
            .map_err(|_| MechError::Validation(format!("invalid number `{}`", parts[0])))?;
        let stop: f64 = parts[1]
            .trim()
            .parse()
            .map_err(|_| MechError::Validation(format!("invalid number `{}`", parts[1])))?;
        let count: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| MechError::Validation(format!("invalid count `{}`", parts[2])))?;
        if count == 0 {
            return Err(MechError::Validation("grid count must be positive".into()));
        }
        let values = if count == 1 {
            vec![start]
        } else {
            (0..count)
                .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
                .collect()
        };
        ranges.insert(name.trim().to_owned(), values);
    }
    let mut samples: Vec<Vec<f64>> = vec![Vec::new()];
    for c in coords {
        let values = ranges.get(c).ok_or_else(|| {
            MechError::Validation(format!("grid is missing coordinate `{c}`"))
        })?;
        let mut next = Vec::with_capacity(samples.len() * values.len());
        for base in &samples {
            for v in values {
                let mut row = base.clone();
                row.push(*v);
                next.push(row);
            }
        }
        samples = next;
    }
    Ok(samples)
}

/// 17-significant-digit decimal rendering used in CSV output.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

// ---------------------------------------------------------------------------
// derive
// ---------------------------------------------------------------------------

pub fn run_derive(system_arg: &str, point: &BTreeMap<String, f64>) -> Result<RunReport> {
    let started = Instant::now();
    let spec = load_system(system_arg)?;
    let t = point
        .get("t")
        .copied()
        .or_else(|| spec.initial.get("t").copied())
        .unwrap_or(0.0);
    let state = spec.initial_state(point)?;
    let out = spec.derive_at(t, &state)?;

    let mut results = serde_json::Map::new();
    results.insert(
        "components".into(),
        json!(out
            .field
            .names
            .iter()
            .zip(&out.field.components)
            .map(|(n, v)| json!({ "name": n, "value": v }))
            .collect::<Vec<_>>()),
    );
    for (name, value) in &out.field.diagnostics {
        results.insert(name.clone(), json!(value));
    }
    if let Some(legendre) = &out.legendre {
        results.insert(
            "legendre_image".into(),
            json!(legendre
                .iter()
                .map(|(n, v)| json!({ "name": n, "value": v }))
                .collect::<Vec<_>>()),
        );
    }
    if let Some(reeb) = &out.reeb {
        results.insert(
            "reeb".into(),
            json!({
                "components": reeb.components,
                "diagnostics": reeb.diagnostics.iter().cloned().collect::<BTreeMap<_,_>>(),
            }),
        );
    }
    let config = json!({ "point": point, "t": t });
    Ok(RunReport::finish(
        "derive",
        &spec.id,
        config,
        Value::Object(results),
        Vec::new(),
        started,
    ))
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SimulateOptions {
    pub tspan: (f64, f64),
    pub dt_out: f64,
    pub tol: Option<f64>,
    pub rk4_dt: Option<f64>,
    pub point: BTreeMap<String, f64>,
    pub out_path: Option<String>,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Build the monitor channels for a system: one per declared expectation,
/// plus structural channels (dissipation-rate residual for contact systems,
/// constraint residual for unified systems).
fn system_monitors(spec: &SystemSpec) -> Result<Vec<MonitorDef>> {
    let layout = spec.state_layout()?;
    let time_layout = crate::symmetry::time_extended_layout(&layout)?;
    let mut out = Vec::new();
    for e in &spec.expectations {
        let quantity = e.quantity.clone();
        let params = spec.params.clone();
        let tl = time_layout.clone();
        out.push(MonitorDef::new(e.name.clone(), move |t, state| {
            let mut point = Vec::with_capacity(state.len() + 1);
            point.push(t);
            point.extend_from_slice(state);
            Ok(crate::expr::eval(&quantity, &tl, &point, &params)?)
        }));
    }
    match spec.formalism {
        Formalism::ContactLagrangian | Formalism::ContactHamiltonian => {
            let spec2 = spec.clone();
            out.push(MonitorDef::new("dissipation_residual", move |_t, state| {
                Ok(spec2.dissipation_residual(state)?.expect("contact system"))
            }));
        }
        Formalism::UnifiedAutonomous | Formalism::UnifiedExtended | Formalism::UnifiedContact => {
            let spec2 = spec.clone();
            out.push(MonitorDef::new("constraint_residual", move |t, state| {
                let pt = spec2.unified_point_raw(t, state)?;
                let res = crate::unified::constraint_residuals(
                    spec2.lagrangian.as_ref().expect("validated"),
                    &spec2.coords,
                    &pt,
                    &spec2.params,
                )?;
                Ok(res.iter().map(|r| r.abs()).fold(0.0, f64::max))
            }));
        }
        _ => {}
    }
    Ok(out)
}

pub fn run_simulate(system_arg: &str, opts: &SimulateOptions) -> Result<(RunReport, Trajectory)> {
    let started = Instant::now();
    let spec = load_system(system_arg)?;
    let state0 = spec.initial_state(&opts.point)?;
    let (t0, t1) = opts.tspan;
    let mut config = IntegratorConfig::default();
    if let Some(tol) = opts.tol {
        config.abs_tol = tol;
        config.rel_tol = tol;
    }
    if let Some(dt) = opts.rk4_dt {
        config.method = Method::Rk4 { dt };
    }
    let samples = sample_times(t0, t1, opts.dt_out);
    let monitors = system_monitors(&spec)?;
    let provider = |t: f64, state: &[f64]| spec.field_at(t, state);
    let mut traj = integrate(&provider, &state0, (t0, t1), &samples, &config, &monitors)?;
    traj.system_id = spec.id.clone();

    // per-expectation verdicts along the trajectory
    let layout = spec.state_layout()?;
    let mut checks = Vec::new();
    let mut fitted_rates = serde_json::Map::new();
    for e in &spec.expectations {
        let mode = match &e.behavior {
            Behavior::Conserved => MonitorMode::Conserve,
            Behavior::Decay { rate } => MonitorMode::Decay { rate: rate.clone() },
        };
        let report = monitor(&traj, &e.quantity, &layout, &spec.params, &mode)?;
        let observed = if e.relative {
            report.max_relative
        } else {
            report.max_drift
        };
        checks.push(CheckLine::new(e.name.clone(), observed, e.tolerance));
        if matches!(e.behavior, Behavior::Decay { .. }) {
            if let Some(rate) = fit_decay_rate(&traj.times, &report.values) {
                fitted_rates.insert(e.name.clone(), json!(rate));
            }
        }
    }

    let columns = csv_columns(&spec, &traj)?;
    let results = json!({
        "samples": traj.len(),
        "final_state": traj.final_state(),
        "columns": columns,
        "fitted_decay_rates": Value::Object(fitted_rates),
        "steps_accepted": traj.stats.accepted,
        "steps_rejected": traj.stats.rejected,
    });
    let config_echo = json!({
        "tspan": [t0, t1],
        "dt_out": opts.dt_out,
        "tol": opts.tol,
        "rk4_dt": opts.rk4_dt,
        "point": opts.point,
        "format": match opts.format { OutputFormat::Csv => "csv", OutputFormat::Json => "json" },
    });
    let report = RunReport::finish("simulate", &spec.id, config_echo, results, checks, started);
    Ok((report, traj))
}

/// Least-squares slope of `-ln f(t)`: the fitted exponential decay rate.
pub fn fit_decay_rate(times: &[f64], values: &[f64]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > 0.0)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mean_t = pairs.iter().map(|(t, _)| t).sum::<f64>() / n;
    let mean_y = pairs.iter().map(|(_, y)| y).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, y) in &pairs {
        num += (t - mean_t) * (y - mean_y);
        den += (t - mean_t) * (t - mean_t);
    }
    if den == 0.0 {
        return None;
    }
    Some(-num / den)
}

fn csv_columns(spec: &SystemSpec, traj: &Trajectory) -> Result<Vec<String>> {
    let mut columns = vec!["t".to_owned()];
    columns.extend(spec.state_layout()?.names().iter().cloned());
    columns.extend(traj.monitors.keys().cloned());
    Ok(columns)
}

/// Render a trajectory as CSV: columns `t,<state...>,<monitors...>`, every
/// value with 17 significant decimal digits.
pub fn trajectory_csv(spec: &SystemSpec, traj: &Trajectory) -> Result<String> {
    let columns = csv_columns(spec, traj)?;
    let mut out = columns.join(",");
    out.push('\n');
    for (i, t) in traj.times.iter().enumerate() {
        let mut row = vec![fmt17(*t)];
        row.extend(traj.states[i].iter().map(|v| fmt17(*v)));
        row.extend(traj.monitors.values().map(|ch| fmt17(ch[i])));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Render a trajectory as JSON.
pub fn trajectory_json(spec: &SystemSpec, traj: &Trajectory) -> Result<String> {
    let columns = csv_columns(spec, traj)?;
    let doc = json!({
        "system": traj.system_id,
        "columns": columns,
        "times": traj.times,
        "states": traj.states,
        "monitors": traj.monitors,
    });
    Ok(serde_json::to_string_pretty(&doc).expect("trajectory serializes"))
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

/// Full invariant battery for one system. Deterministic: sampling uses a
/// fixed seed.
pub fn run_check(system_arg: &str, tspan: (f64, f64)) -> Result<RunReport> {
    run_check_spec(&load_system(system_arg)?, tspan)
}

/// The check battery on an already-loaded spec.
pub fn run_check_spec(spec: &SystemSpec, tspan: (f64, f64)) -> Result<RunReport> {
    let started = Instant::now();
    let mut checks = Vec::new();
    let mut rng = StdRng::seed_from_u64(CHECK_SEED);

    // 1. definition evaluates and the Hessian is regular at the initial point
    let state0 = spec.initial_state(&BTreeMap::new())?;
    match spec.field_at(tspan.0, &state0) {
        Ok(_) => checks.push(CheckLine::new("regularity-at-initial", 0.0, 0.0)),
        Err(MechError::SingularLagrangian { detail }) => {
            let named: Vec<String> = spec
                .state_layout()?
                .names()
                .iter()
                .zip(&state0)
                .map(|(n, v)| format!("{n}={v}"))
                .collect();
            let err = MechError::SingularLagrangian {
                detail: format!("{detail} at ({})", named.join(", ")),
            };
            log(LogLevel::Error, &format!("{}: {err}", spec.id));
            return Err(err);
        }
        Err(e) => {
            log(LogLevel::Error, &format!("{}: {e}", spec.id));
            return Err(e);
        }
    }

    let sample_states = sampled_states(&spec, &state0, &mut rng, 100);

    // 2. Legendre equivalence at sampled points
    if spec.lagrangian.is_some() && spec.hamiltonian.is_some() {
        let mut worst = 0.0_f64;
        let mut failed = false;
        for s in &sample_states {
            match spec.equivalence_residual_at(tspan.0, s) {
                Ok(Some(r)) => worst = worst.max(r),
                Ok(None) => break,
                Err(e) => {
                    log(LogLevel::Warn, &format!("equivalence: {e}"));
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            checks.push(CheckLine::failed("legendre-equivalence", 1e-10));
        } else if spec.equivalence_residual_at(tspan.0, &state0)?.is_some() {
            checks.push(CheckLine::new("legendre-equivalence", worst, 1e-10));
        }
    }

    // 3. unified projection at sampled on-constraint points
    if spec.unified_flavor().is_some() && spec.lagrangian.is_some() {
        let mut worst = 0.0_f64;
        let mut ok = true;
        for s in &sample_states {
            let pt = match spec.unified_point_from_state(tspan.0, s) {
                Ok(pt) => pt,
                Err(e) => {
                    log(LogLevel::Warn, &format!("unified lift: {e}"));
                    ok = false;
                    break;
                }
            };
            match crate::unified::projection_check(
                spec.lagrangian.as_ref().expect("validated"),
                spec.hamiltonian.as_ref(),
                &spec.coords,
                &pt,
                &spec.params,
                ON_CONSTRAINT_TOL,
            ) {
                Ok(out) => {
                    worst = worst.max(out.lagrangian_residual);
                    if let Some(h) = out.hamiltonian_residual {
                        worst = worst.max(h);
                    }
                }
                Err(e) => {
                    log(LogLevel::Warn, &format!("unified projection: {e}"));
                    ok = false;
                    break;
                }
            }
        }
        checks.push(if ok {
            CheckLine::new("unified-projection", worst, 1e-10)
        } else {
            CheckLine::failed("unified-projection", 1e-10)
        });
    }

    // 4. dissipation rate residual for contact systems
    if matches!(
        spec.formalism,
        Formalism::ContactLagrangian | Formalism::ContactHamiltonian
    ) {
        let mut worst = 0.0_f64;
        for s in &sample_states {
            if let Some(r) = spec.dissipation_residual(s)? {
                worst = worst.max(r);
            }
        }
        checks.push(CheckLine::new("dissipation-rate", worst, 1e-10));
    }

    // 5. declared symmetries: Noether residuals on Lagrangian-side systems
    if spec.lagrangian.is_some() && spec.primary_side() == crate::phase::Side::Tangent {
        let phase = spec.phase_layout()?;
        for sym in &spec.symmetries {
            let gen = GeneratorField::new(sym.components.clone(), phase.clone())?;
            let phase_samples: Vec<Vec<f64>> = sample_states
                .iter()
                .map(|s| {
                    if spec.formalism.has_time() {
                        let mut p = vec![tspan.0];
                        p.extend_from_slice(s);
                        p
                    } else {
                        s.clone()
                    }
                })
                .collect();
            match noether_check(
                &gen,
                spec.lagrangian.as_ref().expect("validated"),
                &spec.coords,
                &phase_samples,
                &spec.params,
            ) {
                Ok(report) => {
                    checks.push(CheckLine::new(
                        format!("noether-{}-theta", sym.name),
                        report.theta_residual,
                        1e-10,
                    ));
                    checks.push(CheckLine::new(
                        format!("noether-{}-energy", sym.name),
                        report.energy_residual,
                        1e-10,
                    ));
                }
                Err(e) => {
                    log(LogLevel::Warn, &format!("noether {}: {e}", sym.name));
                    checks.push(CheckLine::failed(format!("noether-{}", sym.name), 1e-10));
                }
            }
        }
    }

    // 6. declared expectations along a trajectory
    if !spec.expectations.is_empty() || spec.unified_flavor().is_some() {
        let opts = SimulateOptions {
            tspan,
            dt_out: 0.1,
            tol: None,
            rk4_dt: None,
            point: BTreeMap::new(),
            out_path: None,
            format: OutputFormat::Json,
        };
        match run_simulate_spec(spec, &opts) {
            Ok((sim_checks, traj)) => {
                checks.extend(sim_checks);
                // conserved quotient of two declared dissipated quantities
                let decaying: Vec<&crate::system::Expectation> = spec
                    .expectations
                    .iter()
                    .filter(|e| matches!(e.behavior, Behavior::Decay { .. }))
                    .collect();
                if decaying.len() >= 2 {
                    let layout = time_layout(&spec)?;
                    let wrap = |e: &Expr| e.clone();
                    match conserved_quotient(
                        &wrap(&decaying[0].quantity),
                        &wrap(&decaying[1].quantity),
                        &layout,
                        &prefix_time(&traj),
                        &spec.params,
                        QUOTIENT_ZERO_GUARD,
                    ) {
                        Ok(out) => checks.push(CheckLine::new(
                            format!(
                                "conserved-quotient-{}-over-{}",
                                decaying[0].name, decaying[1].name
                            ),
                            out.max_drift / out.initial.abs().max(1e-30),
                            1e-5,
                        )),
                        Err(e) => {
                            log(LogLevel::Warn, &format!("quotient: {e}"));
                            checks.push(CheckLine::failed("conserved-quotient", 1e-5));
                        }
                    }
                }
            }
            Err(e) => {
                log(LogLevel::Error, &format!("trajectory: {e}"));
                return Err(e);
            }
        }
    }

    let config = json!({ "tspan": [tspan.0, tspan.1], "samples": 100, "seed": CHECK_SEED });
    let results = json!({ "checks_run": checks.len() });
    Ok(RunReport::finish(
        "check",
        &spec.id,
        config,
        results,
        checks,
        started,
    ))
}

/// Sampled states around the initial condition; components that start well
/// away from zero stay there (radial coordinates entering denominators).
fn sampled_states(
    _spec: &SystemSpec,
    state0: &[f64],
    rng: &mut StdRng,
    count: usize,
) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            state0
                .iter()
                .map(|v| {
                    let base = *v;
                    let spread = 0.4 * base.abs().max(0.5);
                    let candidate = base + rng.gen_range(-spread..spread);
                    if base >= 0.5 && candidate < 0.25 {
                        base + (base - candidate) * 0.5
                    } else {
                        candidate
                    }
                })
                .collect()
        })
        .collect()
}

fn time_layout(spec: &SystemSpec) -> Result<VarLayout> {
    crate::symmetry::time_extended_layout(&spec.state_layout()?)
}

/// A trajectory whose states are prefixed with the sample time, matching
/// the `[t] ++ state` evaluation layout.
fn prefix_time(traj: &Trajectory) -> Trajectory {
    let mut out = traj.clone();
    out.states = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(t, s)| {
            let mut row = Vec::with_capacity(s.len() + 1);
            row.push(*t);
            row.extend_from_slice(s);
            row
        })
        .collect();
    out
}

/// The expectation-verdict part of a simulation, reused by `check`.
fn run_simulate_spec(
    spec: &SystemSpec,
    opts: &SimulateOptions,
) -> Result<(Vec<CheckLine>, Trajectory)> {
    let state0 = spec.initial_state(&opts.point)?;
    let (t0, t1) = opts.tspan;
    let config = IntegratorConfig::default();
    let samples = sample_times(t0, t1, opts.dt_out);
    let monitors = system_monitors(spec)?;
    let provider = |t: f64, state: &[f64]| spec.field_at(t, state);
    let mut traj = integrate(&provider, &state0, (t0, t1), &samples, &config, &monitors)?;
    traj.system_id = spec.id.clone();
    let layout = spec.state_layout()?;
    let mut checks = Vec::new();
    for e in &spec.expectations {
        let mode = match &e.behavior {
            Behavior::Conserved => MonitorMode::Conserve,
            Behavior::Decay { rate } => MonitorMode::Decay { rate: rate.clone() },
        };
        let report = monitor(&traj, &e.quantity, &layout, &spec.params, &mode)?;
        let observed = if e.relative {
            report.max_relative
        } else {
            report.max_drift
        };
        checks.push(CheckLine::new(
            format!("expect-{}", e.name),
            observed,
            e.tolerance,
        ));
    }
    if let Some(channel) = traj.monitors.get("constraint_residual") {
        let worst = channel.iter().fold(0.0_f64, |a, b| a.max(*b));
        checks.push(CheckLine::new("trajectory-constraint-residual", worst, 1e-6));
    }
    if let Some(channel) = traj.monitors.get("dissipation_residual") {
        let worst = channel.iter().fold(0.0_f64, |a, b| a.max(*b));
        checks.push(CheckLine::new("trajectory-dissipation-residual", worst, 1e-9));
    }
    Ok((checks, traj))
}

/// Run the check battery for every registry system, fanned out across
/// threads with isolated state. Returns reports in registry order.
pub fn run_check_all(tspan: (f64, f64)) -> Result<Vec<RunReport>> {
    let ids: Vec<String> = registry::list().into_iter().map(|(id, _)| id).collect();
    let mut reports: Vec<Option<Result<RunReport>>> = Vec::new();
    reports.resize_with(ids.len(), || None);
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (i, id) in ids.iter().enumerate() {
            handles.push((i, scope.spawn(move || run_check(id, tspan))));
        }
        for (i, handle) in handles {
            reports[i] = Some(handle.join().expect("worker thread"));
        }
    });
    reports
        .into_iter()
        .map(|r| r.expect("all slots filled"))
        .collect()
}

// ---------------------------------------------------------------------------
// symmetry / hj / geodesic / validate / export
// ---------------------------------------------------------------------------

pub fn run_symmetry(
    system_arg: &str,
    generator: &str,
    sample_count: usize,
) -> Result<RunReport> {
    let started = Instant::now();
    let spec = load_system(system_arg)?;
    let phase = spec.phase_layout()?;
    // generator: a declared name, or componentwise expressions
    let components: Vec<Expr> = if let Some(sym) =
        spec.symmetries.iter().find(|s| s.name == generator)
    {
        sym.components.clone()
    } else {
        let pieces: Vec<&str> = generator.split(',').collect();
        if pieces.len() != phase.len() {
            return Err(MechError::Validation(format!(
                "generator needs {} components (or a declared symmetry name), got {}",
                phase.len(),
                pieces.len()
            )));
        }
        pieces
            .iter()
            .map(|p| parse(p).map_err(MechError::from))
            .collect::<Result<_>>()?
    };
    let gen = GeneratorField::new(components, phase.clone())?;

    let mut rng = StdRng::seed_from_u64(CHECK_SEED);
    let state0 = spec.initial_state(&BTreeMap::new())?;
    let states = sampled_states(&spec, &state0, &mut rng, sample_count);
    let phase_samples: Vec<Vec<f64>> = states
        .iter()
        .map(|s| {
            if spec.formalism.has_time() {
                let mut p = vec![0.0];
                p.extend_from_slice(s);
                p
            } else {
                s.clone()
            }
        })
        .collect();

    let mut checks = Vec::new();
    let mut results = serde_json::Map::new();

    if spec.lagrangian.is_some() && spec.primary_side() == crate::phase::Side::Tangent {
        let report = noether_check(
            &gen,
            spec.lagrangian.as_ref().expect("validated"),
            &spec.coords,
            &phase_samples,
            &spec.params,
        )?;
        checks.push(CheckLine::new("noether-theta", report.theta_residual, 1e-10));
        checks.push(CheckLine::new(
            "noether-energy",
            report.energy_residual,
            1e-10,
        ));
        results.insert("f_Y".into(), json!(report.f_y));
    }

    // dynamical symmetry against the trajectory generator; the sample states
    // are on the integration chart, so bind t = 0 for time-dependent systems
    let spec2 = spec.clone();
    let has_time = spec.formalism.has_time();
    let dynamics = move |phase_point: &[f64]| -> Result<Vec<f64>> {
        if has_time {
            let f = spec2.field_at(phase_point[0], &phase_point[1..])?;
            let mut full = vec![1.0];
            full.extend(f);
            Ok(full)
        } else {
            spec2.field_at(0.0, phase_point)
        }
    };
    let resid =
        dynamical_symmetry_residual(&gen, &dynamics, &phase_samples, &spec.params)?;
    checks.push(CheckLine::new("dynamical-symmetry", resid, 1e-9));

    let config = json!({ "generator": generator, "samples": sample_count });
    Ok(RunReport::finish(
        "symmetry",
        &spec.id,
        config,
        Value::Object(results),
        checks,
        started,
    ))
}

pub fn run_hj(
    system_arg: &str,
    s_text: &str,
    grid: &str,
    extra_params: &BTreeMap<String, f64>,
) -> Result<RunReport> {
    let started = Instant::now();
    let spec = load_system(system_arg)?;
    let h = spec.hamiltonian.as_ref().ok_or_else(|| {
        MechError::Validation("the Hamilton-Jacobi check needs a hamiltonian".into())
    })?;
    let s = parse(s_text)?;
    let samples = parse_grid(grid, &spec.coords)?;
    let mut params = spec.params.clone();
    params.extend(extra_params.iter().map(|(k, v)| (k.clone(), *v)));
    let report = crate::symplectic::hj_residual(h, &s, &spec.coords, &samples, &params)?;
    let checks = vec![CheckLine::new("hj-deviation", report.deviation, 1e-8)];
    let results = json!({
        "mean_h": report.mean_h,
        "deviation": report.deviation,
        "samples": samples.len(),
        "base_field_first": report.base_fields.first(),
    });
    let config = json!({ "generating_function": s_text, "grid": grid, "params": extra_params });
    Ok(RunReport::finish(
        "hj",
        &spec.id,
        config,
        results,
        checks,
        started,
    ))
}

pub fn run_geodesic(
    system_arg: &str,
    point: &BTreeMap<String, f64>,
    tspan: (f64, f64),
    dt_out: f64,
) -> Result<(RunReport, Trajectory)> {
    let started = Instant::now();
    let mut spec = load_system(system_arg)?;
    if spec.formalism != Formalism::RiemannNewton {
        return Err(MechError::Validation(
            "geodesic runs need a riemann-newton system".into(),
        ));
    }
    // geodesics: drop the force
    spec.force = None;
    let metric = spec.metric.clone().expect("validated riemann system");
    let state0 = spec.initial_state(point)?;
    let n = spec.n();
    let samples = sample_times(tspan.0, tspan.1, dt_out);
    let provider = |t: f64, state: &[f64]| spec.field_at(t, state);
    // monitor g(v, v) along the curve
    let params = spec.params.clone();
    let metric2 = metric.clone();
    let speed = MonitorDef::new("speed_squared", move |_t, state: &[f64]| {
        let g = metric2.value_at(&state[..n], &params)?;
        let v = &state[n..];
        let gv = g.mul_vec(v);
        Ok(v.iter().zip(&gv).map(|(a, b)| a * b).sum())
    });
    let mut traj = integrate(
        &provider,
        &state0,
        tspan,
        &samples,
        &IntegratorConfig::default(),
        &[speed],
    )?;
    traj.system_id = spec.id.clone();
    let channel = &traj.monitors["speed_squared"];
    let drift = channel
        .iter()
        .map(|v| (v - channel[0]).abs())
        .fold(0.0, f64::max);
    let checks = vec![CheckLine::new("geodesic-speed-drift", drift, 1e-8)];
    let results = json!({
        "samples": traj.len(),
        "final_state": traj.final_state(),
        "speed_squared_initial": channel[0],
    });
    let config = json!({ "tspan": [tspan.0, tspan.1], "dt_out": dt_out, "point": point });
    let report = RunReport::finish("geodesic", &spec.id, config, results, checks, started);
    Ok((report, traj))
}

pub fn run_validate(system_arg: &str) -> Result<RunReport> {
    let started = Instant::now();
    let spec = load_system(system_arg)?;
    let results = json!({
        "formalism": spec.formalism.tag(),
        "coordinates": spec.coords,
        "phase_layout": spec.phase_layout()?.names(),
        "params": spec.params,
    });
    Ok(RunReport::finish(
        "validate",
        &spec.id,
        json!({}),
        results,
        vec![CheckLine::new("schema-valid", 0.0, 0.0)],
        started,
    ))
}

pub fn run_list() -> Value {
    json!(registry::list()
        .into_iter()
        .map(|(id, tag)| json!({ "id": id, "formalism": tag }))
        .collect::<Vec<_>>())
}

pub fn run_export(id: &str) -> Result<String> {
    Ok(registry::get_file(id)?.to_json_pretty())
}

impl SystemSpec {
    /// A Pontryagin point straight from raw unified state (no Legendre
    /// lift); used by the constraint-residual monitor.
    pub fn unified_point_raw(&self, t: f64, state: &[f64]) -> Result<crate::phase::PontryaginPoint> {
        let n = self.n();
        match self.formalism {
            Formalism::UnifiedAutonomous => crate::phase::PontryaginPoint::autonomous(
                state[..n].to_vec(),
                state[n..2 * n].to_vec(),
                state[2 * n..3 * n].to_vec(),
            ),
            Formalism::UnifiedExtended => crate::phase::PontryaginPoint::extended(
                t,
                state[..n].to_vec(),
                state[n..2 * n].to_vec(),
                state[2 * n..3 * n].to_vec(),
            ),
            Formalism::UnifiedContact => crate::phase::PontryaginPoint::contact(
                state[..n].to_vec(),
                state[n..2 * n].to_vec(),
                state[2 * n..3 * n].to_vec(),
                state[3 * n],
            ),
            _ => Err(MechError::Validation("not a unified system".into())),
        }
    }
}
