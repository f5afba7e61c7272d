//! Trajectory integration: fixed-step RK4 and an adaptive embedded
//! Runge-Kutta 5(4) pair (Dormand-Prince coefficients, FSAL), with cubic
//! Hermite dense output on accepted steps and named monitor channels
//! evaluated at the sample times.
//!
//! No structure preservation is built in; conservation and dissipation laws
//! are verified a posteriori through monitors, so the default tolerances are
//! tight (1e-10 absolute and relative).

use std::collections::BTreeMap;

use crate::error::{MechError, Result};

/// Right-hand side of the ODE: maps `(t, state)` to the state derivative.
pub trait FieldProvider {
    fn eval(&self, t: f64, state: &[f64]) -> Result<Vec<f64>>;
}

impl<F> FieldProvider for F
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    fn eval(&self, t: f64, state: &[f64]) -> Result<Vec<f64>> {
        self(t, state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Classical fixed-step fourth-order Runge-Kutta.
    Rk4 { dt: f64 },
    /// Adaptive Dormand-Prince 5(4).
    Adaptive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub min_step: f64,
    pub max_step: Option<f64>,
    pub initial_step: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::Adaptive,
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            min_step: 1e-12,
            max_step: None,
            initial_step: None,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tol(tol: f64) -> IntegratorConfig {
        IntegratorConfig {
            abs_tol: tol,
            rel_tol: tol,
            ..Default::default()
        }
    }
}

/// A monitor channel: a named scalar evaluated at every sample time.
pub struct MonitorDef {
    pub name: String,
    pub eval: Box<dyn Fn(f64, &[f64]) -> Result<f64>>,
}

impl MonitorDef {
    pub fn new(name: impl Into<String>, eval: impl Fn(f64, &[f64]) -> Result<f64> + 'static) -> Self {
        MonitorDef {
            name: name.into(),
            eval: Box::new(eval),
        }
    }
}

/// Integration step statistics, echoed into reports.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub field_evals: usize,
}

/// Time series of phase states plus monitor channels.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub monitors: BTreeMap<String, Vec<f64>>,
    pub system_id: String,
    pub stats: StepStats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("nonempty trajectory")
    }
}

/// Evenly spaced sample times covering `[t0, t1]`, endpoint included.
pub fn sample_times(t0: f64, t1: f64, dt: f64) -> Vec<f64> {
    assert!(dt > 0.0 && t1 > t0);
    let steps = ((t1 - t0) / dt).round().max(1.0) as usize;
    let mut out: Vec<f64> = (0..steps).map(|i| t0 + dt * i as f64).collect();
    out.push(t1);
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    out
}

/// Integrate `field` from `x0` over `[t0, t1]`, producing states at
/// `samples` (strictly increasing, starting at `t0`).
pub fn integrate(
    field: &dyn FieldProvider,
    x0: &[f64],
    t_span: (f64, f64),
    samples: &[f64],
    config: &IntegratorConfig,
    monitors: &[MonitorDef],
) -> Result<Trajectory> {
    let (t0, t1) = t_span;
    if !(t1 > t0) {
        return Err(MechError::Validation(format!(
            "time span must be increasing, got [{t0}, {t1}]"
        )));
    }
    if samples.is_empty() || samples[0] < t0 || *samples.last().unwrap() > t1 {
        return Err(MechError::Validation(
            "sample times must lie within the time span".into(),
        ));
    }
    if samples.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MechError::Validation(
            "sample times must be strictly increasing".into(),
        ));
    }

    let mut sink = SampleSink {
        requested: samples,
        next: 0,
        times: Vec::with_capacity(samples.len()),
        states: Vec::with_capacity(samples.len()),
    };
    let mut stats = StepStats::default();

    match config.method {
        Method::Rk4 { dt } => {
            rk4_drive(field, x0, t0, t1, dt, &mut sink, &mut stats)?;
        }
        Method::Adaptive => {
            dopri_drive(field, x0, t0, t1, config, &mut sink, &mut stats)?;
        }
    }

    let mut channels: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for m in monitors {
        let mut values = Vec::with_capacity(sink.times.len());
        for (t, state) in sink.times.iter().zip(&sink.states) {
            values.push((m.eval)(*t, state).map_err(|e| e.at_time(*t))?);
        }
        channels.insert(m.name.clone(), values);
    }

    Ok(Trajectory {
        times: sink.times,
        states: sink.states,
        monitors: channels,
        system_id: String::new(),
        stats,
    })
}

struct SampleSink<'a> {
    requested: &'a [f64],
    next: usize,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
}

impl SampleSink<'_> {
    /// Emit every requested sample inside `(t_a, t_b]` by cubic Hermite
    /// interpolation on the accepted step; `t == t_a` at the very start is
    /// emitted exactly.
    fn drain(
        &mut self,
        t_a: f64,
        y_a: &[f64],
        f_a: &[f64],
        t_b: f64,
        y_b: &[f64],
        f_b: &[f64],
    ) {
        let h = t_b - t_a;
        while self.next < self.requested.len() {
            let t = self.requested[self.next];
            if t > t_b + 1e-14 * t_b.abs().max(1.0) {
                break;
            }
            let state = if t >= t_b {
                y_b.to_vec()
            } else {
                hermite(t_a, y_a, f_a, h, y_b, f_b, t)
            };
            self.times.push(t);
            self.states.push(state);
            self.next += 1;
        }
    }

    fn emit_initial(&mut self, t0: f64, x0: &[f64]) {
        while self.next < self.requested.len() && self.requested[self.next] <= t0 {
            self.times.push(self.requested[self.next]);
            self.states.push(x0.to_vec());
            self.next += 1;
        }
    }
}

fn hermite(t_a: f64, y_a: &[f64], f_a: &[f64], h: f64, y_b: &[f64], f_b: &[f64], t: f64) -> Vec<f64> {
    let theta = (t - t_a) / h;
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + theta;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    (0..y_a.len())
        .map(|i| h00 * y_a[i] + h10 * h * f_a[i] + h01 * y_b[i] + h11 * h * f_b[i])
        .collect()
}

fn eval_field(
    field: &dyn FieldProvider,
    t: f64,
    y: &[f64],
    stats: &mut StepStats,
) -> Result<Vec<f64>> {
    stats.field_evals += 1;
    field.eval(t, y).map_err(|e| e.at_time(t))
}

fn rk4_drive(
    field: &dyn FieldProvider,
    x0: &[f64],
    t0: f64,
    t1: f64,
    dt: f64,
    sink: &mut SampleSink,
    stats: &mut StepStats,
) -> Result<()> {
    if !(dt > 0.0) {
        return Err(MechError::Validation("fixed step dt must be positive".into()));
    }
    let mut t = t0;
    let mut y = x0.to_vec();
    let mut f = eval_field(field, t, &y, stats)?;
    sink.emit_initial(t0, &y);
    while t < t1 {
        let h = dt.min(t1 - t);
        let k1 = f.clone();
        let y2: Vec<f64> = y.iter().zip(&k1).map(|(y, k)| y + 0.5 * h * k).collect();
        let k2 = eval_field(field, t + 0.5 * h, &y2, stats)?;
        let y3: Vec<f64> = y.iter().zip(&k2).map(|(y, k)| y + 0.5 * h * k).collect();
        let k3 = eval_field(field, t + 0.5 * h, &y3, stats)?;
        let y4: Vec<f64> = y.iter().zip(&k3).map(|(y, k)| y + h * k).collect();
        let k4 = eval_field(field, t + h, &y4, stats)?;
        let y_new: Vec<f64> = (0..y.len())
            .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        let t_new = t + h;
        let f_new = eval_field(field, t_new, &y_new, stats)?;
        sink.drain(t, &y, &f, t_new, &y_new, &f_new);
        t = t_new;
        y = y_new;
        f = f_new;
        stats.accepted += 1;
    }
    Ok(())
}

// Dormand-Prince 5(4) coefficients.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
// 5th-order solution weights equal A[5]; the embedded 4th-order weights:
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn dopri_drive(
    field: &dyn FieldProvider,
    x0: &[f64],
    t0: f64,
    t1: f64,
    config: &IntegratorConfig,
    sink: &mut SampleSink,
    stats: &mut StepStats,
) -> Result<()> {
    let dim = x0.len();
    let mut t = t0;
    let mut y = x0.to_vec();
    let mut f = eval_field(field, t, &y, stats)?;
    sink.emit_initial(t0, &y);

    let span = t1 - t0;
    let mut h = config.initial_step.unwrap_or_else(|| {
        let f_norm = f.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let y_norm = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let guess = 0.01 * (y_norm.max(1.0)) / f_norm.max(1e-8);
        guess.min(span / 10.0).max(config.min_step * 10.0)
    });
    if let Some(max_h) = config.max_step {
        h = h.min(max_h);
    }

    let mut k = vec![vec![0.0; dim]; 7];
    loop {
        if t >= t1 {
            return Ok(());
        }
        if h < config.min_step {
            return Err(MechError::StepUnderflow {
                t,
                min_step: config.min_step,
            });
        }
        let h_eff = h.min(t1 - t);
        k[0].clone_from(&f);
        let mut failed = false;
        for stage in 0..6 {
            let mut y_stage = y.clone();
            for (j, kj) in k.iter().enumerate().take(stage + 1) {
                let a = A[stage][j];
                if a != 0.0 {
                    for (ys, kv) in y_stage.iter_mut().zip(kj) {
                        *ys += h_eff * a * kv;
                    }
                }
            }
            match eval_field(field, t + C[stage] * h_eff, &y_stage, stats) {
                Ok(val) => k[stage + 1] = val,
                Err(err) => {
                    // A mid-step failure on a large trial step is retried with
                    // a smaller one; once the retry would underflow, the field
                    // error itself is reported.
                    if h_eff * 0.25 < config.min_step {
                        return Err(err);
                    }
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            h = h_eff * 0.25;
            stats.rejected += 1;
            continue;
        }

        // 5th-order solution (weights A[5] with k1..k6) and error estimate.
        let mut y_new = y.clone();
        for (j, kj) in k.iter().enumerate().take(6) {
            let b = A[5][j];
            if b != 0.0 {
                for (yn, kv) in y_new.iter_mut().zip(kj) {
                    *yn += h_eff * b * kv;
                }
            }
        }
        // FSAL: k7 at (t + h, y_new) equals the first stage of the next step.
        let f_new = k[6].clone();

        let mut err_norm = 0.0_f64;
        for i in 0..dim {
            let mut y4 = y[i];
            for (j, kj) in k.iter().enumerate() {
                if B4[j] != 0.0 {
                    y4 += h_eff * B4[j] * kj[i];
                }
            }
            let scale = config.abs_tol + config.rel_tol * y[i].abs().max(y_new[i].abs());
            err_norm = err_norm.max(((y_new[i] - y4) / scale).abs());
        }

        if err_norm <= 1.0 {
            let t_new = t + h_eff;
            sink.drain(t, &y, &k[0], t_new, &y_new, &f_new);
            t = t_new;
            y = y_new;
            f = f_new;
            stats.accepted += 1;
            let factor = if err_norm == 0.0 {
                5.0
            } else {
                (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = h_eff * factor;
            if let Some(max_h) = config.max_step {
                h = h.min(max_h);
            }
        } else {
            stats.rejected += 1;
            let factor = (0.9 * err_norm.powf(-0.2)).clamp(0.1, 0.9);
            h = h_eff * factor;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ho_field(t: f64, state: &[f64]) -> Result<Vec<f64>> {
        let _ = t;
        Ok(vec![state[1], -state[0]])
    }

    #[test]
    fn ho_matches_cosine() {
        let samples = sample_times(0.0, 10.0, 0.1);
        let traj = integrate(
            &ho_field,
            &[1.0, 0.0],
            (0.0, 10.0),
            &samples,
            &IntegratorConfig::default(),
            &[],
        )
        .unwrap();
        let mut max_err = 0.0_f64;
        for (t, state) in traj.times.iter().zip(&traj.states) {
            max_err = max_err.max((state[0] - t.cos()).abs());
        }
        assert!(max_err <= 1e-8, "max error {max_err:e}");
    }

    #[test]
    fn zero_field_is_constant() {
        let zero = |_t: f64, state: &[f64]| Ok(vec![0.0; state.len()]);
        let samples = sample_times(0.0, 5.0, 0.5);
        let traj = integrate(
            &zero,
            &[1.0, 2.0],
            (0.0, 5.0),
            &samples,
            &IntegratorConfig::default(),
            &[],
        )
        .unwrap();
        for state in &traj.states {
            assert_eq!(state, &vec![1.0, 2.0]);
        }
    }

    #[test]
    fn damped_ho_matches_underdamped_analytic() {
        let gamma = 0.1;
        let field = move |_t: f64, s: &[f64]| Ok(vec![s[1], -s[0] - gamma * s[1]]);
        let samples = sample_times(0.0, 10.0, 0.05);
        let traj = integrate(
            &field,
            &[1.0, 0.0],
            (0.0, 10.0),
            &samples,
            &IntegratorConfig::default(),
            &[],
        )
        .unwrap();
        let omega = (1.0 - gamma * gamma / 4.0).sqrt();
        let mut max_err = 0.0_f64;
        for (t, state) in traj.times.iter().zip(&traj.states) {
            let q = (-gamma * t / 2.0).exp()
                * ((omega * t).cos() + gamma / (2.0 * omega) * (omega * t).sin());
            max_err = max_err.max((state[0] - q).abs());
        }
        assert!(max_err <= 1e-5, "max error {max_err:e}");
    }

    #[test]
    fn rk4_halving_dt_reduces_error_sixteenfold() {
        let endpoint_error = |dt: f64| {
            let samples = vec![0.0, 5.0];
            let cfg = IntegratorConfig {
                method: Method::Rk4 { dt },
                ..Default::default()
            };
            let traj = integrate(&ho_field, &[1.0, 0.0], (0.0, 5.0), &samples, &cfg, &[]).unwrap();
            (traj.final_state()[0] - 5.0_f64.cos()).abs()
        };
        let coarse = endpoint_error(0.05);
        let fine = endpoint_error(0.025);
        let ratio = coarse / fine;
        assert!(
            (ratio - 16.0).abs() <= 0.2 * 16.0,
            "order ratio {ratio} not within 16 +/- 20%"
        );
    }

    #[test]
    fn adaptive_runs_are_bit_identical() {
        let samples = sample_times(0.0, 7.0, 0.25);
        let run = || {
            integrate(
                &ho_field,
                &[1.0, 0.0],
                (0.0, 7.0),
                &samples,
                &IntegratorConfig::default(),
                &[],
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.times, b.times);
        for (sa, sb) in a.states.iter().zip(&b.states) {
            for (va, vb) in sa.iter().zip(sb) {
                assert_eq!(va.to_bits(), vb.to_bits());
            }
        }
    }

    #[test]
    fn energy_drift_below_1e8_over_ten_units() {
        let samples = sample_times(0.0, 10.0, 0.1);
        let energy = MonitorDef::new("energy", |_t, s: &[f64]| {
            Ok(0.5 * (s[0] * s[0] + s[1] * s[1]))
        });
        let traj = integrate(
            &ho_field,
            &[1.0, 0.0],
            (0.0, 10.0),
            &samples,
            &IntegratorConfig::default(),
            &[energy],
        )
        .unwrap();
        let channel = &traj.monitors["energy"];
        let drift = channel
            .iter()
            .map(|e| (e - channel[0]).abs())
            .fold(0.0, f64::max);
        assert!(drift <= 1e-8, "energy drift {drift:e}");
    }

    #[test]
    fn field_error_reports_time() {
        let field = |t: f64, s: &[f64]| {
            if t > 1.0 {
                Err(MechError::Validation("boom".into()))
            } else {
                Ok(vec![s[1], -s[0]])
            }
        };
        let samples = sample_times(0.0, 5.0, 0.5);
        let err = integrate(
            &field,
            &[1.0, 0.0],
            (0.0, 5.0),
            &samples,
            &IntegratorConfig::default(),
            &[],
        )
        .unwrap_err();
        assert!(matches!(err, MechError::FieldAt { .. }), "{err}");
    }

    #[test]
    fn reversed_span_rejected() {
        let samples = vec![0.0];
        assert!(matches!(
            integrate(
                &ho_field,
                &[1.0, 0.0],
                (1.0, 0.0),
                &samples,
                &IntegratorConfig::default(),
                &[],
            ),
            Err(MechError::Validation(_))
        ));
    }

    #[test]
    fn monitor_channels_align_with_times() {
        let samples = sample_times(0.0, 2.0, 0.1);
        let time_channel = MonitorDef::new("time", |t, _s: &[f64]| Ok(t));
        let traj = integrate(
            &ho_field,
            &[1.0, 0.0],
            (0.0, 2.0),
            &samples,
            &IntegratorConfig::default(),
            &[time_channel],
        )
        .unwrap();
        assert_eq!(traj.monitors["time"], traj.times);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    }
}
