//! Time-domain simulation: implicit trapezoidal integration with an analytic
//! Newton Jacobian, piecewise-constant network topology switched at event
//! times, and uniform-grid recording of named output channels.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DynamicModel, DynamicsError, NetworkOp};
use crate::netred::AdmittanceMatrix;

/// Default shunt representing a bolted three-phase fault (pu on system base).
const DEFAULT_FAULT_ADMITTANCE: Complex64 = Complex64 { re: 0.0, im: -1.0e4 };
/// State magnitudes beyond this are treated as numerical divergence.
const BLOWUP_LIMIT: f64 = 1e6;
/// Tolerance for matching instants on the time axis.
const T_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("integration step rejected at t = {t:.6} s: {reason}")]
    StepRejected { t: f64, reason: String },
    #[error("state magnitude exceeded {limit:.1e} at t = {t:.6} s; trajectory diverged")]
    NumericBlowup { t: f64, limit: f64 },
    #[error("channel '{0}' is not recorded in this trajectory")]
    ChannelMissing(String),
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error("trajectories are sampled on different time grids")]
    TimeGridMismatch,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ThreePhaseFault,
    BranchTrip,
    LoadStep,
}

/// A switching event. `target` names a bus (fault, load step) or a branch by
/// its zero-based position in the case's branch list (trip).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub kind: EventKind,
    pub target: String,
    pub t_start: f64,
    /// Fault clearing time or load-step window; a trip is permanent and a
    /// load step without duration holds to the end.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    /// Fault shunt; defaults to a near-bolted -j1e4 pu.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault_admittance: Option<Complex64>,
    /// Multiplier applied to the constant-power load for a load step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub dt: f64,
    pub t_end: f64,
    pub newton_tol: f64,
    pub max_newton_iterations: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { dt: 0.005, t_end: 5.0, newton_tol: 1e-10, max_newton_iterations: 10 }
    }
}

/// Uniformly sampled named channels. `data[k]` holds the channel values at
/// `time[k]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub time: Vec<f64>,
    pub channels: Vec<String>,
    pub data: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn channel(&self, name: &str) -> Result<Vec<f64>, SimError> {
        let idx = self
            .channels
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| SimError::ChannelMissing(name.to_string()))?;
        Ok(self.data.iter().map(|row| row[idx]).collect())
    }
}

fn validate_events(model: &DynamicModel, events: &[Event]) -> Result<(), SimError> {
    for (k, ev) in events.iter().enumerate() {
        let label = format!("event {k} ({:?} '{}')", ev.kind, ev.target);
        if !ev.t_start.is_finite() || ev.t_start < 0.0 {
            return Err(SimError::InvalidEvent(format!("{label}: t_start must be >= 0")));
        }
        if let Some(d) = ev.duration {
            if !(d > 0.0) {
                return Err(SimError::InvalidEvent(format!("{label}: duration must be > 0")));
            }
        }
        match ev.kind {
            EventKind::ThreePhaseFault => {
                if model.base_admittance().index_of(&ev.target).is_none() {
                    return Err(SimError::InvalidEvent(format!("{label}: unknown bus")));
                }
                if ev.duration.is_none() {
                    return Err(SimError::InvalidEvent(format!(
                        "{label}: a fault requires a clearing duration"
                    )));
                }
            }
            EventKind::BranchTrip => {
                let idx: usize = ev.target.parse().map_err(|_| {
                    SimError::InvalidEvent(format!(
                        "{label}: target must be a zero-based branch index"
                    ))
                })?;
                if idx >= model.case.branches.len() {
                    return Err(SimError::InvalidEvent(format!(
                        "{label}: branch index {idx} out of range ({} branches)",
                        model.case.branches.len()
                    )));
                }
            }
            EventKind::LoadStep => {
                let has_load = model
                    .case
                    .loads
                    .iter()
                    .any(|l| l.bus == ev.target && l.s_pu(model.case.base_mva).norm() > 0.0);
                if !has_load {
                    return Err(SimError::InvalidEvent(format!(
                        "{label}: no constant-power load at that bus"
                    )));
                }
                if ev.scale.is_none() {
                    return Err(SimError::InvalidEvent(format!(
                        "{label}: a load step requires a scale"
                    )));
                }
            }
        }
    }
    Ok(())
}

fn event_end(ev: &Event) -> Option<f64> {
    match ev.kind {
        EventKind::ThreePhaseFault => ev.duration.map(|d| ev.t_start + d),
        EventKind::BranchTrip => None,
        EventKind::LoadStep => ev.duration.map(|d| ev.t_start + d),
    }
}

fn event_active(ev: &Event, t: f64) -> bool {
    t >= ev.t_start - T_EPS && event_end(ev).map(|e| t < e - T_EPS).unwrap_or(true)
}

/// Builds the case-level admittance with all events active at time `t`.
fn admittance_at_time(
    model: &DynamicModel,
    events: &[Event],
    t: f64,
) -> Result<AdmittanceMatrix, SimError> {
    let mut y = model.base_admittance().clone();
    for ev in events.iter().filter(|ev| event_active(ev, t)) {
        match ev.kind {
            EventKind::ThreePhaseFault => {
                let idx = y.index_of(&ev.target).expect("validated bus");
                y.add_shunt(idx, ev.fault_admittance.unwrap_or(DEFAULT_FAULT_ADMITTANCE));
            }
            EventKind::BranchTrip => {
                let br = &model.case.branches[ev.target.parse::<usize>().expect("validated")];
                let f = y.index_of(&br.from_bus).expect("case bus");
                let to = y.index_of(&br.to_bus).expect("case bus");
                // Stamping the negated branch removes it exactly.
                y.add_branch(f, to, -br.series_admittance, -br.shunt_admittance_total, br.tap);
            }
            EventKind::LoadStep => {
                let idx = y.index_of(&ev.target).expect("validated bus");
                let v0 = model.base_voltages()[idx];
                let s: Complex64 = model
                    .case
                    .loads
                    .iter()
                    .filter(|l| l.bus == ev.target)
                    .map(|l| l.s_pu(model.case.base_mva))
                    .sum();
                let y_conv = s.conj() / v0.norm_sqr();
                y.add_shunt(idx, y_conv * (ev.scale.expect("validated") - 1.0));
            }
        }
    }
    Ok(y)
}

/// Switching instants inside (0, t_end), deduplicated and sorted.
fn switch_times(events: &[Event], t_end: f64) -> Vec<f64> {
    let mut times: Vec<f64> = events
        .iter()
        .flat_map(|ev| [Some(ev.t_start), event_end(ev)])
        .flatten()
        .filter(|t| *t > T_EPS && *t < t_end - T_EPS)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() <= T_EPS);
    times
}

/// One implicit trapezoidal step from `x` over `h`, with Newton iteration on
/// the defect and step halving on failure.
fn trapezoidal_step(
    model: &DynamicModel,
    op: &NetworkOp,
    x: &DVector<f64>,
    t: f64,
    h: f64,
    opts: &SimOptions,
    depth: usize,
) -> Result<DVector<f64>, SimError> {
    let f0 = model.rhs(x, op)?;
    let mut x1 = x + &f0 * h;
    let n = x.len();
    let mut converged = false;
    for _ in 0..opts.max_newton_iterations {
        let (f1, j1) = model.rhs_and_jacobian(&x1, op)?;
        let g = &x1 - x - (&f0 + &f1) * (h / 2.0);
        let mut m = DMatrix::<f64>::identity(n, n);
        m -= j1 * (h / 2.0);
        let lu = m.lu();
        let Some(dx) = lu.solve(&(-&g)) else {
            return Err(SimError::StepRejected {
                t,
                reason: "Newton matrix is singular".into(),
            });
        };
        x1 += &dx;
        let scale = 1.0 + x1.amax();
        if dx.amax() <= opts.newton_tol * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        if depth >= 4 {
            return Err(SimError::StepRejected {
                t,
                reason: format!(
                    "Newton iteration failed to converge with step {h:.3e} s after repeated halving"
                ),
            });
        }
        let half = h / 2.0;
        let mid = trapezoidal_step(model, op, x, t, half, opts, depth + 1)?;
        return trapezoidal_step(model, op, &mid, t + half, half, opts, depth + 1);
    }
    if !x1.iter().all(|v| v.is_finite()) || x1.amax() > BLOWUP_LIMIT {
        return Err(SimError::NumericBlowup { t: t + h, limit: BLOWUP_LIMIT });
    }
    Ok(x1)
}

/// Integrates the model from its equilibrium through the event sequence,
/// recording every channel on the uniform grid `0, dt, 2 dt, ...`.
pub fn simulate(
    model: &DynamicModel,
    events: &[Event],
    opts: &SimOptions,
) -> Result<Trajectory, SimError> {
    if !(opts.dt > 0.0) || !(opts.t_end > opts.dt) {
        return Err(SimError::InvalidEvent(format!(
            "simulation needs 0 < dt < t_end, got dt = {}, t_end = {}",
            opts.dt, opts.t_end
        )));
    }
    validate_events(model, events)?;

    let n_rec = (opts.t_end / opts.dt + T_EPS).floor() as usize;
    let rec_times: Vec<f64> = (0..=n_rec).map(|k| k as f64 * opts.dt).collect();

    let mut boundaries = switch_times(events, opts.t_end);
    boundaries.push(opts.t_end);

    let channels = model.channel_names();
    let mut time = Vec::with_capacity(rec_times.len());
    let mut data: Vec<Vec<f64>> = Vec::with_capacity(rec_times.len());

    let mut x = model.equilibrium();
    let mut t = 0.0f64;
    let mut next_rec = 0usize;

    for seg_end in boundaries {
        let y = admittance_at_time(model, events, t)?;
        let op = model.op_for(&y)?;

        // Record the segment start (covers t = 0 and post-switch samples).
        while next_rec < rec_times.len() && rec_times[next_rec] <= t + T_EPS {
            time.push(rec_times[next_rec]);
            data.push(model.measure(&x, &op)?);
            next_rec += 1;
        }

        while t < seg_end - T_EPS {
            let mut h = opts.dt.min(seg_end - t);
            if next_rec < rec_times.len() {
                let to_rec = rec_times[next_rec] - t;
                if to_rec > T_EPS {
                    h = h.min(to_rec);
                }
            }
            x = trapezoidal_step(model, &op, &x, t, h, opts, 0)?;
            t += h;
            while next_rec < rec_times.len() && rec_times[next_rec] <= t + T_EPS {
                // A sample landing exactly on a switch instant is taken
                // after the switch, in the next segment; the final instant
                // has no next segment and is recorded here.
                if (rec_times[next_rec] - seg_end).abs() <= T_EPS
                    && seg_end < opts.t_end - T_EPS
                {
                    break;
                }
                time.push(rec_times[next_rec]);
                data.push(model.measure(&x, &op)?);
                next_rec += 1;
            }
        }
        t = seg_end;
    }

    Ok(Trajectory { time, channels, data })
}

#[derive(Debug, Clone, Serialize)]
pub struct ChannelMetric {
    pub channel: String,
    pub max_abs_diff: f64,
    pub rms_diff: f64,
    /// Peak-to-peak span of the reference channel, for normalization.
    pub ref_span: f64,
    /// RMS difference over the reference peak-to-peak span; absent when the
    /// reference channel never moves.
    pub nrmse: Option<f64>,
    /// Mean signed deviation over the final tenth of the window.
    pub steady_state_offset: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub channels: Vec<ChannelMetric>,
    pub worst_channel: String,
    pub worst_max_abs_diff: f64,
}

impl MetricsReport {
    pub fn metric(&self, channel: &str) -> Option<&ChannelMetric> {
        self.channels.iter().find(|c| c.channel == channel)
    }
}

/// Pointwise comparison of the channels common to both trajectories, which
/// must share one time grid. The first trajectory is the reference.
pub fn compare_trajectories(
    reference: &Trajectory,
    other: &Trajectory,
) -> Result<MetricsReport, SimError> {
    if reference.time.len() != other.time.len()
        || reference
            .time
            .iter()
            .zip(&other.time)
            .any(|(a, b)| (a - b).abs() > T_EPS)
    {
        return Err(SimError::TimeGridMismatch);
    }
    let mut channels = Vec::new();
    for (ci, name) in reference.channels.iter().enumerate() {
        let Some(cj) = other.channels.iter().position(|c| c == name) else {
            continue;
        };
        let n = reference.time.len();
        let tail_start = n - (n / 10).max(1);
        let mut max_abs = 0.0f64;
        let mut sum_sq = 0.0f64;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut tail_sum = 0.0f64;
        for (k, (ra, rb)) in reference.data.iter().zip(&other.data).enumerate() {
            let (a, b) = (ra[ci], rb[cj]);
            let d = (a - b).abs();
            max_abs = max_abs.max(d);
            sum_sq += d * d;
            lo = lo.min(a);
            hi = hi.max(a);
            if k >= tail_start {
                tail_sum += b - a;
            }
        }
        let rms_diff = (sum_sq / n as f64).sqrt();
        let ref_span = hi - lo;
        channels.push(ChannelMetric {
            channel: name.clone(),
            max_abs_diff: max_abs,
            rms_diff,
            ref_span,
            nrmse: (ref_span > 0.0).then(|| rms_diff / ref_span),
            steady_state_offset: tail_sum / (n - tail_start) as f64,
        });
    }
    let worst = channels
        .iter()
        .max_by(|a, b| a.max_abs_diff.total_cmp(&b.max_abs_diff))
        .cloned();
    let (worst_channel, worst_max_abs_diff) = worst
        .map(|c| (c.channel, c.max_abs_diff))
        .unwrap_or_default();
    Ok(MetricsReport { channels, worst_channel, worst_max_abs_diff })
}
