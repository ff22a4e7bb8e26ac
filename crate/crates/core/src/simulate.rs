//! Time-domain integration, settling diagnostics and parameter sweeps.
//!
//! The integrator is the Dormand–Prince 5(4) pair with first-same-as-last
//! reuse. A step whose result has an entry below `-NEGATIVE_EXCURSION` is
//! rejected and retried with half the step; smaller negative entries are
//! clipped to zero.

use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificates::{certify_model, Verdict};
use crate::closed_loop::ClosedLoop;
use crate::equilibria::{
    airc_switching_limit, nonlinear_steady_state, operating_equilibrium, SwitchingTable,
};
use crate::error::{Error, Result};
use crate::linearize::jacobian_for;
use crate::matrixlab::{classify, solve, spectral_abscissa, StabilityTag};
use crate::model::{AircParams, ControllerSpec, LinearNetwork, Model, Plant};

pub const ABSOLUTE_TOL: f64 = 1e-9;
pub const NEGATIVE_EXCURSION: f64 = 1e-8;
/// Largest annihilation rate accepted for simulation.
pub const ETA_CAP: f64 = 1e4;
/// Half-width of the settling band, relative to the set-point.
pub const SETTLING_BAND: f64 = 0.02;
/// Fraction of the horizon the output must stay inside the band.
pub const SETTLING_HOLD: f64 = 0.1;
pub const INITIAL_CONTROLLER_STATE: f64 = 1e-3;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub t_end: f64,
    /// Relative tolerance.
    pub tol: f64,
    /// Defaults to `t_end / 100`.
    #[serde(default)]
    pub max_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            t_end: 200.0,
            tol: 1e-6,
            max_step: None,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverStats {
    pub accepted: usize,
    pub rejected: usize,
    /// Rejections caused by a negative excursion.
    pub negative_rejections: usize,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub labels: Vec<String>,
    pub plant_dim: usize,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stats: SolverStats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map_or(&[], Vec::as_slice)
    }

    pub fn series(&self, index: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[index]).collect()
    }

    /// The output species `x_n`.
    pub fn output(&self) -> Vec<f64> {
        self.series(self.plant_dim - 1)
    }

    pub fn min_entry(&self) -> f64 {
        self.states
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// CSV with a `t` column followed by one column per state.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        let mut header = vec!["t".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header).map_err(io)?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let mut rec = vec![t.to_string()];
            rec.extend(s.iter().map(f64::to_string));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

/// `x1..xn` followed by the controller state names.
pub fn state_labels(n: usize, ctrl: &ControllerSpec) -> Vec<String> {
    let mut labels: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    match ctrl.state_dim() {
        1 => labels.push("z".into()),
        k => labels.extend((1..=k).map(|i| format!("z{i}"))),
    }
    labels
}

fn eta_of(ctrl: &ControllerSpec) -> Option<f64> {
    match ctrl {
        ControllerSpec::Airc(c) => Some(c.eta),
        ControllerSpec::PType(c) => Some(c.eta),
        _ => None,
    }
}

fn scaled_rms(v: &DVector<f64>, y0: &DVector<f64>, y1: &DVector<f64>, rtol: f64) -> f64 {
    let n = v.len() as f64;
    let sum: f64 = (0..v.len())
        .map(|i| {
            let sc = ABSOLUTE_TOL + rtol * y0[i].abs().max(y1[i].abs());
            (v[i] / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn initial_step(
    cl: &ClosedLoop,
    y: &DVector<f64>,
    f: &DVector<f64>,
    rtol: f64,
    h_max: f64,
) -> f64 {
    let d0 = scaled_rms(y, y, y, rtol);
    let d1 = scaled_rms(f, y, y, rtol);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(h_max);
    let y1 = y + f * h0;
    let f1 = cl.field_relaxed(&y1);
    let d2 = scaled_rms(&(f1 - f), y, y, rtol) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(h_max)
}

/// Integrates the closed loop from `x0` over `[0, t_end]`, recording every
/// accepted step.
pub fn integrate(cl: &ClosedLoop, x0: &DVector<f64>, opts: &SimOptions) -> Result<Trajectory> {
    let dim = cl.dim();
    if x0.len() != dim {
        return Err(Error::Dimension(format!(
            "initial state has length {}, expected {dim}",
            x0.len()
        )));
    }
    if x0.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Precondition("initial state must be finite and nonnegative".into()));
    }
    if !(opts.t_end > 0.0) || !(opts.tol > 0.0) {
        return Err(Error::Precondition("t_end and tol must be positive".into()));
    }
    if let Some(eta) = eta_of(&cl.controller) {
        if eta > ETA_CAP {
            return Err(Error::Precondition(format!(
                "eta = {eta} exceeds the simulation cap {ETA_CAP}"
            )));
        }
    }
    let h_max = opts.max_step.unwrap_or(opts.t_end / 100.0);
    let rtol = opts.tol;
    let mut stats = SolverStats::default();
    let mut t = 0.0;
    let mut y = x0.clone();
    let mut f = cl.field_relaxed(&y);
    stats.evaluations += 1;
    let mut h = initial_step(cl, &y, &f, rtol, h_max);
    stats.evaluations += 1;
    let mut times = vec![t];
    let mut states = vec![y.as_slice().to_vec()];
    let mut last_rejected = false;
    let mut k: [DVector<f64>; 7] = std::array::from_fn(|_| DVector::zeros(dim));

    while t < opts.t_end {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::StiffnessSuspected { time: t });
        }
        h = h.min(opts.t_end - t);
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StiffnessSuspected { time: t });
        }
        k[0].copy_from(&f);
        for s in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate().take(s) {
                if A[s][j] != 0.0 {
                    ys.axpy(h * A[s][j], kj, 1.0);
                }
            }
            debug_assert!(C[s] > 0.0);
            k[s] = cl.field_relaxed(&ys);
        }
        stats.evaluations += 6;
        // row 6 of A holds the fifth-order weights, so stage 7 is at y_new
        let mut y_new = y.clone();
        for (j, kj) in k.iter().enumerate().take(6) {
            if A[6][j] != 0.0 {
                y_new.axpy(h * A[6][j], kj, 1.0);
            }
        }
        let mut err = DVector::zeros(dim);
        for (j, kj) in k.iter().enumerate() {
            if E[j] != 0.0 {
                err.axpy(h * E[j], kj, 1.0);
            }
        }
        let e = scaled_rms(&err, &y, &y_new, rtol);
        if !e.is_finite() || e > 1.0 {
            stats.rejected += 1;
            let factor = if e.is_finite() { (0.9 * e.powf(-0.2)).max(0.2) } else { 0.2 };
            h *= factor;
            last_rejected = true;
            continue;
        }
        if y_new.min() < -NEGATIVE_EXCURSION {
            stats.rejected += 1;
            stats.negative_rejections += 1;
            h *= 0.5;
            last_rejected = true;
            continue;
        }
        let clipped = y_new.iter().any(|&v| v < 0.0);
        if clipped {
            y_new.iter_mut().for_each(|v| *v = v.max(0.0));
            f = cl.field_relaxed(&y_new);
            stats.evaluations += 1;
        } else {
            f = k[6].clone();
        }
        t = if opts.t_end - (t + h) < 1e-12 * opts.t_end { opts.t_end } else { t + h };
        y = y_new;
        stats.accepted += 1;
        times.push(t);
        states.push(y.as_slice().to_vec());
        let mut factor = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
        if last_rejected {
            factor = factor.min(1.0);
        }
        last_rejected = false;
        h = (h * factor).min(h_max);
    }
    Ok(Trajectory {
        labels: state_labels(cl.plant.dim(), &cl.controller),
        plant_dim: cl.plant.dim(),
        times,
        states,
        stats,
    })
}

/// Open-loop steady state `−A⁻¹b₀` when `A` is Metzler and Hurwitz, the
/// zero-effort steady state for nonlinear plants, otherwise `0.1` in every
/// species. Controller states start at `INITIAL_CONTROLLER_STATE`.
pub fn default_initial_state(plant: &Plant, ctrl: &ControllerSpec) -> DVector<f64> {
    let n = plant.dim();
    let fallback = DVector::from_element(n, 0.1);
    let x = match plant {
        Plant::Linear(l) if classify(&l.a).tag == StabilityTag::MetzlerHurwitz => {
            solve(l.a.as_matrix(), &(-&l.b0))
                .map(|s| s.x.map(|v| v.max(0.0)))
                .unwrap_or(fallback)
        }
        Plant::Linear(_) => fallback,
        Plant::Nonlinear(nl) => nonlinear_steady_state(nl, 0.0).unwrap_or(fallback),
    };
    let m = ctrl.state_dim();
    DVector::from_iterator(
        n + m,
        x.iter()
            .copied()
            .chain(std::iter::repeat_n(INITIAL_CONTROLLER_STATE, m)),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settling {
    pub settled: bool,
    /// Time at which the output enters the band for the last time.
    pub settling_time: Option<f64>,
    /// `|x_n(t_end) − r|`
    pub steady_state_error: f64,
}

/// Settling of the output to `r`: inside the band from some time on, for at
/// least `SETTLING_HOLD` of the horizon.
pub fn settling(traj: &Trajectory, r: f64) -> Settling {
    let y = traj.output();
    let band = SETTLING_BAND * r.abs();
    let Some(&last) = y.last() else {
        return Settling {
            settled: false,
            settling_time: None,
            steady_state_error: f64::NAN,
        };
    };
    let mut first = y.len();
    while first > 0 && (y[first - 1] - r).abs() < band {
        first -= 1;
    }
    let t0 = traj.times[0];
    let t_end = *traj.times.last().unwrap();
    let settled = first < y.len() && t_end - traj.times[first] >= SETTLING_HOLD * (t_end - t0);
    Settling {
        settled,
        settling_time: settled.then(|| traj.times[first] - t0),
        steady_state_error: (last - r).abs(),
    }
}

/// Largest gap between the slope of `z₁ − z₂` over each step and the step
/// average of `μ − θx_n`, relative to the peak of `|μ − θx_n|`. The average
/// uses the trapezoid rule with the end-point derivative correction.
pub fn antithetic_identity_error(cl: &ClosedLoop, traj: &Trajectory) -> Result<f64> {
    let (mu, theta) = match cl.controller {
        ControllerSpec::Airc(c) => (c.mu, c.theta),
        ControllerSpec::PType(c) => (c.mu, c.theta),
        _ => {
            return Err(Error::Unsupported(
                "identity applies to two-species antithetic controllers".into(),
            ))
        }
    };
    let n = traj.plant_dim;
    let drive: Vec<f64> = traj.states.iter().map(|s| mu - theta * s[n - 1]).collect();
    let rate: Vec<f64> = traj
        .states
        .iter()
        .map(|s| -theta * cl.field_relaxed(&DVector::from_column_slice(s))[n - 1])
        .collect();
    let scale = drive.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for i in 1..traj.len() {
        let dt = traj.times[i] - traj.times[i - 1];
        let (a, b) = (&traj.states[i - 1], &traj.states[i]);
        let slope = ((b[n] - b[n + 1]) - (a[n] - a[n + 1])) / dt;
        let avg = 0.5 * (drive[i - 1] + drive[i]) + dt * (rate[i - 1] - rate[i]) / 12.0;
        worst = worst.max((slope - avg).abs());
    }
    Ok(worst / scale)
}

/// Simulates a model from its default initial state.
pub fn simulate_model(model: &Model, opts: &SimOptions) -> Result<Trajectory> {
    let x0 = default_initial_state(&model.plant, &model.controller);
    integrate(&ClosedLoop::new(&model.plant, model.controller), &x0, opts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub name: String,
    pub values: Vec<f64>,
}

impl SweepAxis {
    /// Parses `name=lo:hi:count` (linear) or `name=lo:hi:countlog`.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = || Error::Precondition(format!("axis `{spec}` is not name=lo:hi:count[log]"));
        let (name, range) = spec.split_once('=').ok_or_else(bad)?;
        let (values, log) = parse_range(range).ok_or_else(bad)?;
        if name.is_empty() || values.is_empty() || (log && values.iter().any(|&v| !(v > 0.0))) {
            return Err(bad());
        }
        Ok(Self {
            name: name.trim().to_string(),
            values,
        })
    }
}

/// `lo:hi:count` or `lo:hi:countlog`. Returns the grid and whether it is
/// logarithmic.
pub fn parse_range(range: &str) -> Option<(Vec<f64>, bool)> {
    let parts: Vec<&str> = range.split(':').collect();
    let [lo, hi, count] = parts.as_slice() else {
        return None;
    };
    let lo: f64 = lo.trim().parse().ok()?;
    let hi: f64 = hi.trim().parse().ok()?;
    let count = count.trim();
    let (count, log) = match count.strip_suffix("log") {
        Some(c) => (c, true),
        None => (count, false),
    };
    let count: usize = count.parse().ok()?;
    if count == 0 || !lo.is_finite() || !hi.is_finite() || hi < lo {
        return None;
    }
    let values = if log {
        if !(lo > 0.0) {
            return None;
        }
        crate::certificates::log_grid(lo, hi, count)
    } else if count == 1 {
        vec![lo]
    } else {
        (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect()
    };
    Some((values, log))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub simulate: bool,
    pub sim: SimOptions,
    /// Worker count; `None` reads `REINSTAB_THREADS`, then uses the default.
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub index: usize,
    pub params: Vec<f64>,
    pub verdict: Verdict,
    pub abscissa: Option<f64>,
    pub settled: Option<bool>,
    pub settling_time: Option<f64>,
    pub steady_state_error: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axes: Vec<SweepAxis>,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    /// Every cell has a computed abscissa below `-tol`.
    pub fn all_stable(&self, tol: f64) -> bool {
        self.cells
            .iter()
            .all(|c| c.abscissa.is_some_and(|a| a < -tol))
    }

    pub fn max_abscissa(&self) -> Option<f64> {
        self.cells
            .iter()
            .filter_map(|c| c.abscissa)
            .reduce(f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        let mut header: Vec<String> = self.axes.iter().map(|a| a.name.clone()).collect();
        header.extend(
            ["verdict", "abscissa", "settled", "settling_time", "steady_state_error", "error"]
                .map(String::from),
        );
        w.write_record(&header).map_err(io)?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for c in &self.cells {
            let mut rec: Vec<String> = c.params.iter().map(f64::to_string).collect();
            rec.push(format!("{:?}", c.verdict));
            rec.push(opt(c.abscissa));
            rec.push(c.settled.map_or(String::new(), |s| s.to_string()));
            rec.push(opt(c.settling_time));
            rec.push(opt(c.steady_state_error));
            rec.push(c.error.clone().unwrap_or_default());
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

/// Worker count from `REINSTAB_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("REINSTAB_THREADS")
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|&n: &usize| n > 0)
}

fn sweep_cell(model: &Model, axes: &[SweepAxis], index: usize, params: Vec<f64>, opts: &SweepOptions) -> SweepCell {
    let mut ctrl = model.controller;
    for (axis, &v) in axes.iter().zip(&params) {
        // names were checked against the template
        let _ = ctrl.set_param(&axis.name, v);
    }
    let cell_model = Model {
        controller: ctrl,
        ..model.clone()
    };
    let verdict = certify_model(&cell_model).verdict;
    let mut cell = SweepCell {
        index,
        params,
        verdict,
        abscissa: None,
        settled: None,
        settling_time: None,
        steady_state_error: None,
        error: None,
    };
    let analysis = operating_equilibrium(&model.plant, &ctrl)
        .and_then(|eq| jacobian_for(&model.plant, &ctrl, &eq));
    match analysis {
        Ok(j) => cell.abscissa = Some(spectral_abscissa(&j.matrix)),
        Err(e) => {
            cell.error = Some(e.to_string());
            return cell;
        }
    }
    if opts.simulate {
        match simulate_model(&cell_model, &opts.sim) {
            Ok(traj) => {
                let s = settling(&traj, ctrl.setpoint());
                cell.settled = Some(s.settled);
                cell.settling_time = s.settling_time;
                cell.steady_state_error = Some(s.steady_state_error);
            }
            Err(e) => cell.error = Some(e.to_string()),
        }
    }
    cell
}

/// Certificate, Jacobian abscissa and optionally a simulation at every point
/// of the product grid. The first axis varies slowest. Cell failures are
/// recorded in the cell.
pub fn sweep(model: &Model, axes: &[SweepAxis], opts: &SweepOptions) -> Result<SweepResult> {
    if axes.is_empty() {
        return Err(Error::Precondition("a sweep needs at least one axis".into()));
    }
    let mut probe = model.controller;
    for axis in axes {
        if axis.values.is_empty() || axis.values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Precondition(format!(
                "axis `{}` needs positive values",
                axis.name
            )));
        }
        probe.set_param(&axis.name, axis.values[0])?;
    }
    let total: usize = axes.iter().map(|a| a.values.len()).product();
    let grid: Vec<Vec<f64>> = (0..total)
        .map(|mut i| {
            let mut p = vec![0.0; axes.len()];
            for (k, axis) in axes.iter().enumerate().rev() {
                let len = axis.values.len();
                p[k] = axis.values[i % len];
                i /= len;
            }
            p
        })
        .collect();
    let run = || -> Vec<SweepCell> {
        grid.into_par_iter()
            .enumerate()
            .map(|(i, p)| sweep_cell(model, axes, i, p, opts))
            .collect()
    };
    let cells = match opts.threads.or_else(threads_from_env) {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Io(e.to_string()))?
            .install(run),
        None => run(),
    };
    Ok(SweepResult {
        axes: axes.to_vec(),
        cells,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchingRun {
    pub eta: f64,
    pub abscissa: Option<f64>,
    pub simulated: bool,
    /// Final state within `10⁻²(1 + |y⋆|∞)` of the equilibrium.
    pub converged: Option<bool>,
    pub final_z1: Option<f64>,
    pub final_z2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchingExperiment {
    pub table: SwitchingTable,
    pub runs: Vec<SwitchingRun>,
}

/// AIRC equilibria along an `η` grid with their predicted limits, plus a
/// simulation from the default initial state wherever the Jacobian is
/// Hurwitz and `η ≤ ETA_CAP`.
pub fn switching_experiment(
    net: &LinearNetwork,
    ctrl: &AircParams,
    eta_grid: &[f64],
    opts: &SimOptions,
) -> Result<SwitchingExperiment> {
    let table = airc_switching_limit(net, ctrl, eta_grid)?;
    let plant = Plant::Linear(net.clone());
    let runs = eta_grid
        .iter()
        .map(|&eta| {
            let spec = ControllerSpec::Airc(AircParams { eta, ..*ctrl });
            let mut run = SwitchingRun {
                eta,
                abscissa: None,
                simulated: false,
                converged: None,
                final_z1: None,
                final_z2: None,
                note: None,
            };
            let eq = match operating_equilibrium(&plant, &spec) {
                Ok(eq) => eq,
                Err(e) => {
                    run.note = Some(e.to_string());
                    return run;
                }
            };
            let abscissa = jacobian_for(&plant, &spec, &eq).map(|j| spectral_abscissa(&j.matrix));
            run.abscissa = abscissa.as_ref().ok().copied();
            if !abscissa.is_ok_and(|a| a < 0.0) {
                run.note = Some("Jacobian not Hurwitz; not simulated".into());
                return run;
            }
            if eta > ETA_CAP {
                run.note = Some(format!("eta above the simulation cap {ETA_CAP}"));
                return run;
            }
            let x0 = default_initial_state(&plant, &spec);
            match integrate(&ClosedLoop::new(&plant, spec), &x0, opts) {
                Ok(traj) => {
                    let y = traj.final_state();
                    let target = eq.state();
                    let scale = 1.0 + target.amax();
                    let gap = y
                        .iter()
                        .zip(target.iter())
                        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                    let n = net.dim();
                    run.simulated = true;
                    run.converged = Some(gap <= 1e-2 * scale);
                    run.final_z1 = Some(y[n]);
                    run.final_z2 = Some(y[n + 1]);
                }
                Err(e) => run.note = Some(e.to_string()),
            }
            run
        })
        .collect();
    Ok(SwitchingExperiment { table, runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixlab::RealMatrix;
    use crate::model::{LogisticIc, PTypeAic};

    fn example1() -> LinearNetwork {
        LinearNetwork::new(
            RealMatrix::from_rows(&[
                vec![-1.0, 0.0, 0.5],
                vec![1.0, -1.0, 0.0],
                vec![0.0, 1.0, -1.0],
            ])
            .unwrap(),
            DVector::from_vec(vec![1.0, 0.0, 0.0]),
        )
        .unwrap()
    }

    fn model(ctrl: ControllerSpec) -> Model {
        Model {
            name: None,
            plant: Plant::Linear(example1()),
            controller: ctrl,
        }
    }

    fn ptype() -> ControllerSpec {
        ControllerSpec::PType(PTypeAic { mu: 1.0, theta: 1.0, eta: 1.0, kp: 1.0 })
    }

    #[test]
    fn exponential_decay_matches_closed_form() {
        // scalar x' = -x + 0 with a logistic controller parked at z = 0
        let plant = Plant::Linear(
            LinearNetwork::new(
                RealMatrix::from_rows(&[vec![-1.0]]).unwrap(),
                DVector::from_vec(vec![0.0]),
            )
            .unwrap(),
        );
        let ctrl = ControllerSpec::Logistic(LogisticIc { r: 1.0, k: 1.0, beta: 1.0 });
        let cl = ClosedLoop::new(&plant, ctrl);
        let traj = integrate(
            &cl,
            &DVector::from_vec(vec![1.0, 0.0]),
            &SimOptions { t_end: 5.0, tol: 1e-10, ..SimOptions::default() },
        )
        .unwrap();
        assert!((traj.final_state()[0] - (-5.0f64).exp()).abs() < 1e-9);
        assert_eq!(traj.times.last(), Some(&5.0));
    }

    #[test]
    fn ptype_settles_and_identity_holds() {
        let m = model(ptype());
        let traj = simulate_model(&m, &SimOptions::default()).unwrap();
        let s = settling(&traj, 1.0);
        assert!(s.settled, "{s:?}");
        assert!(s.steady_state_error < 0.01);
        assert!(traj.min_entry() >= -NEGATIVE_EXCURSION);
        let cl = ClosedLoop::new(&m.plant, m.controller);
        let e = antithetic_identity_error(&cl, &traj).unwrap();
        assert!(e < 1e-3, "identity error {e}");
    }

    #[test]
    fn zero_coordinate_stays_nonnegative() {
        let m = model(ptype());
        let cl = ClosedLoop::new(&m.plant, m.controller);
        let x0 = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 0.0]);
        let traj = integrate(&cl, &x0, &SimOptions { t_end: 50.0, ..SimOptions::default() }).unwrap();
        assert!(traj.min_entry() >= 0.0);
    }

    #[test]
    fn eta_cap_is_enforced() {
        let m = model(ControllerSpec::PType(PTypeAic { mu: 1.0, theta: 1.0, eta: 1e5, kp: 1.0 }));
        assert!(matches!(
            simulate_model(&m, &SimOptions::default()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn axis_parsing() {
        let a = SweepAxis::parse("kp=1e-3:1e3:13log").unwrap();
        assert_eq!(a.name, "kp");
        assert_eq!(a.values.len(), 13);
        let a = SweepAxis::parse("r=0:1:5").unwrap();
        assert_eq!(a.values, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        for bad in ["kp", "kp=1:2", "kp=0:1:3log", "kp=2:1:3", "kp=1:2:x"] {
            assert!(SweepAxis::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn sweep_orders_cells_row_major() {
        let axes = [
            SweepAxis { name: "kp".into(), values: vec![0.1, 1.0] },
            SweepAxis { name: "eta".into(), values: vec![0.5, 5.0, 50.0] },
        ];
        let res = sweep(&model(ptype()), &axes, &SweepOptions::default()).unwrap();
        assert_eq!(res.cells.len(), 6);
        assert_eq!(res.cells[1].params, vec![0.1, 5.0]);
        assert_eq!(res.cells[3].params, vec![1.0, 0.5]);
        assert!(res.all_stable(1e-9));
        assert!(res.cells.iter().all(|c| c.verdict == Verdict::StructurallyStable));
        let bad = [SweepAxis { name: "ki".into(), values: vec![1.0] }];
        assert!(sweep(&model(ptype()), &bad, &SweepOptions::default()).is_err());
    }

    #[test]
    fn sweep_with_simulation() {
        let axes = [SweepAxis { name: "r".into(), values: vec![0.5, 1.0, 1.5] }];
        let opts = SweepOptions { simulate: true, ..SweepOptions::default() };
        let res = sweep(&model(ptype()), &axes, &opts).unwrap();
        for c in &res.cells {
            assert_eq!(c.settled, Some(true), "{c:?}");
            assert!(c.steady_state_error.unwrap() < 0.02 * c.params[0]);
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let axes = [SweepAxis { name: "kp".into(), values: vec![1.0, 2.0] }];
        let res = sweep(&model(ptype()), &axes, &SweepOptions::default()).unwrap();
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("kp,verdict,abscissa"));
    }

    #[test]
    fn switching_runs_converge() {
        let ctrl = AircParams { mu: 1.0, theta: 1.0, eta: 1.0, ki: 1.0, kp: 1.0 };
        let exp = switching_experiment(&example1(), &ctrl, &[1.0, 10.0, 100.0], &SimOptions::default())
            .unwrap();
        assert_eq!(exp.runs.len(), 3);
        for r in &exp.runs {
            assert_eq!(r.converged, Some(true), "{r:?}");
        }
    }
}
