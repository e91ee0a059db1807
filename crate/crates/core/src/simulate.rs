//! Fixed-step RK4 integration of the saturated extremum-seeking loop and of
//! its averaged counterpart.

use std::f64::consts::TAU;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dither::{self, DitherSpec, PeriodInfo};
use crate::error::{check_dim, Error, Result};
use crate::model::{self, PlantSpec, SimplexWeight};
use crate::report::format_sig;

/// States with a component above this magnitude count as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e9;
/// Default samples per period of the fastest tone.
pub const DEFAULT_SAMPLES_PER_TONE: f64 = 40.0;
/// Coarsest accepted step, in samples per period of the fastest tone.
pub const MIN_SAMPLES_PER_TONE: f64 = 20.0;

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub plant: PlantSpec,
    pub dither: DitherSpec,
    pub gain: DMatrix<f64>,
    /// Weight selecting the true Hessian inside the polytope.
    pub alpha: SimplexWeight,
    pub theta_hat0: DVector<f64>,
    pub t_end: f64,
    pub step: f64,
}

impl SimConfig {
    /// Builds and validates a configuration; `step = None` picks [`default_step`].
    pub fn new(
        plant: PlantSpec,
        dither: DitherSpec,
        gain: DMatrix<f64>,
        alpha: SimplexWeight,
        theta_hat0: DVector<f64>,
        t_end: f64,
        step: Option<f64>,
    ) -> Result<Self> {
        let step = step.unwrap_or_else(|| default_step(&dither));
        let cfg = Self {
            plant,
            dither,
            gain,
            alpha,
            theta_hat0,
            t_end,
            step,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.plant.dim();
        check_dim("dither tones", n, self.dither.dim())?;
        check_dim("gain rows", n, self.gain.nrows())?;
        check_dim("gain columns", n, self.gain.ncols())?;
        check_dim("initial estimate", n, self.theta_hat0.len())?;
        check_dim("simplex weight", self.plant.hessian().n_vertices(), self.alpha.len())?;
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::InvalidInput(format!("step must be positive, got {}", self.step)));
        }
        let max_step = TAU / self.dither.max_frequency() / MIN_SAMPLES_PER_TONE;
        if self.step > max_step * (1.0 + 1e-12) {
            return Err(Error::InvalidInput(format!(
                "step {} exceeds {max_step} (fewer than {MIN_SAMPLES_PER_TONE} samples per fastest tone)",
                self.step
            )));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::InvalidInput(format!("t_end must be nonnegative, got {}", self.t_end)));
        }
        if self.gain.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidInput("gain must be finite".into()));
        }
        Ok(())
    }

    pub fn with_gain(&self, gain: DMatrix<f64>) -> Self {
        Self { gain, ..self.clone() }
    }

    pub fn with_dither(&self, dither: DitherSpec) -> Self {
        Self { dither, ..self.clone() }
    }

    /// Initial estimation error `θ̂(0) − θ*`.
    pub fn theta_tilde0(&self) -> DVector<f64> {
        &self.theta_hat0 - self.plant.optimizer()
    }
}

/// `(2π / ω_max) / 40`.
pub fn default_step(dither: &DitherSpec) -> f64 {
    TAU / dither.max_frequency() / DEFAULT_SAMPLES_PER_TONE
}

/// Time-indexed record of the full loop; one entry per integration step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub times: Vec<f64>,
    pub theta_hat: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub u_sat: Vec<Vec<f64>>,
    pub g_hat: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.theta_hat.first().map_or(0, Vec::len)
    }

    pub fn final_theta_hat(&self) -> Option<DVector<f64>> {
        self.theta_hat.last().map(|v| DVector::from_column_slice(v))
    }

    /// Indices of samples with `t ≥ t_last − window`.
    fn tail(&self, window: f64) -> std::ops::Range<usize> {
        let Some(&t_last) = self.times.last() else {
            return 0..0;
        };
        let start = self.times.partition_point(|t| *t < t_last - window);
        start..self.times.len()
    }

    /// Mean of `θ` over the final `window` seconds.
    pub fn mean_theta_over_tail(&self, window: f64) -> Option<DVector<f64>> {
        let range = self.tail(window);
        if range.is_empty() {
            return None;
        }
        let count = range.len() as f64;
        let mut acc = DVector::zeros(self.dim());
        for row in &self.theta[range] {
            acc += DVector::from_column_slice(row);
        }
        Some(acc / count)
    }

    /// Mean of `y` over the final `window` seconds.
    pub fn mean_y_over_tail(&self, window: f64) -> Option<f64> {
        let range = self.tail(window);
        if range.is_empty() {
            return None;
        }
        let count = range.len() as f64;
        Some(self.y[range].iter().sum::<f64>() / count)
    }

    /// Largest `‖θ − θ*‖` over the final `window` seconds.
    pub fn max_theta_error_over_tail(&self, window: f64, optimizer: &DVector<f64>) -> Option<f64> {
        let range = self.tail(window);
        self.theta[range]
            .iter()
            .map(|row| (DVector::from_column_slice(row) - optimizer).norm())
            .reduce(f64::max)
    }

    /// Largest `|y − Q*|` over the final `window` seconds.
    pub fn max_output_error_over_tail(&self, window: f64, optimum: f64) -> Option<f64> {
        let range = self.tail(window);
        self.y[range].iter().map(|y| (y - optimum).abs()).reduce(f64::max)
    }

    /// CSV with columns `t, theta_hat_*, theta_*, u_*, usat_*, ghat_*, y`, 12 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        for prefix in ["theta_hat", "theta", "u", "usat", "ghat"] {
            header.extend((1..=n).map(|i| format!("{prefix}_{i}")));
        }
        header.push("y".into());
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut rec = Vec::with_capacity(header.len());
            rec.push(format_sig(self.times[k], 12));
            for block in [&self.theta_hat, &self.theta, &self.u, &self.u_sat, &self.g_hat] {
                rec.extend(block[k].iter().map(|v| format_sig(*v, 12)));
            }
            rec.push(format_sig(self.y[k], 12));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trace of the averaged gradient state `Ĝ_av`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AverageTrace {
    pub times: Vec<f64>,
    pub g: Vec<Vec<f64>>,
}

impl AverageTrace {
    pub fn state(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.g[k])
    }
}

/// `Ĝ(t) = M(t) y(t)` with `y = Q(θ̂ + S(t))`.
pub fn gradient_estimate(
    plant: &PlantSpec,
    dither: &DitherSpec,
    alpha: &SimplexWeight,
    theta_hat: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>> {
    check_dim("dither tones", plant.dim(), dither.dim())?;
    check_dim("theta_hat", plant.dim(), theta_hat.len())?;
    let theta = theta_hat + dither::probe_signal(dither, t);
    let y = plant.map_eval(alpha, &theta)?;
    Ok(dither::demod_signal(dither, t) * y)
}

/// Four-term expansion `M Q* + ½ M θ̃ᵀHθ̃ + Ω θ̃ + ½ Ω S` with `Ω = (I + Δ) H`.
pub fn expanded_gradient(
    plant: &PlantSpec,
    dither: &DitherSpec,
    alpha: &SimplexWeight,
    theta_tilde: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>> {
    check_dim("dither tones", plant.dim(), dither.dim())?;
    check_dim("theta_tilde", plant.dim(), theta_tilde.len())?;
    let h = plant.hessian().at(alpha)?;
    let m = dither::demod_signal(dither, t);
    let s = dither::probe_signal(dither, t);
    let omega = dither::omega_matrix(dither, &h, t)?;
    let curvature = 0.5 * theta_tilde.dot(&(&h * theta_tilde));
    Ok(&m * plant.optimum_value() + &m * curvature + &omega * theta_tilde + (&omega * &s) * 0.5)
}

fn rk4_step<F>(field: &F, t: f64, x: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let k1 = field(t, x);
    let k2 = field(t + 0.5 * h, &(x + &k1 * (0.5 * h)));
    let k3 = field(t + 0.5 * h, &(x + &k2 * (0.5 * h)));
    let k4 = field(t + h, &(x + &k3 * h));
    x + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0)
}

/// Sample times `0, h, 2h, …` ending exactly at `t_end` (the last step may be shorter).
fn time_grid(t_end: f64, step: f64) -> Vec<f64> {
    let full = (t_end / step + 1e-9).floor() as usize;
    let mut times: Vec<f64> = (0..=full).map(|k| k as f64 * step).collect();
    if t_end - full as f64 * step > 1e-9 * step {
        times.push(t_end);
    }
    times
}

fn runaway(x: &DVector<f64>) -> bool {
    x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_THRESHOLD)
}

/// Point where the full loop left the finite region.
#[derive(Clone, Debug, PartialEq)]
pub struct Divergence {
    pub time: f64,
    pub last_state: Vec<f64>,
}

/// Integrates `θ̂̇ = sat(K M(t) y(t))` and records every step.
pub fn simulate_full(cfg: &SimConfig) -> Result<SimTrace> {
    match simulate_full_partial(cfg)? {
        (trace, None) => Ok(trace),
        (_, Some(d)) => Err(Error::Diverged {
            time: d.time,
            last_state: d.last_state,
        }),
    }
}

/// Same as [`simulate_full`], but a divergent run returns the trace recorded up
/// to the last finite state together with the divergence point.
pub fn simulate_full_partial(cfg: &SimConfig) -> Result<(SimTrace, Option<Divergence>)> {
    cfg.validate()?;
    let plant = &cfg.plant;
    let h = plant.hessian().at(&cfg.alpha)?;
    let limits = plant.sat_limits();
    let output = |theta_hat: &DVector<f64>, t: f64| {
        let theta = theta_hat + dither::probe_signal(&cfg.dither, t);
        let y = model::quadratic_map(plant.optimum_value(), plant.optimizer(), &h, &theta);
        let g = dither::demod_signal(&cfg.dither, t) * y;
        (theta, y, g)
    };
    let field = |t: f64, x: &DVector<f64>| {
        let (_, _, g) = output(x, t);
        model::saturate_unchecked(&(&cfg.gain * g), limits)
    };

    let grid = time_grid(cfg.t_end, cfg.step);
    let mut trace = SimTrace::default();
    let record = |trace: &mut SimTrace, t: f64, x: &DVector<f64>| {
        let (theta, y, g) = output(x, t);
        let u = &cfg.gain * &g;
        let u_sat = model::saturate_unchecked(&u, limits);
        trace.times.push(t);
        trace.theta_hat.push(x.as_slice().to_vec());
        trace.theta.push(theta.as_slice().to_vec());
        trace.u.push(u.as_slice().to_vec());
        trace.u_sat.push(u_sat.as_slice().to_vec());
        trace.g_hat.push(g.as_slice().to_vec());
        trace.y.push(y);
    };

    let mut x = cfg.theta_hat0.clone();
    record(&mut trace, 0.0, &x);
    for w in grid.windows(2) {
        let next = rk4_step(&field, w[0], &x, w[1] - w[0]);
        if runaway(&next) {
            let divergence = Divergence {
                time: w[0],
                last_state: x.as_slice().to_vec(),
            };
            return Ok((trace, Some(divergence)));
        }
        x = next;
        record(&mut trace, w[1], &x);
    }
    Ok((trace, None))
}

/// Integrates the averaged loop `Ĝ̇_av = H(α) sat(K Ĝ_av)` in original time.
pub fn simulate_average(
    plant: &PlantSpec,
    gain: &DMatrix<f64>,
    alpha: &SimplexWeight,
    g0: &DVector<f64>,
    t_end: f64,
    step: f64,
) -> Result<AverageTrace> {
    let h = plant.hessian().at(alpha)?;
    simulate_average_with(&h, gain, plant.sat_limits(), g0, t_end, step)
}

/// As [`simulate_average`] for an explicit Hessian.
pub fn simulate_average_with(
    hessian: &DMatrix<f64>,
    gain: &DMatrix<f64>,
    limits: &DVector<f64>,
    g0: &DVector<f64>,
    t_end: f64,
    step: f64,
) -> Result<AverageTrace> {
    let n = hessian.nrows();
    check_dim("gain rows", n, gain.nrows())?;
    check_dim("gain columns", n, gain.ncols())?;
    check_dim("saturation limits", n, limits.len())?;
    check_dim("initial gradient", n, g0.len())?;
    if !(step.is_finite() && step > 0.0) || !(t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::InvalidInput(format!("bad horizon t_end={t_end}, step={step}")));
    }
    let field = |_t: f64, g: &DVector<f64>| hessian * model::saturate_unchecked(&(gain * g), limits);
    let grid = time_grid(t_end, step);
    let mut trace = AverageTrace {
        times: Vec::with_capacity(grid.len()),
        g: Vec::with_capacity(grid.len()),
    };
    let mut x = g0.clone();
    trace.times.push(0.0);
    trace.g.push(x.as_slice().to_vec());
    for w in grid.windows(2) {
        let next = rk4_step(&field, w[0], &x, w[1] - w[0]);
        if runaway(&next) {
            return Err(Error::Diverged {
                time: w[0],
                last_state: x.as_slice().to_vec(),
            });
        }
        x = next;
        trace.times.push(w[1]);
        trace.g.push(x.as_slice().to_vec());
    }
    Ok(trace)
}

/// Relabels sample times by `τ = ω t`.
pub fn to_tau(trace: &SimTrace, period: &PeriodInfo) -> SimTrace {
    retime(trace, period.base_frequency)
}

/// Inverse of [`to_tau`].
pub fn from_tau(trace: &SimTrace, period: &PeriodInfo) -> SimTrace {
    retime(trace, 1.0 / period.base_frequency)
}

fn retime(trace: &SimTrace, factor: f64) -> SimTrace {
    SimTrace {
        times: trace.times.iter().map(|t| t * factor).collect(),
        ..trace.clone()
    }
}
