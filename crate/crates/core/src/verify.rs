//! Empirical checks of the certified properties: Lyapunov decay and invariance
//! of the certified ellipsoid, the sector inequality, averaging and amplitude
//! orders of the full loop, and gain comparisons.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dither::common_period;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, serde_rows};
use crate::lmi::{ellipsoid_of, Certificate, Ellipsoid};
use crate::model::{self, sample_simplex_with, PlantSpec, PolytopicHessian, SimplexWeight};
use crate::report::{format_sig, LinePlot, Series};
use crate::simulate::{simulate_average_with, simulate_full, SimConfig, SimTrace};

/// Relative slack on the pointwise decay and transient bounds.
pub const DEFAULT_RATE_TOL: f64 = 1e-3;
/// Sector inequality tolerance.
pub const SECTOR_TOL: f64 = 1e-12;
/// Steady-state ball multiple of the dither amplitude that counts as converged.
pub const CONVERGENCE_FACTOR: f64 = 3.0;
/// Largest log-log slope accepted as first-order averaging behaviour.
pub const SWEEP_MAX_ORDER: f64 = -0.7;
/// Accepted range of residual ratios between consecutive frequency doublings.
pub const SWEEP_RATIO_RANGE: (f64, f64) = (0.3, 0.8);
/// Ratio inversions tolerated before a sweep is flagged.
pub const SWEEP_MAX_INVERSIONS: usize = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayOptions {
    pub n_traj: usize,
    pub t_end: f64,
    pub step: f64,
    pub rate_tol: f64,
    pub seed: u64,
}

impl Default for DecayOptions {
    fn default() -> Self {
        Self {
            n_traj: 64,
            t_end: 5.0,
            step: 2e-3,
            rate_tol: DEFAULT_RATE_TOL,
            seed: 0,
        }
    }
}

/// Initial averaged state together with the Hessian weight it is simulated under.
#[derive(Clone, Debug, PartialEq)]
pub struct Start {
    pub alpha: SimplexWeight,
    pub g0: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// Smallest empirical exponent `−ln(V(t)/V(0))/t` over all samples with `t > 0`.
    pub worst_rate: f64,
    /// `2η`, the exponent certified for `V`.
    pub required_rate: f64,
    /// Largest `V(t) / (V(0) e^{−2ηt})`.
    pub worst_decay_ratio: f64,
    /// Largest `‖G(t)‖ / (κ e^{−ηt} ‖G(0)‖)`.
    pub worst_kappa_ratio: f64,
    pub kappa: f64,
    pub rate_tol: f64,
    /// Samples with `V > 1` for trajectories starting in the ellipsoid.
    pub excursions: usize,
    pub pass: bool,
    pub trajectories: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub trajectories: usize,
    /// Largest `GᵀPG` seen after the start.
    pub worst_level: f64,
    pub excursions: usize,
    /// Largest `ψ(KG)ᵀU(ψ(KG) − LG)` along the trajectories.
    pub worst_sector: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorReport {
    pub samples: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// Base frequencies, strictly increasing.
    pub omegas: Vec<f64>,
    /// `sup ‖θ̃(t) − H⁻¹ G_av(t)‖` after one period, per frequency.
    pub residuals: Vec<f64>,
    /// Slope of `ln residual` against `ln ω`.
    pub fitted_order: f64,
    /// `residual[i+1] / residual[i]`.
    pub ratios: Vec<f64>,
    /// Number of ratios above one.
    pub inversions: usize,
    /// Frequencies whose full simulation diverged (excluded from the fit).
    pub diverged: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeReport {
    /// Largest dither amplitude per run.
    pub amplitudes: Vec<f64>,
    /// `max ‖θ − θ*‖` over the final window.
    pub theta_radius: Vec<f64>,
    /// `max |y − Q*|` over the final window.
    pub output_residual: Vec<f64>,
    /// Consecutive ratios `theta_radius[i+1] / theta_radius[i]`.
    pub theta_ratios: Vec<f64>,
    pub output_ratios: Vec<f64>,
    pub window: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    #[serde(with = "serde_rows")]
    pub gain: DMatrix<f64>,
    /// `‖mean θ − θ*‖` over the final dither period.
    pub final_error: Option<f64>,
    /// `|mean y − Q*|` over the final dither period.
    pub final_output_error: Option<f64>,
    pub diverged: bool,
    pub converged: bool,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    /// Averaging window, one common dither period.
    pub window: f64,
}

fn unit_direction<R: RngExt + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = z.norm();
        if norm > 1e-12 {
            return z / norm;
        }
    }
}

/// Hessian weights cycling through every vertex, then one random interior point.
fn weight_for<R: RngExt + ?Sized>(hess: &PolytopicHessian, j: usize, rng: &mut R) -> Result<SimplexWeight> {
    let n_vertices = hess.n_vertices();
    let slot = j % (n_vertices + 1);
    if slot < n_vertices {
        SimplexWeight::vertex(n_vertices, slot)
    } else {
        sample_simplex_with(n_vertices, rng)
    }
}

/// `n_traj` starts on the ellipsoid boundary under vertex and interior weights.
pub fn boundary_starts(hess: &PolytopicHessian, ellipsoid: &Ellipsoid, n_traj: usize, seed: u64) -> Result<Vec<Start>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_traj)
        .map(|j| {
            let alpha = weight_for(hess, j, &mut rng)?;
            let g0 = ellipsoid.boundary_point(&unit_direction(ellipsoid.dim(), &mut rng))?;
            Ok(Start { alpha, g0 })
        })
        .collect()
}

/// `n_traj` starts inside the ellipsoid: the center, boundary points and random
/// interior points.
pub fn interior_starts(hess: &PolytopicHessian, ellipsoid: &Ellipsoid, n_traj: usize, seed: u64) -> Result<Vec<Start>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_traj)
        .map(|j| {
            let alpha = weight_for(hess, j, &mut rng)?;
            let g0 = match j {
                0 => DVector::zeros(ellipsoid.dim()),
                _ if j % 2 == 1 => ellipsoid.boundary_point(&unit_direction(ellipsoid.dim(), &mut rng))?,
                _ => {
                    let radius: f64 = rng.random_range(0.0..1.0);
                    ellipsoid.boundary_point(&unit_direction(ellipsoid.dim(), &mut rng))? * radius
                }
            };
            Ok(Start { alpha, g0 })
        })
        .collect()
}

fn sector_value(gain: &DMatrix<f64>, cert: &Certificate, limits: &DVector<f64>, g: &DVector<f64>) -> f64 {
    let u = gain * g;
    let psi = &u - model::saturate_unchecked(&u, limits);
    psi.dot(&(&cert.u * (&psi - &cert.l * g)))
}

/// Lyapunov decay from boundary starts.
pub fn lyapunov_decay(
    plant: &PlantSpec,
    gain: &DMatrix<f64>,
    cert: &Certificate,
    opts: &DecayOptions,
) -> Result<DecayReport> {
    let ellipsoid = ellipsoid_of(cert)?;
    let starts = boundary_starts(plant.hessian(), &ellipsoid, opts.n_traj, opts.seed)?;
    lyapunov_decay_from(plant, gain, cert, &starts, opts)
}

/// Lyapunov decay along the averaged system from the given starts.
pub fn lyapunov_decay_from(
    plant: &PlantSpec,
    gain: &DMatrix<f64>,
    cert: &Certificate,
    starts: &[Start],
    opts: &DecayOptions,
) -> Result<DecayReport> {
    let n = plant.dim();
    check_dim("certificate", n, cert.dim())?;
    let kappa = cert.kappa();
    let eta = cert.eta;
    let mut worst_rate = f64::INFINITY;
    let mut worst_decay_ratio: f64 = 0.0;
    let mut worst_kappa_ratio: f64 = 0.0;
    let mut excursions = 0;
    for start in starts {
        let h = plant.hessian().at(&start.alpha)?;
        let trace = simulate_average_with(&h, gain, plant.sat_limits(), &start.g0, opts.t_end, opts.step)?;
        let v0 = start.g0.dot(&(&cert.p * &start.g0));
        let norm0 = start.g0.norm();
        let inside = v0 <= 1.0 + 1e-9;
        for (k, &t) in trace.times.iter().enumerate() {
            let g = trace.state(k);
            let v = g.dot(&(&cert.p * &g));
            if inside && v > 1.0 + 1e-9 {
                excursions += 1;
            }
            if v0 > 0.0 {
                worst_decay_ratio = worst_decay_ratio.max(v / (v0 * (-2.0 * eta * t).exp()));
                worst_kappa_ratio = worst_kappa_ratio.max(g.norm() / (kappa * (-eta * t).exp() * norm0));
                if t > 0.0 && v > 0.0 {
                    worst_rate = worst_rate.min(-(v / v0).ln() / t);
                }
            }
        }
    }
    let pass = worst_decay_ratio <= 1.0 + opts.rate_tol && worst_kappa_ratio <= 1.0 + opts.rate_tol && excursions == 0;
    Ok(DecayReport {
        worst_rate,
        required_rate: 2.0 * eta,
        worst_decay_ratio,
        worst_kappa_ratio,
        kappa,
        rate_tol: opts.rate_tol,
        excursions,
        pass,
        trajectories: starts.len(),
    })
}

/// Trajectories starting in the ellipsoid stay there, and the sector inequality
/// holds at every sample.
pub fn ellipsoid_invariance(
    plant: &PlantSpec,
    gain: &DMatrix<f64>,
    cert: &Certificate,
    opts: &DecayOptions,
) -> Result<InvarianceReport> {
    let ellipsoid = ellipsoid_of(cert)?;
    let starts = interior_starts(plant.hessian(), &ellipsoid, opts.n_traj, opts.seed)?;
    ellipsoid_invariance_from(plant, gain, cert, &starts, opts)
}

pub fn ellipsoid_invariance_from(
    plant: &PlantSpec,
    gain: &DMatrix<f64>,
    cert: &Certificate,
    starts: &[Start],
    opts: &DecayOptions,
) -> Result<InvarianceReport> {
    check_dim("certificate", plant.dim(), cert.dim())?;
    let limits = plant.sat_limits();
    let mut worst_level: f64 = 0.0;
    let mut worst_sector = f64::NEG_INFINITY;
    let mut excursions = 0;
    for start in starts {
        let h = plant.hessian().at(&start.alpha)?;
        let trace = simulate_average_with(&h, gain, limits, &start.g0, opts.t_end, opts.step)?;
        for k in 0..trace.times.len() {
            let g = trace.state(k);
            let level = g.dot(&(&cert.p * &g));
            worst_level = worst_level.max(level);
            if level > 1.0 + 1e-9 {
                excursions += 1;
            }
            worst_sector = worst_sector.max(sector_value(gain, cert, limits, &g));
        }
    }
    Ok(InvarianceReport {
        trajectories: starts.len(),
        worst_level,
        excursions,
        worst_sector,
        pass: excursions == 0 && worst_sector <= SECTOR_TOL,
    })
}

/// Samples the sector region `{G : |(K − L)₍ₗ₎ G| ≤ ūₗ}` and evaluates the sector
/// inequality. Half of the points come from the certified ellipsoid, the rest from
/// a box three times its size restricted to the region.
pub fn sector_soundness(
    cert: &Certificate,
    gain: &DMatrix<f64>,
    limits: &DVector<f64>,
    samples: usize,
    seed: u64,
) -> Result<SectorReport> {
    let n = cert.dim();
    check_dim("saturation limits", n, limits.len())?;
    let ellipsoid = ellipsoid_of(cert)?;
    let diff = gain - &cert.l;
    let in_region = |g: &DVector<f64>| {
        let r = &diff * g;
        r.iter().zip(limits.iter()).all(|(v, lim)| v.abs() <= *lim)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = 3.0 * ellipsoid.semi_axes.last().copied().unwrap_or(1.0);
    let mut points = Vec::with_capacity(samples);
    while points.len() < samples / 2 {
        let scale: f64 = rng.random_range(0.0..=1.0);
        points.push(ellipsoid.boundary_point(&unit_direction(n, &mut rng))? * scale);
    }
    let mut attempts = 0usize;
    while points.len() < samples {
        attempts += 1;
        if attempts > 1_000_000 {
            return Err(Error::InvalidInput("sector region too thin to sample".into()));
        }
        let g = DVector::from_fn(n, |_, _| rng.random_range(-radius..radius));
        if in_region(&g) {
            points.push(g);
        }
    }
    let worst = points
        .iter()
        .map(|g| sector_value(gain, cert, limits, g))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SectorReport {
        samples: points.len(),
        worst,
        tolerance: SECTOR_TOL,
        pass: worst <= SECTOR_TOL,
    })
}

/// Deviation of the full loop from the averaged loop, `sup ‖θ̃(t) − H⁻¹G_av(t)‖`
/// over `t ≥ skip`. `None` when the full loop diverges.
fn averaging_residual(cfg: &SimConfig, skip: f64) -> Result<Option<f64>> {
    let h = cfg.plant.hessian().at(&cfg.alpha)?;
    let h_inv = h
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("singular Hessian".into()))?;
    let full = match simulate_full(cfg) {
        Ok(trace) => trace,
        Err(Error::Diverged { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let g0 = &h * cfg.theta_tilde0();
    let avg = simulate_average_with(&h, &cfg.gain, cfg.plant.sat_limits(), &g0, cfg.t_end, cfg.step)?;
    let optimizer = cfg.plant.optimizer();
    let mut sup: f64 = 0.0;
    for (k, &t) in full.times.iter().enumerate() {
        if t + 1e-12 < skip {
            continue;
        }
        let tilde = DVector::from_column_slice(&full.theta_hat[k]) - optimizer;
        let tilde_av = &h_inv * avg.state(k);
        sup = sup.max((tilde - tilde_av).norm());
    }
    Ok(Some(sup))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn ratios(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| w[1] / w[0]).collect()
}

/// Scales the base dither frequency (and the step, keeping samples per tone) by
/// each multiplier and measures the full-versus-averaged deviation. Runs are
/// independent and execute on separate threads.
pub fn averaging_sweep(base_cfg: &SimConfig, omega_multipliers: &[f64]) -> Result<SweepReport> {
    if omega_multipliers.len() < 3 {
        return Err(Error::InvalidInput("a sweep needs at least three frequencies".into()));
    }
    if omega_multipliers.windows(2).any(|w| w[1] <= w[0]) || omega_multipliers[0] <= 0.0 {
        return Err(Error::InvalidInput("sweep multipliers must be positive and increasing".into()));
    }
    let configs: Vec<SimConfig> = omega_multipliers
        .iter()
        .map(|&m| {
            let dither = base_cfg.dither.scaled_frequency(m)?;
            let mut cfg = base_cfg.with_dither(dither);
            cfg.step = base_cfg.step / m;
            cfg.validate()?;
            Ok(cfg)
        })
        .collect::<Result<_>>()?;
    let results: Vec<Result<Option<f64>>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|cfg| {
                s.spawn(move || {
                    let skip = common_period(&cfg.dither).period;
                    averaging_residual(cfg, skip)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let mut omegas = Vec::new();
    let mut residuals = Vec::new();
    let mut diverged = Vec::new();
    for (cfg, res) in configs.iter().zip(results) {
        let omega = cfg.dither.base_frequency();
        match res? {
            Some(r) => {
                omegas.push(omega);
                residuals.push(r);
            }
            None => diverged.push(omega),
        }
    }
    let fitted_order = if omegas.len() >= 2 {
        log_log_slope(&omegas, &residuals)
    } else {
        f64::NAN
    };
    let ratios = ratios(&residuals);
    Ok(SweepReport {
        inversions: ratios.iter().filter(|r| **r > 1.0).count(),
        omegas,
        residuals,
        fitted_order,
        ratios,
        diverged,
    })
}

/// Runs the full loop with every dither amplitude scaled by each factor and
/// records the steady-state balls over the final `window` seconds.
pub fn amplitude_sweep(base_cfg: &SimConfig, factors: &[f64], window: f64) -> Result<AmplitudeReport> {
    let mut report = AmplitudeReport {
        amplitudes: Vec::new(),
        theta_radius: Vec::new(),
        output_residual: Vec::new(),
        theta_ratios: Vec::new(),
        output_ratios: Vec::new(),
        window,
    };
    for &f in factors {
        let cfg = base_cfg.with_dither(base_cfg.dither.scaled_amplitude(f)?);
        let trace = simulate_full(&cfg)?;
        let optimizer = cfg.plant.optimizer();
        report.amplitudes.push(cfg.dither.max_amplitude());
        report
            .theta_radius
            .push(trace.max_theta_error_over_tail(window, optimizer).unwrap_or(f64::NAN));
        report
            .output_residual
            .push(trace.max_output_error_over_tail(window, cfg.plant.optimum_value()).unwrap_or(f64::NAN));
    }
    report.theta_ratios = ratios(&report.theta_radius);
    report.output_ratios = ratios(&report.output_residual);
    Ok(report)
}

/// Dither-averaged final errors of one run.
pub fn final_errors(cfg: &SimConfig, trace: &SimTrace) -> (Option<f64>, Option<f64>) {
    let window = common_period(&cfg.dither).period;
    let theta = trace
        .mean_theta_over_tail(window)
        .map(|m| (m - cfg.plant.optimizer()).norm());
    let y = trace
        .mean_y_over_tail(window)
        .map(|m| (m - cfg.plant.optimum_value()).abs());
    (theta, y)
}

fn comparison_row(label: &str, cfg: &SimConfig) -> Result<ComparisonRow> {
    let threshold = CONVERGENCE_FACTOR * cfg.dither.max_amplitude();
    let (final_error, final_output_error, diverged) = match simulate_full(cfg) {
        Ok(trace) => {
            let (e, y) = final_errors(cfg, &trace);
            (e, y, false)
        }
        Err(Error::Diverged { .. }) => (None, None, true),
        Err(e) => return Err(e),
    };
    Ok(ComparisonRow {
        label: label.to_string(),
        gain: cfg.gain.clone(),
        converged: !diverged && final_error.is_some_and(|e| e < threshold),
        final_error,
        final_output_error,
        diverged,
        threshold,
    })
}

/// Runs both configurations; a diverged run is a valid not-converged verdict.
pub fn compare_gains(cfg_lmi: &SimConfig, cfg_diag: &SimConfig) -> Result<ComparisonReport> {
    compare_labeled(&[("lmi", cfg_lmi), ("diagonal", cfg_diag)])
}

pub fn compare_labeled(runs: &[(&str, &SimConfig)]) -> Result<ComparisonReport> {
    let window = runs
        .first()
        .map_or(0.0, |(_, cfg)| common_period(&cfg.dither).period);
    let rows = std::thread::scope(|s| {
        let handles: Vec<_> = runs
            .iter()
            .map(|(label, cfg)| s.spawn(move || comparison_row(label, cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("comparison worker panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(ComparisonReport { rows, window })
}

fn opt_cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format_sig(x, 12))
}

impl ComparisonReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["label", "final_error", "final_output_error", "threshold", "diverged", "converged"])?;
        for r in &self.rows {
            w.write_record([
                r.label.clone(),
                opt_cell(r.final_error),
                opt_cell(r.final_output_error),
                format_sig(r.threshold, 12),
                r.diverged.to_string(),
                r.converged.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl SweepReport {
    /// Slope at most [`SWEEP_MAX_ORDER`], no divergent member and at most
    /// [`SWEEP_MAX_INVERSIONS`] inversions.
    pub fn pass(&self) -> bool {
        self.fitted_order <= SWEEP_MAX_ORDER && self.diverged.is_empty() && self.inversions <= SWEEP_MAX_INVERSIONS
    }

    /// Every consecutive ratio lies in [`SWEEP_RATIO_RANGE`].
    pub fn ratios_in_range(&self) -> bool {
        let (lo, hi) = SWEEP_RATIO_RANGE;
        !self.ratios.is_empty() && self.ratios.iter().all(|r| (lo..=hi).contains(r))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["omega", "residual"])?;
        for (o, r) in self.omegas.iter().zip(&self.residuals) {
            w.write_record([format_sig(*o, 12), format_sig(*r, 12)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Log-log plot of the residuals with the fitted line.
    pub fn write_svg(&self, path: &Path) -> Result<()> {
        let mut plot = LinePlot::new("averaging deviation", "omega", "residual")
            .log_log()
            .with_series(Series::new("residual", &self.omegas, &self.residuals));
        if self.omegas.len() >= 2 && self.fitted_order.is_finite() {
            let lx: Vec<f64> = self.omegas.iter().map(|o| o.ln()).collect();
            let ly: Vec<f64> = self.residuals.iter().map(|r| r.ln()).collect();
            let mx = lx.iter().sum::<f64>() / lx.len() as f64;
            let my = ly.iter().sum::<f64>() / ly.len() as f64;
            let fit: Vec<f64> = lx.iter().map(|x| (my + self.fitted_order * (x - mx)).exp()).collect();
            plot = plot.with_series(Series::new(format!("slope {:.3}", self.fitted_order), &self.omegas, &fit));
        }
        plot.write_svg(path)
    }
}

impl AmplitudeReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["amplitude", "theta_radius", "output_residual"])?;
        for i in 0..self.amplitudes.len() {
            w.write_record([
                format_sig(self.amplitudes[i], 12),
                format_sig(self.theta_radius[i], 12),
                format_sig(self.output_residual[i], 12),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Time-series plots of a run: `theta.svg`, `output.svg` and `usat.svg` in `dir`.
pub fn write_trace_plots(trace: &SimTrace, dir: &Path) -> Result<Vec<PathBuf>> {
    let column = |rows: &[Vec<f64>], j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let n = trace.dim();
    let mut theta = LinePlot::new("parameter", "t", "theta");
    let mut usat = LinePlot::new("saturated update", "t", "sat(u)");
    for j in 0..n {
        theta = theta.with_series(Series::new(format!("theta_{}", j + 1), &trace.times, &column(&trace.theta, j)));
        usat = usat.with_series(Series::new(format!("usat_{}", j + 1), &trace.times, &column(&trace.u_sat, j)));
    }
    let output = LinePlot::new("output", "t", "y").with_series(Series::new("y", &trace.times, &trace.y));
    let mut written = Vec::new();
    for (name, plot) in [("theta.svg", theta), ("output.svg", output), ("usat.svg", usat)] {
        let path = dir.join(name);
        plot.write_svg(&path)?;
        written.push(path);
    }
    Ok(written)
}

/// Certificate-derived constants: `κ` and `κ̄` at every vertex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateConstants {
    pub kappa: f64,
    pub kappa_bar: Vec<f64>,
    pub semi_axes: Vec<f64>,
    pub volume_factor: f64,
}

pub fn certificate_constants(cert: &Certificate, hess: &PolytopicHessian) -> Result<CertificateConstants> {
    let e = ellipsoid_of(cert)?;
    Ok(CertificateConstants {
        kappa: cert.kappa(),
        kappa_bar: hess.vertices().iter().map(|h| cert.kappa_bar(h)).collect(),
        semi_axes: e.semi_axes,
        volume_factor: e.volume_factor,
    })
}

/// Smallest eigenvalue over the vertices of `−(analysis matrix)` at 200 random
/// interior weights, confirming vertex sufficiency for a fixed certificate.
pub fn interior_analysis_margin(
    hess: &PolytopicHessian,
    gain: &DMatrix<f64>,
    cert: &Certificate,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let alpha = sample_simplex_with(hess.n_vertices(), &mut rng)?;
        let h = hess.at(&alpha)?;
        worst = worst.max(linalg::max_sym_eigenvalue(&crate::lmi::analysis_matrix(&h, gain, cert)));
    }
    Ok(worst)
}
