//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use satseek_core::lmi::{
    analysis_problem, solve_analysis, solve_synthesis, solve_synthesis_search, synthesis_problem, Certificate,
    Feasibility, SynthesisResult,
};
use satseek_core::linalg::serde_rows;
use satseek_core::report::{format_sig, write_json};
use satseek_core::simulate::simulate_full_partial;
use satseek_core::verify::{
    self, amplitude_sweep, averaging_sweep, certificate_constants, compare_labeled, ellipsoid_invariance,
    lyapunov_decay, sector_soundness, CertificateConstants, DecayOptions, DecayReport, InvarianceReport,
    SectorReport,
};
use serde::Serialize;

use crate::config::{matrix_from_rows, Format, ProjectConfig};
use crate::{CliError, CommonArgs, Outcome};

const SECTOR_SAMPLES: usize = 1000;

struct Context {
    config: ProjectConfig,
    out: PathBuf,
    seed: u64,
}

impl Context {
    fn new(args: &CommonArgs) -> Result<Self, CliError> {
        let config = ProjectConfig::load(&args.config)?;
        let out = args
            .out
            .clone()
            .or_else(|| config.outputs.directory.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&out).map_err(satseek_core::Error::from)?;
        // record the configuration exactly as it was interpreted, defaults included
        fs::write(out.join("config.resolved.json"), config.to_json()).map_err(satseek_core::Error::from)?;
        Ok(Self {
            config,
            out,
            seed: args.seed.unwrap_or(0),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn wants(&self, format: Format) -> bool {
        self.config.outputs.wants(format)
    }

    fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        fs::write(self.path(name), text).map_err(satseek_core::Error::from)?;
        Ok(())
    }

    fn csv_file(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        Ok(BufWriter::new(File::create(self.path(name)).map_err(satseek_core::Error::from)?))
    }

    /// Gain from `--gain`, then from the configuration.
    fn gain(&self, args: &CommonArgs) -> Result<Option<DMatrix<f64>>, CliError> {
        match &args.gain {
            Some(path) => read_gain(path).map(Some),
            None => self.config.config_gain(),
        }
    }

    fn required_gain(&self, args: &CommonArgs) -> Result<DMatrix<f64>, CliError> {
        self.gain(args)?
            .ok_or_else(|| CliError::Usage("no gain: pass --gain or set simulation.gain".into()))
    }
}

/// Reads either an object with a `gain` field or a bare matrix of rows.
fn read_gain(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let rows = value.get("gain").unwrap_or(&value);
    let rows: Vec<Vec<f64>> = serde_json::from_value(rows.clone())
        .map_err(|e| CliError::Config(format!("{}: gain must be a matrix of rows: {e}", path.display())))?;
    matrix_from_rows(&path.display().to_string(), &rows)
}

fn matrix_text(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = m
        .row_iter()
        .map(|r| {
            let cells: Vec<String> = r.iter().map(|v| format_sig(*v, 6)).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

#[derive(Serialize)]
struct GainFile<'a> {
    #[serde(with = "serde_rows")]
    gain: DMatrix<f64>,
    certificate: &'a Certificate,
    constants: CertificateConstants,
    synthesis: &'a SynthesisResult,
}

pub fn synth(args: &CommonArgs) -> Result<Outcome, CliError> {
    let ctx = Context::new(args)?;
    let cfg = &ctx.config;
    let hess = cfg.hessian()?;
    let limits = cfg.limits();
    let settings = ctx.config.lmi_settings(ctx.seed)?;
    let syn = &cfg.synthesis;

    let problem = synthesis_problem(&hess, &limits, syn.eta, syn.epsilon, &settings)?;
    ctx.write_text("synthesis_problem.json", &problem.to_json().map_err(satseek_core::Error::from)?)?;

    let outcome = if syn.epsilon_search {
        solve_synthesis_search(&hess, &limits, syn.eta, syn.epsilon, &settings)?
    } else {
        solve_synthesis(&hess, &limits, syn.eta, syn.epsilon, &settings)?
    };
    let mut summary = String::new();
    writeln!(summary, "backend: {}", settings.backend.name()).unwrap();
    writeln!(summary, "objective: {}", settings.objective.name()).unwrap();
    writeln!(summary, "eta: {}", syn.eta).unwrap();
    match outcome {
        Feasibility::Feasible(result) => {
            let constants = certificate_constants(&result.certificate, &hess)?;
            write_json(
                &ctx.path("gain.json"),
                &GainFile {
                    gain: result.gain.clone(),
                    certificate: &result.certificate,
                    constants: constants.clone(),
                    synthesis: &result,
                },
            )?;
            writeln!(summary, "status: feasible ({:?})", result.status).unwrap();
            writeln!(summary, "epsilon: {}", result.epsilon).unwrap();
            writeln!(summary, "K = {}", matrix_text(&result.gain)).unwrap();
            writeln!(summary, "objective value: {}", format_sig(result.objective_value, 8)).unwrap();
            for v in &result.analysis.vertices {
                writeln!(summary, "vertex {} max eigenvalue: {}", v.vertex, format_sig(v.max_eigenvalue, 6)).unwrap();
            }
            for r in &result.inclusion.rows {
                let min_ev = r.min_eigenvalue.map_or("unbounded".to_string(), |v| format_sig(v, 6));
                writeln!(summary, "inclusion row {} min eigenvalue: {min_ev}", r.row).unwrap();
            }
            writeln!(summary, "slack condition number: {}", format_sig(result.slack_condition, 6)).unwrap();
            writeln!(summary, "kappa: {}", format_sig(constants.kappa, 6)).unwrap();
            let axes: Vec<String> = constants.semi_axes.iter().map(|a| format_sig(*a, 6)).collect();
            writeln!(summary, "ellipsoid semi-axes: {}", axes.join(", ")).unwrap();
            ctx.write_text("synth_summary.txt", &summary)?;
            print!("{summary}");
            Ok(Outcome::Ok)
        }
        Feasibility::Infeasible { status, detail } => {
            writeln!(summary, "status: infeasible ({status:?}): {detail}").unwrap();
            ctx.write_text("synth_summary.txt", &summary)?;
            eprint!("{summary}");
            Ok(Outcome::Verdict)
        }
    }
}

#[derive(Serialize)]
struct AnalyzeFile<'a> {
    #[serde(with = "serde_rows")]
    gain: DMatrix<f64>,
    certificate: &'a Certificate,
    constants: CertificateConstants,
    solution: &'a satseek_core::lmi::AnalysisSolution,
    decay: DecayReport,
    invariance: InvarianceReport,
    sector: SectorReport,
    pass: bool,
}

pub fn analyze(args: &CommonArgs) -> Result<Outcome, CliError> {
    let ctx = Context::new(args)?;
    let cfg = &ctx.config;
    let gain = ctx.required_gain(args)?;
    let hess = cfg.hessian()?;
    let limits = cfg.limits();
    let settings = cfg.lmi_settings(ctx.seed)?;
    let eta = cfg.synthesis.eta;

    let problem = analysis_problem(&hess, &gain, eta, &limits, &settings)?;
    ctx.write_text("analysis_problem.json", &problem.to_json().map_err(satseek_core::Error::from)?)?;

    match solve_analysis(&hess, &gain, eta, &limits, &settings)? {
        Feasibility::Feasible(solution) => {
            let plant = cfg.plant()?;
            let cert = &solution.certificate;
            let opts = DecayOptions {
                seed: ctx.seed,
                ..DecayOptions::default()
            };
            let decay = lyapunov_decay(&plant, &gain, cert, &opts)?;
            let invariance = ellipsoid_invariance(&plant, &gain, cert, &opts)?;
            let sector = sector_soundness(cert, &gain, &limits, SECTOR_SAMPLES, ctx.seed)?;
            let pass = solution.analysis.pass && solution.inclusion.pass && decay.pass && invariance.pass && sector.pass;
            write_json(
                &ctx.path("certificate.json"),
                &AnalyzeFile {
                    gain: gain.clone(),
                    certificate: cert,
                    constants: certificate_constants(cert, &hess)?,
                    solution: &solution,
                    decay: decay.clone(),
                    invariance: invariance.clone(),
                    sector: sector.clone(),
                    pass,
                },
            )?;
            println!("status: feasible ({:?})", solution.status);
            println!("K = {}", matrix_text(&gain));
            println!("worst vertex eigenvalue: {}", format_sig(solution.analysis.worst, 6));
            println!("inclusion: {}", verdict(solution.inclusion.pass));
            println!(
                "decay: {} (worst rate {}, required {})",
                verdict(decay.pass),
                format_sig(decay.worst_rate, 6),
                format_sig(decay.required_rate, 6)
            );
            println!("invariance: {} ({} excursions)", verdict(invariance.pass), invariance.excursions);
            println!("sector: {} (worst {})", verdict(sector.pass), format_sig(sector.worst, 6));
            Ok(if pass { Outcome::Ok } else { Outcome::Verdict })
        }
        Feasibility::Infeasible { status, detail } => {
            eprintln!("status: infeasible ({status:?}): {detail}");
            Ok(Outcome::Verdict)
        }
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}

#[derive(Serialize)]
struct SimulationSummary {
    samples: usize,
    t_final: f64,
    diverged: bool,
    divergence_time: Option<f64>,
    final_error: Option<f64>,
    final_output_error: Option<f64>,
    converged: bool,
    threshold: f64,
    max_abs_usat: Vec<f64>,
}

pub fn simulate(args: &CommonArgs) -> Result<Outcome, CliError> {
    let ctx = Context::new(args)?;
    let gain = ctx.required_gain(args)?;
    let sim = ctx.config.sim_config(gain)?;
    let (trace, divergence) = simulate_full_partial(&sim)?;

    if ctx.wants(Format::Csv) {
        trace.write_csv(ctx.csv_file("trace.csv")?)?;
    }
    if ctx.wants(Format::Svg) && !trace.is_empty() {
        verify::write_trace_plots(&trace, &ctx.out)?;
    }
    let (final_error, final_output_error) = verify::final_errors(&sim, &trace);
    let threshold = verify::CONVERGENCE_FACTOR * sim.dither.max_amplitude();
    let summary = SimulationSummary {
        samples: trace.len(),
        t_final: trace.times.last().copied().unwrap_or(0.0),
        diverged: divergence.is_some(),
        divergence_time: divergence.as_ref().map(|d| d.time),
        final_error,
        final_output_error,
        converged: divergence.is_none() && final_error.is_some_and(|e| e < threshold),
        threshold,
        max_abs_usat: (0..trace.dim())
            .map(|j| trace.u_sat.iter().map(|r| r[j].abs()).fold(0.0, f64::max))
            .collect(),
    };
    if ctx.wants(Format::Json) {
        write_json(&ctx.path("simulation.json"), &summary)?;
    }
    println!("samples: {}", summary.samples);
    if let Some(e) = summary.final_error {
        println!("final averaged error: {}", format_sig(e, 6));
    }
    if let Some(e) = summary.final_output_error {
        println!("final averaged output error: {}", format_sig(e, 6));
    }
    println!(
        "verdict: {}",
        if summary.diverged {
            "diverged"
        } else if summary.converged {
            "converged"
        } else {
            "not converged"
        }
    );
    Ok(if divergence.is_some() { Outcome::Diverged } else { Outcome::Ok })
}

pub fn sweep(args: &CommonArgs) -> Result<Outcome, CliError> {
    let ctx = Context::new(args)?;
    let cfg = &ctx.config;
    let gain = ctx.required_gain(args)?;
    let mut base = cfg.sim_config(gain)?;
    if let Some(t_end) = cfg.sweep.t_end {
        base.t_end = t_end;
    }
    let report = averaging_sweep(&base, &cfg.sweep.omega_multipliers)?;
    let window = satseek_core::dither::common_period(&base.dither).period;
    let amplitude = amplitude_sweep(&base, &cfg.sweep.amplitude_factors, window)?;

    if ctx.wants(Format::Json) {
        write_json(&ctx.path("sweep.json"), &report)?;
        write_json(&ctx.path("amplitude.json"), &amplitude)?;
    }
    if ctx.wants(Format::Csv) {
        report.write_csv(ctx.csv_file("sweep.csv")?)?;
        amplitude.write_csv(ctx.csv_file("amplitude.csv")?)?;
    }
    if ctx.wants(Format::Svg) && report.omegas.len() >= 2 {
        report.write_svg(&ctx.path("sweep.svg"))?;
    }
    println!("fitted order: {}", format_sig(report.fitted_order, 6));
    let ratios: Vec<String> = report.ratios.iter().map(|r| format_sig(*r, 4)).collect();
    println!("residual ratios: {}", ratios.join(", "));
    if !report.diverged.is_empty() {
        println!("diverged at omega: {:?}", report.diverged);
    }
    println!("verdict: {}", verdict(report.pass()));
    Ok(if report.pass() { Outcome::Ok } else { Outcome::Verdict })
}

pub fn compare(args: &CommonArgs) -> Result<Outcome, CliError> {
    let ctx = Context::new(args)?;
    let cfg = &ctx.config;
    let other = cfg
        .comparison
        .as_ref()
        .ok_or_else(|| CliError::Usage("the configuration has no comparison section".into()))?;
    let gain = match ctx.gain(args)? {
        Some(g) => g,
        None => {
            let settings = cfg.lmi_settings(ctx.seed)?;
            let syn = &cfg.synthesis;
            match solve_synthesis(&cfg.hessian()?, &cfg.limits(), syn.eta, syn.epsilon, &settings)? {
                Feasibility::Feasible(r) => r.gain,
                Feasibility::Infeasible { status, detail } => {
                    eprintln!("synthesis infeasible ({status:?}): {detail}");
                    return Ok(Outcome::Verdict);
                }
            }
        }
    };
    let primary = cfg.sim_config(gain)?;
    let secondary = primary.with_gain(matrix_from_rows("comparison.gain", &other.gain)?);
    let report = compare_labeled(&[("lmi", &primary), (other.label.as_str(), &secondary)])?;

    if ctx.wants(Format::Json) {
        write_json(&ctx.path("compare.json"), &report)?;
    }
    if ctx.wants(Format::Csv) {
        report.write_csv(ctx.csv_file("compare.csv")?)?;
    }
    for row in &report.rows {
        let err = row.final_error.map_or("-".to_string(), |e| format_sig(e, 6));
        let state = if row.diverged {
            "diverged"
        } else if row.converged {
            "converged"
        } else {
            "not converged"
        };
        println!("{}: final error {err}, {state}", row.label);
    }
    let pass = report.rows[0].converged && !report.rows[1].converged;
    println!("verdict: {}", verdict(pass));
    Ok(if pass { Outcome::Ok } else { Outcome::Verdict })
}
