//! Project configuration: plant, dither, synthesis, simulation and output settings.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use satseek_core::dither::{DitherSpec, Rational};
use satseek_core::lmi::{Block31Variant, LmiSettings, ObjectiveRegistry};
use satseek_core::model::{Definiteness, PlantSpec, PolytopicHessian, SimplexWeight};
use satseek_core::simulate::SimConfig;
use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use crate::CliError;

/// Exact rational written as `"p"` or `"p/q"`; validated while parsing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalText {
    text: String,
    value: Rational,
}

impl RationalText {
    pub fn value(&self) -> Rational {
        self.value
    }
}

impl std::str::FromStr for RationalText {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let value: Rational = s
            .trim()
            .parse()
            .map_err(|_| format!("invalid rational {s:?}, expected \"p\" or \"p/q\" with integers p, q"))?;
        Ok(Self {
            text: s.to_string(),
            value,
        })
    }
}

impl fmt::Display for RationalText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl Serialize for RationalText {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for RationalText {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HessianConfig {
    pub vertices: Vec<Vec<Vec<f64>>>,
    #[serde(default = "default_definiteness")]
    pub definiteness: Definiteness,
}

fn default_definiteness() -> Definiteness {
    Definiteness::Positive
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub optimum_value: f64,
    pub optimizer: Vec<f64>,
    pub hessian: HessianConfig,
    pub sat_limits: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DitherConfig {
    pub amplitudes: Vec<f64>,
    pub multipliers: Vec<RationalText>,
    pub base_frequency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin_tol: Option<f64>,
    #[serde(default)]
    pub block31: Block31Variant,
    /// Volume objective by registry name; the backend's best one when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<String>,
    /// Retry over the built-in epsilon grid when the given epsilon is infeasible.
    #[serde(default)]
    pub epsilon_search: bool,
}

fn default_eta() -> f64 {
    1.0
}

fn default_epsilon() -> f64 {
    0.5
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            eta: default_eta(),
            epsilon: default_epsilon(),
            margin_tol: None,
            block31: Block31Variant::default(),
            objective: None,
            epsilon_search: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub theta_hat0: Vec<f64>,
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    /// Simplex weight of the true Hessian; the first vertex when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    /// Gain used when no gain file is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonConfig {
    pub label: String,
    pub gain: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_omega_multipliers")]
    pub omega_multipliers: Vec<f64>,
    #[serde(default = "default_amplitude_factors")]
    pub amplitude_factors: Vec<f64>,
    /// Horizon of each sweep run; the simulation horizon when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
}

fn default_omega_multipliers() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0]
}

fn default_amplitude_factors() -> Vec<f64> {
    vec![1.0, 0.5]
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            omega_multipliers: default_omega_multipliers(),
            amplitude_factors: default_amplitude_factors(),
            t_end: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv, Format::Svg]
}

impl Default for OutputsConfig {
    fn default() -> Self {
        Self {
            directory: None,
            formats: default_formats(),
        }
    }
}

impl OutputsConfig {
    pub fn wants(&self, format: Format) -> bool {
        self.formats.contains(&format)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub plant: PlantConfig,
    pub dither: DitherConfig,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
    pub simulation: SimulationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonConfig>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub outputs: OutputsConfig,
}

pub fn matrix_from_rows(what: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(CliError::Config(format!("{what}: rows must be non-empty and of equal length")));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

impl ProjectConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn hessian(&self) -> Result<PolytopicHessian, CliError> {
        let vertices = self
            .plant
            .hessian
            .vertices
            .iter()
            .enumerate()
            .map(|(i, v)| matrix_from_rows(&format!("plant.hessian.vertices[{i}]"), v))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PolytopicHessian::new(vertices, self.plant.hessian.definiteness)?)
    }

    pub fn limits(&self) -> DVector<f64> {
        DVector::from_vec(self.plant.sat_limits.clone())
    }

    pub fn plant(&self) -> Result<PlantSpec, CliError> {
        Ok(PlantSpec::new(
            self.plant.optimum_value,
            DVector::from_vec(self.plant.optimizer.clone()),
            self.hessian()?,
            self.limits(),
        )?)
    }

    pub fn dither(&self) -> Result<DitherSpec, CliError> {
        Ok(DitherSpec::new(
            DVector::from_vec(self.dither.amplitudes.clone()),
            self.dither.multipliers.iter().map(RationalText::value).collect(),
            self.dither.base_frequency,
        )?)
    }

    pub fn alpha(&self) -> Result<SimplexWeight, CliError> {
        match &self.simulation.alpha {
            Some(w) => Ok(SimplexWeight::new(w.clone())?),
            None => Ok(SimplexWeight::vertex(self.plant.hessian.vertices.len(), 0)?),
        }
    }

    pub fn config_gain(&self) -> Result<Option<DMatrix<f64>>, CliError> {
        self.simulation
            .gain
            .as_deref()
            .map(|rows| matrix_from_rows("simulation.gain", rows))
            .transpose()
    }

    pub fn sim_config(&self, gain: DMatrix<f64>) -> Result<SimConfig, CliError> {
        Ok(SimConfig::new(
            self.plant()?,
            self.dither()?,
            gain,
            self.alpha()?,
            DVector::from_vec(self.simulation.theta_hat0.clone()),
            self.simulation.t_end,
            self.simulation.step,
        )?)
    }

    /// Backend from the environment, objective and margins from the synthesis section.
    pub fn lmi_settings(&self, seed: u64) -> Result<LmiSettings, CliError> {
        let mut settings = LmiSettings::from_env()?;
        if let Some(name) = &self.synthesis.objective {
            settings.objective = ObjectiveRegistry::builtin().get(name)?;
        }
        settings.margin_tol = self.synthesis.margin_tol;
        settings.block31 = self.synthesis.block31;
        settings.seed = seed;
        Ok(settings)
    }
}
