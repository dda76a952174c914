//! Run configuration: JSON schema, validation, and network construction.

use crate::error::{Error, Result};
use crate::lmi::GainMode;
use crate::model::{make_train_network, train_classes, NetworkSpec, SubsystemClass, TrainParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A network size under analysis; `Infinite` selects the uniform
/// row-sum bound valid for every M.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MValue {
    Finite(usize),
    Infinite,
}

impl std::fmt::Display for MValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MValue::Finite(m) => write!(f, "{m}"),
            MValue::Infinite => "inf".fmt(f),
        }
    }
}

impl Serialize for MValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MValue::Finite(m) => s.serialize_u64(*m as u64),
            MValue::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for MValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(m) => Ok(MValue::Finite(m as usize)),
            Raw::Text(s) if s == "inf" => Ok(MValue::Infinite),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "m value '{s}' is neither a number nor \"inf\""
            ))),
        }
    }
}

/// Built-in models selectable by name.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Train {
        #[serde(default)]
        params: TrainParams,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerSettings {
    pub state_span: f64,
    pub disturbance_span: f64,
    pub input_span: f64,
    pub adversarial: bool,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        // fractions of each box half-width; wide enough to exercise the
        // dynamics, narrow enough that most trajectories stay inside the
        // verified domain over a 30-step horizon
        Self {
            state_span: 0.1,
            disturbance_span: 0.05,
            input_span: 0.2,
            adversarial: false,
        }
    }
}

fn default_eta_sweep() -> Vec<f64> {
    vec![0.6, 0.7]
}

fn default_margin() -> f64 {
    1e-6
}

fn default_grid_points() -> usize {
    3
}

fn default_budget() -> usize {
    8000
}

fn default_samples() -> usize {
    10_000
}

fn default_horizon() -> usize {
    30
}

fn default_gain_mode() -> GainMode {
    GainMode::Optimal
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub m_values: Vec<MValue>,
    /// verification grid points per gridded coordinate
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_eta_sweep")]
    pub eta_sweep: Vec<f64>,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_budget")]
    pub solver_budget: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_gain_mode")]
    pub gain_mode: GainMode,
    #[serde(default)]
    pub sampler: SamplerSettings,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("config parse: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn model_name(&self) -> &'static str {
        match &self.model {
            ModelConfig::Train { .. } => "train",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.model {
            ModelConfig::Train { params } => params.validate()?,
        }
        if self.m_values.is_empty() {
            return Err(Error::Config("m_values is empty".into()));
        }
        for m in &self.m_values {
            if let MValue::Finite(v) = m {
                if *v < 2 {
                    return Err(Error::Config(format!("m value {v} below 2")));
                }
            }
        }
        if self.grid_points == 0 {
            return Err(Error::Config("grid_points must be positive".into()));
        }
        if self.eta_sweep.is_empty() || self.eta_sweep.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::Config("eta_sweep entries must lie in (0,1)".into()));
        }
        if !(self.margin >= 0.0) {
            return Err(Error::Config("margin must be nonnegative".into()));
        }
        for (name, span) in [
            ("state_span", self.sampler.state_span),
            ("disturbance_span", self.sampler.disturbance_span),
            ("input_span", self.sampler.input_span),
        ] {
            if !(0.0..=1.0).contains(&span) {
                return Err(Error::Config(format!("{name} outside [0,1]")));
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical serialized form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut out = String::with_capacity(64);
        for byte in digest {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    /// The distinct subsystem classes of the configured model.
    pub fn classes(&self) -> Result<Vec<SubsystemClass>> {
        match &self.model {
            ModelConfig::Train { params } => train_classes(params),
        }
    }

    /// Instantiate the network at a finite size.
    pub fn network(&self, m: usize) -> Result<NetworkSpec> {
        match &self.model {
            ModelConfig::Train { params } => make_train_network(m, params),
        }
    }

    /// Whether the model is built from repeating classes, which is what
    /// makes the M = inf row-sum analysis meaningful.
    pub fn uniform_classes(&self) -> bool {
        match &self.model {
            ModelConfig::Train { .. } => true,
        }
    }
}

#[cfg(test)]
mod tests;
