//! Experiment configuration files.
//!
//! ```toml
//! experiment = "wf-stationarity"
//! seed = 7
//! output_dir = "out"
//!
//! [parameters]
//! a = 0.5
//! b = 1.0
//! ```

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The runnable experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    WfStationarity,
    GemIdentities,
    GeneratorConsistency,
    CoeffBounds,
    IntegrationByParts,
    VarianceDecay,
    EntropyDecay,
    DirichletStationarity,
    EsfCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        Self::WfStationarity,
        Self::GemIdentities,
        Self::GeneratorConsistency,
        Self::CoeffBounds,
        Self::IntegrationByParts,
        Self::VarianceDecay,
        Self::EntropyDecay,
        Self::DirichletStationarity,
        Self::EsfCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::WfStationarity => "wf-stationarity",
            Self::GemIdentities => "gem-identities",
            Self::GeneratorConsistency => "generator-consistency",
            Self::CoeffBounds => "coeff-bounds",
            Self::IntegrationByParts => "integration-by-parts",
            Self::VarianceDecay => "variance-decay",
            Self::EntropyDecay => "entropy-decay",
            Self::DirichletStationarity => "dirichlet-stationarity",
            Self::EsfCheck => "esf-check",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::WfStationarity => "Wright-Fisher endpoint law, linear eigenfunction decay and reversibility",
            Self::GemIdentities => "GEM first-weight means and size-biased permutation of ranked weights",
            Self::GeneratorConsistency => "coefficient reductions, pullback gradient and L_n(f∘φ) = (ℒf)∘φ",
            Self::CoeffBounds => "Σ|a_ij| ≤ 3 and the drift bound on random and near-boundary points",
            Self::IntegrationByParts => "Ξ(Γ(f,g)) + Ξ(f ℒ g) over a fixed test battery",
            Self::VarianceDecay => "decay of Var(P_t y_1) against the spectral-gap bound",
            Self::EntropyDecay => "decay of Ent(P_t f) against the log-Sobolev envelope",
            Self::DirichletStationarity => "moments of ⟨η_t, g⟩ for the measure-valued process",
            Self::EsfCheck => "allelic partition frequencies against the Ewens sampling formula",
        }
    }

    /// Parameter defaults, as shown by `--help`.
    pub fn defaults(self) -> &'static str {
        match self {
            Self::WfStationarity => {
                "a,b: all of (0.5,0.5) (0.5,1) (1,2) unless both given; samples=100000; dt=0.001; \
                 horizon=20/(a+b); t_grid=[0.5,1,2] (eigenfunction decay from x0=0.2)"
            }
            Self::GemIdentities => "theta=1; alpha=0 (two-parameter rows only when alpha>0); samples=1000000; n=60",
            Self::GeneratorConsistency => "theta=2; alpha=0 (or constant a,b if given); samples=1000; n=5",
            Self::CoeffBounds => "theta=1; alpha=0; n=20; samples=10000",
            Self::IntegrationByParts => "theta=2; alpha=0; samples=1000000",
            Self::VarianceDecay | Self::EntropyDecay => {
                "theta=1; alpha=0; samples=500 (outer); inner_samples=2000; dt=0.001; t_grid=[0.5,1]"
            }
            Self::DirichletStationarity => {
                "theta=2; theta_mut=theta; n=60; samples=20000 (paths); dt=0.001; horizon=1"
            }
            Self::EsfCheck => "theta: all of 0.5, 1, 2 unless given; samples=100000; n=60",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
            format!("unknown experiment `{s}`; expected one of: {}", names.join(", "))
        })
    }
}

/// Optional experiment parameters; `None` means the experiment default.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    pub theta: Option<f64>,
    pub alpha: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub n: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub samples: Option<usize>,
    pub t_grid: Option<Vec<f64>>,
    /// Paths per outer point in nested Monte Carlo.
    pub inner_samples: Option<usize>,
    /// Mutation rate of the type process.
    pub theta_mut: Option<f64>,
}

impl Parameters {
    /// `alpha`, defaulting to the one-parameter case.
    pub fn alpha_or_default(&self) -> f64 {
        self.alpha.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub parameters: Parameters,
    pub seed: u64,
    pub output_dir: PathBuf,
}

pub const DEFAULT_SEED: u64 = 20_240_601;
pub const DEFAULT_OUTPUT_DIR: &str = "out";

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigError {
    pub field: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(field) = &self.field {
            write!(f, "field `{field}`: ")?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<String>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    parameters: Parameters,
}

/// 1-based line of the first `key = …` assignment in `text`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

fn field_error(text: &str, field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: Some(field.to_string()),
        line: line_of(text, field),
        message: message.into(),
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        ConfigError {
            field: None,
            line,
            message: e.message().trim().to_string(),
        }
    })?;
    let name = raw
        .experiment
        .ok_or_else(|| field_error(text, "experiment", "missing"))?;
    if name.trim().is_empty() {
        return Err(field_error(text, "experiment", "must not be empty"));
    }
    let experiment = name
        .trim()
        .parse()
        .map_err(|m: String| field_error(text, "experiment", m))?;
    let parameters = raw.parameters;
    validate_parameters(text, &parameters)?;
    Ok(ExperimentConfig {
        experiment,
        parameters,
        seed: raw.seed.unwrap_or(DEFAULT_SEED),
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
    })
}

fn validate_parameters(text: &str, p: &Parameters) -> Result<(), ConfigError> {
    let positive = |name: &str, v: Option<f64>| match v {
        Some(x) if !(x.is_finite() && x > 0.0) => Err(field_error(text, name, format!("must be positive and finite, got {x}"))),
        _ => Ok(()),
    };
    positive("theta", p.theta)?;
    positive("a", p.a)?;
    positive("b", p.b)?;
    positive("dt", p.dt)?;
    positive("horizon", p.horizon)?;
    if let Some(alpha) = p.alpha {
        if !(0.0..1.0).contains(&alpha) {
            return Err(field_error(text, "alpha", format!("must lie in [0, 1), got {alpha}")));
        }
    }
    if let Some(t) = p.theta_mut {
        if !(t.is_finite() && t >= 0.0) {
            return Err(field_error(text, "theta_mut", format!("must be non-negative, got {t}")));
        }
    }
    if p.a.is_some() != p.b.is_some() {
        let missing = if p.a.is_some() { "b" } else { "a" };
        return Err(field_error(text, missing, "a and b must be given together"));
    }
    for (name, v) in [("n", p.n), ("samples", p.samples)] {
        if v == Some(0) {
            return Err(field_error(text, name, "must be at least 1"));
        }
    }
    if matches!(p.inner_samples, Some(k) if k < 2) {
        return Err(field_error(text, "inner_samples", "must be at least 2"));
    }
    if let Some(grid) = &p.t_grid {
        if grid.is_empty()
            || grid.iter().any(|t| !(t.is_finite() && *t > 0.0))
            || grid.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(field_error(text, "t_grid", "must be a non-empty strictly increasing list of positive times"));
        }
    }
    Ok(())
}
