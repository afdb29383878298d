//! Run configuration documents.
//!
//! A document names a preset or describes a model inline, and may set
//! trajectory, ensemble and output options:
//!
//! ```toml
//! scenario = "fig5"
//! trajectories = 500
//!
//! [params]
//! dim = 12
//! t_final = 20.0
//!
//! [output]
//! format = "json-lines"
//! ```
//!
//! Unknown keys are errors, and every error points at a line and column.

use std::ops::Range;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::{QsdError, Result};
use crate::expr::OperatorExpr;
use crate::output::OutputFormat;
use crate::scenarios::{
    custom, preset, DriveDescription, InitialState, InlineModel, PresetOverrides, Scenario,
    ScenarioName,
};

pub const DEFAULT_TRAJECTORIES: usize = 100;
pub const DEFAULT_DISCARD_PERIODS: usize = 20;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Option<Spanned<String>>,
    model: Option<RawModel>,
    #[serde(default)]
    params: PresetOverrides,
    trajectories: Option<usize>,
    compare_oracle: Option<bool>,
    oracle_dt: Option<f64>,
    discard_periods: Option<usize>,
    #[serde(default)]
    output: OutputSettings,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    dim: usize,
    hamiltonian: Spanned<String>,
    drive: Option<RawDrive>,
    #[serde(default)]
    lindblads: Vec<Spanned<String>>,
    initial: InitialState,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrive {
    operator: Spanned<String>,
    tau1: f64,
    tau2: f64,
    f0: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<OutputFormat>,
}

/// Where the model comes from.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSource {
    Preset(ScenarioName),
    Inline(InlineModel),
}

/// Fully resolved run settings.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub source: ModelSource,
    /// Overrides as written, before command-line flags.
    pub overrides: PresetOverrides,
    pub scenario: Scenario,
    pub trajectories: usize,
    pub compare_oracle: bool,
    /// Master-equation step; defaults to the trajectory step.
    pub oracle_dt: Option<f64>,
    pub discard_periods: usize,
    pub output: OutputSettings,
}

/// Values from the command line that take precedence over the document.
#[derive(Clone, Debug, Default)]
pub struct CliOverrides {
    pub seed: Option<u64>,
    pub trajectories: Option<usize>,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub beta: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub discard_periods: Option<usize>,
}

impl RunConfig {
    /// Configuration for a preset with all defaults.
    pub fn for_preset(name: ScenarioName) -> Result<Self> {
        Self::resolve(ModelSource::Preset(name), PresetOverrides::default())
    }

    fn resolve(source: ModelSource, overrides: PresetOverrides) -> Result<Self> {
        let scenario = match &source {
            ModelSource::Preset(name) => preset(*name, &overrides)?,
            ModelSource::Inline(model) => custom(model, &overrides)?,
        };
        Ok(Self {
            source,
            overrides,
            scenario,
            trajectories: DEFAULT_TRAJECTORIES,
            compare_oracle: false,
            oracle_dt: None,
            discard_periods: DEFAULT_DISCARD_PERIODS,
            output: OutputSettings::default(),
        })
    }

    /// Re-resolves the scenario with command-line values applied.
    pub fn with_cli(mut self, cli: &CliOverrides) -> Result<Self> {
        let mut o = self.overrides.clone();
        o.seed = cli.seed.or(o.seed);
        o.dt = cli.dt.or(o.dt);
        if cli.t_final.is_some() {
            o.t_final = cli.t_final;
            o.periods = None;
        }
        o.beta = cli.beta.or(o.beta);
        self.scenario = match &self.source {
            ModelSource::Preset(name) => preset(*name, &o)?,
            ModelSource::Inline(model) => custom(model, &o)?,
        };
        self.overrides = o;
        if let Some(m) = cli.trajectories {
            self.trajectories = positive_count("trajectories", m)?;
        }
        if let Some(d) = cli.discard_periods {
            self.discard_periods = d;
        }
        if cli.out.is_some() {
            self.output.path = cli.out.clone();
        }
        if cli.format.is_some() {
            self.output.format = cli.format;
        }
        Ok(self)
    }

    pub fn format(&self) -> OutputFormat {
        self.output.format.unwrap_or(OutputFormat::Csv)
    }

    /// Resolved settings as echoed into output headers.
    pub fn echo(&self) -> serde_json::Value {
        let s = &self.scenario;
        serde_json::json!({
            "scenario": s.label(),
            "params": s.params,
            "model": s.description,
            "trajectories": self.trajectories,
            "compare_oracle": self.compare_oracle,
            "oracle_dt": self.oracle_dt.unwrap_or(s.cfg.dt),
            "discard_periods": self.discard_periods,
        })
    }
}

fn positive_count(name: &str, n: usize) -> Result<usize> {
    if n == 0 {
        Err(QsdError::Config(format!("{name} must be at least 1")))
    } else {
        Ok(n)
    }
}

/// Line and 1-based column of a byte offset.
fn position(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn located(text: &str, span: Range<usize>, message: impl Into<String>) -> QsdError {
    let (line, column) = position(text, span.start);
    QsdError::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Checks an expression string, mapping parse errors to document positions.
fn check_expr(text: &str, value: &Spanned<String>) -> Result<()> {
    match OperatorExpr::parse(value.get_ref()) {
        Ok(_) => Ok(()),
        Err(QsdError::Parse {
            line: 1,
            column,
            message,
        }) => {
            // The span starts at the opening quote.
            let (line, col) = position(text, value.span().start);
            Err(QsdError::Parse {
                line,
                column: col + column,
                message,
            })
        }
        Err(QsdError::Parse { message, .. }) => Err(located(text, value.span(), message)),
        Err(e) => Err(e),
    }
}

/// Parses and resolves a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let span = e.span().unwrap_or(0..0);
        located(text, span, e.message().to_string())
    })?;

    let source = match (raw.scenario, raw.model) {
        (Some(_), Some(_)) => {
            return Err(QsdError::Config(
                "give either 'scenario' or a [model] table, not both".into(),
            ))
        }
        (None, None) => {
            return Err(QsdError::Config(
                "missing 'scenario' name or [model] table".into(),
            ))
        }
        (Some(name), None) => {
            let parsed = name
                .get_ref()
                .parse::<ScenarioName>()
                .map_err(|e| located(text, name.span(), e.to_string()))?;
            ModelSource::Preset(parsed)
        }
        (None, Some(m)) => {
            check_expr(text, &m.hamiltonian)?;
            for l in &m.lindblads {
                check_expr(text, l)?;
            }
            let drive = match m.drive {
                Some(d) => {
                    check_expr(text, &d.operator)?;
                    Some(DriveDescription {
                        operator: d.operator.into_inner(),
                        tau1: d.tau1,
                        tau2: d.tau2,
                        f0: d.f0,
                    })
                }
                None => None,
            };
            ModelSource::Inline(InlineModel {
                dim: m.dim,
                hamiltonian: m.hamiltonian.into_inner(),
                drive,
                lindblads: m.lindblads.into_iter().map(Spanned::into_inner).collect(),
                initial: m.initial,
            })
        }
    };

    let mut cfg = RunConfig::resolve(source, raw.params)?;
    if let Some(m) = raw.trajectories {
        cfg.trajectories = positive_count("trajectories", m)?;
    }
    cfg.compare_oracle = raw.compare_oracle.unwrap_or(false);
    if let Some(dt) = raw.oracle_dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(QsdError::InvalidStep(dt));
        }
        cfg.oracle_dt = Some(dt);
    }
    cfg.discard_periods = raw.discard_periods.unwrap_or(DEFAULT_DISCARD_PERIODS);
    cfg.output = raw.output;
    Ok(cfg)
}
