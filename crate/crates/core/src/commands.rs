//! Execution pipelines behind the command-line verbs.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::ensemble::{run_ensemble_opts, EnsembleOptions, Execution};
use crate::error::{QsdError, Result};
use crate::integrator::run_trajectory;
use crate::linalg::{pure_density, C64};
use crate::oracle::integrate_master;
use crate::output::{
    ensemble_records, oracle_records, poincare_table, series_table, write_table, Header, Table,
};
use crate::scenarios::{integrate_classical, observable_samples, poincare_section, KaosParams};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "QSD_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "qsd-out";

/// Index of ⟨a⟩ among the standard observables.
const OBS_A: usize = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// One trajectory, one row per recorded step.
    Trajectory,
    /// Ensemble mean series, optionally compared with the master equation.
    Ensemble,
    /// Master-equation solution alone.
    Oracle,
    /// Poincaré section of the classical pulsed oscillator.
    Classical,
    /// Poincaré section of ⟨a⟩ along one quantum trajectory.
    Poincare,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Trajectory => "trajectory",
            Mode::Ensemble => "ensemble",
            Mode::Oracle => "oracle",
            Mode::Classical => "classical",
            Mode::Poincare => "poincare",
        }
    }
}

/// What a command produced.
#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub mode: Mode,
    pub scenario: String,
    pub seed: u64,
    pub output: PathBuf,
    pub rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_trace_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<usize>,
}

/// Output path: the configured one, else `<dir>/<label>-<mode>.<ext>` where
/// `dir` comes from `out_dir` (normally `$QSD_OUT_DIR`) or `qsd-out`.
pub fn output_path(cfg: &RunConfig, mode: Mode, out_dir: Option<&Path>) -> PathBuf {
    if let Some(p) = &cfg.output.path {
        return p.clone();
    }
    let dir = out_dir.map_or_else(|| PathBuf::from(DEFAULT_OUT_DIR), Path::to_path_buf);
    dir.join(format!(
        "{}-{}.{}",
        cfg.scenario.label(),
        mode.as_str(),
        cfg.format().extension()
    ))
}

fn kaos_params(cfg: &RunConfig, mode: Mode) -> Result<KaosParams> {
    cfg.scenario.kaos.ok_or_else(|| {
        QsdError::Config(format!(
            "{} mode needs the kaos scenario (got {})",
            mode.as_str(),
            cfg.scenario.label()
        ))
    })
}

/// Runs `mode` and writes its table; `out_dir` replaces the default
/// directory when no explicit path is configured.
pub fn run_command(cfg: &RunConfig, mode: Mode, out_dir: Option<&Path>) -> Result<Summary> {
    let s = &cfg.scenario;
    let observables = &s.cfg.observables;
    let mut max_trace_distance = None;
    let mut trajectories = None;
    let table: Table = match mode {
        Mode::Trajectory => {
            let run = run_trajectory(&s.model, &s.psi0, &s.cfg)?;
            series_table(&run.records, observables)
        }
        Mode::Ensemble => {
            let opts = EnsembleOptions {
                execution: Execution::default(),
                keep_snapshots: false,
            };
            let ens = run_ensemble_opts(&s.model, &s.psi0, &s.cfg, cfg.trajectories, opts)?;
            if cfg.compare_oracle {
                let oracle = integrate_master(
                    &s.model,
                    &pure_density(&s.psi0),
                    cfg.oracle_dt.unwrap_or(s.cfg.dt),
                    s.cfg.t_final,
                    oracle_stride(cfg)?,
                )?;
                max_trace_distance = Some(ens.max_trace_distance(&oracle)?);
            }
            trajectories = Some(ens.trajectory_count);
            series_table(&ensemble_records(&ens, observables)?, observables)
        }
        Mode::Oracle => {
            let oracle = integrate_master(
                &s.model,
                &pure_density(&s.psi0),
                cfg.oracle_dt.unwrap_or(s.cfg.dt),
                s.cfg.t_final,
                oracle_stride(cfg)?,
            )?;
            series_table(&oracle_records(&oracle, observables)?, observables)
        }
        Mode::Classical => {
            let params = kaos_params(cfg, mode)?;
            let samples =
                integrate_classical(C64::new(0.0, 0.0), &params, s.cfg.dt, s.cfg.t_final)?;
            let points = poincare_section(&samples, &params, s.cfg.dt, cfg.discard_periods)?;
            poincare_table(&points)
        }
        Mode::Poincare => {
            let params = kaos_params(cfg, mode)?;
            let run = run_trajectory(&s.model, &s.psi0, &s.cfg)?;
            let samples = observable_samples(&run.records, OBS_A)?;
            let spacing = s.cfg.dt * s.cfg.record_stride as f64;
            let points = poincare_section(&samples, &params, spacing, cfg.discard_periods)?;
            poincare_table(&points)
        }
    };

    let path = output_path(cfg, mode, out_dir);
    let mut echo = cfg.echo();
    echo["mode"] = serde_json::json!(mode.as_str());
    let header = Header {
        version: crate::VERSION.to_string(),
        seed: s.cfg.seed,
        config: echo,
    };
    write_table(&table, &path, cfg.format(), Some(&header))?;
    Ok(Summary {
        mode,
        scenario: s.label().to_string(),
        seed: s.cfg.seed,
        output: path,
        rows: table.rows.len(),
        max_trace_distance,
        trajectories,
    })
}

/// Oracle record spacing matching the trajectory record times.
fn oracle_stride(cfg: &RunConfig) -> Result<usize> {
    let c = &cfg.scenario.cfg;
    let Some(dt) = cfg.oracle_dt else {
        return Ok(c.record_stride);
    };
    let ratio = c.dt * c.record_stride as f64 / dt;
    let stride = ratio.round();
    if stride < 1.0 || (ratio - stride).abs() > 1e-9 * ratio {
        return Err(QsdError::Config(format!(
            "oracle_dt {dt} does not divide the record spacing {}",
            c.dt * c.record_stride as f64
        )));
    }
    Ok(stride as usize)
}
