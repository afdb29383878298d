//! Quantum state diffusion for open quantum systems.
//!
//! The crate integrates the Itô stochastic Schrödinger equation of quantum
//! state diffusion on a truncated Fock basis, averages trajectory ensembles,
//! and checks them against a direct RK4 solution of the Lindblad master
//! equation. Scenario presets cover measurement-induced collapse, driven
//! damping, thermal baths, a double well, quantum jumps and a pulsed Kerr
//! oscillator together with its classical limit.

// `!(x > 0.0)` style checks are kept so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod expr;
pub mod integrator;
pub mod linalg;
pub mod noise;
pub mod oracle;
pub mod output;
pub mod scenarios;
pub mod validation;

/// Crate version with the git description of the build, when available.
pub const VERSION: &str = env!("QSD_VERSION");

pub use commands::{run_command, Mode, Summary};
pub use config::{parse_config, CliOverrides, RunConfig};
pub use ensemble::{
    born_tally, observable_series, run_ensemble, run_ensemble_opts, run_ensemble_with, BornTally,
    EnsembleOptions, EnsembleResult, Execution, ObservableSeries,
};
pub use error::{QsdError, Result};
pub use expr::{eval_expr, OperatorExpr};
pub use integrator::{
    diffusion_vectors, drift, pulse_value, run_trajectory, step, Drive, Observable,
    OpenSystemModel, PulseSchedule, Scheme, Trajectory, TrajectoryConfig, TrajectoryRecord,
};
pub use linalg::{
    apply, expectation, fock_annihilation, fock_creation, fock_number, momentum, position,
    position_eigenbasis, projector_fidelity, pure_density, variance, DensityMatrix, OperatorMatrix,
    StateVector, C64,
};
pub use noise::{fork_stream, NoiseStream};
pub use oracle::{integrate_master, lindblad_rhs, trace_distance};
pub use scenarios::{
    beta_scale, classical_rhs, custom, double_well_operators, integrate_classical,
    poincare_section, preset, InitialState, InlineModel, KaosParams, PoincarePoint,
    PresetOverrides, Scenario, ScenarioName,
};
