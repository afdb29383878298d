use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qsd::commands::OUT_DIR_ENV;
use qsd::output::OutputFormat;
use qsd::validation::{criterion, CRITERIA};
use qsd::{parse_config, run_command, CliOverrides, Mode, QsdError, RunConfig, ScenarioName};

#[derive(Parser)]
#[command(name = "qsd", version = qsd::VERSION, about = "Quantum state diffusion simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List preset scenarios and the parameters each accepts.
    ListScenarios,
    /// Integrate trajectories; a single one unless --trajectories is given.
    Run(RunArgs),
    /// Solve the master equation for the same model.
    Oracle(RunArgs),
    /// Poincaré section of the classical pulsed oscillator.
    Classical(RunArgs),
    /// Poincaré section of <a> along one quantum trajectory.
    Poincare(RunArgs),
    /// Run acceptance checks (all, or the given ids).
    Validate { ids: Vec<u8> },
}

#[derive(Args)]
struct RunArgs {
    /// Preset name; ignored when --config is given.
    scenario: Option<String>,
    /// TOML run configuration.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Ensemble size; switches `run` to ensemble mode.
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-final")]
    t_final: Option<f64>,
    /// Scaling parameter of the kaos preset.
    #[arg(long)]
    beta: Option<f64>,
    /// Output file; defaults to $QSD_OUT_DIR/<scenario>-<mode>.<ext>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json-lines.
    #[arg(long)]
    format: Option<OutputFormat>,
    #[arg(long = "discard-periods")]
    discard_periods: Option<usize>,
    /// Also solve the master equation and report the trace distance.
    #[arg(long = "compare-oracle")]
    compare_oracle: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, QsdError> {
        let cfg = match (&self.config, &self.scenario) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path).map_err(|e| QsdError::Io {
                    path: path.clone(),
                    source: e,
                })?;
                parse_config(&text)?
            }
            (None, Some(name)) => RunConfig::for_preset(name.parse::<ScenarioName>()?)?,
            (None, None) => {
                return Err(QsdError::Config(
                    "give a scenario name or --config <file>".into(),
                ))
            }
        };
        let mut cfg = cfg.with_cli(&CliOverrides {
            seed: self.seed,
            trajectories: self.trajectories,
            dt: self.dt,
            t_final: self.t_final,
            beta: self.beta,
            out: self.out.clone(),
            format: self.format,
            discard_periods: self.discard_periods,
        })?;
        cfg.compare_oracle |= self.compare_oracle;
        Ok(cfg)
    }
}

fn execute(args: &RunArgs, mode: Mode) -> Result<(), QsdError> {
    let cfg = args.resolve()?;
    let mode = match mode {
        Mode::Trajectory if args.trajectories.is_some() || cfg.compare_oracle => Mode::Ensemble,
        m => m,
    };
    let out_dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    let summary = run_command(&cfg, mode, out_dir.as_deref())?;
    println!(
        "{}",
        serde_json::to_string(&summary).expect("summary serializes")
    );
    Ok(())
}

fn list_scenarios() {
    for name in ScenarioName::ALL {
        println!("{:<6} {}", name.as_str(), name.summary());
        println!("       parameters: {}", name.parameter_keys().join(", "));
    }
}

fn validate(ids: &[u8]) -> Result<bool, QsdError> {
    let selected: Vec<_> = if ids.is_empty() {
        CRITERIA.iter().collect()
    } else {
        ids.iter()
            .map(|&id| {
                criterion(id)
                    .ok_or_else(|| QsdError::InvalidParameter(format!("no criterion {id}")))
            })
            .collect::<Result<_, _>>()?
    };
    let mut all = true;
    for c in selected {
        let report = c.run();
        all &= report.passed;
        println!("{}", report.line());
    }
    Ok(all)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::ListScenarios => {
            list_scenarios();
            Ok(true)
        }
        Command::Run(a) => execute(a, Mode::Trajectory).map(|_| true),
        Command::Oracle(a) => execute(a, Mode::Oracle).map(|_| true),
        Command::Classical(a) => execute(a, Mode::Classical).map(|_| true),
        Command::Poincare(a) => execute(a, Mode::Poincare).map(|_| true),
        Command::Validate { ids } => validate(ids),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::from(2)
        }
    }
}
