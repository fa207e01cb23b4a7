mod commands;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use risuav::mtl::{self, MtlModel};
use risuav::protocol::SolverChoice;
use risuav::scenario::{Resolved, Scenario};
use risuav::{Error, Result};

use output::Format;

/// Simulation, sweeps and surrogate training for RIS-assisted UAV downlinks.
#[derive(Debug, Parser)]
#[command(name = "risuav", version)]
struct Cli {
    /// Scenario TOML; built-in defaults when omitted.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    Exhaustive,
    Alternating,
    Mtl,
    None,
    RandomPhase,
}

impl From<SolverArg> for SolverChoice {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Exhaustive => SolverChoice::Exhaustive,
            SolverArg::Alternating => SolverChoice::Alternating,
            SolverArg::Mtl => SolverChoice::Mtl,
            SolverArg::None => SolverChoice::None,
            SolverArg::RandomPhase => SolverChoice::RandomPhase,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Axis {
    /// SNR and power against the number of RIS groups.
    Groups,
    /// Throughput of four schemes against the number of pairs.
    Pairs,
    /// Throughput against UAV displacement.
    Distance,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one episode and write the frame trace plus aggregate statistics.
    Simulate {
        /// Overrides `optimizer.solver`.
        #[arg(long, value_enum)]
        solver: Option<SolverArg>,
        /// Model file for the mtl solver.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run a parameter sweep and write a long-format result table.
    Sweep {
        #[arg(value_enum)]
        axis: Axis,
        /// Comma-separated sweep points; each axis has its own default.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// Solver for the distance sweep; overrides `optimizer.solver`.
        #[arg(long, value_enum)]
        solver: Option<SolverArg>,
        /// Model file (distance sweep) or directory of `model_k<K>.bin` files (pairs sweep).
        /// The pairs sweep trains its own models when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Surrogate model workflow.
    Mtl {
        #[command(subcommand)]
        phase: MtlPhase,
    },
    /// Print the resolved scenario with every default filled in.
    ValidateConfig,
}

#[derive(Debug, Subcommand)]
enum MtlPhase {
    /// Label random instances with the exhaustive solver.
    Dataset {
        /// Number of samples; defaults to `mtl.dataset_size`.
        #[arg(long)]
        size: Option<usize>,
    },
    /// Train a model on a dataset file, or on freshly collected samples.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        size: Option<usize>,
    },
    /// Accuracy and phase MSE against the training fraction.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        size: Option<usize>,
        /// Training fractions in (0, 0.9]; defaults to 0.1..0.9.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Per-sample inference time against exhaustive solve time.
    Bench {
        /// Pair counts; defaults to 2..8.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// Instances timed per pair count.
        #[arg(long, default_value_t = 20)]
        size: usize,
    },
}

/// Loaded scenario plus the shared output options.
pub struct Context {
    pub scenario: Scenario,
    pub resolved: Resolved,
    pub out: PathBuf,
    pub format: Format,
}

impl Context {
    /// Re-resolve with a modified copy of the scenario.
    pub fn with(&self, edit: impl FnOnce(&mut Scenario)) -> Result<Resolved> {
        let mut s = self.scenario.clone();
        edit(&mut s);
        s.resolve()
    }
}

fn load_scenario(path: Option<&Path>, seed: Option<u64>) -> Result<Scenario> {
    let mut s = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::config("--scenario", format!("{}: {e}", p.display())))?;
            Scenario::from_toml_str(&text)?
        }
        None => Scenario::default(),
    };
    if let Some(seed) = seed {
        s.seed = seed;
    }
    Ok(s)
}

/// Model for `radio`, rejecting files trained for another shape.
pub fn load_model(path: &Path, resolved: &Resolved) -> Result<MtlModel> {
    let model = MtlModel::load(path).map_err(|e| match e {
        Error::Io(io) => Error::config("--model", format!("{}: {io}", path.display())),
        other => other,
    })?;
    let want = mtl::feature_dim(&resolved.radio);
    if model.num_pairs() != resolved.radio.num_pairs || model.input_dim() != want {
        return Err(Error::config(
            "--model",
            format!(
                "{} was trained for {} pairs and {} features; scenario has {} pairs and {want} features",
                path.display(),
                model.num_pairs(),
                model.input_dim(),
                resolved.radio.num_pairs
            ),
        ));
    }
    Ok(model)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 2,
        Error::Infeasible { .. } | Error::NoFeasibleCandidate => 3,
        Error::Frame { source, .. } => exit_code(source),
        _ => 4,
    }
}

fn run(cli: Cli) -> Result<()> {
    let scenario = load_scenario(cli.scenario.as_deref(), cli.seed)?;
    let resolved = scenario.resolve()?;
    let ctx = Context {
        scenario,
        resolved,
        out: cli.out,
        format: cli.format,
    };
    match cli.command {
        Command::Simulate { solver, model } => {
            commands::simulate(&ctx, solver.map(Into::into), model.as_deref())
        }
        Command::Sweep {
            axis,
            values,
            solver,
            model,
        } => match axis {
            Axis::Groups => commands::sweep_groups(&ctx, values.as_deref()),
            Axis::Pairs => commands::sweep_pairs(&ctx, values.as_deref(), model.as_deref()),
            Axis::Distance => {
                commands::sweep_distance(&ctx, values.as_deref(), solver.map(Into::into), model.as_deref())
            }
        },
        Command::Mtl { phase } => match phase {
            MtlPhase::Dataset { size } => commands::mtl_dataset(&ctx, size),
            MtlPhase::Train { data, size } => commands::mtl_train(&ctx, data.as_deref(), size),
            MtlPhase::Eval { data, size, values } => {
                commands::mtl_eval(&ctx, data.as_deref(), size, values.as_deref())
            }
            MtlPhase::Bench { values, size } => commands::mtl_bench(&ctx, values.as_deref(), size),
        },
        Command::ValidateConfig => {
            print!("{}", commands::resolved_dump(&ctx));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
