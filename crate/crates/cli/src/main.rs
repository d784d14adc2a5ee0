//! Command-line harness: plant simulation, supervised runs, mean-field
//! oracle, seed sweeps, plot data and trace audits.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use switchsup::config::{ExperimentConfig, ScenarioConfig};
use switchsup::exec::Execution;
use switchsup::experiment::{
    audit, emit_plot_data, load_run, output_dir, run_experiment, sweep, sweep_csv, thermal_history,
    write_run, Figure, HISTORY_FILE,
};
use switchsup::meanfield::{
    integrate, lyapunov, stationary_point, write_trajectory_csv, FieldKind, MeanFieldPoint,
    MeanFieldScenario, DEFAULT_STEP,
};
use switchsup::rng::RngStream;
use switchsup::supervisor::SupervisorConfig;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "switchsup",
    version,
    about = "Switching supervisory output prediction for bilinear systems"
)]
struct Cli {
    /// Base directory for run outputs.
    #[arg(long, global = true, env = "SWITCHSUP_OUT_DIR", default_value = "runs")]
    out_dir: PathBuf,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Thermal,
    Synthetic,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Field {
    Literal,
    SelectionWeighted,
}

#[derive(Debug, clap::Args)]
struct Source {
    /// TOML experiment config.
    #[arg(short, long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in config used when no file is given.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
}

#[derive(Debug, clap::Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    evaluations: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the thermal plant and write its input-output history.
    Simulate {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        seed: Option<u64>,
        /// Evaluation intervals to simulate after the warm-up.
        #[arg(long, default_value_t = 10)]
        intervals: usize,
        #[arg(long)]
        noise_sd: Option<f64>,
        /// Output file; defaults to <out-dir>/<name>/history.jsonl.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the joint profile/model supervisor and write trace, metrics and plot data.
    Run {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        overrides: Overrides,
        /// Run directory; defaults to <out-dir>/<name>.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Integrate the mean-field dynamics of a synthetic scenario and locate its stationary point.
    Meanfield {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, value_enum, default_value = "literal")]
        field: Field,
        #[arg(long, default_value_t = DEFAULT_STEP)]
        step: f64,
        #[arg(long, default_value_t = 50.0)]
        horizon: f64,
        /// Start from a random interior point drawn with this seed instead of the uniform point.
        #[arg(long)]
        random_start: Option<u64>,
        /// Trajectory CSV; defaults to <out-dir>/<name>/meanfield.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run configs over seeds (and optional step-size / perturbation grids) and summarize.
    Sweep {
        /// Config files; the synthetic preset when none are given.
        #[arg(short, long)]
        config: Vec<PathBuf>,
        /// Seeds; each config's own seeds when empty.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',')]
        epsilon: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<f64>,
        #[arg(long)]
        evaluations: Option<usize>,
        /// Run seeds one after another.
        #[arg(long)]
        sequential: bool,
        /// Summary CSV; defaults to <out-dir>/sweep.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a plot-data table recomputed from a run's trace.
    Emit {
        run_dir: PathBuf,
        /// profile-probabilities, running-error, model-probabilities or running-performance.
        #[arg(long)]
        figure: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that a run directory's tables match its trace.
    Audit { run_dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use switchsup::Error as E;
    match err.chain().find_map(|e| e.downcast_ref::<E>()) {
        Some(E::Config(_)) => EXIT_CONFIG,
        Some(E::Numerical(_) | E::IllConditioned(_)) => EXIT_NUMERICAL,
        _ => EXIT_FAILURE,
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate {
            source,
            seed,
            intervals,
            noise_sd,
            out,
        } => {
            let config = load(&source, Preset::Thermal)?;
            let ScenarioConfig::Thermal(mut t) = config.scenario.clone() else {
                return Err(config_error("simulate needs a thermal scenario"));
            };
            if let Some(sd) = noise_sd {
                t.noise_sd = sd;
            }
            let seed = seed.unwrap_or(config.seed);
            let history = thermal_history(&t, intervals, seed)?;
            let path = out.unwrap_or_else(|| output_dir(&config, &cli.out_dir).join(HISTORY_FILE));
            let mut file = create(&path)?;
            history.write_jsonl(&mut file)?;
            file.flush()?;
            let (lo, hi) = history
                .samples()
                .iter()
                .fold((f64::MAX, f64::MIN), |(lo, hi), s| {
                    (lo.min(s.y[0]), hi.max(s.y[0]))
                });
            println!(
                "{} samples, room temperature {lo:.2}..{hi:.2} -> {}",
                history.len(),
                path.display()
            );
        }
        Command::Run {
            source,
            overrides,
            output_dir: dir,
        } => {
            let mut config = load(&source, Preset::Thermal)?;
            apply(&mut config, &overrides)?;
            let dir = dir.unwrap_or_else(|| output_dir(&config, &cli.out_dir));
            info!(
                "running '{}' ({}) for {} evaluations",
                config.name,
                config.kind(),
                config.evaluations
            );
            let out = run_experiment(&config)?;
            write_run(&dir, &config, &out)?;
            if let Some(h) = &out.history {
                let mut file = create(&dir.join(HISTORY_FILE))?;
                h.write_jsonl(&mut file)?;
                file.flush()?;
            }
            let s = &out.series;
            let last = s.len() - 1;
            println!(
                "{} evaluations, final w {:.3?}, running error {:.5}, reference fraction {:.3} -> {}",
                s.len(),
                s.w[last],
                s.running_mse[last],
                s.fraction_in_neighbourhood[last],
                dir.display()
            );
        }
        Command::Meanfield {
            source,
            lambda,
            field,
            step,
            horizon,
            random_start,
            out,
        } => {
            let config = load(&source, Preset::Synthetic)?;
            let ScenarioConfig::Synthetic(s) = &config.scenario else {
                return Err(config_error(
                    "meanfield needs a synthetic scenario with a reward table",
                ));
            };
            let lambda = lambda.unwrap_or(config.supervisor.lambda);
            let scenario = MeanFieldScenario::new(s.table()?, lambda)
                .map_err(|e| config_error(e.to_string()))?;
            let start = match random_start {
                Some(seed) => MeanFieldPoint::random_interior(&scenario, &mut RngStream::new(seed)),
                None => MeanFieldPoint::uniform(&scenario),
            };
            let kind = match field {
                Field::Literal => FieldKind::Literal,
                Field::SelectionWeighted => FieldKind::SelectionWeighted,
            };
            let trajectory = integrate(&scenario, &start, step, horizon, kind)?;
            let path =
                out.unwrap_or_else(|| output_dir(&config, &cli.out_dir).join("meanfield.csv"));
            let mut file = create(&path)?;
            write_trajectory_csv(&mut file, &trajectory, step)?;
            file.flush()?;
            let end = trajectory.last().expect("trajectory holds its start");
            info!(
                "Lyapunov function {:.6} -> {:.6}",
                lyapunov(&scenario, &start),
                lyapunov(&scenario, end)
            );
            let sp = stationary_point(&scenario, &start)?;
            println!("{}", serde_json::to_string(&sp)?);
        }
        Command::Sweep {
            config,
            seeds,
            epsilon,
            lambda,
            evaluations,
            sequential,
            out,
        } => {
            let bases = if config.is_empty() {
                vec![ExperimentConfig::synthetic_preset()]
            } else {
                config
                    .iter()
                    .map(|p| ExperimentConfig::load(p))
                    .collect::<switchsup::Result<Vec<_>>>()?
            };
            let mut configs = Vec::new();
            for base in &bases {
                let eps = if epsilon.is_empty() {
                    vec![base.supervisor.epsilon]
                } else {
                    epsilon.clone()
                };
                let lams = if lambda.is_empty() {
                    vec![base.supervisor.lambda]
                } else {
                    lambda.clone()
                };
                for e in &eps {
                    for l in &lams {
                        let mut c = base.clone();
                        c.supervisor = SupervisorConfig::new(*e, *l)
                            .and_then(|s| s.with_r_max(base.supervisor.r_max))
                            .map_err(|err| config_error(err.to_string()))?;
                        if let Some(n) = evaluations {
                            c.evaluations = n;
                        }
                        c.validate()?;
                        configs.push(c);
                    }
                }
            }
            let exec = if sequential {
                Execution::Sequential
            } else {
                Execution::Auto
            };
            let rows = sweep(&configs, &seeds, exec)?;
            let table = sweep_csv(&rows);
            let path = out.unwrap_or_else(|| cli.out_dir.join("sweep.csv"));
            let mut file = create(&path)?;
            file.write_all(table.as_bytes())?;
            file.flush()?;
            print!("{table}");
        }
        Command::Emit {
            run_dir,
            figure,
            out,
        } => {
            let which: Figure = figure
                .parse()
                .map_err(|e: switchsup::Error| config_error(e.to_string()))?;
            let (_, _, series) =
                load_run(&run_dir).with_context(|| format!("reading {}", run_dir.display()))?;
            let table = emit_plot_data(&series, which);
            match out {
                Some(path) => fs::write(&path, table)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{table}"),
            }
        }
        Command::Audit { run_dir } => {
            let report =
                audit(&run_dir).with_context(|| format!("auditing {}", run_dir.display()))?;
            for m in &report.mismatches {
                eprintln!("mismatch: {m}");
            }
            if !report.ok() {
                return Ok(ExitCode::from(EXIT_FAILURE));
            }
            println!("ok: {} tables match the trace", report.checked.len());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    switchsup::Error::Config(msg.into()).into()
}

fn load(source: &Source, default: Preset) -> Result<ExperimentConfig> {
    if let Some(path) = &source.config {
        return Ok(ExperimentConfig::load(path)?);
    }
    Ok(match source.preset.unwrap_or(default) {
        Preset::Thermal => ExperimentConfig::thermal_preset(),
        Preset::Synthetic => ExperimentConfig::synthetic_preset(),
    })
}

fn apply(config: &mut ExperimentConfig, o: &Overrides) -> Result<()> {
    if let Some(seed) = o.seed {
        config.seed = seed;
    }
    if let Some(n) = o.evaluations {
        config.evaluations = n;
    }
    let eps = o.epsilon.unwrap_or(config.supervisor.epsilon);
    let lam = o.lambda.unwrap_or(config.supervisor.lambda);
    config.supervisor = SupervisorConfig::new(eps, lam)
        .and_then(|s| s.with_r_max(config.supervisor.r_max))
        .map_err(|e| config_error(e.to_string()))?;
    config.validate()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}
