use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;

use edl_core::checkpoint::Checkpoint;
use edl_core::config::{ExperimentConfig, Mode};
use edl_core::dialog::Side;
use edl_core::play::play_session;
use edl_core::rng::{self, purpose};
use edl_core::run::{self, LoadedAgents};
use edl_core::world::{enumerate_images, AttributeKind, enumerate_instances, Instance, NUM_INSTANCES};
use edl_core::EdlError;

/// Cooperative image-guessing game: train, evaluate and play with agents
/// that learn their own symbol protocol.
#[derive(Parser)]
#[command(name = "edl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train agents (tabular or neural per the config) and write all run artifacts.
    Train(TrainArgs),
    /// Accuracy, retrieval curve and ranking metrics of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory for retrieval.csv and the plot script.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Protocol report: how answers relate to attributes for each question symbol.
    Analyze {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Also write the conditional answer tables as CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Play one game against a checkpointed partner on stdin/stdout.
    Play {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Seat taken by the person: q (questioner) or a (answerer).
        #[arg(long, value_enum)]
        side: SeatArg,
        /// Instance index (0-383); random from --seed when omitted.
        #[arg(long)]
        instance: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print every image and task instance of the world as CSV.
    DumpWorld,
    /// Print the resolved configuration and parameter layout.
    Describe {
        #[arg(long, conflicts_with = "checkpoint")]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// TOML config file; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Resume from this checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Dialog rounds per episode.
    #[arg(long)]
    rounds: Option<usize>,
    /// Freeze a parameter group during policy-gradient training (repeatable).
    #[arg(long, value_enum)]
    freeze: Vec<FreezeArg>,
    /// Add the weighted supervised loss to policy-gradient updates.
    #[arg(long)]
    multi_task: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Tabular,
    Neural,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Tabular => Mode::Tabular,
            ModeArg::Neural => Mode::Neural,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SeatArg {
    Q,
    A,
}

#[derive(Clone, Copy, ValueEnum)]
enum FreezeArg {
    Q,
    A,
    F,
}

/// Bad flags or configuration; reported with exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Usage(String);

fn build_config(args: &TrainArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| Usage(format!("{}: {e}", path.display())))?,
        None => ExperimentConfig::default_for(args.mode.map(Mode::from).unwrap_or(Mode::Tabular)),
    };
    if let Some(m) = args.mode {
        cfg.mode = m.into();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.out_dir = o.clone();
    }
    if let Some(r) = args.rounds {
        cfg.rounds = Some(r);
    }
    for f in &args.freeze {
        match f {
            FreezeArg::Q => cfg.freeze_q = true,
            FreezeArg::A => cfg.freeze_a = true,
            FreezeArg::F => cfg.freeze_f = true,
        }
    }
    if args.multi_task {
        cfg.multi_task = true;
    }
    cfg.validate().map_err(|e| Usage(e.to_string()))?;
    Ok(cfg)
}

fn pick_instance(index: Option<usize>, seed: u64) -> Result<Instance> {
    let i = match index {
        Some(i) => i,
        None => rng::stream(seed, &[purpose::PLAY]).gen_range(0..NUM_INSTANCES),
    };
    Ok(Instance::from_index(i)?)
}

fn execute(cli: Cli) -> Result<()> {
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    match cli.command {
        Command::Train(args) => {
            let cfg = build_config(&args)?;
            let summary = run::train(&cfg, args.checkpoint.as_deref())?;
            writeln!(
                out,
                "{} run finished: {} steps, task accuracy {:.4}, mean return {:.4}; artifacts in {}",
                match summary.mode {
                    Mode::Tabular => "tabular",
                    Mode::Neural => "neural",
                },
                summary.steps,
                summary.accuracy,
                summary.mean_return,
                summary.out_dir.display()
            )?;
        }
        Command::Eval { checkpoint, out: dir } => {
            let ck = Checkpoint::load(&checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
            let (report, _) = run::evaluate(&ck)?;
            write!(out, "{}", report.to_text())?;
            if let (Some(dir), Some(curve)) = (dir, &report.retrieval) {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("retrieval.csv"), curve.to_csv())?;
                std::fs::write(
                    dir.join("plot_retrieval.py"),
                    edl_core::eval::RetrievalCurve::plot_script("retrieval.csv"),
                )?;
            }
        }
        Command::Analyze { checkpoint, out: dir } => {
            let ck = Checkpoint::load(&checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
            let (_, report) = run::evaluate(&ck)?;
            write!(out, "{}", report.to_text())?;
            if let Some(dir) = dir {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("protocol_tables.csv"), report.to_csv())?;
            }
        }
        Command::Play {
            checkpoint,
            side,
            instance,
            seed,
        } => {
            let ck = Checkpoint::load(&checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
            let agents = LoadedAgents::from_checkpoint(&ck)?;
            let inst = pick_instance(instance, seed)?;
            let side = match side {
                SeatArg::Q => Side::Q,
                SeatArg::A => Side::A,
            };
            let stdin = io::stdin();
            play_session(&agents, &inst, ck.header.config.rounds(), side, &mut stdin.lock(), &mut out)?;
        }
        Command::DumpWorld => {
            let names: Vec<_> = AttributeKind::all().iter().map(|k| k.name()).collect();
            writeln!(out, "image_id,{}", names.join(","))?;
            for img in enumerate_images() {
                let values: Vec<_> = img.values().iter().map(|v| v.name()).collect();
                writeln!(out, "{},{}", img.id(), values.join(","))?;
            }
            writeln!(out)?;
            writeln!(out, "instance,image_id,task_id,first,second")?;
            for (i, inst) in enumerate_instances().iter().enumerate() {
                writeln!(
                    out,
                    "{i},{},{},{},{}",
                    inst.image.id(),
                    inst.task.id(),
                    inst.task.first().name(),
                    inst.task.second().name()
                )?;
            }
        }
        Command::Describe { config, checkpoint, mode } => {
            let cfg = match (config, checkpoint) {
                (Some(p), _) => ExperimentConfig::load(&p)?,
                (None, Some(p)) => Checkpoint::load(&p)?.header.config,
                (None, None) => ExperimentConfig::default_for(mode.map(Mode::from).unwrap_or(Mode::Tabular)),
            };
            cfg.validate()?;
            writeln!(out, "{}", cfg.resolved().to_toml())?;
            match cfg.mode {
                Mode::Neural => {
                    let nets = edl_core::nn::AgentNets::new(cfg.net_dims(), cfg.seed);
                    write!(out, "{}", nets.describe())?;
                }
                Mode::Tabular => {
                    let agents = edl_core::tabular::TabularAgents::new(cfg.tabular_shape(), cfg.init_value)?;
                    let mut total = 0;
                    for (name, t) in agents
                        .ask
                        .iter()
                        .enumerate()
                        .map(|(r, t)| (format!("ask.{r}"), t))
                        .chain(std::iter::once(("predict".to_string(), &agents.predict)))
                        .chain(agents.answer.iter().enumerate().map(|(r, t)| (format!("answer.{r}"), t)))
                    {
                        writeln!(out, "{name:<10} {:>6} states x {:>3} actions", t.n_states(), t.n_actions())?;
                        total += t.n_states() * t.n_actions();
                    }
                    writeln!(out, "total {total} state-action values")?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EDL_LOG_LEVEL", "info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<Usage>().is_some()
                || matches!(e.downcast_ref::<EdlError>(), Some(EdlError::Config { .. }));
            if usage {
                eprintln!("run `edl --help` for usage");
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
