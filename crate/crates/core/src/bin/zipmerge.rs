//! `zipmerge` command line: train, eval, replay, selftest.
//!
//! Exit status: 0 on success, 1 for usage errors, 2 for runtime faults.

// `!(x > 0.0)` is used on purpose throughout so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use zipmerge::config::TrainConfig;
use zipmerge::eval::{export_replay, trial_seed, EgoDriver, EvalSetup, Evaluator, ReplayStyle};
use zipmerge::policy::load_snapshot;
use zipmerge::ppo::{write_curve_row, CURVE_HEADER};
use zipmerge::road::RoadMap;
use zipmerge::selfplay::{run_selfplay, AgentZoo, PopulationSpec, StageSchedule, TrainEvent, TrainSetup, INDEX_FILE};
use zipmerge::selftest::{run_all, Effort};
use zipmerge::sim::{read_trace, write_trace};
use zipmerge::{Error, Result};

#[derive(Parser)]
#[command(name = "zipmerge", version, about = "Zipper-merge traffic simulator with PPO self-play")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a staged self-play schedule and write the zoo, metrics and resolved config.
    Train {
        /// Stage file; the shipped three-stage schedule if omitted.
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// Road map file; the built-in zipper merge if omitted.
        #[arg(long)]
        map: Option<PathBuf>,
        /// Flat key=value config file. ZIPMERGE_* variables override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Replace every stage's update budget.
        #[arg(long)]
        updates: Option<u64>,
    },
    /// Evaluate a snapshot (or the rule-based driver) against a population.
    Eval {
        #[arg(long, required_unless_present = "idm")]
        snapshot: Option<PathBuf>,
        /// Drive the ego with the rule-based model instead of a snapshot.
        #[arg(long, conflicts_with = "snapshot")]
        idm: bool,
        /// `IDM:0.5,RL:0.5` style fractions or `popul1`..`popul4`.
        #[arg(long, default_value = "popul1")]
        population: String,
        #[arg(long, default_value_t = 250)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Zoo directory for policy kinds in the population; defaults to the
        /// snapshot's directory when it holds a zoo index.
        #[arg(long)]
        zoo: Option<PathBuf>,
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Per-episode CSV log.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Trace CSV of the first trial, for `replay`.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Render an episode trace to one PPM frame per step.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Map the trace was recorded on; the built-in zipper merge if omitted.
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        meters_per_pixel: f64,
        #[arg(long)]
        no_labels: bool,
    },
    /// Run the oracle checks.
    Selftest {
        /// Reduced sample counts.
        #[arg(long)]
        quick: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_map(path: Option<&Path>) -> Result<Arc<RoadMap>> {
    Ok(Arc::new(match path {
        Some(p) => RoadMap::parse(&fs::read_to_string(p)?)?,
        None => RoadMap::zipper_merge(),
    }))
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    let mut c = TrainConfig::default();
    if let Some(p) = path {
        c.apply_text(&fs::read_to_string(p)?)?;
    }
    c.apply_env(std::env::vars())?;
    c.validate()?;
    Ok(c)
}

fn run(command: Command) -> Result<bool> {
    match command {
        Command::Train { schedule, map, config, seed, out, updates } => {
            let cfg = load_config(config.as_deref())?;
            let mut schedule = match schedule {
                Some(p) => fs::read_to_string(p)?.parse()?,
                None => StageSchedule::default_desk(),
            };
            if let Some(n) = updates {
                schedule = schedule.with_updates(n);
            }
            train(&cfg, &schedule, load_map(map.as_deref())?, seed, &out)?;
            Ok(true)
        }
        Command::Eval { snapshot, idm: _, population, trials, seed, zoo, map, config, log, trace } => {
            let cfg = load_config(config.as_deref())?;
            let population: PopulationSpec = population.parse()?;
            let ego = match &snapshot {
                Some(p) => {
                    let snap = load_snapshot(BufReader::new(fs::File::open(p)?))?;
                    EgoDriver::Policy { tag: snap.meta.tag.clone(), params: Arc::new(snap.params) }
                }
                None => EgoDriver::Idm,
            };
            let zoo_dir = zoo.or_else(|| {
                let dir = snapshot.as_deref()?.parent()?;
                dir.join(INDEX_FILE).exists().then(|| dir.to_path_buf())
            });
            let zoo = match zoo_dir {
                Some(d) => AgentZoo::open(d)?,
                None => AgentZoo::in_memory(),
            };
            let setup = EvalSetup { map: load_map(map.as_deref())?, episode: cfg.episode, population, zoo };
            let evaluator = Evaluator::new(&setup, ego)?;
            let report = evaluator.run(trials, seed)?;
            println!("{report}");
            if let Some(p) = log {
                report.write_episode_log(BufWriter::new(fs::File::create(p)?))?;
            }
            if let Some(p) = trace {
                let (_, rows) = evaluator.run_trial(0, trial_seed(seed, 0), true)?;
                write_trace(&rows, BufWriter::new(fs::File::create(p)?))?;
            }
            Ok(true)
        }
        Command::Replay { trace, out, map, meters_per_pixel, no_labels } => {
            let rows = read_trace(BufReader::new(fs::File::open(&trace)?))?;
            if !(meters_per_pixel > 0.0) {
                return Err(Error::Config("meters-per-pixel must be positive".into()));
            }
            let style = ReplayStyle { meters_per_pixel, labels: !no_labels, ..ReplayStyle::default() };
            let frames = export_replay(&*load_map(map.as_deref())?, &rows, &style, &out)?;
            println!("wrote {} frames to {}", frames.len(), out.display());
            Ok(true)
        }
        Command::Selftest { quick } => {
            let results = run_all(if quick { Effort::Quick } else { Effort::Full });
            for r in &results {
                println!("{r}");
            }
            Ok(results.iter().all(|r| r.passed))
        }
    }
}

fn train(cfg: &TrainConfig, schedule: &StageSchedule, map: Arc<RoadMap>, seed: u64, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("config.txt"), cfg.to_text())?;
    fs::write(out.join("schedule.txt"), schedule.to_string())?;
    let mut zoo = AgentZoo::open(out.join("zoo"))?;
    let setup = TrainSetup { map, episode: cfg.episode.clone(), ppo: cfg.ppo.clone(), net: cfg.net_config(), seed };

    let mut curve = BufWriter::new(fs::File::create(out.join("metrics.csv"))?);
    writeln!(curve, "{CURVE_HEADER}")?;
    let mut write_err = None;
    let run = run_selfplay(schedule, &setup, &mut zoo, |ev| match ev {
        TrainEvent::StageStart { index, tag, population, updates } => {
            eprintln!("stage {} -> {tag}: population {population}, {updates} updates", index + 1);
        }
        TrainEvent::Update { metrics: m, .. } => {
            if let Err(e) = write_curve_row(m, &mut curve).and_then(|_| curve.flush().map_err(Error::from)) {
                write_err.get_or_insert(e);
            }
            if m.update % 10 == 0 {
                let ret = m.mean_return.map(|r| format!("{r:.1}")).unwrap_or_else(|| "-".into());
                eprintln!(
                    "  update {:>5}  steps {:>8}  return {ret:>7}  success {:5.1}%  collision {:5.1}%  oob {:5.1}%",
                    m.update, m.env_steps, m.success_rate, m.collision_rate, m.oob_rate
                );
            }
        }
        TrainEvent::StageEnd { tag, update_index, .. } => {
            eprintln!("  froze {tag} after {update_index} updates");
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    println!(
        "trained {} updates; zoo {} holds {}",
        run.metrics.len(),
        out.join("zoo").display(),
        zoo.tags().iter().map(|t| t.tag()).collect::<Vec<_>>().join(", ")
    );
    Ok(())
}
