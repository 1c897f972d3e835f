//! Match harness CLI: run seeded matches, module experiments, replay logs,
//! and export plot data. Exit codes: 0 success/pass, 1 acceptance or
//! experiment failure, 2 usage or configuration errors.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mslsim_core::config::RunConfig;
use mslsim_core::experiments;
use mslsim_core::matchlog::{self, LogRecord, MatchLog};
use mslsim_core::runner;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mslsim", version, about = "Deterministic multi-robot soccer simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full seeded match and write its log.
    Run(RunArgs),
    /// Run a per-module experiment suite and print its metrics table.
    Experiment(ExperimentArgs),
    /// Filter, verify, or summarize a match log.
    Replay(ReplayArgs),
    /// Export tabular plot data from a match log.
    Plot(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration file (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Match duration override, seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Log output path override.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// One of: localizer, fusion, navigation, des.
    name: String,
    /// Seed for the experiment streams.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Write the metrics table as TSV here as well.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Match log to read.
    #[arg(long)]
    log: PathBuf,
    /// Only records of this robot.
    #[arg(long)]
    robot: Option<u8>,
    /// Only records of this kind (step|ball|decision|estimate|localization|sim|behavior).
    #[arg(long)]
    kind: Option<String>,
    /// Time window start, seconds.
    #[arg(long)]
    from: Option<f64>,
    /// Time window end, seconds.
    #[arg(long)]
    to: Option<f64>,
    /// Print summary statistics instead of records.
    #[arg(long)]
    summary: bool,
    /// Re-run the localizer from its noise streams and verify bit-exactness.
    #[arg(long)]
    verify_localizer: bool,
    /// Config the log was produced with (needed for --verify-localizer).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// One of: trajectory, loc-error, des-values.
    what: String,
    /// Match log (trajectory, loc-error).
    #[arg(long)]
    log: Option<PathBuf>,
    /// DES model file (des-values); the shipped example when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "plots")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Replay(args) => cmd_replay(args),
        Command::Plot(args) => cmd_plot(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: &Option<PathBuf>, seed: Option<u64>, duration: Option<f64>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seeds.master = seed;
    }
    if let Some(duration) = duration {
        cfg.duration = duration;
    }
    Ok(cfg)
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let mut cfg = load_config(&args.config, args.seed, args.duration)?;
    if let Some(out) = args.out {
        cfg.output.log = Some(out);
    }
    cfg.validate()?;
    let log = runner::run_match(&cfg)?;
    let summary = matchlog::summarize(&log);
    println!(
        "match complete: {}s, score home {} - {} away, possession {:.0}% / {:.0}%",
        cfg.duration,
        summary.goals_home,
        summary.goals_away,
        100.0 * summary.possession_home,
        100.0 * summary.possession_away
    );
    println!(
        "localization: {} frames, p50 {:.3} m, p90 {:.3} m",
        summary.localization_frames, summary.localization_p50, summary.localization_p90
    );
    if let Some(path) = &cfg.output.log {
        log.save(path).with_context(|| format!("writing {}", path.display()))?;
        println!("log written to {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_experiment(args: ExperimentArgs) -> Result<ExitCode> {
    let table = match args.name.as_str() {
        "localizer" => {
            let mut t = experiments::localizer_experiment(args.seed, 100);
            t.rows
                .extend(experiments::localizer_runtime_experiment(args.seed, 500).rows);
            t
        }
        "fusion" => experiments::fusion_experiment(args.seed, 500),
        "navigation" => experiments::navigation_experiment(args.seed, 1000),
        "des" => experiments::des_experiment(args.seed),
        other => bail!("unknown experiment {other:?} (localizer|fusion|navigation|des)"),
    };
    print!("{}", table.to_tsv());
    if let Some(out) = args.out {
        std::fs::write(&out, table.to_tsv())
            .with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(if table.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn record_kind(record: &LogRecord) -> &'static str {
    match record {
        LogRecord::Step { .. } => "step",
        LogRecord::Ball { .. } => "ball",
        LogRecord::Decision { .. } => "decision",
        LogRecord::Estimate { .. } => "estimate",
        LogRecord::Localization { .. } => "localization",
        LogRecord::Sim { .. } => "sim",
        LogRecord::Behavior { .. } => "behavior",
    }
}

fn record_robot(record: &LogRecord) -> Option<u8> {
    match record {
        LogRecord::Step { robot, .. } | LogRecord::Estimate { robot, .. } => Some(*robot),
        LogRecord::Decision { trace, .. } => Some(trace.robot),
        LogRecord::Localization { event, .. } => Some(event.robot),
        _ => None,
    }
}

fn cmd_replay(args: ReplayArgs) -> Result<ExitCode> {
    let log = MatchLog::load(&args.log).with_context(|| format!("reading {}", args.log.display()))?;
    if args.verify_localizer {
        let cfg = load_config(&args.config, None, None)?;
        if cfg.content_hash() != log.header.config_hash {
            bail!("config hash mismatch: the log was produced by a different configuration");
        }
        let frames = runner::verify_localizer_replay(&log, &cfg)
            .map_err(|e| anyhow::anyhow!("localizer replay diverged: {e}"))?;
        println!("localizer replay verified bit-exact over {frames} frames");
        return Ok(ExitCode::SUCCESS);
    }
    if args.summary {
        let summary = matchlog::summarize(&log);
        println!("{}", serde_json::to_string_pretty(&summary)?);
        return Ok(ExitCode::SUCCESS);
    }
    for record in &log.records {
        let t = record.time();
        if args.from.is_some_and(|f| t < f) || args.to.is_some_and(|to| t > to) {
            continue;
        }
        if let Some(robot) = args.robot {
            if record_robot(record) != Some(robot) {
                continue;
            }
        }
        if let Some(kind) = &args.kind {
            if record_kind(record) != kind {
                continue;
            }
        }
        println!("{}", serde_json::to_string(record)?);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_plot(args: PlotArgs) -> Result<ExitCode> {
    std::fs::create_dir_all(&args.out)?;
    match args.what.as_str() {
        "trajectory" => {
            let log = load_log(&args.log)?;
            let mut out = String::from("t\trobot\tx\ty\ttheta\n");
            for r in &log.records {
                if let LogRecord::Step { t, robot, true_pose, .. } = r {
                    out.push_str(&format!(
                        "{t}\t{robot}\t{}\t{}\t{}\n",
                        true_pose.x, true_pose.y, true_pose.theta
                    ));
                }
            }
            let path = args.out.join("trajectory.tsv");
            std::fs::write(&path, out)?;
            println!("wrote {}", path.display());
        }
        "loc-error" => {
            let log = load_log(&args.log)?;
            let mut out = String::from("t\trobot\terror_m\terror_rad\ttrusted\n");
            for r in &log.records {
                if let LogRecord::Localization { event, true_pose } = r {
                    let pe = (event.output.pose.position() - true_pose.position()).norm();
                    let ae = mslsim_core::geom::angle_dist(event.output.pose.theta, true_pose.theta);
                    out.push_str(&format!(
                        "{}\t{}\t{}\t{}\t{}\n",
                        event.time, event.robot, pe, ae, event.output.trusted
                    ));
                }
            }
            let path = args.out.join("loc_error.tsv");
            std::fs::write(&path, out)?;
            println!("wrote {}", path.display());
        }
        "des-values" => {
            let text = match &args.model {
                Some(p) => std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?,
                None => mslsim_core::des::model::EXAMPLE_MODEL.to_string(),
            };
            let (file, players) = mslsim_core::des::parse_model_file(&text)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            let model = mslsim_core::des::compose(&players, &file.events, &file.sync, &file.marked)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            let sol = mslsim_core::des::solve_policy(&model, 1e-9)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            let mut out = String::from("state\tlabel\tvalue_s\tchosen_events\n");
            for s in 0..model.state_count() {
                let chosen: Vec<&str> = sol
                    .policy
                    .chosen(s)
                    .iter()
                    .map(|&e| model.events[e].name.as_str())
                    .collect();
                out.push_str(&format!(
                    "{s}\t{}\t{}\t{}\n",
                    model.state_label(s),
                    sol.values[s],
                    chosen.join("+")
                ));
            }
            let path = args.out.join("des_values.tsv");
            std::fs::write(&path, out)?;
            println!("wrote {} ({} states)", path.display(), model.state_count());
        }
        other => bail!("unknown plot {other:?} (trajectory|loc-error|des-values)"),
    }
    Ok(ExitCode::SUCCESS)
}

fn load_log(path: &Option<PathBuf>) -> Result<MatchLog> {
    let path = path.as_ref().context("--log is required")?;
    MatchLog::load(path).with_context(|| format!("reading {}", path.display()))
}
