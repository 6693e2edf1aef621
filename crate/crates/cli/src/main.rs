use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use speedlens::config::{parse_with_overrides, PipelineConfig};
use speedlens::pipeline;
use speedlens::synth::{generate_synthetic, SynthConfig};
use speedlens::Error;

/// Journey speeding analytics over GPS probe data.
#[derive(Parser, Debug)]
#[command(name = "speedlens", version)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Write a seeded synthetic network, point stream and truth file.
    Generate(GenerateArgs),
    /// Points to validated journeys (journeys.ndjson).
    Ingest(PipelineArgs),
    /// Map-match journeys against the network (matched.ndjson).
    Enrich(PipelineArgs),
    /// Kinematics and per-journey feature rows (features.csv).
    Features(PipelineArgs),
    /// Split the feature rows and fit the configured models.
    Train(PipelineArgs),
    /// Score every trained model on the test rows.
    Evaluate(PipelineArgs),
    /// Importance, attributions, embedding and dependence curves.
    Explain(PipelineArgs),
    /// Per-segment speeding summaries for well-covered segments.
    Hotspots(PipelineArgs),
    /// Every stage in one go, with a manifest.
    Run(PipelineArgs),
}

#[derive(Args, Debug)]
struct PipelineArgs {
    /// TOML config; relative paths inside resolve against its directory.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set split.seed=7`. Repeatable.
    #[arg(short, long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides `output_dir`).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Worker threads (overrides `workers`).
    #[arg(short, long)]
    workers: Option<usize>,
    /// Print the effective config as TOML and exit.
    #[arg(long)]
    dump_config: bool,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Directory receiving network.geojson, points.csv and truth.json.
    #[arg(short, long)]
    out: PathBuf,
    /// TOML file with generator settings.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(short, long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    n_journeys: Option<usize>,
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Six comma-separated weights, one per speeding level.
    #[arg(long, value_delimiter = ',')]
    mix: Option<Vec<f64>>,
}

fn read_text(path: &Option<PathBuf>) -> Result<String, Error> {
    match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display()))),
        None => Ok(String::new()),
    }
}

fn load_config(args: &PipelineArgs) -> Result<PipelineConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::load(path, &args.set)?,
        None => {
            let mut c = PipelineConfig::from_toml("", &args.set)?;
            c.resolve_paths(&std::env::current_dir().map_err(Error::Stream)?);
            c
        }
    };
    if let Some(o) = &args.output {
        cfg.output_dir = o.clone();
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    pipeline::validate_config(&cfg)?;
    Ok(cfg)
}

fn print_json<T: Serialize>(v: &T) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn generate(args: &GenerateArgs) -> Result<(), Error> {
    let mut sets = args.set.clone();
    if let Some(n) = args.n_journeys {
        sets.push(format!("n_journeys={n}"));
    }
    if let Some(g) = args.grid_size {
        sets.push(format!("grid_size={g}"));
    }
    if let Some(s) = args.seed {
        sets.push(format!("seed={s}"));
    }
    if let Some(m) = &args.mix {
        if m.len() != 6 {
            return Err(Error::Config(format!("--mix needs 6 weights, got {}", m.len())));
        }
        let list: Vec<String> = m.iter().map(|w| format!("{w:?}")).collect();
        sets.push(format!("behavior_mix=[{}]", list.join(",")));
    }
    let cfg: SynthConfig = parse_with_overrides(&read_text(&args.config)?, &sets)?;
    let bundle = generate_synthetic(&cfg)?;
    let files = bundle.write(&args.out)?;
    print_json(&serde_json::json!({
        "network": files.network,
        "points": files.points,
        "truth": files.truth,
        "journeys": bundle.truth.journeys.len(),
        "points_written": bundle.truth.total_points(),
        "level_histogram": bundle.truth.level_histogram(),
    }))
}

fn stage(args: &PipelineArgs, run: impl FnOnce(&PipelineConfig) -> Result<serde_json::Value, Error> + Send) -> Result<(), Error> {
    let cfg = load_config(args)?;
    if args.dump_config {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    let pool = pipeline::thread_pool(cfg.workers)?;
    let out = pool.install(|| run(&cfg))?;
    print_json(&out)
}

fn json<T: Serialize>(v: T) -> Result<serde_json::Value, Error> {
    Ok(serde_json::to_value(v)?)
}

fn dispatch(cmd: &Cmd) -> Result<(), Error> {
    match cmd {
        Cmd::Generate(a) => generate(a),
        Cmd::Ingest(a) => stage(a, |c| json(pipeline::run_ingest(c)?)),
        Cmd::Enrich(a) => stage(a, |c| json(pipeline::run_enrich(c)?)),
        Cmd::Features(a) => stage(a, |c| json(pipeline::run_features(c)?)),
        Cmd::Train(a) => stage(a, |c| {
            let (records, warnings) = pipeline::run_train(c)?;
            for w in &warnings {
                log::warn!("{w}");
            }
            json(records)
        }),
        Cmd::Evaluate(a) => stage(a, |c| json(pipeline::run_evaluate(c)?)),
        Cmd::Explain(a) => stage(a, |c| json(pipeline::run_explain(c)?)),
        Cmd::Hotspots(a) => stage(a, |c| json(pipeline::run_hotspots(c)?)),
        Cmd::Run(a) => {
            let cfg = load_config(a)?;
            if a.dump_config {
                print!("{}", cfg.to_toml()?);
                return Ok(());
            }
            let m = pipeline::run_pipeline(&cfg)?;
            for w in &m.warnings {
                log::warn!("{w}");
            }
            print_json(&serde_json::json!({
                "output_dir": cfg.output_dir,
                "stages": m.stages,
                "wall_time_s": m.timing.wall_time_s,
            }))
        }
    }
}

/// 1 for anything the user can fix in the config or arguments, 2 for a
/// failure while a stage ran.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
