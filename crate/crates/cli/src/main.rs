use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gridsoccer::env::{read_trace, render_ascii};
use gridsoccer::gradcheck::run_suite;
use gridsoccer::harness::{
    adversarial_train, evaluate, load_model, resume, train, AgentSpec, Controller, MatchReport, Protocol, TrainConfig,
};

#[derive(Parser)]
#[command(name = "gridsoccer", version, about = "Train, evaluate and replay grid-soccer teams")]
struct Cli {
    /// Root seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured agent against the configured opponent.
    Train(TrainArgs),
    /// Play a frozen model against another model or a scripted team.
    Eval(EvalArgs),
    /// Continue training two pretrained models against each other.
    Adversarial(AdversarialArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck,
    /// Print a trace file as ASCII frames.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, required_unless_present_any = ["print_defaults", "resume"])]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "print_defaults")]
    out: Option<PathBuf>,
    /// Print the default config as TOML and exit.
    #[arg(long)]
    print_defaults: bool,
    /// Continue from a checkpoint directory instead of starting fresh.
    #[arg(long, conflicts_with = "config")]
    resume: Option<PathBuf>,
    #[arg(long)]
    total_timesteps: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Model or checkpoint directory for the Left team.
    #[arg(long)]
    a: PathBuf,
    /// Model directory, `handcoded` or `random`.
    #[arg(long)]
    b: String,
    #[arg(long, default_value_t = 200)]
    goals: u64,
    /// Give up after this many timesteps.
    #[arg(long, default_value_t = 5_000_000)]
    max_steps: u64,
    /// Write every step of the match to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct AdversarialArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Run settings; `agent.learning` and `opponent.learning` pick which sides learn.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    trace: PathBuf,
    /// First timestep to show.
    #[arg(long, default_value_t = 0)]
    from: u64,
    /// Number of frames to show.
    #[arg(long)]
    steps: Option<usize>,
}

/// Failures that are the caller's fault rather than the run's.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn existing(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        bail!(UsageError(format!("{what} {} does not exist", path.display())));
    }
    Ok(())
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<TrainConfig> {
    existing(path, "config file")?;
    let mut config = TrainConfig::load(path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn run_train(args: TrainArgs, seed: Option<u64>) -> Result<()> {
    if args.print_defaults {
        print!("{}", TrainConfig::default().to_toml());
        return Ok(());
    }
    let out = args.out.expect("required by clap");
    let runner = if let Some(ckpt) = args.resume {
        existing(&ckpt, "checkpoint")?;
        if seed.is_some() {
            bail!(UsageError("--seed cannot change a resumed run".into()));
        }
        resume(&ckpt, args.total_timesteps, &out)?
    } else {
        let mut config = load_config(&args.config.expect("required by clap"), seed)?;
        if let Some(t) = args.total_timesteps {
            config.total_timesteps = t;
        }
        train(config, &out)?
    };
    let last = runner.log(gridsoccer::TeamId::Left).last();
    println!(
        "trained {} timesteps; goals {}-{}; goal_ratio {}",
        runner.timestep(),
        runner.goals(gridsoccer::TeamId::Left),
        runner.goals(gridsoccer::TeamId::Right),
        fmt_ratio(last.and_then(|r| r.goal_ratio)),
    );
    println!("outputs in {}", out.display());
    Ok(())
}

fn fmt_ratio(r: Option<f64>) -> String {
    r.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

fn print_report(r: &MatchReport) {
    println!("goal_ratio {} ({}-{} over {} goals)", fmt_ratio(r.goal_ratio), r.goals[0], r.goals[1], r.total_goals());
    println!(
        "timesteps {}  episodes {}  mean_episode_length {}",
        r.timesteps,
        r.episodes,
        r.mean_episode_length.map_or_else(|| "n/a".into(), |v| format!("{v:.1}"))
    );
    println!("steals {}-{}  turnovers {}-{}", r.steals[0], r.steals[1], r.turnovers[0], r.turnovers[1]);
    if !r.completed {
        println!("warning: stopped at the step limit before reaching the goal count");
    }
}

fn run_eval(args: EvalArgs, seed: Option<u64>) -> Result<()> {
    let seed = seed.unwrap_or(0);
    existing(&args.a, "model")?;
    let (manifest, a) = load_model(&args.a, seed, "left")?;
    let pitch = manifest.env.pitch()?;
    let b = match args.b.as_str() {
        "handcoded" => Controller::build(&AgentSpec::of(Protocol::Handcoded), &pitch, seed, "right")?,
        "random" => Controller::build(&AgentSpec::of(Protocol::Random), &pitch, seed, "right")?,
        path => {
            let path = Path::new(path);
            existing(path, "model")?;
            let (mb, b) = load_model(path, seed, "right")?;
            if mb.env.pitch()? != pitch {
                bail!("models were trained on different pitches");
            }
            b
        }
    };
    let mut trace = match &args.trace {
        Some(p) => Some(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => None,
    };
    let report = evaluate(a, b, &manifest.env, args.goals, args.max_steps, trace.as_mut().map(|w| w as &mut dyn Write))?;
    if let Some(mut w) = trace {
        w.flush()?;
    }
    print_report(&report);
    Ok(())
}

fn run_adversarial(args: AdversarialArgs, seed: Option<u64>) -> Result<()> {
    let mut config = load_config(&args.config, seed)?;
    existing(&args.a, "model")?;
    existing(&args.b, "model")?;
    let (ma, _) = load_model(&args.a, 0, "left")?;
    let (mb, _) = load_model(&args.b, 0, "right")?;
    if ma.env.pitch()? != mb.env.pitch()? {
        bail!("models were trained on different pitches");
    }
    for (side, manifest, path) in [(&mut config.agent, ma.agent, &args.a), (&mut config.opponent, mb.agent, &args.b)] {
        let learning = side.learning;
        *side = manifest;
        side.learning = learning;
        side.checkpoint = Some(path.clone());
    }
    config.env = ma.env;
    let runner = adversarial_train(config, &args.out)?;
    println!(
        "played {} timesteps; goals {}-{}; goal_ratio a {}",
        runner.timestep(),
        runner.goals(gridsoccer::TeamId::Left),
        runner.goals(gridsoccer::TeamId::Right),
        fmt_ratio(runner.window().ratio(gridsoccer::TeamId::Left)),
    );
    Ok(())
}

fn run_gradcheck(seed: Option<u64>) -> Result<bool> {
    let outcomes = run_suite(seed.unwrap_or(2024))?;
    for o in &outcomes {
        println!(
            "{:<12} {}  max_rel_error {:.3e}  configs {}  checked {}  skipped {}",
            o.label,
            if o.passed() { "ok  " } else { "FAIL" },
            o.max_rel_error,
            o.configs,
            o.checked,
            o.skipped
        );
    }
    Ok(outcomes.iter().all(|o| o.passed()))
}

fn run_replay(args: ReplayArgs) -> Result<()> {
    existing(&args.trace, "trace file")?;
    let file = File::open(&args.trace)?;
    let records = read_trace(file).with_context(|| format!("reading {}", args.trace.display()))?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let frames = records.iter().filter(|r| r.timestep >= args.from).take(args.steps.unwrap_or(usize::MAX));
    for r in frames {
        let state = r.state()?;
        let codes: Vec<String> = r.actions.iter().map(|a| a.code().to_string()).collect();
        writeln!(out, "t={} score {}-{} actions [{}]", r.timestep, state.score(gridsoccer::TeamId::Left), state.score(gridsoccer::TeamId::Right), codes.join(" "))?;
        write!(out, "{}", render_ascii(&state))?;
        if let Some(team) = r.goal {
            writeln!(out, "goal: {team:?}")?;
        }
    }
    Ok(())
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
    let seed = cli.seed;
    let result = match cli.command {
        Command::Train(a) => run_train(a, seed),
        Command::Eval(a) => run_eval(a, seed),
        Command::Adversarial(a) => run_adversarial(a, seed),
        Command::Gradcheck => run_gradcheck(seed).and_then(|ok| if ok { Ok(()) } else { bail!("gradient check failed") }),
        Command::Replay(a) => run_replay(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}\n\nRun `gridsoccer --help` for usage.");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
