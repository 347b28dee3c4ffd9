use angc::checkpoint::{self, TrialCheckpoint};
use angc::harness::{self, parse_assignments, ExperimentConfig, Trial};
use angc::ngc::frobenius;
use angc::{EnvKind, NgcModel, Preset};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "angc", version, about = "Active neural generative coding agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train agents over several seeds and write learning curves.
    Run(RunArgs),
    /// Continue a trial from a checkpoint written by `run`.
    Resume(ResumeArgs),
    /// Play greedy episodes with a saved agent.
    Eval(EvalArgs),
    /// Print the configuration and weight norms of a checkpoint.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` file applied before any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<EnvKind>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed_base: Option<u64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    alpha_e: Option<f64>,
    #[arg(long)]
    alpha_i: Option<f64>,
    /// Turn off synaptic scaling in both circuits.
    #[arg(long)]
    no_modulation: bool,
    /// Uniform random actions, no learning.
    #[arg(long)]
    random_policy: bool,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long, default_value_t = 0)]
    log_every: usize,
    /// Extra `key=value` assignment; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct ResumeArgs {
    /// Trial checkpoint (`checkpoints/trial_*_ep*.json`).
    #[arg(long)]
    checkpoint: PathBuf,
    /// The `config.txt` the run wrote.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the checkpoint's run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

type Error = Box<dyn std::error::Error>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Resume(args) => resume(args),
        Command::Eval(args) => eval(args),
        Command::Inspect { checkpoint } => inspect(&checkpoint),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = e.source();
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let text = match &args.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?,
        None => String::new(),
    };
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut push = |k: &str, v: String| pairs.push((k.to_string(), v));
    if let Some(env) = args.env {
        push("env.name", env.to_string());
    }
    if let Some(p) = &args.preset {
        push("run.preset", p.clone());
    }
    if let Some(v) = args.episodes {
        push("run.episodes", v.to_string());
    }
    if let Some(v) = args.seed_base {
        push("run.seed_base", v.to_string());
    }
    if let Some(v) = args.trials {
        push("run.trials", v.to_string());
    }
    if let Some(v) = args.max_steps {
        push("env.max_steps", v.to_string());
    }
    if let Some(v) = args.alpha_e {
        push("agent.alpha_e", v.to_string());
    }
    if let Some(v) = args.alpha_i {
        push("agent.alpha_i", v.to_string());
    }
    if args.no_modulation {
        push("controller.modulation", "false".into());
        push("generator.modulation", "false".into());
    }
    if let Some(v) = args.checkpoint_every {
        push("run.checkpoint_every", v.to_string());
    }
    for s in &args.sets {
        let parsed = parse_assignments(s)?;
        if parsed.is_empty() {
            return Err(format!("--set expects KEY=VALUE, got `{s}`").into());
        }
        pairs.extend(parsed);
    }
    // File and flags may both name the environment; the preset follows the
    // last one unless given explicitly.
    let mut all = parse_assignments(&text)?;
    all.extend(pairs);
    let env_name = all.iter().rev().find(|(k, _)| k == "env.name").map(|(_, v)| v.clone());
    let preset_name = all.iter().rev().find(|(k, _)| k == "run.preset").map(|(_, v)| v.clone());
    let env: EnvKind = env_name.as_deref().unwrap_or("cartpole").parse()?;
    let preset: Preset = match preset_name {
        Some(p) => p.parse()?,
        None => Preset::for_env(env),
    };
    let mut cfg = ExperimentConfig::new(env, preset);
    for (k, v) in all.iter().filter(|(k, _)| k != "env.name" && k != "run.preset") {
        cfg.set(k, v)?;
    }
    if args.random_policy {
        cfg.make_random_policy();
    }
    cfg.output_dir = args.out.clone();
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    cfg.log_every = args.log_every;
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<(), Error> {
    let cfg = build_config(&args)?;
    log::info!(
        "{} with preset {}: {} trials x {} episodes",
        cfg.env,
        cfg.preset.name(),
        cfg.n_trials(),
        cfg.episodes
    );
    let outcome = harness::run_experiment(&cfg)?;
    for t in &outcome.summary.trials {
        match (&t.error, t.solved_at) {
            (Some(e), _) => println!("trial {:02} seed {}: FAILED {e}", t.index, t.seed),
            (None, Some(ep)) => println!("trial {:02} seed {}: solved at episode {ep}", t.index, t.seed),
            (None, None) => println!(
                "trial {:02} seed {}: not solved, final moving average {:.3}",
                t.index,
                t.seed,
                t.final_moving_avg.unwrap_or(f64::NAN)
            ),
        }
    }
    println!(
        "{}/{} trials solved (threshold {})",
        outcome.summary.n_solved,
        outcome.summary.trials.len(),
        outcome.summary.solve_threshold
    );
    if outcome.trials.iter().any(|t| t.is_err()) {
        return Err("one or more trials failed".into());
    }
    Ok(())
}

fn resume(args: ResumeArgs) -> Result<(), Error> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| format!("{}: {e}", args.config.display()))?;
    let mut cfg = ExperimentConfig::from_assignments(&text, &[])?;
    let state: TrialCheckpoint = checkpoint::load(&args.checkpoint)?;
    let file = args
        .checkpoint
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or("checkpoint path has no file name")?;
    let stem = file.rsplit_once("_ep").map(|(s, _)| s).unwrap_or(file).to_string();
    let out = match args.out {
        Some(o) => o,
        None => args
            .checkpoint
            .parent()
            .and_then(Path::parent)
            .map(Path::to_path_buf)
            .ok_or("cannot infer the output directory; pass --out")?,
    };
    cfg.output_dir = Some(out.clone());
    log::info!("resuming {stem} after episode {}", state.records.len());
    let mut trial = Trial::resume(&cfg, state)?;
    let result = trial.run_to_end(Some((&out, &stem)))?;
    match result.solved_at {
        Some(ep) => println!("{stem}: solved at episode {ep}"),
        None => println!("{stem}: not solved"),
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), Error> {
    let ckpt = checkpoint::load_agent(&args.checkpoint)?;
    let returns = harness::evaluate(&ckpt, args.episodes, args.seed)?;
    for (i, r) in returns.iter().enumerate() {
        println!("episode {}: return {r}", i + 1);
    }
    let (mean, std) = harness::mean_std(&returns);
    println!("mean return {mean:.3} (std {std:.3}) over {} episodes", returns.len());
    Ok(())
}

fn print_model(name: &str, m: &NgcModel) {
    let c = m.config();
    println!("{name}:");
    println!("  layers {:?}", c.layer_dims);
    println!("  activations {:?}", c.activations);
    println!(
        "  rule {} eta {} K {} beta {} beta_e {} gamma_v {} gamma_e {} modulation {}",
        c.update_rule, c.eta, c.k_steps, c.beta, c.beta_e, c.gamma_v, c.gamma_e, c.modulation
    );
    for (l, w) in m.forward_weights().iter().enumerate() {
        println!("  W{} {:?} |W|_F = {:.6}", l + 1, w.dim(), frobenius(w));
    }
    for (l, e) in m.error_weights().iter().enumerate() {
        println!("  E{} {:?} |E|_F = {:.6}", l + 1, e.dim(), frobenius(e));
    }
}

fn inspect(path: &Path) -> Result<(), Error> {
    let kind = checkpoint::kind_of(path)?;
    let (ckpt, extra) = match kind.as_str() {
        "trial" => {
            let t: TrialCheckpoint = checkpoint::load(path)?;
            let line = format!(
                "episodes completed {}, replay holds {}/{}",
                t.records.len(),
                t.buffer.len(),
                t.buffer.capacity()
            );
            (t.checkpoint, Some(line))
        }
        _ => (checkpoint::load_agent(path)?, None),
    };
    println!("kind {kind}");
    println!("env {} seed {} max_steps {:?}", ckpt.env, ckpt.seed, ckpt.max_steps);
    if let Some(line) = extra {
        println!("{line}");
    }
    let a = &ckpt.agent;
    let c = a.config();
    println!(
        "epsilon {} r_max {} steps {} gamma {} alpha_e {} alpha_i {} C {} tau_c {} batch {} memory {}",
        a.epsilon(),
        a.r_max(),
        a.step_count(),
        c.gamma,
        c.alpha_e,
        c.alpha_i,
        c.sync_interval,
        c.tau_c,
        c.n_batch,
        c.replay_capacity
    );
    print_model("controller", a.controller());
    print_model("target controller", a.target_controller());
    print_model("generator", a.generator());
    Ok(())
}
