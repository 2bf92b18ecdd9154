use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalab::config::KvConfig;
use nalab::envs::{CorridorEnv, EnvConfig, Environment, SkirmishEnv};
use nalab::error::{Error, Result};
use nalab::evaluation::{
    evaluate_win_rate, run_experiment, ExperimentId, ExperimentSpec, Neutrals,
};
use nalab::manifest::{write_atomic, RunManifest};
use nalab::neural::Checkpoint;
use nalab::oracle::format;
use nalab::oracle::suite::{check_instance, gradient_suite, random_suite, InstanceCheck};
use nalab::oracle::{InstanceShape, SUITE_SEEDS};
use nalab::training::{
    retrain_victims_defense, train_adversaries, train_victims, FrozenPolicy, RunLog, TrainingConfig,
};

/// Default output root when `--out` is not given.
const OUT_ENV: &str = "NALAB_OUT";
const ORACLE_TOLERANCE: f64 = 1e-9;
const GRADIENT_TOLERANCE: f64 = 1e-4;

const FIXTURES: [(&str, &str); 3] = [
    ("chain", include_str!("../fixtures/chain.tmdp")),
    ("random-a", include_str!("../fixtures/random-a.tmdp")),
    ("random-b", include_str!("../fixtures/random-b.tmdp")),
];

#[derive(Parser, Debug)]
#[command(
    name = "nalab",
    version,
    about = "Neutral-agent adversarial policy lab"
)]
struct Cli {
    /// Key/value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `key=value` override, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory [default: <root>/<subcommand>, root being $NALAB_OUT or runs].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Parallel evaluation workers; overrides `workers` in the config.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct PolicyPaths {
    /// Victim checkpoint [default: <root>/train-victim/victims-final.ckpt].
    #[arg(long)]
    victims: Option<PathBuf>,
    /// Adversary checkpoint [default: <root>/train-adversary/adversary-final.ckpt].
    #[arg(long)]
    adversaries: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the victim party with random neutral units.
    TrainVictim,
    /// Train neutral adversaries against frozen victims.
    TrainAdversary {
        #[command(flatten)]
        paths: PolicyPaths,
    },
    /// Greedy victim win rates with no neutrals, random neutrals and, if
    /// given, trained adversaries.
    Evaluate {
        #[command(flatten)]
        paths: PolicyPaths,
        /// Skip the under-attack measurement.
        #[arg(long)]
        no_adversaries: bool,
    },
    /// Retrain victims against frozen adversaries.
    DefendRetrain {
        #[command(flatten)]
        paths: PolicyPaths,
    },
    /// Run an experiment grid (rq1..rq5).
    RunExperiment {
        /// Experiment id; overrides `experiment` in the config.
        #[arg(long)]
        experiment: Option<String>,
    },
    /// Exact tabular checks on the shipped fixtures and the random suite.
    OracleCheck {
        /// Extra tabular instance files.
        #[arg(long)]
        fixture: Vec<PathBuf>,
    },
    /// Analytic vs finite-difference gradients of every hand-written model.
    GradCheck {
        /// Number of seeds per component.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::TrainVictim => "train-victim",
            Command::TrainAdversary { .. } => "train-adversary",
            Command::Evaluate { .. } => "evaluate",
            Command::DefendRetrain { .. } => "defend-retrain",
            Command::RunExperiment { .. } => "run-experiment",
            Command::OracleCheck { .. } => "oracle-check",
            Command::GradCheck { .. } => "grad-check",
        }
    }
}

struct Context {
    kv: KvConfig,
    /// Output root: `$NALAB_OUT` or `runs`.
    root: PathBuf,
    out: PathBuf,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self> {
        let mut kv = match &cli.config {
            Some(p) if !p.exists() => {
                return Err(Error::Dependency {
                    missing: vec![p.clone()],
                })
            }
            Some(p) => KvConfig::load(p)?,
            None => KvConfig::new(),
        };
        kv.apply_overrides(&cli.overrides)?;
        if let Some(s) = cli.seed {
            kv.set("seed", s.to_string())?;
        }
        if let Some(w) = cli.workers {
            kv.set("workers", w.to_string())?;
        }
        let root = std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        let out = cli
            .out
            .clone()
            .unwrap_or_else(|| root.join(cli.command.name()));
        Ok(Self { kv, root, out })
    }

    fn training(&self) -> Result<TrainingConfig> {
        let cfg = TrainingConfig::from_kv(&self.kv)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn victims_path(&self, paths: &PolicyPaths) -> PathBuf {
        paths
            .victims
            .clone()
            .unwrap_or_else(|| self.root.join("train-victim").join("victims-final.ckpt"))
    }

    fn adversaries_path(&self, paths: &PolicyPaths) -> PathBuf {
        paths.adversaries.clone().unwrap_or_else(|| {
            self.root
                .join("train-adversary")
                .join("adversary-final.ckpt")
        })
    }
}

fn load_policy(path: &Path, prefix: &str) -> Result<FrozenPolicy> {
    FrozenPolicy::read_from(&Checkpoint::load(path)?, prefix)
}

/// Fails with every missing input listed at once.
fn require(paths: &[&Path]) -> Result<()> {
    let missing: Vec<PathBuf> = paths
        .iter()
        .filter(|p| !p.exists())
        .map(|p| p.to_path_buf())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::Dependency { missing })
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, serde_json::to_string_pretty(value)?.as_bytes())
}

/// Runs `f` with a manifest that is finalized whatever the outcome.
fn with_manifest<T>(
    ctx: &Context,
    command: &str,
    seeds: Vec<u64>,
    f: impl FnOnce(&mut RunManifest) -> Result<T>,
) -> Result<T> {
    let mut manifest = RunManifest::start(&ctx.out, command, &ctx.kv, seeds)?;
    let result = f(&mut manifest);
    let status = match &result {
        Ok(_) => "ok".to_string(),
        Err(e) => format!("failed: {e}"),
    };
    manifest.finish(&ctx.out, &status)?;
    result
}

fn add_existing(manifest: &mut RunManifest, dir: &Path, names: &[&str]) {
    for n in names {
        let p = dir.join(n);
        if p.exists() {
            manifest.add_artifact(dir, &p);
        }
    }
}

fn train_victim_cmd<E: Environment>(env: &E, ctx: &Context) -> Result<()> {
    let cfg = ctx.training()?;
    with_manifest(ctx, "train-victim", vec![cfg.seed], |m| {
        let mut log = RunLog::to_dir(&ctx.out, "victims")?;
        let result = train_victims(env, &cfg, &mut log);
        add_existing(
            m,
            &ctx.out,
            &[
                "victims.csv",
                "victims-latest.ckpt",
                "victims-final.ckpt",
                "victims-fault.ckpt",
            ],
        );
        let trained = result?;
        println!(
            "victims trained: no-attack win rate {:.3} ({}/{})",
            trained.no_attack.rate(),
            trained.no_attack.wins,
            trained.no_attack.episodes
        );
        Ok(())
    })
}

fn train_adversary_cmd<E: Environment>(env: &E, ctx: &Context, paths: &PolicyPaths) -> Result<()> {
    let cfg = ctx.training()?;
    let victims_path = ctx.victims_path(paths);
    require(&[&victims_path])?;
    let victims = load_policy(&victims_path, "victims")?;
    with_manifest(ctx, "train-adversary", vec![cfg.seed], |m| {
        let mut log = RunLog::to_dir(&ctx.out, "adversary")?;
        let result = train_adversaries(env, &victims, &cfg, &mut log);
        add_existing(
            m,
            &ctx.out,
            &[
                "adversary.csv",
                "adversary-latest.ckpt",
                "adversary-final.ckpt",
                "adversary-fault.ckpt",
            ],
        );
        let trained = result?;
        println!(
            "{} adversaries trained ({} rewards): under-attack win rate {:.3} ({}/{})",
            trained.policy.len(),
            cfg.reward.mode.as_str(),
            trained.under_attack.rate(),
            trained.under_attack.wins,
            trained.under_attack.episodes
        );
        Ok(())
    })
}

#[derive(serde::Serialize)]
struct EvaluationReport {
    episodes: usize,
    seed: u64,
    no_neutrals: nalab::evaluation::WinRateEstimate,
    no_attack: nalab::evaluation::WinRateEstimate,
    under_attack: Option<nalab::evaluation::WinRateEstimate>,
}

fn evaluate_cmd<E: Environment>(
    env: &E,
    ctx: &Context,
    paths: &PolicyPaths,
    no_adversaries: bool,
) -> Result<()> {
    let cfg = ctx.training()?;
    let victims_path = ctx.victims_path(paths);
    let adversary_path = (!no_adversaries).then(|| ctx.adversaries_path(paths));
    let mut needed = vec![victims_path.as_path()];
    needed.extend(adversary_path.as_deref());
    require(&needed)?;
    let victims = load_policy(&victims_path, "victims")?;
    let adversaries = adversary_path
        .as_deref()
        .map(|p| load_policy(p, "adversaries"))
        .transpose()?;
    with_manifest(ctx, "evaluate", vec![cfg.seed], |m| {
        let measure = |n: Neutrals| {
            evaluate_win_rate(env, &victims, n, cfg.eval_episodes, cfg.seed, cfg.workers)
        };
        let report = EvaluationReport {
            episodes: cfg.eval_episodes,
            seed: cfg.seed,
            no_neutrals: measure(Neutrals::Absent)?,
            no_attack: measure(Neutrals::Random)?,
            under_attack: adversaries
                .as_ref()
                .map(|a| measure(Neutrals::Adversaries(a)))
                .transpose()?,
        };
        let path = ctx.out.join("evaluation.json");
        write_json(&path, &report)?;
        m.add_artifact(&ctx.out, &path);
        let show = |name: &str, e: &nalab::evaluation::WinRateEstimate| {
            println!("{name:<13} {:.3} ± {:.3}", e.rate, e.half_width)
        };
        show("no neutrals", &report.no_neutrals);
        show("no attack", &report.no_attack);
        if let Some(u) = &report.under_attack {
            show("under attack", u);
        }
        Ok(())
    })
}

#[derive(serde::Serialize)]
struct DefenseSummary {
    adversaries: usize,
    before_under_attack: f64,
    before_no_attack: f64,
    after_under_attack: f64,
    after_no_attack: f64,
}

fn defend_cmd<E: Environment>(env: &E, ctx: &Context, paths: &PolicyPaths) -> Result<()> {
    let cfg = ctx.training()?;
    let victims_path = ctx.victims_path(paths);
    let adversary_path = ctx.adversaries_path(paths);
    require(&[&victims_path, &adversary_path])?;
    let victims = load_policy(&victims_path, "victims")?;
    let adversaries = load_policy(&adversary_path, "adversaries")?;
    with_manifest(ctx, "defend-retrain", vec![cfg.seed], |m| {
        let mut log = RunLog::to_dir(&ctx.out, "defense")?;
        let result = retrain_victims_defense(env, &victims, &adversaries, &cfg, &mut log);
        add_existing(
            m,
            &ctx.out,
            &[
                "defense.csv",
                "defense-latest.ckpt",
                "defense-final.ckpt",
                "defense-fault.ckpt",
            ],
        );
        let r = result?;
        let summary = DefenseSummary {
            adversaries: adversaries.len(),
            before_under_attack: r.before_under_attack.rate(),
            before_no_attack: r.before_no_attack.rate(),
            after_under_attack: r.after_under_attack.rate(),
            after_no_attack: r.after_no_attack.rate(),
        };
        let path = ctx.out.join("defense.json");
        write_json(&path, &summary)?;
        m.add_artifact(&ctx.out, &path);
        println!("               before  after");
        println!(
            "under attack   {:.3}   {:.3}",
            summary.before_under_attack, summary.after_under_attack
        );
        println!(
            "no attack      {:.3}   {:.3}",
            summary.before_no_attack, summary.after_no_attack
        );
        Ok(())
    })
}

fn experiment_cmd(ctx: &mut Context, experiment: &Option<String>) -> Result<()> {
    if let Some(id) = experiment {
        ExperimentId::parse(id)?;
        ctx.kv.set("experiment", id.as_str())?;
    }
    let spec = ExperimentSpec::from_kv(&ctx.kv)?;
    spec.validate()?;
    let workers = ctx.training()?.workers;
    let ctx = &*ctx;
    with_manifest(ctx, "run-experiment", spec.seeds.clone(), |m| {
        let output = run_experiment(&spec, &ctx.out, workers)?;
        for w in &output.warnings {
            eprintln!("warning: {w}");
        }
        for a in &output.artifacts {
            m.add_artifact(&ctx.out, &ctx.out.join(a));
        }
        println!(
            "{:<18} {:<15} {:>4} {:>8} {:>8} {:>8}",
            "env", "reward", "adv", "no-att", "attack", "reduct"
        );
        for r in &output.table.rows {
            println!(
                "{:<18} {:<15} {:>4} {:>8.3} {:>8.3} {:>8.3}",
                r.env, r.reward_mode, r.adversaries, r.no_attack, r.under_attack, r.reduction
            );
        }
        Ok(())
    })
}

fn oracle_cmd(ctx: &Context, extra: &[PathBuf]) -> Result<()> {
    let seed = ctx.kv.get_or("seed", 0u64)?;
    let mut checks: Vec<InstanceCheck> = Vec::new();
    for (name, text) in FIXTURES {
        checks.push(check_instance(name, &format::from_text(text)?, seed)?);
    }
    for path in extra {
        let mdp = format::load(path)?;
        checks.push(check_instance(&path.display().to_string(), &mdp, seed)?);
    }
    checks.extend(random_suite(&SUITE_SEEDS, &InstanceShape::default())?);
    println!(
        "{:<24} {:>14} {:>14}",
        "instance", "marginalize", "weighted-eval"
    );
    let mut worst: f64 = 0.0;
    for c in &checks {
        println!(
            "{:<24} {:>14.3e} {:>14.3e}",
            c.label, c.marginalization, c.weighted_evaluation
        );
        worst = worst.max(c.marginalization).max(c.weighted_evaluation);
    }
    std::fs::create_dir_all(&ctx.out)?;
    write_json(&ctx.out.join("oracle-check.json"), &checks)?;
    if worst.is_nan() || worst > ORACLE_TOLERANCE {
        return Err(Error::Validation(format!(
            "largest residual {worst:e} exceeds {ORACLE_TOLERANCE:e}"
        )));
    }
    println!("all {} instances within {ORACLE_TOLERANCE:e}", checks.len());
    Ok(())
}

fn grad_cmd(seeds: u64) -> Result<()> {
    let seeds: Vec<u64> = (0..seeds).collect();
    let cases = gradient_suite(&seeds)?;
    let mut worst: f64 = 0.0;
    println!(
        "{:<18} {:>6} {:>12} {:>8}",
        "component", "seed", "max-rel-err", "checked"
    );
    for c in &cases {
        println!(
            "{:<18} {:>6} {:>12.3e} {:>8}",
            c.component, c.seed, c.report.max_rel_error, c.report.checked
        );
        worst = worst.max(c.report.max_rel_error);
    }
    if worst.is_nan() || worst > GRADIENT_TOLERANCE {
        return Err(Error::Validation(format!(
            "largest relative gradient error {worst:e} exceeds {GRADIENT_TOLERANCE:e}"
        )));
    }
    Ok(())
}

macro_rules! with_env {
    ($kv:expr, |$env:ident| $body:expr) => {
        match EnvConfig::from_kv($kv)? {
            EnvConfig::Skirmish(c) => {
                let $env = SkirmishEnv::new(c)?;
                $body
            }
            EnvConfig::Corridor(c) => {
                let $env = CorridorEnv::new(c)?;
                $body
            }
        }
    };
}

fn run(cli: Cli) -> Result<()> {
    let mut ctx = Context::new(&cli)?;
    let kv = ctx.kv.clone();
    match &cli.command {
        Command::TrainVictim => with_env!(&kv, |env| train_victim_cmd(&env, &ctx)),
        Command::TrainAdversary { paths } => {
            with_env!(&kv, |env| train_adversary_cmd(&env, &ctx, paths))
        }
        Command::Evaluate {
            paths,
            no_adversaries,
        } => with_env!(&kv, |env| evaluate_cmd(&env, &ctx, paths, *no_adversaries)),
        Command::DefendRetrain { paths } => with_env!(&kv, |env| defend_cmd(&env, &ctx, paths)),
        Command::RunExperiment { experiment } => experiment_cmd(&mut ctx, experiment),
        Command::OracleCheck { fixture } => oracle_cmd(&ctx, fixture),
        Command::GradCheck { seeds } => grad_cmd(*seeds),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
