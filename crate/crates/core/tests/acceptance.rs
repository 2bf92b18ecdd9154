//! End-to-end acceptance checks, one printed line per criterion.
//!
//! Runs as a plain binary (`harness = false`); exits non-zero when any
//! criterion fails.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nalab::config::KvConfig;
use nalab::envs::{Environment, SkirmishConfig, SkirmishEnv};
use nalab::manifest::RunManifest;
use nalab::mdp::{JointAction, StepOutcome};
use nalab::neural::Adam;
use nalab::oracle::suite::{gradient_suite, random_suite, GRADIENT_COMPONENTS};
use nalab::oracle::{brute_force_joint_argmax, decentralized_argmax, InstanceShape, SUITE_SEEDS};
use nalab::qmix::MixingNet;
use nalab::reward::{
    rule_based_terminal_reward, FailureSignalVector, RewardModel, RewardModelConfig,
    RuleBasedCalculator, WeightVector,
};
use nalab::training::{
    retrain_victims_defense, train_adversaries, train_victims, FrozenPolicy, RunLog, TrainingConfig,
};
use nalab::Error;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn within(t: Duration, limit_secs: u64) -> bool {
    t <= Duration::from_secs(limit_secs)
}

fn fails(o: Result<Outcome, Error>) -> Outcome {
    o.unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")))
}

fn marginalization() -> Result<Outcome, Error> {
    let t = Instant::now();
    let checks = random_suite(&SUITE_SEEDS, &InstanceShape::default())?;
    let worst = checks.iter().map(|c| c.marginalization).fold(0.0, f64::max);
    let elapsed = t.elapsed();
    Ok(Outcome::new(
        checks.len() == 20 && worst <= 1e-9 && within(elapsed, 10),
        format!(
            "{} instances, max |Q_full - Q_marg| = {worst:.2e}, {:.2?}",
            checks.len(),
            elapsed
        ),
    ))
}

fn weighted_evaluation() -> Result<Outcome, Error> {
    let t = Instant::now();
    let checks = random_suite(&SUITE_SEEDS, &InstanceShape::default())?;
    let worst = checks
        .iter()
        .map(|c| c.weighted_evaluation)
        .fold(0.0, f64::max);
    let elapsed = t.elapsed();
    Ok(Outcome::new(
        checks.len() == 20 && worst <= 1e-9 && within(elapsed, 10),
        format!(
            "{} instances, max |V_scalar - W.V_vector| = {worst:.2e}, {:.2?}",
            checks.len(),
            elapsed
        ),
    ))
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn monotonicity() -> Result<Outcome, Error> {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-5;
    let mut min_slope = f64::INFINITY;
    for _ in 0..1000 {
        let n = rng.random_range(1..=4);
        let cond_dim = rng.random_range(1..=6);
        let embed = rng.random_range(2..=8);
        let mixer = MixingNet::new(n, cond_dim, embed, &mut rng);
        let q = uniform(&mut rng, n, 5.0);
        let cond = uniform(&mut rng, cond_dim, 1.0);
        for i in 0..n {
            let mut up = q.clone();
            let mut down = q.clone();
            up[i] += h;
            down[i] -= h;
            let slope = (mixer.mix(&up, &cond)? - mixer.mix(&down, &cond)?) / (2.0 * h);
            min_slope = min_slope.min(slope);
        }
    }
    let mut mismatches = 0;
    for _ in 0..500 {
        let n = rng.random_range(1..=3);
        let cond_dim = rng.random_range(1..=4);
        let mixer = MixingNet::new(n, cond_dim, 8, &mut rng);
        let cond = uniform(&mut rng, cond_dim, 1.0);
        let tables: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let k = rng.random_range(1..=5);
                uniform(&mut rng, k, 3.0)
            })
            .collect();
        let local = decentralized_argmax(&tables);
        let (joint, best) =
            brute_force_joint_argmax(&tables, |q| mixer.mix(q, &cond).unwrap_or(f64::NAN));
        if local != joint {
            let chosen: Vec<f64> = local.iter().zip(&tables).map(|(a, q)| q[*a]).collect();
            if mixer.mix(&chosen, &cond)? != best {
                mismatches += 1;
            }
        }
    }
    let elapsed = t.elapsed();
    Ok(Outcome::new(
        min_slope >= -1e-9 && mismatches == 0 && within(elapsed, 60),
        format!(
            "min dQ_tot/dQ_i = {min_slope:.3e} over 1000 mixers, {mismatches}/500 argmax mismatches, {elapsed:.2?}"
        ),
    ))
}

fn gradients() -> Result<Outcome, Error> {
    let t = Instant::now();
    let seeds: Vec<u64> = (0..10).collect();
    let cases = gradient_suite(&seeds)?;
    let mut parts = Vec::new();
    let mut pass = cases.len() == GRADIENT_COMPONENTS.len() * seeds.len();
    for component in GRADIENT_COMPONENTS {
        let worst = cases
            .iter()
            .filter(|c| c.component == component)
            .map(|c| c.report.max_rel_error)
            .fold(0.0, f64::max);
        pass &= worst <= 1e-4;
        parts.push(format!("{component} {worst:.1e}"));
    }
    let elapsed = t.elapsed();
    pass &= within(elapsed, 60);
    Ok(Outcome::new(
        pass,
        format!("max rel error: {}, {elapsed:.2?}", parts.join(", ")),
    ))
}

fn terminal(success: bool, failed: bool, n: usize) -> StepOutcome {
    StepOutcome {
        terminal: success || failed,
        victim_success: success,
        victim_failed: failed,
        failure_signals: FailureSignalVector::zeros(n),
    }
}

fn rule_calculator() -> Result<Outcome, Error> {
    let r_fail = 20.0;
    let success = rule_based_terminal_reward(&terminal(true, false, 3), r_fail)?.value;
    let failure = rule_based_terminal_reward(&terminal(false, true, 3), r_fail)?.value;
    let running = rule_based_terminal_reward(&terminal(false, false, 3), r_fail);
    let mut pass =
        success == 0.0 && failure == r_fail && matches!(running, Err(Error::Contract(_)));

    let env = SkirmishEnv::new(SkirmishConfig::small())?;
    let desc = env.descriptor().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let weights: Vec<f64> = (0..desc.failure_paths.len())
        .map(|_| rng.random_range(0.0..2.0))
        .collect();
    let gt = RuleBasedCalculator::ground_truth(WeightVector::new(weights.clone())?, r_fail);
    let baseline = RuleBasedCalculator::baseline(WeightVector::new(weights.clone())?, r_fail);

    let mut steps = 0;
    let mut nonzero_signals = 0;
    for episode in 0..20 {
        let mut state = env.reset(episode);
        loop {
            let mut action = JointAction::new();
            for &agent in &desc.actors {
                let avail = env.available_actions(&state, agent)?;
                let legal: Vec<usize> = (0..avail.len()).filter(|a| avail[*a]).collect();
                action.set(agent, legal[rng.random_range(0..legal.len())]);
            }
            let (next, outcome) = env.step(&state, &action)?;
            let signals = env.failure_signals(&state, &action, &next)?;
            let hand: f64 = weights
                .iter()
                .zip(signals.components())
                .map(|(w, r)| w * r)
                .sum();
            pass &= gt.immediate_reward(&env, &state, &action, &next)? == 0.0;
            pass &= gt.immediate_from_signals(&signals)? == 0.0;
            pass &= baseline.immediate_reward(&env, &state, &action, &next)? == hand;
            pass &= baseline.immediate_from_signals(&signals)? == hand;
            steps += 1;
            if signals.components().iter().any(|r| *r != 0.0) {
                nonzero_signals += 1;
            }
            if outcome.terminal {
                let expect = if outcome.victim_success { 0.0 } else { r_fail };
                pass &= gt.terminal_reward(&outcome)?.value == expect;
                break;
            }
            pass &= matches!(gt.terminal_reward(&outcome), Err(Error::Contract(_)));
            state = next;
        }
    }
    Ok(Outcome::new(
        pass && nonzero_signals > 0,
        format!(
            "terminal 0 / {failure} / contract error; {steps} transitions ({nonzero_signals} with signals) exact"
        ),
    ))
}

fn reward_model() -> Result<Outcome, Error> {
    let t = Instant::now();
    let dim = 4;
    let coef = [0.6, -0.4, 0.9, 0.3];
    let bias = 0.25;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut episodes = Vec::new();
    let mut gts = Vec::new();
    for _ in 0..500 {
        let len = rng.random_range(4..=12);
        let obs: Vec<Vec<f64>> = (0..len).map(|_| uniform(&mut rng, dim, 1.0)).collect();
        let gt: f64 = obs
            .iter()
            .map(|o| bias + o.iter().zip(&coef).map(|(x, c)| x * c).sum::<f64>())
            .sum();
        episodes.push(obs);
        gts.push(gt);
    }
    let (train, held) = episodes.split_at(400);
    let (train_gt, held_gt) = gts.split_at(400);

    let config = RewardModelConfig {
        input: dim,
        hidden: 16,
    };
    let mut model = RewardModel::new(&config, &mut rng);
    let untrained = model.loss(held, held_gt)?;
    let mut opt = Adam::new(3e-3);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..60 {
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        for chunk in order.chunks(16) {
            let eps: Vec<Vec<Vec<f64>>> = chunk.iter().map(|&i| train[i].clone()).collect();
            let gt: Vec<f64> = chunk.iter().map(|&i| train_gt[i]).collect();
            model.update(&eps, &gt, &mut opt)?;
        }
    }
    let trained = model.loss(held, held_gt)?;
    let elapsed = t.elapsed();
    let ratio = trained / untrained;
    Ok(Outcome::new(
        ratio <= 0.05 && within(elapsed, 300),
        format!(
            "held-out MSE {trained:.4} vs untrained {untrained:.4} (ratio {ratio:.4}), {elapsed:.2?}"
        ),
    ))
}

const PIPELINE_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn pipeline_kv(seed: u64) -> Result<KvConfig, Error> {
    let mut kv = KvConfig::new();
    kv.apply_overrides(&[
        format!("seed={seed}"),
        "env=skirmish-small".into(),
        "reward.mode=estimation".into(),
        "victim.episodes=2000".into(),
        "eval.interval=250".into(),
        "adversary.episodes=3000".into(),
        "hidden=32".into(),
        "hidden_layers=1".into(),
        "mixer.embed=16".into(),
        "batch_size=16".into(),
        "target_sync=100".into(),
        "eval.episodes=200".into(),
        "workers=1".into(),
    ])?;
    Ok(kv)
}

struct SeedRun {
    seed: u64,
    no_attack: f64,
    /// Under-attack win rate for 1, 2 and 3 adversaries.
    under_attack: [f64; 3],
    retrained_under_attack: f64,
    retrained_no_attack: f64,
    original_under_attack: f64,
    original_no_attack: f64,
}

fn run_seed(seed: u64) -> Result<SeedRun, Error> {
    let cfg = TrainingConfig::from_kv(&pipeline_kv(seed)?)?;
    let env = SkirmishEnv::new(SkirmishConfig::small())?;
    let victims = train_victims(&env, &cfg, &mut RunLog::memory("victims"))?;
    let mut under_attack = [0.0; 3];
    let mut pair: Option<FrozenPolicy> = None;
    for n in 1..=3 {
        let mut c = cfg.clone();
        c.adversaries = Some(n);
        let a = train_adversaries(&env, &victims.policy, &c, &mut RunLog::memory("adversary"))?;
        under_attack[n - 1] = a.under_attack.rate();
        if n == 2 {
            pair = Some(a.policy);
        }
    }
    let pair = pair.expect("two-adversary policy trained");
    let d = retrain_victims_defense(
        &env,
        &victims.policy,
        &pair,
        &cfg,
        &mut RunLog::memory("defense"),
    )?;
    let run = SeedRun {
        seed,
        no_attack: victims.no_attack.rate(),
        under_attack,
        retrained_under_attack: d.after_under_attack.rate(),
        retrained_no_attack: d.after_no_attack.rate(),
        original_under_attack: d.before_under_attack.rate(),
        original_no_attack: d.before_no_attack.rate(),
    };
    eprintln!(
        "  seed {}: no-attack {:.3}, under attack {:?}, defense ua {:.3}->{:.3} na {:.3}->{:.3}",
        run.seed,
        run.no_attack,
        run.under_attack,
        run.original_under_attack,
        run.retrained_under_attack,
        run.original_no_attack,
        run.retrained_no_attack
    );
    Ok(run)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn pipeline() -> Result<(Vec<SeedRun>, Duration), Error> {
    let t = Instant::now();
    let runs = PIPELINE_SEEDS
        .iter()
        .map(|&s| run_seed(s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((runs, t.elapsed()))
}

fn attack_effect(runs: &[SeedRun], elapsed: Duration) -> Outcome {
    let no_attack = mean(runs.iter().map(|r| r.no_attack));
    let under = mean(runs.iter().map(|r| r.under_attack[1]));
    Outcome::new(
        no_attack >= 0.9 && under <= 0.5 && within(elapsed, 45 * 60),
        format!(
            "mean no-attack {no_attack:.3}, mean under attack (2 adversaries) {under:.3}, {} seeds, {elapsed:.0?}",
            runs.len()
        ),
    )
}

fn scaling(runs: &[SeedRun]) -> Outcome {
    let reduction: Vec<f64> = (0..3)
        .map(|k| mean(runs.iter().map(|r| r.no_attack - r.under_attack[k])))
        .collect();
    let drops: Vec<f64> = reduction.windows(2).map(|w| w[0] - w[1]).collect();
    let inversions = drops.iter().filter(|d| **d > 0.0).count();
    let pass = drops.iter().all(|d| *d <= 0.05) && inversions <= 1;
    Outcome::new(
        pass,
        format!(
            "mean reduction for 1/2/3 adversaries: {:.3} / {:.3} / {:.3}",
            reduction[0], reduction[1], reduction[2]
        ),
    )
}

fn defense(runs: &[SeedRun]) -> Outcome {
    let ua_before = mean(runs.iter().map(|r| r.original_under_attack));
    let ua_after = mean(runs.iter().map(|r| r.retrained_under_attack));
    let na_before = mean(runs.iter().map(|r| r.original_no_attack));
    let na_after = mean(runs.iter().map(|r| r.retrained_no_attack));
    let pass = ua_after - ua_before >= 0.1 && na_before - na_after >= 0.1;
    Outcome::new(
        pass,
        format!(
            "under attack {ua_before:.3} -> {ua_after:.3}, no attack {na_before:.3} -> {na_after:.3}"
        ),
    )
}

fn run_from_config(dir: &Path, kv: &KvConfig) -> Result<(), Error> {
    let cfg = TrainingConfig::from_kv(kv)?;
    let mut manifest = RunManifest::start(dir, "acceptance-replay", kv, vec![cfg.seed])?;
    let env = SkirmishEnv::new(SkirmishConfig::small())?;
    let mut vlog = RunLog::to_dir(dir, "victims")?;
    let victims = train_victims(&env, &cfg, &mut vlog)?;
    let mut alog = RunLog::to_dir(dir, "adversary")?;
    train_adversaries(&env, &victims.policy, &cfg, &mut alog)?;
    for log in [&vlog, &alog] {
        if let Some(p) = log.csv_path() {
            manifest.add_artifact(dir, &p);
        }
    }
    manifest.finish(dir, "ok")
}

fn reproducibility() -> Result<Outcome, Error> {
    let root = tempfile::tempdir()?;
    let first = root.path().join("first");
    let mut kv = KvConfig::new();
    kv.apply_overrides(&[
        "seed=17",
        "env=skirmish-small",
        "victim.episodes=150",
        "adversary.episodes=150",
        "adversary.count=2",
        "eval.interval=50",
        "eval.episodes=20",
        "hidden=16",
        "competence_floor=0",
        "workers=1",
    ])?;
    run_from_config(&first, &kv)?;

    let manifest = RunManifest::load(&first)?;
    let archived = manifest.archived_config(&first)?;
    let second = root.path().join("second");
    run_from_config(&second, &archived)?;

    let csvs: Vec<&String> = manifest
        .artifacts
        .iter()
        .filter(|a| a.ends_with(".csv"))
        .collect();
    let mut identical = 0;
    for name in &csvs {
        if std::fs::read(first.join(name))? == std::fs::read(second.join(name))? {
            identical += 1;
        }
    }
    Ok(Outcome::new(
        !csvs.is_empty() && identical == csvs.len(),
        format!(
            "{identical}/{} metric CSVs bit-identical on replay",
            csvs.len()
        ),
    ))
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "marginalization", fails(marginalization())),
        (2, "weighted evaluation", fails(weighted_evaluation())),
        (3, "mixer monotonicity", fails(monotonicity())),
        (4, "gradients", fails(gradients())),
        (5, "rule-based calculator", fails(rule_calculator())),
        (6, "reward model", fails(reward_model())),
    ];
    for (k, name, o) in &results {
        println!("{} criterion {k} {name}: {}", verdict(o), o.detail);
    }
    let pipeline_results = match pipeline() {
        Ok((runs, elapsed)) => vec![
            (7, "attack effect", attack_effect(&runs, elapsed)),
            (8, "adversary scaling", scaling(&runs)),
            (9, "defense retraining", defense(&runs)),
        ],
        Err(e) => (7..=9)
            .zip(["attack effect", "adversary scaling", "defense retraining"])
            .map(|(k, name)| (k, name, Outcome::new(false, format!("error: {e}"))))
            .collect(),
    };
    let replay = (10, "reproducibility", fails(reproducibility()));
    for (k, name, o) in pipeline_results.iter().chain(std::iter::once(&replay)) {
        println!("{} criterion {k} {name}: {}", verdict(o), o.detail);
    }
    results.extend(pipeline_results);
    results.push(replay);
    let failed = results.iter().filter(|(_, _, o)| !o.pass).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn verdict(o: &Outcome) -> &'static str {
    if o.pass {
        "PASS"
    } else {
        "FAIL"
    }
}
