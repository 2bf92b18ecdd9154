//! Experiment grids over environments, reward modes, adversary counts and
//! seeds, aggregated into win-rate tables.
//!
//! Layout under the output directory:
//!
//! ```text
//! <id>-table.csv            one row per (env, mode, adversaries)
//! <id>-points.csv           one row per grid point (seed level)
//! <id>-curves-long.csv      every curve in long format
//! <env>/seed-<s>/victims/   victim training: curve, checkpoints, manifest
//! <env>/seed-<s>/<mode>-n<k>/  adversary training (and defense), manifest
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::{evaluate_win_rate, Neutrals};
use crate::config::KvConfig;
use crate::envs::{CorridorEnv, EnvConfig, Environment, SkirmishEnv};
use crate::error::{Error, Result};
use crate::manifest::{write_atomic, RunManifest};
use crate::neural::Checkpoint;
use crate::training::{
    read_metrics_csv, retrain_victims_defense, train_adversaries, train_victims, FrozenPolicy,
    MetricsRow, RewardMode, RunLog, TrainingConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ExperimentId {
    /// Generalization across environments.
    Rq1,
    /// Reward-mode comparison.
    Rq2,
    /// Adversary-count sweep.
    Rq3,
    /// Task-difficulty sweep.
    Rq4,
    /// Defense by retraining victims against frozen adversaries.
    Rq5,
}

impl ExperimentId {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rq1" => Ok(Self::Rq1),
            "rq2" => Ok(Self::Rq2),
            "rq3" => Ok(Self::Rq3),
            "rq4" => Ok(Self::Rq4),
            "rq5" => Ok(Self::Rq5),
            other => Err(Error::Config(format!(
                "unknown experiment `{other}`, expected rq1..rq5"
            ))),
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Rq1 => "rq1",
            Self::Rq2 => "rq2",
            Self::Rq3 => "rq3",
            Self::Rq4 => "rq4",
            Self::Rq5 => "rq5",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub id: ExperimentId,
    /// Environment preset names.
    pub envs: Vec<String>,
    pub reward_modes: Vec<RewardMode>,
    pub adversary_counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub eval_episodes: usize,
    /// Train policies; when false every policy must already be on disk.
    pub train: bool,
    /// Training and environment settings shared by all grid points.
    pub base: KvConfig,
}

const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty())
}

impl ExperimentSpec {
    /// The default grid of an experiment.
    pub fn preset(id: ExperimentId, base: KvConfig) -> Result<Self> {
        let eval_episodes = TrainingConfig::from_kv(&base)?.eval_episodes;
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        let (envs, reward_modes, adversary_counts) = match id {
            ExperimentId::Rq1 => (
                s(&["skirmish-small", "corridor-highway"]),
                vec![RewardMode::EstimationBased],
                vec![2],
            ),
            ExperimentId::Rq2 => (
                s(&["skirmish-small"]),
                vec![
                    RewardMode::Traditional,
                    RewardMode::RuleBasedImmediate,
                    RewardMode::EstimationBased,
                ],
                vec![2],
            ),
            ExperimentId::Rq3 => (
                s(&["skirmish-small"]),
                vec![RewardMode::EstimationBased],
                vec![1, 2, 3],
            ),
            ExperimentId::Rq4 => (
                s(&["skirmish-small", "skirmish-even", "skirmish-hard"]),
                vec![RewardMode::EstimationBased],
                vec![2],
            ),
            ExperimentId::Rq5 => (
                s(&["skirmish-small"]),
                vec![RewardMode::EstimationBased],
                vec![2],
            ),
        };
        Ok(Self {
            id,
            envs,
            reward_modes,
            adversary_counts,
            seeds: DEFAULT_SEEDS.to_vec(),
            eval_episodes,
            train: true,
            base,
        })
    }

    /// Reads `experiment` and any `experiment.*` overrides of the preset grid.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let id = ExperimentId::parse(
            kv.get_str("experiment")
                .ok_or_else(|| Error::Config("`experiment` is required (rq1..rq5)".into()))?,
        )?;
        let mut spec = Self::preset(id, kv.clone())?;
        if let Some(v) = kv.get_str("experiment.envs") {
            spec.envs = split_list(v).map(String::from).collect();
        }
        if let Some(v) = kv.get_str("experiment.modes") {
            spec.reward_modes = split_list(v)
                .map(RewardMode::parse)
                .collect::<Result<_>>()?;
        }
        let bad = |k: &str, t: &str| Error::Config(format!("`{k}`: cannot parse `{t}`"));
        if let Some(v) = kv.get_str("experiment.adversaries") {
            spec.adversary_counts = split_list(v)
                .map(|t| t.parse().map_err(|_| bad("experiment.adversaries", t)))
                .collect::<Result<_>>()?;
        }
        if let Some(v) = kv.get_str("experiment.seeds") {
            spec.seeds = split_list(v)
                .map(|t| t.parse().map_err(|_| bad("experiment.seeds", t)))
                .collect::<Result<_>>()?;
        }
        if let Some(v) = kv.get_str("experiment.train") {
            spec.train = crate::envs::parse_bool("experiment.train", v)?;
        }
        Ok(spec)
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
            || self.reward_modes.is_empty()
            || self.adversary_counts.is_empty()
            || self.seeds.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Ok(());
        }
        if self.seeds.len() < 5 {
            return Err(Error::Config(format!(
                "an experiment needs at least 5 seeds per point, got {}",
                self.seeds.len()
            )));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config(
                "evaluation needs at least one episode".into(),
            ));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("experiment seeds must be distinct".into()));
        }
        for env in &self.envs {
            self.env_config(env)?;
        }
        Ok(())
    }

    /// Base config specialised to one environment and seed. `env.*`
    /// overrides carry over only to the environment preset they were
    /// written for.
    fn point_kv(&self, env: &str, seed: u64) -> Result<KvConfig> {
        let mut kv = self.base.clone();
        if kv.get_str("env").unwrap_or("skirmish-small") != env {
            let keys: Vec<String> = kv
                .section("env.")
                .map(|(k, _)| format!("env.{k}"))
                .collect();
            for k in keys {
                kv.remove(&k);
            }
        }
        for k in [
            "experiment",
            "experiment.envs",
            "experiment.modes",
            "experiment.adversaries",
            "experiment.seeds",
            "experiment.train",
        ] {
            kv.remove(k);
        }
        kv.set("env", env)?;
        kv.set("seed", seed.to_string())?;
        kv.set("eval.episodes", self.eval_episodes.to_string())?;
        kv.set("workers", "1")?;
        Ok(kv)
    }

    fn env_config(&self, env: &str) -> Result<EnvConfig> {
        EnvConfig::from_kv(&self.point_kv(env, 0)?)
    }
}

/// Results of one grid point (one seed).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointResult {
    pub env: String,
    pub reward_mode: String,
    pub adversaries: usize,
    pub seed: u64,
    /// Random neutrals in every slot.
    pub no_attack: f64,
    pub no_attack_half_width: f64,
    /// No neutral units at all.
    pub no_neutrals: f64,
    pub under_attack: f64,
    pub under_attack_half_width: f64,
    /// `no_attack - under_attack`.
    pub reduction: f64,
    /// First evaluation episode at which the victim win rate fell to 0.5 or below.
    pub episodes_to_half: Option<usize>,
    pub retrained_under_attack: Option<f64>,
    pub retrained_no_attack: Option<f64>,
}

/// Seed-aggregated row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub env: String,
    pub reward_mode: String,
    pub adversaries: usize,
    pub seeds: usize,
    pub under_attack: f64,
    pub under_attack_std: f64,
    pub no_attack: f64,
    pub no_attack_std: f64,
    pub no_neutrals: f64,
    pub reduction: f64,
    pub episodes_to_half: Option<f64>,
    pub retrained_under_attack: Option<f64>,
    pub retrained_no_attack: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct WinRateTable {
    pub rows: Vec<TableRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub table: WinRateTable,
    pub points: Vec<PointResult>,
    pub warnings: Vec<String>,
    /// Every file written, relative to the output directory.
    pub artifacts: Vec<PathBuf>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation; 0 for a single value.
fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn optional_mean(v: &[Option<f64>]) -> Option<f64> {
    if v.iter().all(Option::is_some) && !v.is_empty() {
        Some(mean(&v.iter().flatten().copied().collect::<Vec<_>>()))
    } else {
        None
    }
}

/// Groups points by (env, mode, adversaries) in first-seen order and
/// averages over seeds.
pub fn aggregate(points: &[PointResult]) -> WinRateTable {
    let mut keys: Vec<(String, String, usize)> = Vec::new();
    for p in points {
        let k = (p.env.clone(), p.reward_mode.clone(), p.adversaries);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let rows = keys
        .into_iter()
        .map(|(env, mode, n)| {
            let group: Vec<&PointResult> = points
                .iter()
                .filter(|p| p.env == env && p.reward_mode == mode && p.adversaries == n)
                .collect();
            let col = |f: fn(&PointResult) -> f64| group.iter().map(|p| f(p)).collect::<Vec<f64>>();
            let ocol =
                |f: fn(&PointResult) -> Option<f64>| group.iter().map(|p| f(p)).collect::<Vec<_>>();
            let under = col(|p| p.under_attack);
            let no = col(|p| p.no_attack);
            TableRow {
                env,
                reward_mode: mode,
                adversaries: n,
                seeds: group.len(),
                under_attack: mean(&under),
                under_attack_std: std_dev(&under),
                no_attack: mean(&no),
                no_attack_std: std_dev(&no),
                no_neutrals: mean(&col(|p| p.no_neutrals)),
                reduction: mean(&col(|p| p.reduction)),
                episodes_to_half: optional_mean(&ocol(|p| p.episodes_to_half.map(|e| e as f64))),
                retrained_under_attack: optional_mean(&ocol(|p| p.retrained_under_attack)),
                retrained_no_attack: optional_mean(&ocol(|p| p.retrained_no_attack)),
            }
        })
        .collect();
    WinRateTable { rows }
}

fn episodes_to_half(rows: &[MetricsRow]) -> Option<usize> {
    rows.iter().find(|r| r.win_rate <= 0.5).map(|r| r.episode)
}

fn mode_dir(mode: RewardMode, n: usize) -> String {
    format!("{}-n{n}", mode.as_str())
}

fn load_policy(path: &Path, prefix: &str) -> Result<FrozenPolicy> {
    FrozenPolicy::read_from(&Checkpoint::load(path)?, prefix)
}

/// One long-format curve line.
#[derive(Clone, Debug, PartialEq, Serialize)]
struct CurveLine<'a> {
    experiment: String,
    env: &'a str,
    reward_mode: &'a str,
    adversaries: usize,
    seed: u64,
    phase: &'a str,
    episode: usize,
    metric: &'a str,
    value: f64,
}

struct SeedOutput {
    points: Vec<PointResult>,
    curves: Vec<(PointResult, &'static str, Vec<MetricsRow>)>,
    artifacts: Vec<PathBuf>,
}

fn run_env_seed<E: Environment>(
    env: &E,
    spec: &ExperimentSpec,
    env_name: &str,
    seed: u64,
    out: &Path,
) -> Result<SeedOutput> {
    let seed_dir = out.join(env_name).join(format!("seed-{seed}"));
    let kv = spec.point_kv(env_name, seed)?;
    let mut artifacts = Vec::new();
    let mut curves = Vec::new();

    let victim_dir = seed_dir.join("victims");
    let victims = if spec.train {
        let mut manifest = RunManifest::start(&victim_dir, "train-victim", &kv, vec![seed])?;
        let cfg = TrainingConfig::from_kv(&kv)?;
        let mut log = RunLog::to_dir(&victim_dir, "victims")?;
        let trained = train_victims(env, &cfg, &mut log);
        for f in ["victims.csv", "victims-latest.ckpt", "victims-final.ckpt"] {
            manifest.add_artifact(&victim_dir, &victim_dir.join(f));
        }
        manifest.finish(&victim_dir, if trained.is_ok() { "ok" } else { "failed" })?;
        trained?.policy
    } else {
        load_policy(&victim_dir.join("victims-final.ckpt"), "victims")?
    };
    artifacts.push(victim_dir.join("victims-final.ckpt"));
    let victim_curve = read_metrics_csv(&victim_dir.join("victims.csv")).unwrap_or_default();

    let no_attack =
        evaluate_win_rate(env, &victims, Neutrals::Random, spec.eval_episodes, seed, 1)?;
    let no_neutrals =
        evaluate_win_rate(env, &victims, Neutrals::Absent, spec.eval_episodes, seed, 1)?;

    let mut points = Vec::new();
    for &mode in &spec.reward_modes {
        for &n in &spec.adversary_counts {
            let dir = seed_dir.join(mode_dir(mode, n));
            let mut point_kv = kv.clone();
            point_kv.set("reward.mode", mode.as_str())?;
            point_kv.set("adversary.count", n.to_string())?;
            if mode.needs_oracle_access() {
                point_kv.set("reward.oracle_access", "true")?;
            }
            let cfg = TrainingConfig::from_kv(&point_kv)?;
            let (adversaries, defense) = if spec.train {
                let mut manifest =
                    RunManifest::start(&dir, "run-experiment", &point_kv, vec![seed])?;
                let mut log = RunLog::to_dir(&dir, "adversary")?;
                let adv = train_adversaries(env, &victims, &cfg, &mut log)?.policy;
                for f in [
                    "adversary.csv",
                    "adversary-latest.ckpt",
                    "adversary-final.ckpt",
                ] {
                    manifest.add_artifact(&dir, &dir.join(f));
                }
                let defense = if spec.id == ExperimentId::Rq5 {
                    let mut log = RunLog::to_dir(&dir, "defense")?;
                    let report = retrain_victims_defense(env, &victims, &adv, &cfg, &mut log)?;
                    for f in ["defense.csv", "defense-latest.ckpt", "defense-final.ckpt"] {
                        manifest.add_artifact(&dir, &dir.join(f));
                    }
                    Some(report.policy)
                } else {
                    None
                };
                manifest.finish(&dir, "ok")?;
                (adv, defense)
            } else {
                let adv = load_policy(&dir.join("adversary-final.ckpt"), "adversaries")?;
                let defense = if spec.id == ExperimentId::Rq5 {
                    Some(load_policy(&dir.join("defense-final.ckpt"), "victims")?)
                } else {
                    None
                };
                (adv, defense)
            };
            artifacts.push(dir.join("adversary-final.ckpt"));
            let under = evaluate_win_rate(
                env,
                &victims,
                Neutrals::Adversaries(&adversaries),
                spec.eval_episodes,
                seed,
                1,
            )?;
            let adv_curve = read_metrics_csv(&dir.join("adversary.csv")).unwrap_or_default();
            let (retrained_under_attack, retrained_no_attack) = match &defense {
                Some(p) => {
                    artifacts.push(dir.join("defense-final.ckpt"));
                    let ua = evaluate_win_rate(
                        env,
                        p,
                        Neutrals::Adversaries(&adversaries),
                        spec.eval_episodes,
                        seed,
                        1,
                    )?;
                    let na =
                        evaluate_win_rate(env, p, Neutrals::Random, spec.eval_episodes, seed, 1)?;
                    (Some(ua.rate), Some(na.rate))
                }
                None => (None, None),
            };
            let point = PointResult {
                env: env_name.to_string(),
                reward_mode: mode.as_str().to_string(),
                adversaries: n,
                seed,
                no_attack: no_attack.rate,
                no_attack_half_width: no_attack.half_width,
                no_neutrals: no_neutrals.rate,
                under_attack: under.rate,
                under_attack_half_width: under.half_width,
                reduction: no_attack.rate - under.rate,
                episodes_to_half: episodes_to_half(&adv_curve),
                retrained_under_attack,
                retrained_no_attack,
            };
            curves.push((point.clone(), "victims", victim_curve.clone()));
            curves.push((point.clone(), "adversary", adv_curve));
            if defense.is_some() {
                curves.push((
                    point.clone(),
                    "defense",
                    read_metrics_csv(&dir.join("defense.csv")).unwrap_or_default(),
                ));
            }
            points.push(point);
        }
    }
    Ok(SeedOutput {
        points,
        curves,
        artifacts,
    })
}

/// Checkpoints a load-only run needs but cannot find.
fn missing_checkpoints(spec: &ExperimentSpec, out: &Path) -> Vec<PathBuf> {
    let mut missing = Vec::new();
    for env in &spec.envs {
        for &seed in &spec.seeds {
            let seed_dir = out.join(env).join(format!("seed-{seed}"));
            let mut need = vec![seed_dir.join("victims").join("victims-final.ckpt")];
            for &mode in &spec.reward_modes {
                for &n in &spec.adversary_counts {
                    let dir = seed_dir.join(mode_dir(mode, n));
                    need.push(dir.join("adversary-final.ckpt"));
                    if spec.id == ExperimentId::Rq5 {
                        need.push(dir.join("defense-final.ckpt"));
                    }
                }
            }
            missing.extend(need.into_iter().filter(|p| !p.exists()));
        }
    }
    missing
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

/// Runs the grid, writes tables and curves under `out`.
///
/// With `workers > 1` seeds run in parallel; every grid point is itself
/// single-worker, so results do not depend on `workers`.
pub fn run_experiment(
    spec: &ExperimentSpec,
    out: &Path,
    workers: usize,
) -> Result<ExperimentOutput> {
    spec.validate()?;
    std::fs::create_dir_all(out)?;
    let mut warnings = Vec::new();
    if spec.is_empty() {
        warnings.push(format!(
            "experiment {} has an empty grid; nothing to run",
            spec.id
        ));
    } else if !spec.train {
        let missing = missing_checkpoints(spec, out);
        if !missing.is_empty() {
            return Err(Error::Dependency { missing });
        }
    }
    let jobs: Vec<(String, u64)> = if spec.is_empty() {
        Vec::new()
    } else {
        spec.envs
            .iter()
            .flat_map(|e| spec.seeds.iter().map(move |s| (e.clone(), *s)))
            .collect()
    };
    let run = |(env_name, seed): &(String, u64)| -> Result<SeedOutput> {
        match spec.env_config(env_name)? {
            EnvConfig::Skirmish(c) => {
                run_env_seed(&SkirmishEnv::new(c)?, spec, env_name, *seed, out)
            }
            EnvConfig::Corridor(c) => {
                run_env_seed(&CorridorEnv::new(c)?, spec, env_name, *seed, out)
            }
        }
    };
    let results: Vec<SeedOutput> = if workers <= 1 {
        jobs.iter().map(run).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
        pool.install(|| jobs.par_iter().map(run).collect::<Result<_>>())?
    };

    let mut points = Vec::new();
    let mut curves = Vec::new();
    let mut artifacts = Vec::new();
    for r in results {
        points.extend(r.points);
        artifacts.extend(r.artifacts);
        curves.extend(r.curves);
    }
    let mut curve_lines = Vec::new();
    for (p, phase, rows) in &curves {
        for row in rows {
            for (metric, value) in [
                ("win_rate", row.win_rate),
                ("mean_episode_reward", row.mean_episode_reward),
                ("loss", row.loss),
                ("epsilon", row.epsilon),
            ] {
                curve_lines.push(CurveLine {
                    experiment: spec.id.to_string(),
                    env: &p.env,
                    reward_mode: &p.reward_mode,
                    adversaries: p.adversaries,
                    seed: p.seed,
                    phase,
                    episode: row.episode,
                    metric,
                    value,
                });
            }
        }
    }
    let table = aggregate(&points);
    let id = spec.id;
    let files = [
        out.join(format!("{id}-table.csv")),
        out.join(format!("{id}-points.csv")),
        out.join(format!("{id}-curves-long.csv")),
    ];
    write_csv(&files[0], &table.rows)?;
    write_csv(&files[1], &points)?;
    write_csv(&files[2], &curve_lines)?;
    artifacts.extend(files);
    let artifacts = artifacts
        .into_iter()
        .map(|p| p.strip_prefix(out).map(Path::to_path_buf).unwrap_or(p))
        .collect();
    Ok(ExperimentOutput {
        table,
        points,
        warnings,
        artifacts,
    })
}
