use nalab::config::KvConfig;
use nalab::envs::{CorridorConfig, CorridorEnv, SkirmishConfig, SkirmishEnv};
use nalab::mdp::PartyId;
use nalab::neural::Checkpoint;
use nalab::training::{
    evaluate, retrain_victims_defense, train_adversaries, train_victims, Control, FrozenPolicy,
    MetricsRow, RunLog, TrainingConfig,
};
use nalab::Error;

fn tiny(extra: &[&str]) -> TrainingConfig {
    let mut kv = KvConfig::new();
    kv.apply_overrides(&[
        "seed=9",
        "victim.episodes=40",
        "adversary.episodes=40",
        "retrain.episodes=20",
        "eval.episodes=10",
        "eval.interval=20",
        "hidden=8",
        "mixer.embed=4",
        "batch_size=4",
        "competence_floor=0",
        "reward.warmup=5",
        "reward.batch=4",
    ])
    .unwrap();
    kv.apply_overrides(extra).unwrap();
    TrainingConfig::from_kv(&kv).unwrap()
}

fn skirmish() -> SkirmishEnv {
    SkirmishEnv::new(SkirmishConfig::small()).unwrap()
}

fn bits(rows: &[MetricsRow]) -> Vec<[u64; 5]> {
    rows.iter()
        .map(|r| {
            [
                r.episode as u64,
                r.win_rate.to_bits(),
                r.mean_episode_reward.to_bits(),
                r.loss.to_bits(),
                r.epsilon.to_bits(),
            ]
        })
        .collect()
}

#[test]
fn identical_seeds_give_identical_metrics() {
    let env = skirmish();
    let cfg = tiny(&[]);
    let run = || {
        let mut log = RunLog::memory("victims");
        let v = train_victims(&env, &cfg, &mut log).unwrap();
        (bits(&log.rows), v.policy.checksum().to_string())
    };
    let (a, ca) = run();
    let (b, cb) = run();
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert_eq!(ca, cb);
}

#[test]
fn different_seeds_give_different_policies() {
    let env = skirmish();
    let a = train_victims(&env, &tiny(&[]), &mut RunLog::memory("a")).unwrap();
    let b = train_victims(&env, &tiny(&["seed=10"]), &mut RunLog::memory("b")).unwrap();
    assert_ne!(a.policy.checksum(), b.policy.checksum());
}

#[test]
fn zero_episodes_fails_the_competence_floor() {
    let env = skirmish();
    let mut cfg = tiny(&["victim.episodes=0"]);
    cfg.competence_floor = 0.8;
    let err = train_victims(&env, &cfg, &mut RunLog::memory("v")).unwrap_err();
    assert!(matches!(err, Error::TrainingFailed(_)), "{err}");
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn frozen_policy_survives_a_checkpoint_round_trip() {
    let env = skirmish();
    let cfg = tiny(&[]);
    let v = train_victims(&env, &cfg, &mut RunLog::memory("v")).unwrap();
    let mut ck = Checkpoint::new();
    v.policy.write_to(&mut ck, "victims");
    let text = ck.to_text();
    let back = FrozenPolicy::read_from(&Checkpoint::from_text(&text).unwrap(), "victims").unwrap();
    assert_eq!(back.checksum(), v.policy.checksum());
    assert_eq!(back.agents(), v.policy.agents());
    back.audit().unwrap();

    let a = evaluate(
        &env,
        &Control::Random,
        &Control::Frozen(&v.policy),
        3,
        10,
        1,
    )
    .unwrap();
    let b = evaluate(&env, &Control::Random, &Control::Frozen(&back), 3, 10, 1).unwrap();
    assert_eq!(a, b);
}

#[test]
fn tampered_checkpoint_is_rejected() {
    let env = skirmish();
    let v = train_victims(&env, &tiny(&[]), &mut RunLog::memory("v")).unwrap();
    let mut ck = Checkpoint::new();
    v.policy.write_to(&mut ck, "victims");
    ck.meta.insert("victims.checksum".into(), "00".repeat(32));
    assert!(FrozenPolicy::read_from(&ck, "victims").is_err());
}

#[test]
fn adversary_training_leaves_victims_untouched() {
    let env = skirmish();
    let cfg = tiny(&["adversary.count=2"]);
    let v = train_victims(&env, &cfg, &mut RunLog::memory("v")).unwrap();
    let before = v.policy.checksum().to_string();
    let a = train_adversaries(&env, &v.policy, &cfg, &mut RunLog::memory("a")).unwrap();
    assert_eq!(v.policy.checksum(), before);
    v.policy.audit().unwrap();
    assert_eq!(a.policy.party(), PartyId::Adversary);
    assert_eq!(a.policy.len(), 2);
    assert!(a.reward_model.is_some());
}

#[test]
fn adversary_training_is_deterministic() {
    let env = skirmish();
    let cfg = tiny(&["adversary.count=1"]);
    let v = train_victims(&env, &cfg, &mut RunLog::memory("v")).unwrap();
    let run = || {
        let mut log = RunLog::memory("a");
        let a = train_adversaries(&env, &v.policy, &cfg, &mut log).unwrap();
        (
            bits(&log.rows),
            a.policy.checksum().to_string(),
            a.under_attack,
        )
    };
    assert_eq!(run(), run());
}

#[test]
fn adversaries_need_a_victim_policy() {
    let env = skirmish();
    let cfg = tiny(&[]);
    let not_victims = FrozenPolicy::empty(PartyId::Adversary);
    let err = train_adversaries(&env, &not_victims, &cfg, &mut RunLog::memory("a")).unwrap_err();
    assert!(matches!(err, Error::Contract(_)));
}

#[test]
fn attack_size_out_of_range_is_a_config_error() {
    let env = skirmish();
    let cfg = tiny(&["adversary.count=9"]);
    let v = train_victims(&env, &cfg, &mut RunLog::memory("v")).unwrap();
    let err = train_adversaries(&env, &v.policy, &cfg, &mut RunLog::memory("a")).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn oracle_baselines_run_when_flagged() {
    let env = skirmish();
    for mode in ["rule-immediate", "traditional"] {
        let cfg = tiny(&[
            &format!("reward.mode={mode}"),
            "reward.oracle_access=true",
            "adversary.count=1",
        ]);
        let v = train_victims(&env, &cfg, &mut RunLog::memory("v")).unwrap();
        let a = train_adversaries(&env, &v.policy, &cfg, &mut RunLog::memory("a")).unwrap();
        assert!(a.reward_model.is_none());
    }
}

#[test]
fn defense_reports_both_conditions() {
    let env = skirmish();
    let cfg = tiny(&["adversary.count=2"]);
    let v = train_victims(&env, &cfg, &mut RunLog::memory("v")).unwrap();
    let a = train_adversaries(&env, &v.policy, &cfg, &mut RunLog::memory("a")).unwrap();
    let d = retrain_victims_defense(&env, &v.policy, &a.policy, &cfg, &mut RunLog::memory("d"))
        .unwrap();
    assert_eq!(d.before_under_attack, a.under_attack);
    assert_eq!(d.before_no_attack, v.no_attack);
    assert_eq!(d.policy.party(), PartyId::Victim);
    assert_ne!(d.policy.checksum(), v.policy.checksum());
    a.policy.audit().unwrap();
}

#[test]
fn cold_start_defense_also_runs() {
    let env = skirmish();
    let cfg = tiny(&["adversary.count=1", "retrain.warm_start=false"]);
    let v = train_victims(&env, &cfg, &mut RunLog::memory("v")).unwrap();
    let a = train_adversaries(&env, &v.policy, &cfg, &mut RunLog::memory("a")).unwrap();
    retrain_victims_defense(&env, &v.policy, &a.policy, &cfg, &mut RunLog::memory("d")).unwrap();
}

#[test]
fn keep_best_records_the_selected_episode() {
    let env = skirmish();
    let v = train_victims(&env, &tiny(&[]), &mut RunLog::memory("v")).unwrap();
    assert!(
        [20, 40].contains(&v.selected_episode),
        "{}",
        v.selected_episode
    );
    let last = train_victims(
        &env,
        &tiny(&["victim.keep_best=false"]),
        &mut RunLog::memory("v"),
    )
    .unwrap();
    assert_eq!(last.selected_episode, 40);
}

#[test]
fn corridor_pipeline_runs() {
    let env = CorridorEnv::new(CorridorConfig::preset("corridor-small").unwrap()).unwrap();
    let cfg = tiny(&["adversary.count=1"]);
    let v = train_victims(&env, &cfg, &mut RunLog::memory("v")).unwrap();
    train_adversaries(&env, &v.policy, &cfg, &mut RunLog::memory("a")).unwrap();
}

#[test]
fn metrics_csv_is_written_incrementally() {
    let dir = tempfile::tempdir().unwrap();
    let env = skirmish();
    let mut log = RunLog::to_dir(dir.path(), "victims").unwrap();
    train_victims(&env, &tiny(&[]), &mut log).unwrap();
    let rows = nalab::training::read_metrics_csv(&log.csv_path().unwrap()).unwrap();
    assert_eq!(bits(&rows), bits(&log.rows));
    assert!(dir.path().join("victims-final.ckpt").exists());
}
