use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::{MetricsRow, RunLog};
use super::policy::{Control, FrozenPolicy};
use super::rollout::{evaluate, run_episode, WinRate};
use super::{RewardMode, TrainingConfig};
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::mdp::{derive_seed, streams, AgentId, EpisodeTrajectory, PartyId};
use crate::neural::{Adam, Checkpoint};
use crate::qmix::{Conditioning, EpsilonSchedule, QmixLearner, ReplayBuffer};
use crate::reward::{
    episode_inputs, rule_based_terminal_reward, RewardModel, RewardModelConfig,
    RuleBasedCalculator, WeightVector,
};

const VICTIM_PHASE: u64 = 0x10;
const ADVERSARY_PHASE: u64 = 0x20;
const RETRAIN_PHASE: u64 = 0x30;
const SELECTION: u64 = 0x40;

/// Per-step rewards of the learning party.
enum Labeler {
    /// Victim task reward.
    Native,
    /// Negated victim task reward.
    Traditional,
    RuleImmediate {
        calc: RuleBasedCalculator,
    },
    Estimation(Box<Estimation>),
}

struct Estimation {
    model: RewardModel,
    optimizer: Adam,
    slots: Vec<usize>,
    r_fail: f64,
    clip: f64,
    warmup: usize,
    batch: usize,
    episodes_seen: usize,
    rng: ChaCha8Rng,
}

impl Labeler {
    fn rewards(&self, traj: &EpisodeTrajectory) -> Result<Vec<f64>> {
        match self {
            Labeler::Native => Ok(traj.records.iter().map(|r| r.native_reward).collect()),
            Labeler::Traditional => Ok(traj.records.iter().map(|r| -r.native_reward).collect()),
            Labeler::RuleImmediate { calc } => {
                let mut out = traj
                    .records
                    .iter()
                    .map(|r| calc.immediate_from_signals(&r.failure_signals))
                    .collect::<Result<Vec<_>>>()?;
                if let Some(last) = out.last_mut() {
                    *last += calc.terminal_reward(&traj.final_outcome)?.value;
                }
                Ok(out)
            }
            Labeler::Estimation(est) => {
                if est.episodes_seen <= est.warmup {
                    let mut out = vec![0.0; traj.len()];
                    if let Some(last) = out.last_mut() {
                        *last = rule_based_terminal_reward(&traj.final_outcome, est.r_fail)?.value;
                    }
                    Ok(out)
                } else {
                    let estimates = est
                        .model
                        .estimate_episode(&episode_inputs(traj, &est.slots))?;
                    Ok(estimates
                        .into_iter()
                        .map(|r| r.clamp(-est.clip, est.clip))
                        .collect())
                }
            }
        }
    }

    /// Bookkeeping after an episode is stored; returns a reward-model loss
    /// when the model was updated.
    fn after_episode(&mut self, buffer: &ReplayBuffer, update: bool) -> Result<Option<f64>> {
        let Labeler::Estimation(est) = self else {
            return Ok(None);
        };
        est.episodes_seen += 1;
        if !update || buffer.len() < est.batch {
            return Ok(None);
        }
        let batch = buffer.sample(est.batch, &mut est.rng)?;
        let inputs: Vec<Vec<Vec<f64>>> = batch
            .iter()
            .map(|t| episode_inputs(t, &est.slots))
            .collect();
        let gts = batch
            .iter()
            .map(|t| rule_based_terminal_reward(&t.final_outcome, est.r_fail).map(|g| g.value))
            .collect::<Result<Vec<_>>>()?;
        est.model
            .update(&inputs, &gts, &mut est.optimizer)
            .map(Some)
    }

    fn write_to(&self, ck: &mut Checkpoint) {
        if let Labeler::Estimation(est) = self {
            est.model.write_to(ck);
        }
    }

    fn into_model(self) -> Option<RewardModel> {
        match self {
            Labeler::Estimation(est) => Some(est.model),
            _ => None,
        }
    }
}

/// One learning phase: who learns, against what, for how long.
struct Phase<'a, E: Environment> {
    env: &'a E,
    other: Control<'a>,
    episodes: usize,
    schedule: EpsilonSchedule,
    seed: u64,
    evaluate: &'a dyn Fn(&QmixLearner) -> Result<WinRate>,
    audit: &'a dyn Fn() -> Result<()>,
    /// Keep a snapshot of the best-evaluated parameters.
    keep_best: bool,
}

/// Best-evaluated snapshot of a phase; ties go to the later snapshot.
struct Best {
    rate: f64,
    episode: usize,
    policy: FrozenPolicy,
}

fn learner_checkpoint(learner: &QmixLearner) -> Checkpoint {
    let mut ck = Checkpoint::new();
    learner.write_to(&mut ck, "learner");
    ck
}

/// Running means between two metrics rows.
#[derive(Default)]
struct Accumulator {
    reward_sum: f64,
    reward_count: usize,
    loss_sum: f64,
    loss_count: usize,
}

impl Accumulator {
    fn emit<E: Environment>(
        &mut self,
        phase: &Phase<E>,
        learner: &QmixLearner,
        episode: usize,
        epsilon: f64,
        log: &mut RunLog,
    ) -> Result<WinRate> {
        (phase.audit)()?;
        let win = (phase.evaluate)(learner)?;
        log.push(MetricsRow {
            episode,
            win_rate: win.rate(),
            mean_episode_reward: if self.reward_count > 0 {
                self.reward_sum / self.reward_count as f64
            } else {
                0.0
            },
            loss: if self.loss_count > 0 {
                self.loss_sum / self.loss_count as f64
            } else {
                f64::NAN
            },
            epsilon,
        })?;
        log.checkpoint(&learner_checkpoint(learner), "latest")?;
        *self = Self::default();
        Ok(win)
    }
}

fn consider(
    best: &mut Option<Best>,
    phase_keeps: bool,
    learner: &QmixLearner,
    episode: usize,
    win: WinRate,
) -> Result<()> {
    if phase_keeps && best.as_ref().is_none_or(|b| win.rate() >= b.rate) {
        *best = Some(Best {
            rate: win.rate(),
            episode,
            policy: FrozenPolicy::freeze(learner)?,
        });
    }
    Ok(())
}

fn run_phase<E: Environment>(
    phase: &Phase<E>,
    learner: &mut QmixLearner,
    labeler: &mut Labeler,
    cfg: &TrainingConfig,
    log: &mut RunLog,
) -> Result<Option<Best>> {
    let party = learner.agents()[0].party;
    let record_state = learner.config().conditioning == Conditioning::State;
    let mut buffer = ReplayBuffer::new(learner.config().buffer_capacity)?;
    let mut sample_rng = ChaCha8Rng::seed_from_u64(derive_seed(phase.seed, streams::SAMPLE, 0));
    let mut acc = Accumulator::default();
    let mut best = None;

    if phase.episodes == 0 {
        let win = acc.emit(phase, learner, 0, phase.schedule.value(0), log)?;
        consider(&mut best, phase.keep_best, learner, 0, win)?;
        return Ok(best);
    }
    for ep in 0..phase.episodes {
        let epsilon = phase.schedule.value(ep);
        let seed = derive_seed(phase.seed, streams::TRAIN_EPISODE, ep as u64);
        let me = Control::Learner {
            learner: &*learner,
            epsilon,
        };
        let (adversaries, victims) = match party {
            PartyId::Adversary => (&me, &phase.other),
            _ => (&phase.other, &me),
        };
        let mut traj = run_episode(phase.env, seed, adversaries, victims, record_state)?;
        let labels = labeler.rewards(&traj)?;
        acc.reward_sum += labels.iter().sum::<f64>();
        acc.reward_count += 1;
        if party == PartyId::Adversary {
            for (r, l) in traj.records.iter_mut().zip(&labels) {
                r.adversary_reward = *l;
            }
        }
        buffer.push(traj);
        let update = (ep + 1) % cfg.train_interval == 0;
        let step = labeler.after_episode(&buffer, update).and_then(|_| {
            if update && buffer.len() >= learner.config().batch_size {
                learner
                    .learner_step(&buffer, &mut sample_rng, |e| labeler.rewards(e))
                    .map(Some)
            } else {
                Ok(None)
            }
        });
        match step {
            Ok(Some(stats)) => {
                acc.loss_sum += stats.loss;
                acc.loss_count += 1;
            }
            Ok(None) => {}
            Err(e @ Error::TrainingFault { .. }) => {
                let mut ck = learner_checkpoint(learner);
                labeler.write_to(&mut ck);
                log.checkpoint(&ck, "fault")?;
                return Err(e);
            }
            Err(e) => return Err(e),
        }
        let done = ep + 1;
        if done == phase.episodes || (cfg.eval_interval > 0 && done % cfg.eval_interval == 0) {
            let win = acc.emit(phase, learner, done, epsilon, log)?;
            consider(&mut best, phase.keep_best, learner, done, win)?;
        }
    }
    Ok(best)
}

fn party_layout<E: Environment>(
    env: &E,
    party: PartyId,
    count: usize,
) -> (Vec<AgentId>, Vec<usize>) {
    let desc = env.descriptor();
    let slots: Vec<usize> = desc.party_slots(party).into_iter().take(count).collect();
    let agents = slots.iter().map(|&s| desc.actors[s]).collect();
    (agents, slots)
}

fn new_learner<E: Environment>(
    env: &E,
    party: PartyId,
    count: usize,
    cfg: &TrainingConfig,
    phase_seed: u64,
) -> Result<QmixLearner> {
    let desc = env.descriptor();
    let role = desc.role(party);
    let (agents, slots) = party_layout(env, party, count);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(phase_seed, streams::INIT, 0));
    QmixLearner::new(
        cfg.qmix.clone(),
        agents,
        slots,
        role.obs_dim,
        role.actions.len(),
        desc.state_dim,
        &mut rng,
    )
}

/// Result of victim training.
#[derive(Clone, Debug)]
pub struct VictimTraining {
    pub policy: FrozenPolicy,
    /// Greedy victims against random neutrals.
    pub no_attack: WinRate,
    /// Training episode of the frozen snapshot.
    pub selected_episode: usize,
}

/// Trains the victim party on its own task reward with every neutral unit
/// acting uniformly at random, then freezes it.
///
/// Curve points of this phase are measured on a selection seed stream
/// disjoint from the evaluation stream. With `victim_keep_best` the frozen
/// policy is the best curve point (latest on ties) rather than the last
/// one; the reported no-attack rate is always measured on the evaluation
/// stream.
///
/// Fails with [`Error::TrainingFailed`] when the final no-attack win rate
/// over `eval_episodes` episodes is below the competence floor.
pub fn train_victims<E: Environment>(
    env: &E,
    cfg: &TrainingConfig,
    log: &mut RunLog,
) -> Result<VictimTraining> {
    cfg.validate()?;
    let phase_seed = derive_seed(cfg.seed, VICTIM_PHASE, 0);
    let n = env.descriptor().party_size(PartyId::Victim);
    let mut learner = new_learner(env, PartyId::Victim, n, cfg, phase_seed)?;
    let selection_seed = derive_seed(cfg.seed, SELECTION, 0);
    let evaluate_fn = |l: &QmixLearner| {
        evaluate(
            env,
            &Control::Random,
            &Control::Learner {
                learner: l,
                epsilon: 0.0,
            },
            selection_seed,
            cfg.eval_episodes,
            cfg.workers,
        )
    };
    let phase = Phase {
        env,
        other: Control::Random,
        episodes: cfg.victim_episodes,
        schedule: cfg.schedule(cfg.victim_episodes),
        seed: phase_seed,
        evaluate: &evaluate_fn,
        audit: &|| Ok(()),
        keep_best: cfg.victim_keep_best,
    };
    let (policy, selected_episode) =
        match run_phase(&phase, &mut learner, &mut Labeler::Native, cfg, log)? {
            Some(best) => (best.policy, best.episode),
            None => (FrozenPolicy::freeze(&learner)?, cfg.victim_episodes),
        };
    let no_attack = evaluate(
        env,
        &Control::Random,
        &Control::Frozen(&policy),
        cfg.seed,
        cfg.eval_episodes,
        cfg.workers,
    )?;
    let mut ck = Checkpoint::new();
    policy.write_to(&mut ck, "victims");
    log.checkpoint(&ck, "final")?;
    if no_attack.rate() < cfg.competence_floor {
        return Err(Error::TrainingFailed(format!(
            "victim no-attack win rate {:.3} after {} episodes is below the competence floor {}",
            no_attack.rate(),
            cfg.victim_episodes,
            cfg.competence_floor
        )));
    }
    Ok(VictimTraining {
        policy,
        no_attack,
        selected_episode,
    })
}

/// Result of adversarial training.
#[derive(Clone, Debug)]
pub struct AdversaryTraining {
    pub policy: FrozenPolicy,
    /// Learned reward model, in estimation mode.
    pub reward_model: Option<RewardModel>,
    /// Frozen victims against the greedy trained adversaries.
    pub under_attack: WinRate,
}

/// Number of adversaries the attack phase trains.
pub fn attack_size<E: Environment>(env: &E, cfg: &TrainingConfig) -> Result<usize> {
    let slots = env.descriptor().party_size(PartyId::Adversary);
    let n = cfg.adversaries.unwrap_or(slots);
    if n == 0 || n > slots {
        return Err(Error::Config(format!(
            "adversary.count must lie in 1..={slots} for {}, got {n}",
            env.descriptor().name
        )));
    }
    Ok(n)
}

fn build_labeler<E: Environment>(
    env: &E,
    cfg: &TrainingConfig,
    slots: &[usize],
    phase_seed: u64,
) -> Result<Labeler> {
    let r = &cfg.reward;
    if r.mode.needs_oracle_access() && !r.oracle_access {
        return Err(Error::Mode(format!(
            "reward mode `{}` needs simulator access, which a deployed attacker lacks",
            r.mode.as_str()
        )));
    }
    let desc = env.descriptor();
    let weights = WeightVector::new(
        r.weights
            .clone()
            .unwrap_or_else(|| desc.default_weights.clone()),
    )?;
    if weights.len() != desc.failure_paths.len() {
        return Err(Error::Config(format!(
            "{} weights for {} failure paths",
            weights.len(),
            desc.failure_paths.len()
        )));
    }
    Ok(match r.mode {
        RewardMode::Traditional => Labeler::Traditional,
        RewardMode::RuleBasedImmediate => Labeler::RuleImmediate {
            calc: RuleBasedCalculator::baseline(weights, r.r_fail),
        },
        RewardMode::EstimationBased => {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(phase_seed, streams::REWARD_MODEL, 0));
            let config = RewardModelConfig {
                input: desc.adversary.obs_dim * slots.len(),
                hidden: r.hidden,
            };
            Labeler::Estimation(Box::new(Estimation {
                model: RewardModel::new(&config, &mut rng),
                optimizer: Adam::new(r.lr),
                slots: slots.to_vec(),
                r_fail: r.r_fail,
                clip: r.clip,
                warmup: r.warmup,
                batch: r.batch,
                episodes_seen: 0,
                rng,
            }))
        }
    })
}

/// Trains `adversary.count` neutral units against frozen victims.
///
/// The victims enter only as an action function; their parameters are
/// never visible here, and their checksum is audited at every evaluation.
pub fn train_adversaries<E: Environment>(
    env: &E,
    victims: &FrozenPolicy,
    cfg: &TrainingConfig,
    log: &mut RunLog,
) -> Result<AdversaryTraining> {
    cfg.validate()?;
    if victims.party() != PartyId::Victim {
        return Err(Error::Contract(
            "train_adversaries needs a frozen victim policy".into(),
        ));
    }
    let n = attack_size(env, cfg)?;
    let env = env.with_deployed_adversaries(n);
    let phase_seed = derive_seed(cfg.seed, ADVERSARY_PHASE, 0);
    let mut learner = new_learner(&env, PartyId::Adversary, n, cfg, phase_seed)?;
    let mut labeler = build_labeler(&env, cfg, learner.slots(), phase_seed)?;
    let frozen = Control::Frozen(victims);
    let evaluate_fn = |l: &QmixLearner| {
        evaluate(
            &env,
            &Control::Learner {
                learner: l,
                epsilon: 0.0,
            },
            &frozen,
            cfg.seed,
            cfg.eval_episodes,
            cfg.workers,
        )
    };
    let audit = || victims.audit();
    let phase = Phase {
        env: &env,
        other: frozen,
        episodes: cfg.adversary_episodes,
        schedule: cfg.schedule(cfg.adversary_episodes),
        seed: phase_seed,
        evaluate: &evaluate_fn,
        audit: &audit,
        keep_best: false,
    };
    run_phase(&phase, &mut learner, &mut labeler, cfg, log)?;
    let policy = FrozenPolicy::freeze(&learner)?;
    let under_attack = evaluate(
        &env,
        &Control::Frozen(&policy),
        &frozen,
        cfg.seed,
        cfg.eval_episodes,
        cfg.workers,
    )?;
    let reward_model = labeler.into_model();
    let mut ck = Checkpoint::new();
    policy.write_to(&mut ck, "adversaries");
    if let Some(m) = &reward_model {
        m.write_to(&mut ck);
    }
    log.checkpoint(&ck, "final")?;
    Ok(AdversaryTraining {
        policy,
        reward_model,
        under_attack,
    })
}

/// Win rates of the original and the retrained victims.
#[derive(Clone, Debug)]
pub struct DefenseReport {
    pub policy: FrozenPolicy,
    pub before_under_attack: WinRate,
    pub before_no_attack: WinRate,
    pub after_under_attack: WinRate,
    pub after_no_attack: WinRate,
}

/// Trains a fresh victim party against frozen adversaries.
///
/// "Under attack" deploys exactly the frozen adversaries; "no attack" is
/// the victim-training condition (every neutral slot acting at random).
/// With an empty adversary policy this is ordinary victim training in an
/// environment without neutral units.
pub fn retrain_victims_defense<E: Environment>(
    env: &E,
    original: &FrozenPolicy,
    adversaries: &FrozenPolicy,
    cfg: &TrainingConfig,
    log: &mut RunLog,
) -> Result<DefenseReport> {
    cfg.validate()?;
    if original.party() != PartyId::Victim || adversaries.party() != PartyId::Adversary {
        return Err(Error::Contract(
            "defense retraining needs frozen victims and frozen adversaries".into(),
        ));
    }
    let attack_env = env.with_deployed_adversaries(adversaries.len());
    let phase_seed = derive_seed(cfg.seed, RETRAIN_PHASE, 0);
    let n = env.descriptor().party_size(PartyId::Victim);
    let mut learner = new_learner(&attack_env, PartyId::Victim, n, cfg, phase_seed)?;
    if cfg.retrain_warm_start {
        if learner.agents() != original.agents() {
            return Err(Error::Contract(
                "original victims do not match the retrained party".into(),
            ));
        }
        for (dst, src) in learner.nets_mut().iter_mut().zip(original.nets()) {
            if dst.net.sizes() != src.net.sizes() || dst.frame_stack() != src.frame_stack() {
                return Err(Error::Config(
                    "warm start needs the original network shapes".into(),
                ));
            }
            dst.net.copy_values_from(&src.net);
        }
        learner.sync_targets();
    }
    let attack = Control::Frozen(adversaries);
    let evaluate_fn = |l: &QmixLearner| {
        evaluate(
            &attack_env,
            &attack,
            &Control::Learner {
                learner: l,
                epsilon: 0.0,
            },
            cfg.seed,
            cfg.eval_episodes,
            cfg.workers,
        )
    };
    let audit = || adversaries.audit();
    let phase = Phase {
        env: &attack_env,
        other: attack,
        episodes: cfg.retrain_episodes,
        schedule: EpsilonSchedule {
            start: cfg.retrain_epsilon_start,
            ..cfg.schedule(cfg.retrain_episodes)
        },
        seed: phase_seed,
        evaluate: &evaluate_fn,
        audit: &audit,
        keep_best: false,
    };
    let win = |env: &E, adv: &Control, vic: &FrozenPolicy| {
        evaluate(
            env,
            adv,
            &Control::Frozen(vic),
            cfg.seed,
            cfg.eval_episodes,
            cfg.workers,
        )
    };
    let before_under_attack = win(&attack_env, &attack, original)?;
    let before_no_attack = win(env, &Control::Random, original)?;
    run_phase(&phase, &mut learner, &mut Labeler::Native, cfg, log)?;
    adversaries.audit()?;
    let policy = FrozenPolicy::freeze(&learner)?;
    let after_under_attack = win(&attack_env, &attack, &policy)?;
    let after_no_attack = win(env, &Control::Random, &policy)?;
    let mut ck = Checkpoint::new();
    policy.write_to(&mut ck, "victims");
    log.checkpoint(&ck, "final")?;
    Ok(DefenseReport {
        policy,
        before_under_attack,
        before_no_attack,
        after_under_attack,
        after_no_attack,
    })
}
