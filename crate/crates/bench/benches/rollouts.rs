use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use nalab::envs::{CorridorConfig, CorridorEnv, Environment, SkirmishConfig, SkirmishEnv};
use nalab::mdp::JointAction;
use nalab::training::{evaluate, Control};

fn random_episode<E: Environment>(env: &E, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = env.reset(seed);
    let actors = env.descriptor().actors.clone();
    loop {
        let mut action = JointAction::new();
        for &agent in &actors {
            let avail = env.available_actions(&state, agent).unwrap();
            let legal: Vec<usize> = (0..avail.len()).filter(|a| avail[*a]).collect();
            action.set(agent, legal[rng.random_range(0..legal.len())]);
        }
        let (next, outcome) = env.step(&state, &action).unwrap();
        if outcome.terminal {
            return env.step_count(&next);
        }
        state = next;
    }
}

fn env_steps(c: &mut Criterion) {
    let skirmish = SkirmishEnv::new(SkirmishConfig::small()).unwrap();
    let corridor = CorridorEnv::new(CorridorConfig::preset("corridor-highway").unwrap()).unwrap();
    c.bench_function("skirmish-small/random_episode", |b| {
        b.iter(|| random_episode(&skirmish, black_box(7)))
    });
    c.bench_function("corridor-highway/random_episode", |b| {
        b.iter(|| random_episode(&corridor, black_box(7)))
    });
}

fn evaluation(c: &mut Criterion) {
    let env = SkirmishEnv::new(SkirmishConfig::small()).unwrap();
    c.bench_function("skirmish-small/evaluate_20_random", |b| {
        b.iter(|| {
            evaluate(
                &env,
                &Control::Random,
                &Control::Random,
                black_box(3),
                20,
                1,
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, env_steps, evaluation);
criterion_main!(benches);
