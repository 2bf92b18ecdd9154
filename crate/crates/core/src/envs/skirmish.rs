//! Squad skirmish on a small grid with walls.
//!
//! Victims must destroy every opponent before the horizon. Opponents are a
//! fixed script: attack the nearest victim in range, otherwise step toward
//! the nearest victim they can see, otherwise hold. Neutral (adversary-party)
//! units share the grid; they block cells and, when `lane_blocking` is on,
//! the straight-line lanes that attacks travel through.
//!
//! Resolution order within one tick:
//! 1. every unit's intent is read from the pre-move state (scripts included);
//! 2. moves are applied sequentially in `AgentId` order, a move into an
//!    occupied cell, a wall or off-grid is cancelled;
//! 3. attacks resolve simultaneously against post-move positions;
//! 4. units at zero health are removed.

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    centered, parse_bool, EnvDescriptor, Environment, FailurePathDescriptor, RoleDescriptor,
};
use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::mdp::{AgentId, JointAction, Observation, PartyId, StepOutcome};
use crate::reward::FailureSignalVector;

pub const NOOP: usize = 0;
const MOVES: [(i32, i32); 4] = [(0, -1), (0, 1), (1, 0), (-1, 0)];
const MOVE_NAMES: [&str; 4] = ["north", "south", "east", "west"];
const FIRST_ATTACK: usize = 5;

/// Inclusive rectangle of grid cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Region {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl Region {
    pub const fn new(x0: usize, x1: usize, y0: usize, y1: usize) -> Self {
        Self { x0, x1, y0, y1 }
    }

    fn cells(&self) -> impl Iterator<Item = (i32, i32)> + '_ {
        (self.y0..=self.y1)
            .flat_map(move |y| (self.x0..=self.x1).map(move |x| (x as i32, y as i32)))
    }

    /// Parses `x0..x1,y0..y1`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad region `{s}`, expected x0..x1,y0..y1"));
        let (xs, ys) = s.split_once(',').ok_or_else(bad)?;
        let range = |r: &str| -> Result<(usize, usize)> {
            let (a, b) = r.trim().split_once("..").ok_or_else(bad)?;
            Ok((
                a.trim().parse().map_err(|_| bad())?,
                b.trim().parse().map_err(|_| bad())?,
            ))
        };
        let (x0, x1) = range(xs)?;
        let (y0, y1) = range(ys)?;
        Ok(Self { x0, x1, y0, y1 })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkirmishConfig {
    pub name: String,
    pub grid_size: (usize, usize),
    pub victim_count: usize,
    pub opponent_count: usize,
    /// Neutral unit slots. Learned adversaries take the lowest slots.
    pub adversary_count: usize,
    /// How many neutral slots are actually spawned (the rest are absent).
    pub deployed_adversaries: usize,
    pub unit_health: u32,
    pub attack_range: usize,
    pub attack_damage: u32,
    pub horizon: usize,
    pub sensing_radius: usize,
    pub walls: Vec<(usize, usize)>,
    pub victim_spawn: Region,
    pub opponent_spawn: Region,
    pub adversary_spawn: Region,
    pub adversaries_attack_opponents: bool,
    pub lane_blocking: bool,
    pub weights: Vec<f64>,
}

impl Default for SkirmishConfig {
    fn default() -> Self {
        Self::small()
    }
}

impl SkirmishConfig {
    /// Two victims against one opponent behind a ridge with two passes.
    pub fn small() -> Self {
        Self {
            name: "skirmish-small".into(),
            grid_size: (9, 5),
            victim_count: 2,
            opponent_count: 1,
            adversary_count: 3,
            deployed_adversaries: 3,
            unit_health: 3,
            attack_range: 2,
            attack_damage: 1,
            horizon: 60,
            sensing_radius: 3,
            walls: vec![(4, 1), (4, 2), (4, 3)],
            victim_spawn: Region::new(0, 1, 0, 1),
            opponent_spawn: Region::new(7, 8, 0, 1),
            adversary_spawn: Region::new(5, 6, 0, 2),
            adversaries_attack_opponents: false,
            lane_blocking: true,
            weights: vec![0.7, 0.3],
        }
    }

    /// Equal squads.
    pub fn even() -> Self {
        Self {
            name: "skirmish-even".into(),
            opponent_count: 2,
            opponent_spawn: Region::new(7, 8, 0, 2),
            ..Self::small()
        }
    }

    /// Victims outnumbered.
    pub fn hard() -> Self {
        Self {
            name: "skirmish-hard".into(),
            opponent_count: 3,
            opponent_spawn: Region::new(7, 8, 0, 2),
            ..Self::small()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "skirmish-small" | "skirmish" => Ok(Self::small()),
            "skirmish-even" => Ok(Self::even()),
            "skirmish-hard" => Ok(Self::hard()),
            other => Err(Error::Config(format!("unknown skirmish preset `{other}`"))),
        }
    }

    pub fn apply_kv(&mut self, kv: &KvConfig) -> Result<()> {
        let mut deployed_set = false;
        for (key, value) in kv.section("env.") {
            let num = || -> Result<usize> {
                value.parse().map_err(|_| {
                    Error::Config(format!("`env.{key}`: expected an integer, got `{value}`"))
                })
            };
            match key {
                "grid_width" => self.grid_size.0 = num()?,
                "grid_height" => self.grid_size.1 = num()?,
                "victim_count" => self.victim_count = num()?,
                "opponent_count" => self.opponent_count = num()?,
                "adversary_count" => self.adversary_count = num()?,
                "deployed_adversaries" => {
                    self.deployed_adversaries = num()?;
                    deployed_set = true;
                }
                "unit_health" => self.unit_health = num()? as u32,
                "attack_range" => self.attack_range = num()?,
                "attack_damage" => self.attack_damage = num()? as u32,
                "horizon" => self.horizon = num()?,
                "sensing_radius" => self.sensing_radius = num()?,
                "walls" => self.walls = parse_cells(value)?,
                "victim_spawn" => self.victim_spawn = Region::parse(value)?,
                "opponent_spawn" => self.opponent_spawn = Region::parse(value)?,
                "adversary_spawn" => self.adversary_spawn = Region::parse(value)?,
                "adversaries_attack_opponents" => {
                    self.adversaries_attack_opponents = parse_bool(key, value)?
                }
                "lane_blocking" => self.lane_blocking = parse_bool(key, value)?,
                "weights" => self.weights = crate::config::parse_f64_list(value)?,
                _ => {}
            }
        }
        if !deployed_set {
            self.deployed_adversaries = self.adversary_count;
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let (w, h) = self.grid_size;
        let err = |m: String| Err(Error::Config(format!("{}: {m}", self.name)));
        if w == 0 || h == 0 {
            return err("grid must be non-empty".into());
        }
        if self.victim_count == 0 {
            return err("victim_count must be positive".into());
        }
        if self.opponent_count == 0 {
            return err("opponent_count must be positive".into());
        }
        if self.unit_health == 0 || self.attack_damage == 0 || self.attack_range == 0 {
            return err("unit_health, attack_damage and attack_range must be positive".into());
        }
        if self.horizon == 0 {
            return err("horizon must be positive".into());
        }
        if self.deployed_adversaries > self.adversary_count {
            return err("deployed_adversaries exceeds adversary_count".into());
        }
        if self.weights.len() != 2 {
            return err(format!(
                "expected 2 failure-path weights, got {}",
                self.weights.len()
            ));
        }
        for &(x, y) in &self.walls {
            if x >= w || y >= h {
                return err(format!("wall ({x},{y}) outside grid"));
            }
        }
        let total = self.victim_count + self.opponent_count + self.adversary_count;
        if total + self.walls.len() > w * h {
            return err(format!("{total} units do not fit a {w}x{h} grid"));
        }
        for (label, region, count) in [
            ("victim", self.victim_spawn, self.victim_count),
            ("opponent", self.opponent_spawn, self.opponent_count),
            ("adversary", self.adversary_spawn, self.adversary_count),
        ] {
            if region.x1 >= w || region.y1 >= h || region.x0 > region.x1 || region.y0 > region.y1 {
                return err(format!("{label} spawn region outside grid"));
            }
            let free = region.cells().filter(|c| !self.is_wall(*c)).count();
            if free < count {
                return err(format!(
                    "{label} spawn region holds {free} cells for {count} units"
                ));
            }
        }
        let overlap =
            |a: Region, b: Region| a.x0 <= b.x1 && b.x0 <= a.x1 && a.y0 <= b.y1 && b.y0 <= a.y1;
        if overlap(self.victim_spawn, self.opponent_spawn)
            || (self.adversary_count > 0
                && (overlap(self.victim_spawn, self.adversary_spawn)
                    || overlap(self.opponent_spawn, self.adversary_spawn)))
        {
            return err("spawn regions must be disjoint".into());
        }
        Ok(())
    }

    fn is_wall(&self, (x, y): (i32, i32)) -> bool {
        self.walls
            .iter()
            .any(|&(wx, wy)| wx as i32 == x && wy as i32 == y)
    }
}

fn parse_cells(s: &str) -> Result<Vec<(usize, usize)>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|c| {
            let (x, y) = c
                .split_once(',')
                .ok_or_else(|| Error::Config(format!("bad cell `{c}`, expected x,y")))?;
            let p = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad cell `{c}`")))
            };
            Ok((p(x)?, p(y)?))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Unit {
    pub agent: AgentId,
    pub pos: (i32, i32),
    pub health: i32,
    pub alive: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkirmishState {
    /// All units sorted by `AgentId`.
    pub units: Vec<Unit>,
    pub step_count: usize,
    pub rng_state: u64,
    pub terminal: bool,
}

impl SkirmishState {
    fn party_health(&self, party: PartyId) -> i32 {
        self.units
            .iter()
            .filter(|u| u.agent.party == party)
            .map(|u| u.health.max(0))
            .sum()
    }

    fn any_alive(&self, party: PartyId) -> bool {
        self.units.iter().any(|u| u.agent.party == party && u.alive)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Intent {
    Hold,
    Move(usize),
    Attack(usize),
}

#[derive(Clone, Debug)]
pub struct SkirmishEnv {
    config: SkirmishConfig,
    descriptor: EnvDescriptor,
    wall_grid: Vec<bool>,
}

impl SkirmishEnv {
    pub fn new(config: SkirmishConfig) -> Result<Self> {
        config.validate()?;
        let (w, h) = config.grid_size;
        let mut wall_grid = vec![false; w * h];
        for &(x, y) in &config.walls {
            wall_grid[y * w + x] = true;
        }
        let descriptor = Self::build_descriptor(&config);
        Ok(Self {
            config,
            descriptor,
            wall_grid,
        })
    }

    pub fn config(&self) -> &SkirmishConfig {
        &self.config
    }

    fn build_descriptor(c: &SkirmishConfig) -> EnvDescriptor {
        let mut agents = Vec::new();
        agents.extend((0..c.adversary_count).map(AgentId::adversary));
        agents.extend((0..c.victim_count).map(AgentId::victim));
        agents.extend((0..c.opponent_count).map(AgentId::third));
        let actors: Vec<AgentId> = agents
            .iter()
            .copied()
            .filter(|a| a.party != PartyId::Third)
            .collect();

        let mut features: Vec<String> = ["self.x", "self.y", "self.health", "time"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let n_units = agents.len();
        for k in 0..n_units - 1 {
            for f in ["visible", "dx", "dy", "health"] {
                features.push(format!("other{k}.{f}"));
            }
        }
        let moves = || {
            std::iter::once("no-op".to_string())
                .chain(MOVE_NAMES.iter().map(|s| s.to_string()))
                .collect::<Vec<_>>()
        };
        let mut victim_actions = moves();
        victim_actions.extend((0..c.opponent_count).map(|k| format!("attack-opponent-{k}")));
        let mut adversary_actions = moves();
        adversary_actions.extend((0..c.opponent_count).map(|k| format!("attack-opponent-{k}")));
        adversary_actions.extend((0..c.victim_count).map(|k| format!("attack-victim-{k}")));

        EnvDescriptor {
            name: c.name.clone(),
            horizon: c.horizon,
            agents,
            actors,
            adversary: RoleDescriptor {
                obs_dim: features.len(),
                features: features.clone(),
                actions: adversary_actions,
            },
            victim: RoleDescriptor {
                obs_dim: features.len(),
                features,
                actions: victim_actions,
            },
            failure_paths: vec![
                FailurePathDescriptor {
                    id: 0,
                    name: "victim-damage".into(),
                    description: "victim party health lost this step, over total victim health"
                        .into(),
                },
                FailurePathDescriptor {
                    id: 1,
                    name: "task-delay".into(),
                    description: "1/horizon for every step the opponent party survives".into(),
                },
            ],
            default_weights: c.weights.clone(),
            state_dim: 4 * n_units + 1,
        }
    }

    fn unit_index(&self, agent: AgentId) -> Result<usize> {
        let c = &self.config;
        let (base, count) = match agent.party {
            PartyId::Adversary => (0, c.adversary_count),
            PartyId::Victim => (c.adversary_count, c.victim_count),
            PartyId::Third => (c.adversary_count + c.victim_count, c.opponent_count),
        };
        if agent.index >= count {
            return Err(Error::Lookup(format!("no agent {agent} in {}", c.name)));
        }
        Ok(base + agent.index)
    }

    fn in_grid(&self, (x, y): (i32, i32)) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.config.grid_size.0
            && (y as usize) < self.config.grid_size.1
    }

    fn is_wall(&self, (x, y): (i32, i32)) -> bool {
        self.wall_grid[y as usize * self.config.grid_size.0 + x as usize]
    }

    fn passable(&self, cell: (i32, i32)) -> bool {
        self.in_grid(cell) && !self.is_wall(cell)
    }

    fn chebyshev(a: (i32, i32), b: (i32, i32)) -> i32 {
        (a.0 - b.0).abs().max((a.1 - b.1).abs())
    }

    /// True if a live adversary-party unit stands strictly between `a` and `b`.
    fn lane_blocked(&self, units: &[Unit], a: (i32, i32), b: (i32, i32)) -> bool {
        if !self.config.lane_blocking {
            return false;
        }
        let d = Self::chebyshev(a, b);
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        (1..d).any(|k| {
            let cell = (
                a.0 + (dx as f64 * k as f64 / d as f64).round() as i32,
                a.1 + (dy as f64 * k as f64 / d as f64).round() as i32,
            );
            units[..self.config.adversary_count]
                .iter()
                .any(|u| u.alive && u.pos == cell)
        })
    }

    fn can_hit(&self, units: &[Unit], attacker: usize, target: usize) -> bool {
        let (a, t) = (&units[attacker], &units[target]);
        a.alive
            && t.alive
            && Self::chebyshev(a.pos, t.pos) <= self.config.attack_range as i32
            && !self.lane_blocked(units, a.pos, t.pos)
    }

    fn opponent_base(&self) -> usize {
        self.config.adversary_count + self.config.victim_count
    }

    fn victim_base(&self) -> usize {
        self.config.adversary_count
    }

    fn mask_for(&self, state: &SkirmishState, unit: usize) -> Vec<bool> {
        let c = &self.config;
        let u = &state.units[unit];
        let n = self.descriptor.role(u.agent.party).actions.len();
        let mut mask = vec![false; n];
        mask[NOOP] = true;
        if !u.alive || state.terminal {
            return mask;
        }
        for (k, (dx, dy)) in MOVES.iter().enumerate() {
            mask[1 + k] = self.passable((u.pos.0 + dx, u.pos.1 + dy));
        }
        let may_attack_opponents = match u.agent.party {
            PartyId::Victim => true,
            PartyId::Adversary => c.adversaries_attack_opponents,
            PartyId::Third => false,
        };
        if may_attack_opponents {
            for k in 0..c.opponent_count {
                mask[FIRST_ATTACK + k] = self.can_hit(&state.units, unit, self.opponent_base() + k);
            }
        }
        // Adversary attack-victim actions exist in the table but are never available.
        mask
    }

    fn opponent_intent(&self, state: &SkirmishState, unit: usize) -> Intent {
        let u = &state.units[unit];
        if !u.alive {
            return Intent::Hold;
        }
        let victims = self.victim_base()..self.victim_base() + self.config.victim_count;
        let nearest = |filter: &dyn Fn(usize) -> bool| {
            victims
                .clone()
                .filter(|&v| state.units[v].alive && filter(v))
                .min_by_key(|&v| (Self::chebyshev(u.pos, state.units[v].pos), v))
        };
        if let Some(v) = nearest(&|v| self.can_hit(&state.units, unit, v)) {
            return Intent::Attack(v);
        }
        let radius = self.config.sensing_radius as i32;
        if let Some(v) = nearest(&|v| Self::chebyshev(u.pos, state.units[v].pos) <= radius) {
            let target = state.units[v].pos;
            let manhattan = |p: (i32, i32)| (p.0 - target.0).abs() + (p.1 - target.1).abs();
            let here = manhattan(u.pos);
            let best = MOVES
                .iter()
                .enumerate()
                .map(|(k, (dx, dy))| (k, (u.pos.0 + dx, u.pos.1 + dy)))
                .filter(|(_, p)| self.passable(*p))
                .map(|(k, p)| (manhattan(p), k))
                .min();
            if let Some((d, k)) = best {
                if d < here {
                    return Intent::Move(k);
                }
            }
        }
        Intent::Hold
    }

    fn agent_intent(&self, unit: &Unit, action: usize) -> Intent {
        match action {
            NOOP => Intent::Hold,
            1..=4 => Intent::Move(action - 1),
            a if a < FIRST_ATTACK + self.config.opponent_count => {
                Intent::Attack(self.opponent_base() + (a - FIRST_ATTACK))
            }
            a => {
                debug_assert_eq!(unit.agent.party, PartyId::Adversary);
                Intent::Attack(self.victim_base() + (a - FIRST_ATTACK - self.config.opponent_count))
            }
        }
    }

    fn outcome(&self, prev: &SkirmishState, next: &SkirmishState) -> StepOutcome {
        let opponents_alive = next.any_alive(PartyId::Third);
        let victims_alive = next.any_alive(PartyId::Victim);
        let success = !opponents_alive && victims_alive;
        let failed = !success && (!victims_alive || next.step_count >= self.config.horizon);
        StepOutcome {
            terminal: success || failed,
            victim_success: success,
            victim_failed: failed,
            failure_signals: self.signals(prev, next),
        }
    }

    fn signals(&self, prev: &SkirmishState, next: &SkirmishState) -> FailureSignalVector {
        let total = (self.config.victim_count as u32 * self.config.unit_health) as f64;
        let lost =
            (prev.party_health(PartyId::Victim) - next.party_health(PartyId::Victim)).max(0) as f64;
        let delay = if next.any_alive(PartyId::Third) {
            1.0 / self.config.horizon as f64
        } else {
            0.0
        };
        FailureSignalVector::new(vec![lost / total, delay])
    }
}

impl Environment for SkirmishEnv {
    type State = SkirmishState;

    fn descriptor(&self) -> &EnvDescriptor {
        &self.descriptor
    }

    fn reset(&self, seed: u64) -> SkirmishState {
        let c = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |region: Region, n: usize| -> Vec<(i32, i32)> {
            let mut cells: Vec<_> = region.cells().filter(|p| !self.is_wall(*p)).collect();
            cells.shuffle(&mut rng);
            cells.truncate(n);
            cells
        };
        let adv = draw(c.adversary_spawn, c.adversary_count);
        let vic = draw(c.victim_spawn, c.victim_count);
        let opp = draw(c.opponent_spawn, c.opponent_count);
        let health = c.unit_health as i32;
        let mut units = Vec::with_capacity(self.descriptor.agents.len());
        for (k, pos) in adv.into_iter().enumerate() {
            let deployed = k < c.deployed_adversaries;
            units.push(Unit {
                agent: AgentId::adversary(k),
                pos: if deployed { pos } else { (-1, -1) },
                health: if deployed { health } else { 0 },
                alive: deployed,
            });
        }
        for (k, pos) in vic.into_iter().enumerate() {
            units.push(Unit {
                agent: AgentId::victim(k),
                pos,
                health,
                alive: true,
            });
        }
        for (k, pos) in opp.into_iter().enumerate() {
            units.push(Unit {
                agent: AgentId::third(k),
                pos,
                health,
                alive: true,
            });
        }
        SkirmishState {
            units,
            step_count: 0,
            rng_state: rng.next_u64(),
            terminal: false,
        }
    }

    fn step(
        &self,
        state: &SkirmishState,
        action: &JointAction,
    ) -> Result<(SkirmishState, StepOutcome)> {
        if state.terminal {
            return Err(Error::Lifecycle(
                "step called on a terminal skirmish state".into(),
            ));
        }
        let n = state.units.len();
        let mut intents = vec![Intent::Hold; n];
        for (i, unit) in state.units.iter().enumerate() {
            if unit.agent.party == PartyId::Third {
                intents[i] = self.opponent_intent(state, i);
                continue;
            }
            let a = action
                .get(unit.agent)
                .ok_or_else(|| Error::Contract(format!("no action given for {}", unit.agent)))?;
            let mask = self.mask_for(state, i);
            if a >= mask.len() || !mask[a] {
                return Err(Error::Contract(format!(
                    "action {a} unavailable for {}",
                    unit.agent
                )));
            }
            intents[i] = self.agent_intent(unit, a);
        }

        let mut next = state.clone();
        let (w, h) = self.config.grid_size;
        let mut occupied = vec![false; w * h];
        let idx = |p: (i32, i32)| p.1 as usize * w + p.0 as usize;
        for u in next.units.iter().filter(|u| u.alive) {
            occupied[idx(u.pos)] = true;
        }
        for i in 0..n {
            if let Intent::Move(k) = intents[i] {
                let u = &mut next.units[i];
                if !u.alive {
                    continue;
                }
                let target = (u.pos.0 + MOVES[k].0, u.pos.1 + MOVES[k].1);
                if self.passable(target) && !occupied[idx(target)] {
                    occupied[idx(u.pos)] = false;
                    occupied[idx(target)] = true;
                    u.pos = target;
                }
            }
        }

        let mut damage = vec![0i32; n];
        for i in 0..n {
            if let Intent::Attack(t) = intents[i] {
                if self.can_hit(&next.units, i, t) {
                    damage[t] += self.config.attack_damage as i32;
                }
            }
        }
        for (u, d) in next.units.iter_mut().zip(damage) {
            if d > 0 {
                u.health = (u.health - d).max(0);
                if u.health == 0 {
                    u.alive = false;
                }
            }
        }
        next.step_count += 1;
        let outcome = self.outcome(state, &next);
        next.terminal = outcome.terminal;
        Ok((next, outcome))
    }

    fn observe(&self, state: &SkirmishState, agent: AgentId) -> Result<Observation> {
        let me = self.unit_index(agent)?;
        let c = &self.config;
        let dim = self.descriptor.role(agent.party).obs_dim;
        let mut v = vec![0.0; dim];
        let u = &state.units[me];
        if !u.alive {
            return Ok(Observation::new(v));
        }
        let (w, h) = c.grid_size;
        let hmax = c.unit_health as f64;
        v[0] = centered(u.pos.0 as f64, (w - 1) as f64);
        v[1] = centered(u.pos.1 as f64, (h - 1) as f64);
        v[2] = u.health as f64 / hmax;
        v[3] = state.step_count as f64 / c.horizon as f64;
        let r = c.sensing_radius as i32;
        let others = state
            .units
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != me)
            .map(|(_, o)| o);
        for (slot, other) in others.enumerate() {
            if !other.alive || Self::chebyshev(u.pos, other.pos) > r {
                continue;
            }
            let base = 4 + 4 * slot;
            v[base] = 1.0;
            v[base + 1] = (other.pos.0 - u.pos.0) as f64 / r as f64;
            v[base + 2] = (other.pos.1 - u.pos.1) as f64 / r as f64;
            v[base + 3] = other.health as f64 / hmax;
        }
        Ok(Observation::new(v))
    }

    fn available_actions(&self, state: &SkirmishState, agent: AgentId) -> Result<Vec<bool>> {
        if agent.party == PartyId::Third {
            return Err(Error::Lookup(format!(
                "{agent} is scripted and has no action mask"
            )));
        }
        let i = self.unit_index(agent)?;
        Ok(self.mask_for(state, i))
    }

    fn failure_signals(
        &self,
        prev: &SkirmishState,
        _action: &JointAction,
        next: &SkirmishState,
    ) -> Result<FailureSignalVector> {
        if next.step_count != prev.step_count + 1 || next.units.len() != prev.units.len() {
            return Err(Error::Contract(format!(
                "states at steps {} and {} are not a transition",
                prev.step_count, next.step_count
            )));
        }
        Ok(self.signals(prev, next))
    }

    fn native_reward(
        &self,
        prev: &SkirmishState,
        next: &SkirmishState,
        outcome: &StepOutcome,
    ) -> f64 {
        let total = (self.config.opponent_count as u32 * self.config.unit_health) as f64;
        let dealt =
            (prev.party_health(PartyId::Third) - next.party_health(PartyId::Third)).max(0) as f64;
        dealt / total + if outcome.victim_success { 1.0 } else { 0.0 }
    }

    fn state_features(&self, state: &SkirmishState) -> Vec<f64> {
        let (w, h) = self.config.grid_size;
        let mut out = Vec::with_capacity(self.descriptor.state_dim);
        for u in &state.units {
            if u.alive {
                out.extend([
                    centered(u.pos.0 as f64, (w - 1) as f64),
                    centered(u.pos.1 as f64, (h - 1) as f64),
                    u.health as f64 / self.config.unit_health as f64,
                    1.0,
                ]);
            } else {
                out.extend([0.0; 4]);
            }
        }
        out.push(state.step_count as f64 / self.config.horizon as f64);
        out
    }

    fn step_count(&self, state: &SkirmishState) -> usize {
        state.step_count
    }

    fn with_deployed_adversaries(&self, n: usize) -> Self {
        let mut config = self.config.clone();
        config.deployed_adversaries = n.min(config.adversary_count);
        Self::new(config).expect("validated config stays valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_noop(env: &SkirmishEnv) -> JointAction {
        env.descriptor().actors.iter().map(|a| (*a, NOOP)).collect()
    }

    /// Open 1-victim/1-opponent arena without neutrals.
    fn duel(health: u32, damage: u32) -> SkirmishEnv {
        SkirmishEnv::new(SkirmishConfig {
            name: "duel".into(),
            grid_size: (4, 1),
            victim_count: 1,
            opponent_count: 1,
            adversary_count: 0,
            deployed_adversaries: 0,
            unit_health: health,
            attack_range: 1,
            attack_damage: damage,
            horizon: 60,
            sensing_radius: 3,
            walls: vec![],
            victim_spawn: Region::new(1, 1, 0, 0),
            opponent_spawn: Region::new(2, 2, 0, 0),
            adversary_spawn: Region::new(0, 0, 0, 0),
            adversaries_attack_opponents: false,
            lane_blocking: true,
            weights: vec![0.7, 0.3],
        })
        .unwrap()
    }

    #[test]
    fn reset_is_deterministic() {
        let env = SkirmishEnv::new(SkirmishConfig::small()).unwrap();
        assert_eq!(env.reset(0), env.reset(0));
        assert_eq!(env.reset(0).step_count, 0);
        assert!(env.reset(0).units.iter().all(|u| u.health == 3));
    }

    #[test]
    fn zero_victims_is_a_config_error() {
        let cfg = SkirmishConfig {
            victim_count: 0,
            ..SkirmishConfig::small()
        };
        assert!(matches!(SkirmishEnv::new(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn too_many_units_is_a_config_error() {
        let cfg = SkirmishConfig {
            victim_count: 5,
            ..SkirmishConfig::small()
        };
        assert!(matches!(SkirmishEnv::new(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn all_noop_keeps_positions() {
        let env = SkirmishEnv::new(SkirmishConfig::small()).unwrap();
        let s0 = env.reset(4);
        let (s1, out) = env.step(&s0, &all_noop(&env)).unwrap();
        assert_eq!(s1.step_count, 1);
        assert!(!out.terminal);
        // opponents may advance only if they can see a victim; none can at spawn
        for (a, b) in s0.units.iter().zip(&s1.units) {
            assert_eq!(a.pos, b.pos, "{}", a.agent);
        }
    }

    /// Hand simulation: health 3, damage 1, both strike every tick, attacks
    /// resolve simultaneously. After tick 1: 2/2, tick 2: 1/1, tick 3: both
    /// reach 0 together. With no victim left standing the task is failed.
    #[test]
    fn duel_resolves_simultaneously() {
        let env = duel(3, 1);
        let mut s = env.reset(0);
        let attack: JointAction = [(AgentId::victim(0), FIRST_ATTACK)].into_iter().collect();
        let mut outcomes = Vec::new();
        for _ in 0..3 {
            let (n, o) = env.step(&s, &attack).unwrap();
            outcomes.push(o);
            s = n;
        }
        assert_eq!(s.units[0].health, 0);
        assert_eq!(s.units[1].health, 0);
        assert!(!outcomes[0].terminal && !outcomes[1].terminal);
        let last = &outcomes[2];
        assert!(last.terminal && last.victim_failed && !last.victim_success);
        // each tick costs the single victim 1/3 of party health
        for o in &outcomes {
            assert!((o.failure_signals.components()[0] - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(last.failure_signals.components()[1], 0.0);
    }

    /// Damage 2 against health 3: two ticks; the victim also wins nothing
    /// because the opponent strikes back in the same tick.
    #[test]
    fn duel_ceil_health_over_damage() {
        let env = duel(3, 2);
        let s0 = env.reset(0);
        let attack: JointAction = [(AgentId::victim(0), FIRST_ATTACK)].into_iter().collect();
        let (s1, o1) = env.step(&s0, &attack).unwrap();
        assert!(!o1.terminal);
        let (_, o2) = env.step(&s1, &attack).unwrap();
        assert!(o2.terminal && o2.victim_failed);
    }

    #[test]
    fn step_on_terminal_is_lifecycle_error() {
        let env = duel(1, 1);
        let s0 = env.reset(0);
        let attack: JointAction = [(AgentId::victim(0), FIRST_ATTACK)].into_iter().collect();
        let (s1, o) = env.step(&s0, &attack).unwrap();
        assert!(o.terminal);
        assert!(matches!(env.step(&s1, &attack), Err(Error::Lifecycle(_))));
    }

    #[test]
    fn unavailable_action_names_agent() {
        let env = duel(3, 1);
        let s0 = env.reset(0);
        // north is off-grid on a one-row arena
        let act: JointAction = [(AgentId::victim(0), 1)].into_iter().collect();
        match env.step(&s0, &act) {
            Err(Error::Contract(m)) => assert!(m.contains("victim#0"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn signals_no_damage() {
        let env = SkirmishEnv::new(SkirmishConfig::small()).unwrap();
        let s0 = env.reset(1);
        let (s1, out) = env.step(&s0, &all_noop(&env)).unwrap();
        assert_eq!(out.failure_signals.components(), &[0.0, 1.0 / 60.0]);
        let again = env.failure_signals(&s0, &all_noop(&env), &s1).unwrap();
        assert_eq!(again, out.failure_signals);
    }

    #[test]
    fn signals_ten_of_hundred_health() {
        let cfg = SkirmishConfig {
            unit_health: 50,
            ..SkirmishConfig::small()
        };
        let env = SkirmishEnv::new(cfg).unwrap();
        let s0 = env.reset(1);
        let mut s1 = s0.clone();
        s1.step_count = 1;
        let v = env.unit_index(AgentId::victim(0)).unwrap();
        s1.units[v].health -= 10;
        let sig = env.failure_signals(&s0, &all_noop(&env), &s1).unwrap();
        assert_eq!(sig.components(), &[0.1, 1.0 / 60.0]);
    }

    #[test]
    fn signals_reject_non_transition() {
        let env = SkirmishEnv::new(SkirmishConfig::small()).unwrap();
        let s0 = env.reset(1);
        assert!(matches!(
            env.failure_signals(&s0, &all_noop(&env), &s0),
            Err(Error::Contract(_))
        ));
    }

    fn place(env: &SkirmishEnv, state: &mut SkirmishState, agent: AgentId, pos: (i32, i32)) {
        let i = env.unit_index(agent).unwrap();
        state.units[i].pos = pos;
    }

    fn open_env() -> SkirmishEnv {
        SkirmishEnv::new(SkirmishConfig {
            walls: vec![],
            ..SkirmishConfig::small()
        })
        .unwrap()
    }

    #[test]
    fn lone_agent_sees_only_itself() {
        let env = open_env();
        let mut s = env.reset(0);
        // scatter everyone far away
        place(&env, &mut s, AgentId::victim(0), (0, 0));
        place(&env, &mut s, AgentId::victim(1), (8, 4));
        place(&env, &mut s, AgentId::third(0), (8, 0));
        for k in 0..3 {
            place(&env, &mut s, AgentId::adversary(k), (4 + k as i32, 4));
        }
        let obs = env.observe(&s, AgentId::victim(0)).unwrap();
        assert_eq!(&obs.values()[..3], &[-1.0, -1.0, 1.0]);
        assert!(obs.values()[4..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn adjacent_agents_see_opposite_offsets() {
        let env = open_env();
        let mut s = env.reset(0);
        place(&env, &mut s, AgentId::victim(0), (2, 2));
        place(&env, &mut s, AgentId::adversary(0), (3, 2));
        let v = env.observe(&s, AgentId::victim(0)).unwrap();
        let a = env.observe(&s, AgentId::adversary(0)).unwrap();
        // victim(0)'s slot 0 is adversary(0); adversary(0)'s slot for victim(0) is slot 2
        let vs = &v.values()[4..8];
        let avs = &a.values()[4 + 4 * 2..4 + 4 * 3];
        assert_eq!(vs[0], 1.0);
        assert_eq!(avs[0], 1.0);
        assert_eq!(vs[1], -avs[1]);
        assert_eq!(vs[2], -avs[2]);
        assert!(vs[1] > 0.0);
    }

    #[test]
    fn agent_beyond_radius_is_invisible() {
        let env = open_env();
        let mut s = env.reset(0);
        place(&env, &mut s, AgentId::victim(0), (0, 0));
        place(&env, &mut s, AgentId::adversary(0), (4, 0));
        for k in 1..3 {
            place(&env, &mut s, AgentId::adversary(k), (8, 4 - k as i32));
        }
        place(&env, &mut s, AgentId::victim(1), (8, 4));
        let v = env.observe(&s, AgentId::victim(0)).unwrap();
        assert!(v.values()[4..8].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dead_unit_only_noop() {
        let env = SkirmishEnv::new(SkirmishConfig::small()).unwrap();
        let mut s = env.reset(0);
        let v = env.unit_index(AgentId::victim(0)).unwrap();
        s.units[v].alive = false;
        s.units[v].health = 0;
        let mask = env.available_actions(&s, AgentId::victim(0)).unwrap();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 1);
        assert!(mask[NOOP]);
    }

    #[test]
    fn victim_next_to_opponent_may_attack() {
        let env = open_env();
        let mut s = env.reset(0);
        place(&env, &mut s, AgentId::victim(0), (5, 3));
        place(&env, &mut s, AgentId::third(0), (6, 3));
        let mask = env.available_actions(&s, AgentId::victim(0)).unwrap();
        assert!(mask[FIRST_ATTACK]);
    }

    #[test]
    fn adversary_never_targets_victims() {
        let cfg = SkirmishConfig {
            walls: vec![],
            adversaries_attack_opponents: true,
            ..SkirmishConfig::small()
        };
        let env = SkirmishEnv::new(cfg).unwrap();
        let mut s = env.reset(0);
        place(&env, &mut s, AgentId::adversary(0), (2, 2));
        place(&env, &mut s, AgentId::victim(0), (3, 2));
        place(&env, &mut s, AgentId::victim(1), (2, 3));
        let mask = env.available_actions(&s, AgentId::adversary(0)).unwrap();
        let first_victim_attack = FIRST_ATTACK + 1;
        assert!(mask[first_victim_attack..].iter().all(|m| !m));
    }

    #[test]
    fn adversary_in_lane_blocks_attack() {
        let env = open_env();
        let mut s = env.reset(0);
        place(&env, &mut s, AgentId::victim(0), (2, 2));
        place(&env, &mut s, AgentId::adversary(0), (3, 2));
        place(&env, &mut s, AgentId::third(0), (4, 2));
        let mask = env.available_actions(&s, AgentId::victim(0)).unwrap();
        assert!(!mask[FIRST_ATTACK]);
    }

    #[test]
    fn absent_adversaries_are_dead() {
        let env = SkirmishEnv::new(SkirmishConfig::small())
            .unwrap()
            .with_deployed_adversaries(1);
        let s = env.reset(2);
        assert!(s.units[0].alive);
        assert!(!s.units[1].alive && !s.units[2].alive);
    }
}
