//! Multi-lane road. Victim vehicles drive from column 0 to the last column.
//!
//! Per tick, vehicles are processed front to back (larger column first,
//! then `AgentId`). Each vehicle first applies its speed change, then its
//! lane change, then advances cell by cell up to its speed. A victim that
//! moves into an occupied cell crashes; any other vehicle stops behind the
//! obstacle instead. Neutral vehicles never enter a victim's cell.
//!
//! Traffic rules: a victim may not stand still on the road and may not cut
//! in (finish a lane change with a vehicle directly behind it). Either
//! counts as a violation and fails the task at episode end.

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{centered, EnvDescriptor, Environment, FailurePathDescriptor, RoleDescriptor};
use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::mdp::{AgentId, JointAction, Observation, PartyId, StepOutcome};
use crate::reward::FailureSignalVector;

pub const KEEP: usize = 0;
pub const FASTER: usize = 1;
pub const SLOWER: usize = 2;
pub const LANE_UP: usize = 3;
pub const LANE_DOWN: usize = 4;
const ACTION_NAMES: [&str; 5] = ["keep", "faster", "slower", "lane-up", "lane-down"];
const VIEW_COLUMNS: i32 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct CorridorConfig {
    pub name: String,
    pub lanes: usize,
    pub length: usize,
    pub victim_count: usize,
    pub adversary_count: usize,
    pub deployed_adversaries: usize,
    pub other_vehicle_count: usize,
    pub horizon: usize,
    pub speed_levels: usize,
    pub weights: Vec<f64>,
}

impl Default for CorridorConfig {
    fn default() -> Self {
        Self::highway()
    }
}

impl CorridorConfig {
    pub fn highway() -> Self {
        Self {
            name: "corridor-highway".into(),
            lanes: 3,
            length: 16,
            victim_count: 2,
            adversary_count: 2,
            deployed_adversaries: 2,
            other_vehicle_count: 2,
            horizon: 40,
            speed_levels: 3,
            weights: vec![0.5, 0.3, 0.2],
        }
    }

    pub fn small() -> Self {
        Self {
            name: "corridor-small".into(),
            lanes: 2,
            length: 10,
            victim_count: 1,
            adversary_count: 1,
            deployed_adversaries: 1,
            other_vehicle_count: 1,
            ..Self::highway()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "corridor" | "corridor-highway" => Ok(Self::highway()),
            "corridor-small" => Ok(Self::small()),
            other => Err(Error::Config(format!("unknown corridor preset `{other}`"))),
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
                "lanes" => self.lanes = num()?,
                "length" => self.length = num()?,
                "victim_count" => self.victim_count = num()?,
                "adversary_count" => self.adversary_count = num()?,
                "deployed_adversaries" => {
                    self.deployed_adversaries = num()?;
                    deployed_set = true;
                }
                "other_vehicle_count" => self.other_vehicle_count = num()?,
                "horizon" => self.horizon = num()?,
                "speed_levels" => self.speed_levels = num()?,
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
        let err = |m: String| Err(Error::Config(format!("{}: {m}", self.name)));
        if self.lanes == 0 || self.length < 4 {
            return err("need at least one lane and four columns".into());
        }
        if self.victim_count == 0 || self.victim_count > self.lanes {
            return err(format!("victim_count must be in 1..={}", self.lanes));
        }
        if self.horizon == 0 || self.speed_levels < 2 {
            return err("horizon must be positive and speed_levels at least 2".into());
        }
        if self.deployed_adversaries > self.adversary_count {
            return err("deployed_adversaries exceeds adversary_count".into());
        }
        if self.weights.len() != 3 {
            return err(format!(
                "expected 3 failure-path weights, got {}",
                self.weights.len()
            ));
        }
        let total = self.victim_count + self.adversary_count + self.other_vehicle_count;
        if total > self.lanes * self.length {
            return err(format!(
                "{total} vehicles exceed {} cells",
                self.lanes * self.length
            ));
        }
        if self.adversary_count > self.lanes * self.adversary_columns() {
            return err("not enough room to spawn adversaries".into());
        }
        if self.other_vehicle_count > self.lanes * (self.length - 2 - self.adversary_columns()) {
            return err("not enough room to spawn other vehicles".into());
        }
        Ok(())
    }

    fn adversary_columns(&self) -> usize {
        (self.length / 3).max(1)
    }

    pub fn goal_column(&self) -> usize {
        self.length - 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VehicleStatus {
    Driving,
    Arrived,
    Crashed,
    Absent,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vehicle {
    pub agent: AgentId,
    pub lane: i32,
    pub column: i32,
    pub speed: i32,
    pub status: VehicleStatus,
}

impl Vehicle {
    fn on_road(&self) -> bool {
        self.status == VehicleStatus::Driving
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorridorState {
    /// All vehicles sorted by `AgentId`.
    pub vehicles: Vec<Vehicle>,
    pub step_count: usize,
    pub collisions: usize,
    pub violations: usize,
    pub rng_state: u64,
    pub terminal: bool,
}

#[derive(Clone, Debug)]
pub struct CorridorEnv {
    config: CorridorConfig,
    descriptor: EnvDescriptor,
}

impl CorridorEnv {
    pub fn new(config: CorridorConfig) -> Result<Self> {
        config.validate()?;
        let descriptor = Self::build_descriptor(&config);
        Ok(Self { config, descriptor })
    }

    pub fn config(&self) -> &CorridorConfig {
        &self.config
    }

    fn build_descriptor(c: &CorridorConfig) -> EnvDescriptor {
        let mut agents = Vec::new();
        agents.extend((0..c.adversary_count).map(AgentId::adversary));
        agents.extend((0..c.victim_count).map(AgentId::victim));
        agents.extend((0..c.other_vehicle_count).map(AgentId::third));
        let actors: Vec<AgentId> = agents
            .iter()
            .copied()
            .filter(|a| a.party != PartyId::Third)
            .collect();
        let mut features: Vec<String> = ["self.lane", "self.column", "self.speed", "time"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for k in 0..agents.len() - 1 {
            for f in ["visible", "dlane", "dcolumn", "speed"] {
                features.push(format!("other{k}.{f}"));
            }
        }
        let role = RoleDescriptor {
            obs_dim: features.len(),
            features,
            actions: ACTION_NAMES.iter().map(|s| s.to_string()).collect(),
        };
        EnvDescriptor {
            name: c.name.clone(),
            horizon: c.horizon,
            actors,
            adversary: role.clone(),
            victim: role,
            failure_paths: vec![
                FailurePathDescriptor {
                    id: 0,
                    name: "collision".into(),
                    description: "1 if a victim collided this step".into(),
                },
                FailurePathDescriptor {
                    id: 1,
                    name: "timeout".into(),
                    description: "1/horizon for every step some victim has not reached the goal"
                        .into(),
                },
                FailurePathDescriptor {
                    id: 2,
                    name: "rule-violation".into(),
                    description: "number of victim traffic-rule violations this step".into(),
                },
            ],
            default_weights: c.weights.clone(),
            state_dim: 4 * agents.len() + 1,
            agents,
        }
    }

    fn index(&self, agent: AgentId) -> Result<usize> {
        let c = &self.config;
        let (base, count) = match agent.party {
            PartyId::Adversary => (0, c.adversary_count),
            PartyId::Victim => (c.adversary_count, c.victim_count),
            PartyId::Third => (c.adversary_count + c.victim_count, c.other_vehicle_count),
        };
        if agent.index >= count {
            return Err(Error::Lookup(format!("no agent {agent} in {}", c.name)));
        }
        Ok(base + agent.index)
    }

    fn max_speed(&self) -> i32 {
        self.config.speed_levels as i32 - 1
    }

    fn occupant(vehicles: &[Vehicle], lane: i32, column: i32) -> Option<usize> {
        vehicles
            .iter()
            .position(|v| v.on_road() && v.lane == lane && v.column == column)
    }

    fn mask_for(&self, state: &CorridorState, i: usize) -> Vec<bool> {
        let mut mask = vec![false; ACTION_NAMES.len()];
        mask[KEEP] = true;
        let v = &state.vehicles[i];
        if !v.on_road() || state.terminal {
            return mask;
        }
        mask[FASTER] = v.speed < self.max_speed();
        mask[SLOWER] = v.speed > 0;
        for (action, dl) in [(LANE_UP, -1), (LANE_DOWN, 1)] {
            let lane = v.lane + dl;
            let mut ok = lane >= 0 && lane < self.config.lanes as i32;
            if ok && v.agent.party == PartyId::Adversary {
                // never swerve into a victim
                if let Some(o) = Self::occupant(&state.vehicles, lane, v.column) {
                    ok = state.vehicles[o].agent.party != PartyId::Victim;
                }
            }
            mask[action] = ok;
        }
        mask
    }

    fn signals_between(&self, prev: &CorridorState, next: &CorridorState) -> FailureSignalVector {
        let collided = if next.collisions > prev.collisions {
            1.0
        } else {
            0.0
        };
        let pending = next
            .vehicles
            .iter()
            .any(|v| v.agent.party == PartyId::Victim && v.status != VehicleStatus::Arrived);
        let timeout =
            if pending && !(next.terminal && self.all_arrived(next) && next.violations == 0) {
                1.0 / self.config.horizon as f64
            } else {
                0.0
            };
        let violations = (next.violations - prev.violations) as f64;
        FailureSignalVector::new(vec![collided, timeout, violations])
    }

    fn all_arrived(&self, s: &CorridorState) -> bool {
        s.vehicles
            .iter()
            .filter(|v| v.agent.party == PartyId::Victim)
            .all(|v| v.status == VehicleStatus::Arrived)
    }

    fn victim_progress(&self, s: &CorridorState) -> f64 {
        let goal = self.config.goal_column() as f64;
        s.vehicles
            .iter()
            .filter(|v| v.agent.party == PartyId::Victim)
            .map(|v| (v.column as f64).min(goal) / goal)
            .sum::<f64>()
            / self.config.victim_count as f64
    }
}

impl Environment for CorridorEnv {
    type State = CorridorState;

    fn descriptor(&self) -> &EnvDescriptor {
        &self.descriptor
    }

    fn reset(&self, seed: u64) -> CorridorState {
        let c = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lanes = c.lanes as i32;
        let mut victim_lanes: Vec<i32> = (0..lanes).collect();
        victim_lanes.shuffle(&mut rng);
        let adv_cols = c.adversary_columns() as i32;
        let mut adv_cells: Vec<(i32, i32)> = (1..=adv_cols)
            .flat_map(|col| (0..lanes).map(move |l| (l, col)))
            .collect();
        adv_cells.shuffle(&mut rng);
        let mut other_cells: Vec<(i32, i32)> = (adv_cols + 1..c.length as i32 - 1)
            .flat_map(|col| (0..lanes).map(move |l| (l, col)))
            .collect();
        other_cells.shuffle(&mut rng);

        let mut vehicles = Vec::new();
        for k in 0..c.adversary_count {
            let (lane, column) = adv_cells[k];
            let deployed = k < c.deployed_adversaries;
            vehicles.push(Vehicle {
                agent: AgentId::adversary(k),
                lane,
                column,
                speed: 1,
                status: if deployed {
                    VehicleStatus::Driving
                } else {
                    VehicleStatus::Absent
                },
            });
        }
        for k in 0..c.victim_count {
            vehicles.push(Vehicle {
                agent: AgentId::victim(k),
                lane: victim_lanes[k],
                column: 0,
                speed: 1,
                status: VehicleStatus::Driving,
            });
        }
        for k in 0..c.other_vehicle_count {
            let (lane, column) = other_cells[k];
            vehicles.push(Vehicle {
                agent: AgentId::third(k),
                lane,
                column,
                speed: 1,
                status: VehicleStatus::Driving,
            });
        }
        CorridorState {
            vehicles,
            step_count: 0,
            collisions: 0,
            violations: 0,
            rng_state: rng.next_u64(),
            terminal: false,
        }
    }

    fn step(
        &self,
        state: &CorridorState,
        action: &JointAction,
    ) -> Result<(CorridorState, StepOutcome)> {
        if state.terminal {
            return Err(Error::Lifecycle(
                "step called on a terminal corridor state".into(),
            ));
        }
        let n = state.vehicles.len();
        let mut chosen = vec![KEEP; n];
        for (i, v) in state.vehicles.iter().enumerate() {
            if v.agent.party == PartyId::Third {
                continue;
            }
            let a = action
                .get(v.agent)
                .ok_or_else(|| Error::Contract(format!("no action given for {}", v.agent)))?;
            let mask = self.mask_for(state, i);
            if a >= mask.len() || !mask[a] {
                return Err(Error::Contract(format!(
                    "action {a} unavailable for {}",
                    v.agent
                )));
            }
            chosen[i] = a;
        }

        let mut next = state.clone();
        let mut order: Vec<usize> = (0..n).filter(|&i| state.vehicles[i].on_road()).collect();
        order.sort_by_key(|&i| (-state.vehicles[i].column, i));
        let goal = self.config.goal_column() as i32;
        let mut crashed_now = 0;
        let mut violations_now = 0;

        for &i in &order {
            if !next.vehicles[i].on_road() {
                continue;
            }
            let is_victim = next.vehicles[i].agent.party == PartyId::Victim;
            let is_adversary = next.vehicles[i].agent.party == PartyId::Adversary;
            match chosen[i] {
                FASTER => next.vehicles[i].speed += 1,
                SLOWER => next.vehicles[i].speed -= 1,
                _ => {}
            }
            let mut changed_lane = false;
            if chosen[i] == LANE_UP || chosen[i] == LANE_DOWN {
                let dl = if chosen[i] == LANE_UP { -1 } else { 1 };
                let (lane, col) = (next.vehicles[i].lane + dl, next.vehicles[i].column);
                match Self::occupant(&next.vehicles, lane, col) {
                    None => {
                        next.vehicles[i].lane = lane;
                        changed_lane = true;
                    }
                    Some(o) if is_victim => {
                        next.vehicles[i].status = VehicleStatus::Crashed;
                        if next.vehicles[o].agent.party == PartyId::Victim {
                            next.vehicles[o].status = VehicleStatus::Crashed;
                        }
                        crashed_now += 1;
                        continue;
                    }
                    Some(_) => {}
                }
            }
            let speed = next.vehicles[i].speed;
            for _ in 0..speed {
                let (lane, col) = (next.vehicles[i].lane, next.vehicles[i].column + 1);
                if col > goal {
                    break;
                }
                match Self::occupant(&next.vehicles, lane, col) {
                    None => next.vehicles[i].column = col,
                    Some(o) => {
                        let occupant_is_victim = next.vehicles[o].agent.party == PartyId::Victim;
                        if is_victim {
                            next.vehicles[i].status = VehicleStatus::Crashed;
                            if occupant_is_victim {
                                next.vehicles[o].status = VehicleStatus::Crashed;
                            }
                            crashed_now += 1;
                        } else {
                            debug_assert!(!(is_adversary && occupant_is_victim) || true);
                        }
                        break;
                    }
                }
            }
            let v = &mut next.vehicles[i];
            if is_victim && v.on_road() {
                if v.column >= goal {
                    v.status = VehicleStatus::Arrived;
                } else {
                    if v.speed == 0 {
                        violations_now += 1;
                    }
                    if changed_lane
                        && Self::occupant(
                            &next.vehicles,
                            next.vehicles[i].lane,
                            next.vehicles[i].column - 1,
                        )
                        .is_some()
                    {
                        violations_now += 1;
                    }
                }
            } else if !is_victim && v.column >= goal {
                // traffic leaves the road at the end
                v.status = VehicleStatus::Absent;
            }
        }

        next.collisions += crashed_now;
        next.violations += violations_now;
        next.step_count += 1;
        let arrived = self.all_arrived(&next);
        let crashed = crashed_now > 0 || state.collisions > 0;
        let success = arrived && !crashed && next.violations == 0;
        let failed = !success && (crashed || arrived || next.step_count >= self.config.horizon);
        next.terminal = success || failed;
        let outcome = StepOutcome {
            terminal: next.terminal,
            victim_success: success,
            victim_failed: failed,
            failure_signals: self.signals_between(state, &next),
        };
        Ok((next, outcome))
    }

    fn observe(&self, state: &CorridorState, agent: AgentId) -> Result<Observation> {
        let me = self.index(agent)?;
        let c = &self.config;
        let mut v = vec![0.0; self.descriptor.role(agent.party).obs_dim];
        let u = &state.vehicles[me];
        if !u.on_road() {
            return Ok(Observation::new(v));
        }
        let max_speed = self.max_speed() as f64;
        v[0] = centered(u.lane as f64, (c.lanes - 1) as f64);
        v[1] = centered(u.column as f64, c.goal_column() as f64);
        v[2] = u.speed as f64 / max_speed;
        v[3] = state.step_count as f64 / c.horizon as f64;
        let lane_scale = (c.lanes.max(2) - 1) as f64;
        let others = state
            .vehicles
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != me)
            .map(|(_, o)| o);
        for (slot, o) in others.enumerate() {
            let dcol = o.column - u.column;
            if !o.on_road() || dcol.abs() > VIEW_COLUMNS {
                continue;
            }
            let base = 4 + 4 * slot;
            v[base] = 1.0;
            v[base + 1] = (o.lane - u.lane) as f64 / lane_scale;
            v[base + 2] = dcol as f64 / VIEW_COLUMNS as f64;
            v[base + 3] = o.speed as f64 / max_speed;
        }
        Ok(Observation::new(v))
    }

    fn available_actions(&self, state: &CorridorState, agent: AgentId) -> Result<Vec<bool>> {
        if agent.party == PartyId::Third {
            return Err(Error::Lookup(format!(
                "{agent} is scripted and has no action mask"
            )));
        }
        Ok(self.mask_for(state, self.index(agent)?))
    }

    fn failure_signals(
        &self,
        prev: &CorridorState,
        _action: &JointAction,
        next: &CorridorState,
    ) -> Result<FailureSignalVector> {
        if next.step_count != prev.step_count + 1 || next.vehicles.len() != prev.vehicles.len() {
            return Err(Error::Contract(format!(
                "states at steps {} and {} are not a transition",
                prev.step_count, next.step_count
            )));
        }
        Ok(self.signals_between(prev, next))
    }

    fn native_reward(
        &self,
        prev: &CorridorState,
        next: &CorridorState,
        outcome: &StepOutcome,
    ) -> f64 {
        let progress = self.victim_progress(next) - self.victim_progress(prev);
        let collision = if next.collisions > prev.collisions {
            1.0
        } else {
            0.0
        };
        let violation = 0.5 * (next.violations - prev.violations) as f64;
        progress + if outcome.victim_success { 1.0 } else { 0.0 } - collision - violation
    }

    fn state_features(&self, state: &CorridorState) -> Vec<f64> {
        let c = &self.config;
        let mut out = Vec::with_capacity(self.descriptor.state_dim);
        for v in &state.vehicles {
            if v.on_road() {
                out.extend([
                    centered(v.lane as f64, (c.lanes - 1) as f64),
                    centered(v.column as f64, c.goal_column() as f64),
                    v.speed as f64 / self.max_speed() as f64,
                    1.0,
                ]);
            } else {
                out.extend([0.0; 4]);
            }
        }
        out.push(state.step_count as f64 / c.horizon as f64);
        out
    }

    fn step_count(&self, state: &CorridorState) -> usize {
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

    fn keep_all(env: &CorridorEnv) -> JointAction {
        env.descriptor().actors.iter().map(|a| (*a, KEEP)).collect()
    }

    #[test]
    fn reset_places_victims_at_start() {
        let cfg = CorridorConfig {
            lanes: 2,
            length: 10,
            ..CorridorConfig::small()
        };
        let env = CorridorEnv::new(cfg).unwrap();
        let s = env.reset(7);
        assert_eq!(env.config().goal_column(), 9);
        for v in s
            .vehicles
            .iter()
            .filter(|v| v.agent.party == PartyId::Victim)
        {
            assert_eq!(v.column, 0);
        }
        assert_eq!(s, env.reset(7));
    }

    #[test]
    fn too_many_vehicles_rejected() {
        let cfg = CorridorConfig {
            victim_count: 3,
            ..CorridorConfig::small()
        };
        assert!(matches!(CorridorEnv::new(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn victim_reaching_goal_succeeds() {
        let cfg = CorridorConfig {
            adversary_count: 0,
            deployed_adversaries: 0,
            other_vehicle_count: 0,
            ..CorridorConfig::small()
        };
        let env = CorridorEnv::new(cfg).unwrap();
        let mut s = env.reset(0);
        s.vehicles[0].column = 8;
        let (n, out) = env.step(&s, &keep_all(&env)).unwrap();
        assert!(out.terminal && out.victim_success && !out.victim_failed);
        assert_eq!(out.failure_signals.components(), &[0.0, 0.0, 0.0]);
        assert_eq!(n.vehicles[0].status, VehicleStatus::Arrived);
    }

    #[test]
    fn ramming_is_a_collision() {
        let cfg = CorridorConfig {
            adversary_count: 0,
            deployed_adversaries: 0,
            other_vehicle_count: 1,
            ..CorridorConfig::small()
        };
        let env = CorridorEnv::new(cfg).unwrap();
        let mut s = env.reset(0);
        let v = env.index(AgentId::victim(0)).unwrap();
        let o = env.index(AgentId::third(0)).unwrap();
        s.vehicles[v].lane = 0;
        s.vehicles[v].column = 3;
        s.vehicles[v].speed = 2;
        s.vehicles[o].lane = 0;
        s.vehicles[o].column = 5;
        s.vehicles[o].speed = 0;
        let (_, out) = env.step(&s, &keep_all(&env)).unwrap();
        assert!(out.terminal && out.victim_failed);
        assert_eq!(out.failure_signals.components()[0], 1.0);
    }

    #[test]
    fn adversary_stops_behind_victim() {
        let cfg = CorridorConfig {
            other_vehicle_count: 0,
            ..CorridorConfig::small()
        };
        let env = CorridorEnv::new(cfg).unwrap();
        let mut s = env.reset(0);
        let a = env.index(AgentId::adversary(0)).unwrap();
        let v = env.index(AgentId::victim(0)).unwrap();
        s.vehicles[v].lane = 1;
        s.vehicles[v].column = 4;
        s.vehicles[v].speed = 1;
        s.vehicles[a].lane = 1;
        s.vehicles[a].column = 2;
        s.vehicles[a].speed = 2;
        let (n, _) = env.step(&s, &keep_all(&env)).unwrap();
        assert_eq!(n.vehicles[a].column, 4);
        assert_eq!(n.vehicles[v].column, 5);
        assert_eq!(n.collisions, 0);
        // adversary cannot swerve into a victim
        s.vehicles[a].column = 4;
        s.vehicles[a].lane = 0;
        let mask = env.available_actions(&s, AgentId::adversary(0)).unwrap();
        assert!(!mask[LANE_DOWN]);
    }

    #[test]
    fn standing_still_is_a_violation() {
        let cfg = CorridorConfig {
            adversary_count: 0,
            deployed_adversaries: 0,
            other_vehicle_count: 0,
            ..CorridorConfig::small()
        };
        let env = CorridorEnv::new(cfg).unwrap();
        let s = env.reset(0);
        let act: JointAction = [(AgentId::victim(0), SLOWER)].into_iter().collect();
        let (_, out) = env.step(&s, &act).unwrap();
        assert_eq!(out.failure_signals.components()[2], 1.0);
        assert_eq!(out.failure_signals.components()[1], 1.0 / 40.0);
    }

    #[test]
    fn observation_view_is_two_columns() {
        let cfg = CorridorConfig {
            other_vehicle_count: 0,
            ..CorridorConfig::small()
        };
        let env = CorridorEnv::new(cfg).unwrap();
        let mut s = env.reset(0);
        let a = env.index(AgentId::adversary(0)).unwrap();
        s.vehicles[a].column = 3;
        let obs = env.observe(&s, AgentId::victim(0)).unwrap();
        assert!(obs.values()[4..].iter().all(|&x| x == 0.0));
        s.vehicles[a].column = 2;
        let obs = env.observe(&s, AgentId::victim(0)).unwrap();
        assert_eq!(obs.values()[4], 1.0);
        assert_eq!(obs.values()[6], 1.0);
    }
}
