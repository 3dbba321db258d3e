//! Deterministic discrete-tick battle space: entity kinematics, behaviour
//! scripts, the sensor model and the engagement effect model.

pub mod scenario;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    Acoustics, Activity, CharacteristicVector, EntityKind, EntityRef, Grouping, Markings,
    MunitionKind, Possession, Reading, TargetNature, Tick, Vec2,
};
use crate::switch::ActionId;

/// Ground-truth flags an entity currently shows.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Truth {
    pub activity: Activity,
    pub possession: Possession,
    pub markings: Markings,
    pub acoustics: Acoustics,
    pub grouping: Grouping,
}

impl Truth {
    pub fn wreckage() -> Self {
        Self { markings: Markings::WRECKAGE, ..Self::default() }
    }
}

/// A scripted change; fields left `None` are unchanged.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BehaviorChange {
    pub activity: Option<Activity>,
    pub possession: Option<Possession>,
    pub markings: Option<Markings>,
    pub acoustics: Option<Acoustics>,
    pub group_count: Option<u32>,
    pub formation: Option<bool>,
    pub velocity: Option<Vec2>,
}

impl BehaviorChange {
    fn apply(&self, e: &mut Entity) {
        let t = &mut e.truth;
        if let Some(v) = self.activity {
            t.activity = v;
        }
        if let Some(v) = self.possession {
            t.possession = v;
        }
        if let Some(v) = self.markings {
            t.markings = v;
        }
        if let Some(v) = self.acoustics {
            t.acoustics = v;
        }
        if let Some(v) = self.group_count {
            t.grouping.count = v;
        }
        if let Some(v) = self.formation {
            t.grouping.formation = v;
        }
        if let Some(v) = self.velocity {
            e.velocity = v;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub tick: Tick,
    pub change: BehaviorChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub entity: EntityRef,
    pub position: Vec2,
    pub velocity: Vec2,
    pub truth: Truth,
    pub script: Vec<ScriptStep>,
    pub alive: bool,
    pub neutralized: bool,
    /// Scenario author's knowledge; never read by platforms.
    pub ground_truth_nature: TargetNature,
}

impl Entity {
    pub fn new(entity: EntityRef, position: Vec2) -> Self {
        Self {
            entity,
            position,
            velocity: Vec2::ZERO,
            truth: Truth::default(),
            script: Vec::new(),
            alive: true,
            neutralized: false,
            ground_truth_nature: TargetNature::Undetermined,
        }
    }

    pub fn is_mobile(&self) -> bool {
        !self.velocity.is_zero()
    }
}

/// Per-munition engagement outcome model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    pub p_neutralize: f64,
    pub flight_time: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strike {
    pub id: ActionId,
    pub shooter: u64,
    pub target: u64,
    pub munition: MunitionKind,
    pub launched: Tick,
    pub impact: Tick,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub fidelity: f64,
    pub range: f64,
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self { fidelity: 1.0, range: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WorldEvent {
    Moved { entity: u64, position: Vec2 },
    ScriptApplied { entity: u64, change: BehaviorChange },
    StrikeResolved { strike: Strike, neutralized: bool },
}

const EFFECT_STREAM: u64 = 1;
const SENSOR_STREAM: u64 = 2;
pub const LINK_STREAM: u64 = 3;

pub fn seeded_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone)]
pub struct BattleSpace {
    pub clock: Tick,
    pub entities: BTreeMap<u64, Entity>,
    pub effects: BTreeMap<MunitionKind, Effect>,
    pub seed: u64,
    pub noise_scale: f64,
    strikes: Vec<Strike>,
    effect_rng: ChaCha8Rng,
    sensor_rng: ChaCha8Rng,
}

impl BattleSpace {
    pub fn new(seed: u64) -> Self {
        Self {
            clock: Tick::ZERO,
            entities: BTreeMap::new(),
            effects: BTreeMap::new(),
            seed,
            noise_scale: 1.0,
            strikes: Vec::new(),
            effect_rng: seeded_stream(seed, EFFECT_STREAM),
            sensor_rng: seeded_stream(seed, SENSOR_STREAM),
        }
    }

    pub fn add(&mut self, e: Entity) {
        self.entities.insert(e.entity.id, e);
    }

    pub fn entity(&self, id: u64) -> Option<&Entity> {
        self.entities.get(&id)
    }

    pub fn entity_mut(&mut self, id: u64) -> Option<&mut Entity> {
        self.entities.get_mut(&id)
    }

    pub fn of_kind(&self, kind: EntityKind) -> impl Iterator<Item = &Entity> {
        self.entities.values().filter(move |e| e.entity.kind == kind)
    }

    pub fn distance(&self, a: u64, b: u64) -> Option<f64> {
        Some(self.entity(a)?.position.distance(self.entity(b)?.position))
    }

    pub fn effect(&self, munition: &MunitionKind) -> Effect {
        self.effects
            .get(munition)
            .copied()
            .unwrap_or(Effect { p_neutralize: 1.0, flight_time: 1 })
    }

    /// Schedule a strike; it resolves on the world step at its impact tick.
    pub fn launch(&mut self, id: ActionId, shooter: u64, target: u64, munition: MunitionKind) -> Strike {
        let flight = self.effect(&munition).flight_time.max(1);
        let strike = Strike {
            id,
            shooter,
            target,
            munition,
            launched: self.clock,
            impact: Tick(self.clock.0 + flight),
        };
        self.strikes.push(strike.clone());
        strike
    }

    /// Remove a strike still in flight.
    pub fn abort(&mut self, id: ActionId) -> Option<Strike> {
        let i = self.strikes.iter().position(|s| s.id == id)?;
        Some(self.strikes.remove(i))
    }

    pub fn strikes_in_flight(&self) -> &[Strike] {
        &self.strikes
    }

    pub fn neutralize(&mut self, id: u64) {
        if let Some(e) = self.entities.get_mut(&id) {
            e.neutralized = true;
            e.velocity = Vec2::ZERO;
            e.truth = Truth::wreckage();
        }
    }

    /// Advance one tick: move, apply due scripts, resolve strikes.
    pub fn step_world(&mut self) -> Vec<WorldEvent> {
        self.clock = self.clock.next();
        let now = self.clock;
        let mut events = Vec::new();
        for e in self.entities.values_mut() {
            if e.alive && !e.neutralized && !e.velocity.is_zero() {
                e.position = e.position + e.velocity;
                events.push(WorldEvent::Moved { entity: e.entity.id, position: e.position });
            }
        }
        for e in self.entities.values_mut() {
            if e.neutralized || !e.alive {
                continue;
            }
            let due: Vec<BehaviorChange> =
                e.script.iter().filter(|s| s.tick == now).map(|s| s.change.clone()).collect();
            for change in due {
                change.apply(e);
                events.push(WorldEvent::ScriptApplied { entity: e.entity.id, change });
            }
        }
        let (mut due, rest): (Vec<_>, Vec<_>) = self.strikes.drain(..).partition(|s| s.impact <= now);
        self.strikes = rest;
        due.sort_by_key(|s| (s.impact, s.shooter, s.id));
        for strike in due {
            let p = self.effect(&strike.munition).p_neutralize.clamp(0.0, 1.0);
            let neutralized = self.effect_rng.gen_bool(p);
            if neutralized {
                self.neutralize(strike.target);
            }
            events.push(WorldEvent::StrikeResolved { strike, neutralized });
        }
        events
    }

    /// Sense `target` from `from`. Flags are only ever dropped, never
    /// invented; out-of-range targets give an all-blank vector.
    pub fn sense(&mut self, sensor: &SensorSpec, from: Vec2, target: u64) -> CharacteristicVector {
        let Some(e) = self.entities.get(&target) else { return CharacteristicVector::empty() };
        let d = from.distance(e.position);
        let range_factor = if sensor.range > 0.0 { (1.0 - d / sensor.range).max(0.0) } else { 0.0 };
        let c = (sensor.fidelity * range_factor).clamp(0.0, 1.0);
        if c == 0.0 {
            return CharacteristicVector::empty();
        }
        let (truth, position, velocity) = (e.truth.clone(), e.position, e.velocity);
        let amp = (1.0 - c) * self.noise_scale;
        let rng = &mut self.sensor_rng;
        let mut noisy = |v: Vec2| -> Vec2 {
            if amp > 0.0 {
                Vec2::new(v.x + rng.gen_range(-amp..=amp), v.y + rng.gen_range(-amp..=amp))
            } else {
                v
            }
        };
        let position = noisy(position);
        let velocity = noisy(velocity);
        let keep = 1.0 - c;
        let rng = &mut self.sensor_rng;
        let mut retain = |bits: u32| -> u32 {
            (0..32)
                .filter(|b| bits & (1 << b) != 0)
                .filter(|_| keep == 0.0 || !rng.gen_bool(keep))
                .fold(0, |acc, b| acc | (1 << b))
        };
        let activity = Activity::from_bits_truncate(retain(truth.activity.bits()));
        let possession = Possession::from_bits_truncate(retain(truth.possession.bits()));
        let formation = retain(u32::from(truth.grouping.formation)) != 0;
        let markings = Markings::from_bits_truncate(retain(truth.markings.bits()));
        let acoustics = Acoustics::from_bits_truncate(retain(truth.acoustics.bits()));
        CharacteristicVector {
            position: Reading::new(position, c),
            activity: Reading::new(activity, c),
            possession: Reading::new(possession, c),
            movement: Reading::new(velocity, c),
            grouping: Reading::new(Grouping { count: truth.grouping.count, formation }, c),
            markings: Reading::new(markings, c),
            acoustics: Reading::new(acoustics, c),
        }
    }
}
