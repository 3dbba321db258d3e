//! Scenario execution: world, platforms, channel, swaps and the black box,
//! advanced one tick at a time until every platform is terminal.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::blackbox::{summarize, BlackBox, Summary};
use crate::codec::{encode_key, EncodedKey};
use crate::collab::{
    advance_swap, custody_violations, initiate_swap, request_collaboration, SwapPhase, SwapSchedule,
    SwapTransaction, SWAP_TIMEOUT,
};
use crate::command::{Message, MessageChannel, Operator};
use crate::domain::{
    Activity, CharacteristicVector, Classification, CombatRole, EntityKind, EntityRef, Markings, Possession,
    Reading, TargetNature, TargetStatus, TargetValue, Tick,
};
use crate::events::{EntitySnapshot, Event};
use crate::key::{CodifiedKey, KeyFactory};
use crate::ooda::{send_message, tick_platform, Disposition, Inbound, MaintenanceDirective, PlatformEnv, PlatformState, WeaponPlatform};
use crate::sim::scenario::{Scenario, ScenarioEvent, Tamper};
use crate::sim::{seeded_stream, BattleSpace, WorldEvent, LINK_STREAM};
use crate::switch::{ActionKind, Mobility};

/// Sender recorded for keys that did not come through the channel.
pub fn intruder() -> EntityRef {
    EntityRef::new(EntityKind::CommandCentre, u64::MAX, "intruder")
}

/// One scenario in progress.
pub struct Run {
    pub scenario: Scenario,
    pub world: BattleSpace,
    pub platforms: BTreeMap<u64, WeaponPlatform>,
    pub swaps: BTreeMap<u64, SwapTransaction>,
    pub log: BlackBox,
    factory: KeyFactory,
    channel: MessageChannel,
    operator: Operator,
    commands: BTreeMap<u64, EntityRef>,
    events: VecDeque<crate::sim::scenario::ScheduledEvent>,
    last_seen: BTreeMap<u64, EntitySnapshot>,
    handoff_attempts: BTreeMap<u64, Tick>,
}

fn snapshot(world: &BattleSpace) -> BTreeMap<u64, EntitySnapshot> {
    world
        .entities
        .values()
        .map(|e| {
            let s = EntitySnapshot {
                entity: e.entity.clone(),
                position: e.position,
                velocity: e.velocity,
                alive: e.alive,
                neutralized: e.neutralized,
            };
            (e.entity.id, s)
        })
        .collect()
}

impl Run {
    pub fn new(scenario: Scenario, operator: Operator) -> Self {
        let world = scenario.world();
        let platforms: BTreeMap<u64, WeaponPlatform> = scenario
            .platforms
            .iter()
            .map(|s| {
                let mut p = WeaponPlatform::new(
                    s.entity.clone(),
                    scenario.mission_of(s).clone(),
                    s.resources.clone(),
                    s.position,
                    s.sensor,
                    s.activation,
                );
                p.ctx.safety_radius = s.safety_radius;
                p.ctx.staleness_limit = scenario.staleness_limit;
                (s.entity.id, p)
            })
            .collect();
        let commands: BTreeMap<u64, EntityRef> =
            scenario.commands.iter().map(|c| (c.entity.id, c.entity.clone())).collect();
        let endpoints = platforms.values().map(|p| p.entity.clone()).chain(commands.values().cloned());
        let channel = MessageChannel::new(endpoints, scenario.links.clone(), seeded_stream(scenario.seed, LINK_STREAM));
        let last_seen = snapshot(&world);
        let mut log = BlackBox::new();
        log.append(
            Tick::ZERO,
            &EntityRef::command(0, "world"),
            Event::ScenarioLoaded {
                name: scenario.name.clone(),
                seed: scenario.seed,
                entities: last_seen.values().cloned().collect(),
            },
        );
        let events = scenario.events.iter().cloned().collect();
        Self {
            scenario,
            world,
            platforms,
            swaps: BTreeMap::new(),
            log,
            factory: KeyFactory::new(),
            channel,
            operator,
            commands,
            events,
            last_seen,
            handoff_attempts: BTreeMap::new(),
        }
    }

    pub fn clock(&self) -> Tick {
        self.world.clock
    }

    /// True once every platform is terminal with no maintenance waiting and
    /// nothing else is in motion.
    pub fn quiescent(&self) -> bool {
        self.platforms
            .values()
            .all(|p| p.state.is_absorbing() || (p.state.is_terminal() && p.maintenance_queue.is_empty()))
            && self.swaps.values().all(|s| s.phase.is_terminal())
            && self.channel.in_transit() == 0
            && self.world.strikes_in_flight().is_empty()
            && self.events.is_empty()
    }

    /// Advance to quiescence or the tick limit.
    pub fn run(&mut self) {
        while !self.quiescent() && self.world.clock.0 < self.scenario.max_ticks {
            self.step();
        }
    }

    /// One tick.
    pub fn step(&mut self) {
        self.step_world();
        self.apply_scenario_events();
        let beacons = self.beacons();
        for p in self.platforms.values_mut() {
            let mut env = PlatformEnv {
                world: &mut self.world,
                factory: &self.factory,
                channel: &mut self.channel,
                operator: &mut self.operator,
                log: &mut self.log,
                beacons: &beacons,
            };
            tick_platform(p, &mut env);
        }
        self.collaborate();
        self.deliver();
        self.record_entity_changes();
    }

    fn step_world(&mut self) {
        for ev in self.world.step_world() {
            let now = self.world.clock;
            match ev {
                WorldEvent::Moved { .. } => {}
                WorldEvent::ScriptApplied { entity, change } => {
                    let actor = self.world.entity(entity).map(|e| e.entity.clone()).expect("scripted entity exists");
                    self.log.append(now, &actor, Event::ScriptApplied { entity, change });
                }
                WorldEvent::StrikeResolved { strike, neutralized } => {
                    if let Some(p) = self.platforms.get_mut(&strike.shooter) {
                        self.log.append(now, &p.entity, Event::StrikeResolved { strike: strike.clone(), neutralized });
                        p.strike_results.push((strike, neutralized));
                    }
                }
            }
        }
    }

    fn apply_scenario_events(&mut self) {
        let now = self.world.clock;
        while self.events.front().is_some_and(|e| e.at <= now) {
            let ev = self.events.pop_front().expect("front exists").event;
            self.apply_event(ev, now);
        }
    }

    fn apply_event(&mut self, ev: ScenarioEvent, now: Tick) {
        match ev {
            ScenarioEvent::FailMobility { platform } => {
                let Some(p) = self.platforms.get_mut(&platform).filter(|p| !p.state.is_absorbing()) else { return };
                p.ctx.mobility = Mobility::Failed;
                if let Some(e) = self.world.entity_mut(platform) {
                    e.velocity = crate::domain::Vec2::ZERO;
                }
                self.log.append(now, &p.entity, Event::MobilityFailed);
            }
            ScenarioEvent::Capture { platform, by } => {
                let Some(p) = self.platforms.get_mut(&platform).filter(|p| !p.state.is_absorbing()) else { return };
                p.ctx.captured_by = by;
                self.log.append(now, &p.entity, Event::Captured { by });
            }
            ScenarioEvent::Ceasefire { from, at } => {
                let Some(cmd) = self.commands.get(&from).cloned() else { return };
                for to in self.platforms.values().map(|p| p.entity.clone()).collect::<Vec<_>>() {
                    send_message(&mut self.channel, &mut self.log, now, &cmd, &to, Message::CeasefireNotice(at));
                }
            }
            ScenarioEvent::Inject { platform, target, tamper } => {
                let Some(p) = self.platforms.get_mut(&platform) else { return };
                let Some(t) = self.world.entity(target) else { return };
                let bytes = forge_key(&t.entity, t.position, now, tamper);
                self.log.append(
                    now,
                    &p.entity,
                    Event::Injected { target, tamper: tamper_name(tamper), bytes: bytes.len() as u32 },
                );
                p.inbox.push(Inbound { from: intruder(), seq: u64::MAX, message: Message::KeyTransfer(bytes) });
            }
            ScenarioEvent::Maintenance { platform, version, forbid } => {
                if let Some(p) = self.platforms.get_mut(&platform) {
                    p.maintenance_queue.push_back(MaintenanceDirective { version, forbid });
                }
            }
            ScenarioEvent::Swap { initiator, acceptor, targets, schedule } => {
                self.start_swap(initiator, acceptor, &targets, schedule);
            }
        }
    }

    /// Self-status keys for every platform still running.
    fn beacons(&mut self) -> BTreeMap<u64, CodifiedKey> {
        let now = self.world.clock;
        let mut out = BTreeMap::new();
        for p in self.platforms.values().filter(|p| !p.state.is_absorbing()) {
            let Some(e) = self.world.entity(p.id()) else { continue };
            let mut cv = CharacteristicVector::empty();
            cv.position = Reading::new(e.position, 1.0);
            cv.movement = Reading::new(e.velocity, 1.0);
            cv.markings = Reading::new(Markings::FRIENDLY_INSIGNIA, 1.0);
            let class = Classification {
                nature: TargetNature::Friendly,
                status: TargetStatus::Active,
                role: CombatRole::Combatant,
                value: TargetValue::ZERO,
                confidence: 1.0,
            };
            if let Ok(k) = self.factory.generate_key(&p.entity, &p.ctx.resources, &p.entity, &cv, &class, now) {
                out.insert(p.id(), k);
            }
        }
        out
    }

    fn start_swap(&mut self, initiator: u64, acceptor: u64, targets: &[u64], schedule: SwapSchedule) {
        let now = self.world.clock;
        let Some(init) = self.platforms.get(&initiator) else { return };
        let id = self.swaps.len() as u64 + 1;
        let Ok(txn) = initiate_swap(id, init, acceptor, targets, schedule, &self.platforms, &self.world) else {
            return;
        };
        let from = init.entity.clone();
        self.log.append(
            now,
            &from,
            Event::SwapPhase {
                swap: id,
                initiator,
                acceptor,
                extra_tracker: txn.extra_tracker,
                phase: txn.phase,
            },
        );
        if !txn.phase.is_terminal() {
            let to = self.platforms[&acceptor].entity.clone();
            for (_, bytes) in &txn.keys {
                send_message(&mut self.channel, &mut self.log, now, &from, &to, Message::KeyTransfer(bytes.clone()));
            }
            let proposal = Message::SwapProposal { swap: id, targets: txn.targets.clone() };
            send_message(&mut self.channel, &mut self.log, now, &from, &to, proposal);
        }
        self.swaps.insert(id, txn);
    }

    fn collaborate(&mut self) {
        let now = self.world.clock;
        let busy: BTreeSet<u64> =
            self.swaps.values().filter(|s| !s.phase.is_terminal()).map(|s| s.initiator).collect();
        let requests: Vec<_> = self
            .platforms
            .values()
            .filter(|p| p.state == PlatformState::Handoff && !busy.contains(&p.id()))
            .filter_map(|p| p.handoff.clone())
            .filter(|r| {
                self.handoff_attempts.get(&r.from).is_none_or(|last| now.saturating_sub(*last) >= SWAP_TIMEOUT)
            })
            .collect();
        for req in requests {
            if let Some(acceptor) = request_collaboration(&req, &self.platforms, &self.world).first() {
                self.handoff_attempts.insert(req.from, now);
                self.start_swap(req.from, *acceptor, &req.targets(), SwapSchedule::Normative);
            }
        }

        for id in self.swaps.keys().copied().collect::<Vec<_>>() {
            let txn = self.swaps.get_mut(&id).expect("listed");
            if txn.phase.is_terminal() {
                continue;
            }
            let changed = advance_swap(txn, now);
            let initiator = self.platforms[&txn.initiator].entity.clone();
            for c in txn.latest_custody() {
                self.log.append(
                    now,
                    &initiator,
                    Event::Custody { swap: id, target: c.target, holders: c.holders.iter().copied().collect() },
                );
            }
            let Some(phase) = changed else { continue };
            let txn = self.swaps[&id].clone();
            self.log.append(
                now,
                &initiator,
                Event::SwapPhase {
                    swap: id,
                    initiator: txn.initiator,
                    acceptor: txn.acceptor,
                    extra_tracker: txn.extra_tracker,
                    phase,
                },
            );
            if phase == SwapPhase::Complete {
                self.complete_swap(&txn);
            }
        }
    }

    fn complete_swap(&mut self, txn: &SwapTransaction) {
        let now = self.world.clock;
        let init = self.platforms.get_mut(&txn.initiator).expect("initiator exists");
        for t in &txn.targets {
            if !init.dispositions.contains_key(t) {
                init.dispositions.insert(*t, Disposition::HandedOff);
                self.log.append(now, &init.entity, Event::Disposition { target: *t, disposition: Disposition::HandedOff });
            }
        }
        let from = init.entity.clone();
        let acc = self.platforms.get_mut(&txn.acceptor).expect("acceptor exists");
        acc.ctx.cfg.preplanned_targets.extend(txn.targets.iter().copied());
        if acc.state == PlatformState::MissionComplete {
            self.log.append(
                now,
                &acc.entity,
                Event::StateChanged { from: PlatformState::MissionComplete, to: PlatformState::Maintenance },
            );
            acc.state = PlatformState::Maintenance;
        }
        let to = acc.entity.clone();
        send_message(&mut self.channel, &mut self.log, now, &from, &to, Message::SwapComplete { swap: txn.id });
    }

    fn deliver(&mut self) {
        let now = self.world.clock;
        for env in self.channel.due(now) {
            let kind = env.message.kind().to_string();
            self.log.append(now, &env.to, Event::MessageDelivered { seq: env.seq, from: env.from.id, kind });
            if let Message::SwapAccept { swap } = env.message {
                if let Some(txn) = self.swaps.get_mut(&swap).filter(|t| t.initiator == env.to.id) {
                    txn.acknowledge();
                }
                continue;
            }
            if let Some(p) = self.platforms.get_mut(&env.to.id) {
                p.inbox.push(Inbound { from: env.from, seq: env.seq, message: env.message });
            }
        }
    }

    fn record_entity_changes(&mut self) {
        let now = self.world.clock;
        let current = snapshot(&self.world);
        for (id, s) in &current {
            if self.last_seen.get(id) != Some(s) {
                self.log.append(now, &s.entity, Event::EntityUpdate(s.clone()));
            }
        }
        self.last_seen = current;
    }

    /// Summary from the log, with the figures the log only implies taken
    /// from live state instead.
    pub fn summary(&self) -> Summary {
        let mut s = summarize(self.log.records()).expect("a run always logs its scenario");
        s.platforms = self.platforms.iter().map(|(id, p)| (*id, p.state.name().to_string())).collect();
        s.neutralized = self.world.entities.values().filter(|e| e.neutralized).map(|e| e.entity.id).collect();
        s.swaps = self.swaps.iter().map(|(id, t)| (*id, t.phase.name())).collect();
        s.custody_violations = self.swaps.values().map(|t| custody_violations(t).len() as u64).sum();
        s
    }

    pub fn report(&self) -> ComplianceReport {
        ComplianceReport::from_summary(&self.summary())
    }
}

fn tamper_name(t: Tamper) -> String {
    match t {
        Tamper::Flip { offset } => format!("flip {offset}"),
        Tamper::Stale { age } => format!("stale {age}"),
        Tamper::Range => "range".into(),
    }
}

/// A key claiming the target is firing a weapon, damaged as requested.
/// Forged keys never pass through the factory.
pub fn forge_key(target: &EntityRef, position: crate::domain::Vec2, now: Tick, tamper: Tamper) -> EncodedKey {
    let mut cv = CharacteristicVector::empty();
    cv.position = Reading::new(position, 0.95);
    cv.activity = Reading::new(Activity::FIRING, 0.95);
    cv.possession = Reading::new(Possession::WEAPON, 0.95);
    let timestamp = match tamper {
        Tamper::Stale { age } => Tick(now.0.saturating_sub(age)),
        _ => now,
    };
    if tamper == Tamper::Range {
        cv.activity.confidence = 2.0;
    }
    let key = CodifiedKey {
        weapon_id: intruder().id,
        weapon_name: intruder().name,
        target_id: target.id,
        target_name: target.name.clone(),
        nature: TargetNature::Hostile,
        timestamp,
        characteristics: cv,
        status: TargetStatus::Active,
        role: CombatRole::Combatant,
        value: TargetValue::new(10.0, 0.0, 30.0),
        resources: Default::default(),
        vicinity_targets: vec![],
        vicinity_friendlies: vec![],
    };
    let mut bytes = encode_key(&key);
    if let Tamper::Flip { offset } = tamper {
        let i = offset % bytes.0.len();
        bytes.0[i] ^= 0xFF;
    }
    bytes
}

/// Counts an operator reviews after a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub scenario: String,
    pub seed: u64,
    pub final_tick: u64,
    pub blocks: u64,
    pub clashes: u64,
    pub aborts: u64,
    pub malfunction_lockouts: u64,
    pub referrals: u64,
    pub referrals_approved: u64,
    pub referrals_denied: u64,
    pub custody_violations: u64,
    pub quarantines: u64,
    pub attacks_executed: BTreeMap<u64, u64>,
    pub attacks_from_faulted_keys: u64,
    pub dispatched: BTreeMap<String, u64>,
    pub platforms: BTreeMap<u64, String>,
    pub swaps: BTreeMap<u64, String>,
    pub neutralized: Vec<u64>,
}

impl ComplianceReport {
    pub fn from_summary(s: &Summary) -> Self {
        Self {
            scenario: s.scenario.clone(),
            seed: s.seed,
            final_tick: s.final_tick,
            blocks: s.dispatched(ActionKind::Block),
            clashes: s.clashes,
            aborts: s.dispatched(ActionKind::AbortEngagement),
            malfunction_lockouts: s.dispatched(ActionKind::MalfunctionLockout),
            referrals: s.referrals,
            referrals_approved: s.referrals_approved,
            referrals_denied: s.referrals_denied,
            custody_violations: s.custody_violations,
            quarantines: s.quarantines,
            attacks_executed: s.executed_attacks.clone(),
            attacks_from_faulted_keys: s.attacks_from_faulted_keys,
            dispatched: s.dispatched.clone(),
            platforms: s.platforms.clone(),
            swaps: s.swaps.clone(),
            neutralized: s.neutralized.iter().copied().collect(),
        }
    }
}

/// Run a scenario to the end.
pub fn run_scenario(scenario: Scenario, operator: Operator) -> Run {
    let mut run = Run::new(scenario, operator);
    run.run();
    run
}
