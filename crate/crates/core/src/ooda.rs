//! Per-platform mission executive: search, acquire, classify, engage,
//! assess, hand off, learn, maintain.
//!
//! One call to [`tick_platform`] advances a platform by exactly one state
//! step. Every key it generates goes through replication, rule collection
//! and dispatch, and everything is written to the black box.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blackbox::BlackBox;
use crate::codec::decode_key;
use crate::command::{ceasefire_in_effect, handle_clash, Decision, Message, MessageChannel, Operator, RouteOutcome};
use crate::domain::{
    classify_target, gate_characteristics, select_response, Channel, Classification, Clause, EntityKind,
    EntityRef, MissionConfig, MunitionKind, ResourceState, ResponseError, TargetNature, TargetStatus, Tick,
    Vec2,
};
use crate::events::Event;
use crate::key::{embed_vicinity, CodifiedKey, KeyFactory, KeyTriple};
use crate::sim::{BattleSpace, SensorSpec, Strike};
use crate::switch::{
    collect_invocations, dispatch, key_classification, replicate_key, Action, ActionKind, ActionState,
    CapturedBy, DispatchOutcome, Invocation, Mobility, PlatformContext,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlatformState {
    Inactive,
    Searching,
    Acquiring,
    Classifying,
    Engaging,
    Assessing,
    Handoff,
    Learning,
    Maintenance,
    MissionComplete,
    Disarmed,
    Destroyed,
    Deactivated,
}

impl PlatformState {
    pub fn name(self) -> &'static str {
        match self {
            PlatformState::Inactive => "Inactive",
            PlatformState::Searching => "Searching",
            PlatformState::Acquiring => "Acquiring",
            PlatformState::Classifying => "Classifying",
            PlatformState::Engaging => "Engaging",
            PlatformState::Assessing => "Assessing",
            PlatformState::Handoff => "Handoff",
            PlatformState::Learning => "Learning",
            PlatformState::Maintenance => "Maintenance",
            PlatformState::MissionComplete => "MissionComplete",
            PlatformState::Disarmed => "Disarmed",
            PlatformState::Destroyed => "Destroyed",
            PlatformState::Deactivated => "Deactivated",
        }
    }

    /// Terminal within a mission. Only MissionComplete can be left, and only
    /// through Maintenance or a ceasefire deactivation.
    pub fn is_terminal(self) -> bool {
        self == PlatformState::MissionComplete || self.is_absorbing()
    }

    /// Terminal for good.
    pub fn is_absorbing(self) -> bool {
        matches!(self, PlatformState::Disarmed | PlatformState::Destroyed | PlatformState::Deactivated)
    }

    /// States in which a platform may be handed another platform's targets.
    pub fn accepts_tasking(self) -> bool {
        matches!(
            self,
            PlatformState::Searching
                | PlatformState::Acquiring
                | PlatformState::Classifying
                | PlatformState::Learning
                | PlatformState::MissionComplete
        )
    }
}

/// What became of a target, from one platform's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Disposition {
    Neutralized,
    Aborted,
    Surrendered,
    HandedOff,
    Blocked,
    Denied,
}

impl Disposition {
    /// Dispositions that take a target out of the search rotation.
    /// Surrendered targets stay in it so a broken surrender is noticed.
    pub fn excludes_from_search(self) -> bool {
        self != Disposition::Surrendered
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BdaVerdict {
    Neutralized,
    StillHostile,
    Undetermined,
}

/// Compare keys taken before and after an engagement.
///
/// # Panics
///
/// If the keys are for different targets or `post` is not newer than `pre`.
pub fn battle_damage_assessment(pre: &CodifiedKey, post: &CodifiedKey) -> BdaVerdict {
    assert_eq!(pre.target_id, post.target_id, "assessment keys must share a target");
    assert!(post.timestamp > pre.timestamp, "assessment key must be newer than the engagement key");
    match (post.status, post.nature) {
        (TargetStatus::Neutralized, _) => BdaVerdict::Neutralized,
        (TargetStatus::Active, TargetNature::Hostile) => BdaVerdict::StillHostile,
        _ => BdaVerdict::Undetermined,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandoffRequest {
    pub from: u64,
    pub munition: MunitionKind,
    pub keys: Vec<CodifiedKey>,
}

impl HandoffRequest {
    pub fn targets(&self) -> Vec<u64> {
        self.keys.iter().map(|k| k.target_id).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HandoffDecision {
    MissionComplete,
    Handoff(HandoffRequest),
    /// Targets remain and this platform can still engage them.
    Continue,
}

/// Decide whether the mission is over, or which targets need a platform
/// with a payload this one lacks.
pub fn complete_or_handoff(p: &WeaponPlatform) -> HandoffDecision {
    let unresolved: Vec<u64> = p.assigned_unresolved();
    if unresolved.is_empty() {
        return HandoffDecision::MissionComplete;
    }
    let mut needs: BTreeMap<MunitionKind, Vec<CodifiedKey>> = BTreeMap::new();
    for t in unresolved {
        let Some(k) = p.latest_keys.get(&t) else { continue };
        let class = Classification { nature: TargetNature::Hostile, ..key_classification(k) };
        if let Err(ResponseError::NoFeasibleResponse(m)) = select_response(&class, &p.ctx.cfg, &p.ctx.resources) {
            needs.entry(m).or_default().push(k.stripped());
        }
    }
    match needs.into_iter().next() {
        Some((munition, keys)) => HandoffDecision::Handoff(HandoffRequest { from: p.entity.id, munition, keys }),
        None => HandoffDecision::Continue,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaintenanceError {
    #[error("maintenance requested while {0:?}")]
    NotInMaintenance(PlatformState),
    #[error("ruleset version {requested} does not follow {current}")]
    VersionSkew { current: u32, requested: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaintenanceDirective {
    pub version: u32,
    pub forbid: Vec<Clause>,
}

/// Bring a new ruleset version on line. Constraints are only ever added.
pub fn maintenance_update(p: &mut WeaponPlatform, version: u32, forbid: Vec<Clause>) -> Result<(), MaintenanceError> {
    if p.state != PlatformState::Maintenance {
        return Err(MaintenanceError::NotInMaintenance(p.state));
    }
    let current = p.ctx.cfg.ruleset_version;
    if version != current + 1 {
        return Err(MaintenanceError::VersionSkew { current, requested: version });
    }
    p.ctx.cfg.forbidden.extend(forbid);
    p.ctx.cfg.ruleset_version = version;
    p.state = PlatformState::Searching;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inbound {
    pub from: EntityRef,
    pub seq: u64,
    pub message: Message,
}

#[derive(Debug, Clone, PartialEq)]
struct BdaProgress {
    pre: CodifiedKey,
    retried: bool,
}

#[derive(Debug, Clone)]
pub struct WeaponPlatform {
    pub entity: EntityRef,
    pub state: PlatformState,
    pub ctx: PlatformContext,
    pub sensor: SensorSpec,
    pub activation: Tick,
    pub focus: Option<u64>,
    pub dispositions: BTreeMap<u64, Disposition>,
    /// Most recent depth-0 key this platform generated per target.
    pub latest_keys: BTreeMap<u64, CodifiedKey>,
    pub last_examined: BTreeMap<u64, Tick>,
    pub inbox: Vec<Inbound>,
    pub strike_results: Vec<(Strike, bool)>,
    pub maintenance_queue: VecDeque<MaintenanceDirective>,
    pub clash_wait: Option<KeyTriple>,
    pub handoff: Option<HandoffRequest>,
    bda: Option<BdaProgress>,
    key_cache: BTreeMap<u64, CodifiedKey>,
}

/// Everything outside the platform that a tick touches.
pub struct PlatformEnv<'a> {
    pub world: &'a mut BattleSpace,
    pub factory: &'a KeyFactory,
    pub channel: &'a mut MessageChannel,
    pub operator: &'a mut Operator,
    pub log: &'a mut BlackBox,
    /// This tick's self-status key of every platform still running.
    pub beacons: &'a BTreeMap<u64, CodifiedKey>,
}

/// Route a message and record what became of it.
pub fn send_message(
    channel: &mut MessageChannel,
    log: &mut BlackBox,
    now: Tick,
    from: &EntityRef,
    to: &EntityRef,
    message: Message,
) {
    let kind = message.kind().to_string();
    match channel.route_message(message, from, to, now) {
        Ok(RouteOutcome::Queued { seq, deliver_at }) => {
            log.append(now, from, Event::MessageSent { seq, to: to.id, kind, deliver_at });
        }
        Ok(RouteOutcome::Lost { seq }) => {
            log.append(now, from, Event::MessageSent { seq, to: to.id, kind: kind.clone(), deliver_at: now });
            log.append(now, from, Event::MessageLost { seq, to: to.id, kind });
        }
        Err(e) => panic!("runner routed a message it should not have: {e}"),
    }
}

impl WeaponPlatform {
    pub fn new(
        entity: EntityRef,
        cfg: MissionConfig,
        resources: ResourceState,
        position: Vec2,
        sensor: SensorSpec,
        activation: Tick,
    ) -> Self {
        Self {
            entity,
            state: PlatformState::Inactive,
            ctx: PlatformContext::new(cfg, resources, position),
            sensor,
            activation,
            focus: None,
            dispositions: BTreeMap::new(),
            latest_keys: BTreeMap::new(),
            last_examined: BTreeMap::new(),
            inbox: Vec::new(),
            strike_results: Vec::new(),
            maintenance_queue: VecDeque::new(),
            clash_wait: None,
            handoff: None,
            bda: None,
            key_cache: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> u64 {
        self.entity.id
    }

    pub fn free(&self) -> bool {
        self.ctx.mobility == Mobility::Operational && self.ctx.captured_by == CapturedBy::None
    }

    pub fn payloads(&self) -> BTreeSet<MunitionKind> {
        self.ctx.resources.weapons.iter().filter(|(_, n)| **n > 0).map(|(k, _)| k.clone()).collect()
    }

    /// Preplanned targets without a settled disposition.
    pub fn assigned_unresolved(&self) -> Vec<u64> {
        self.ctx
            .cfg
            .preplanned_targets
            .iter()
            .filter(|t| !self.dispositions.contains_key(t))
            .copied()
            .collect()
    }

    fn emit(&self, env: &mut PlatformEnv, event: Event) {
        env.log.append(env.world.clock, &self.entity, event);
    }

    fn set_state(&mut self, env: &mut PlatformEnv, to: PlatformState) {
        if self.state != to {
            self.emit(env, Event::StateChanged { from: self.state, to });
            self.state = to;
        }
    }

    fn settle(&mut self, env: &mut PlatformEnv, target: u64, d: Disposition) {
        if self.dispositions.get(&target) != Some(&d) {
            self.dispositions.insert(target, d);
            self.emit(env, Event::Disposition { target, disposition: d });
        }
    }

    fn in_range(&self, env: &PlatformEnv, id: u64) -> bool {
        env.world
            .entity(id)
            .is_some_and(|e| e.position.distance(self.ctx.position) <= self.sensor.range)
    }

    fn targets_in_range(&self, env: &PlatformEnv) -> Vec<u64> {
        env.world
            .of_kind(EntityKind::Target)
            .filter(|e| e.position.distance(self.ctx.position) <= self.sensor.range)
            .map(|e| e.entity.id)
            .collect()
    }

    /// Sense and key a target, at most once per target per tick.
    fn sense_key(&mut self, env: &mut PlatformEnv, target: u64) -> Option<CodifiedKey> {
        if let Some(k) = self.key_cache.get(&target) {
            return Some(k.clone());
        }
        let tref = env.world.entity(target)?.entity.clone();
        let cv = env.world.sense(&self.sensor, self.ctx.position, target);
        let gated = gate_characteristics(&cv, &self.ctx.cfg.thresholds);
        let class = classify_target(&gated, &self.ctx.cfg);
        let now = env.world.clock;
        match env.factory.generate_key(&self.entity, &self.ctx.resources, &tref, &gated, &class, now) {
            Ok(k) => {
                self.emit(env, Event::KeyGenerated { key: k.clone() });
                self.key_cache.insert(target, k.clone());
                self.latest_keys.insert(target, k.clone());
                Some(k)
            }
            Err(e) => {
                self.emit(env, Event::KeyRefused { target, reason: e.to_string() });
                None
            }
        }
    }

    fn friendlies_in_range(&self, env: &PlatformEnv) -> Vec<CodifiedKey> {
        env.beacons
            .iter()
            .filter(|(id, _)| **id != self.entity.id && self.in_range(env, **id))
            .map(|(_, k)| k.clone())
            .collect()
    }

    /// Attach other in-range targets' latest keys and in-range friendlies.
    fn with_vicinity(&self, env: &PlatformEnv, key: &CodifiedKey) -> CodifiedKey {
        let now = env.world.clock;
        let nearby: Vec<CodifiedKey> = self
            .targets_in_range(env)
            .into_iter()
            .filter(|t| *t != key.target_id)
            .filter_map(|t| self.latest_keys.get(&t))
            .filter(|k| now.saturating_sub(k.timestamp) <= self.ctx.staleness_limit)
            .cloned()
            .collect();
        embed_vicinity(key, &nearby, &self.friendlies_in_range(env)).expect("vicinity keys are depth 0")
    }

    fn focus_key(&mut self, env: &mut PlatformEnv) -> Option<CodifiedKey> {
        let target = self.focus?;
        let k = self.sense_key(env, target)?;
        Some(self.with_vicinity(env, &k))
    }

    /// Replicate, evaluate and dispatch one key.
    fn process_key(&mut self, env: &mut PlatformEnv, key: CodifiedKey, observe: bool) -> DispatchOutcome {
        let receipt = replicate_key(&key);
        self.emit(env, Event::Replicated { key: receipt.key, copies: receipt.deliveries.len() as u32 });
        let invs = collect_invocations(&key, &self.ctx);
        self.emit(
            env,
            Event::Evaluated {
                key: key.clone(),
                context: Box::new(self.ctx.clone()),
                rules: invs.iter().map(|i| i.rule).collect(),
            },
        );
        if let Some(clash) = self.clash_wait.take() {
            self.emit(env, Event::ClashResolved { clash, by: key.triple() });
        }
        let outcome = dispatch(invs, &mut self.ctx);
        match &outcome {
            DispatchOutcome::NoMatch => self.emit(env, Event::NoMatch { key: key.triple() }),
            DispatchOutcome::KeyClash(invs) => self.on_clash(env, invs),
            DispatchOutcome::ActionDispatched(a) => {
                self.emit(env, Event::Dispatched { action: a.clone() });
                self.apply(env, a.clone());
            }
        }
        if observe && key.target_id != self.entity.id {
            self.ctx.observe(key.target_id, key.characteristics.clone());
        }
        outcome
    }

    fn on_clash(&mut self, env: &mut PlatformEnv, invs: &[Invocation]) {
        let before = self.ctx.pending.clone();
        let record = handle_clash(invs, self.ctx.pending.as_mut());
        if let (Some(b), Some(after)) = (before, self.ctx.pending.clone()) {
            if b.state != after.state {
                self.emit(
                    env,
                    Event::ActionTransition {
                        action: after.id(),
                        kind: after.kind,
                        target: after.target,
                        from: b.state,
                        to: after.state,
                    },
                );
                self.drop_strike(env, &after);
                self.ctx.pending = None;
            }
        }
        self.clash_wait = Some(record.key);
        self.emit(env, Event::Clash(record));
        if matches!(
            self.state,
            PlatformState::Classifying | PlatformState::Engaging | PlatformState::Assessing
        ) {
            self.set_state(env, PlatformState::Acquiring);
        }
    }

    fn drop_strike(&mut self, env: &mut PlatformEnv, a: &Action) {
        if let Some(s) = env.world.abort(a.id()) {
            self.emit(env, Event::StrikeAborted(s));
        }
        if self.ctx.engagement_in_flight.as_ref().is_some_and(|(t, _)| Some(*t) == a.target) {
            self.ctx.engagement_in_flight = None;
        }
    }

    /// Move the pending action to `to` if it is still active.
    fn end_pending(&mut self, env: &mut PlatformEnv, to: ActionState, only_invoked: bool) -> bool {
        let Some(mut a) = self.ctx.pending.clone() else { return false };
        if !a.state.is_active() || (only_invoked && a.state != ActionState::Invoked) {
            return false;
        }
        let from = a.state;
        a.transition(to).expect("active actions can end");
        self.emit(env, Event::ActionTransition { action: a.id(), kind: a.kind, target: a.target, from, to });
        self.drop_strike(env, &a);
        self.ctx.pending = None;
        true
    }

    fn terminate(&mut self, env: &mut PlatformEnv, to: PlatformState) {
        self.end_pending(env, ActionState::Cancelled, false);
        if let Some(e) = env.world.entity_mut(self.entity.id) {
            e.velocity = Vec2::ZERO;
            if to == PlatformState::Destroyed {
                e.alive = false;
            }
        }
        self.focus = None;
        self.set_state(env, to);
    }

    fn enter_learning_if_focus(&mut self, env: &mut PlatformEnv, target: Option<u64>) {
        if target.is_some() && target == self.focus {
            self.set_state(env, PlatformState::Learning);
        }
    }

    fn apply(&mut self, env: &mut PlatformEnv, a: Action) {
        use ActionKind::*;
        match a.kind {
            PreProgrammedAttack | CounterAttack | GotchaAttack => {
                self.focus = a.target;
                self.set_state(env, PlatformState::Engaging);
            }
            OperatorReferral => {
                let decision = env.operator.decide(&a);
                self.emit(env, Event::ReferralDecision { action: a.id(), decision });
                match decision {
                    Decision::Approve => {
                        self.focus = a.target;
                        self.set_state(env, PlatformState::Engaging);
                    }
                    Decision::Deny => {
                        self.end_pending(env, ActionState::Cancelled, false);
                        if let Some(t) = a.target {
                            self.settle(env, t, Disposition::Denied);
                        }
                        self.enter_learning_if_focus(env, a.target);
                    }
                }
            }
            Block => {
                if let Some(t) = a.target {
                    self.settle(env, t, Disposition::Blocked);
                }
                self.enter_learning_if_focus(env, a.target);
            }
            Disarm => self.terminate(env, PlatformState::Disarmed),
            SelfDestruct => self.terminate(env, PlatformState::Destroyed),
            Deactivate => self.terminate(env, PlatformState::Deactivated),
            TrackOnly => {
                let t = a.target.expect("track-only names its target");
                self.ctx.surrender_latch.insert(t);
                if self.ctx.active_pending().is_some_and(|p| p.target == Some(t)) {
                    self.end_pending(env, ActionState::Cancelled, false);
                }
                self.settle(env, t, Disposition::Surrendered);
                self.enter_learning_if_focus(env, a.target);
            }
            AbortEngagement => {
                self.end_pending(env, ActionState::Cancelled, false);
                if let Some(t) = a.target {
                    self.settle(env, t, Disposition::Aborted);
                }
                self.set_state(env, PlatformState::Learning);
            }
            MalfunctionLockout => {
                if self.end_pending(env, ActionState::Cancelled, true) {
                    self.set_state(env, PlatformState::Acquiring);
                }
            }
            Noted => {}
            CancelPending => {
                self.end_pending(env, ActionState::Cancelled, false);
                self.set_state(env, PlatformState::Acquiring);
            }
        }
    }

    fn handle_strikes(&mut self, env: &mut PlatformEnv) {
        for (strike, _) in std::mem::take(&mut self.strike_results) {
            let Some(mut a) = self.ctx.pending.clone() else { continue };
            if a.id() != strike.id || a.state != ActionState::Executing {
                continue;
            }
            a.transition(ActionState::Executed).expect("executing actions complete");
            self.emit(
                env,
                Event::ActionTransition {
                    action: a.id(),
                    kind: a.kind,
                    target: a.target,
                    from: ActionState::Executing,
                    to: ActionState::Executed,
                },
            );
            self.ctx.pending = None;
            self.ctx.engagement_in_flight = None;
            self.bda = self.latest_keys.get(&strike.target).map(|k| BdaProgress { pre: k.clone(), retried: false });
            self.focus = Some(strike.target);
            self.set_state(env, PlatformState::Assessing);
        }
    }

    fn handle_inbox(&mut self, env: &mut PlatformEnv) {
        for inbound in std::mem::take(&mut self.inbox) {
            if self.state.is_absorbing() {
                break;
            }
            let now = env.world.clock;
            match inbound.message {
                Message::KeyTransfer(bytes) => match decode_key(bytes.as_bytes()) {
                    Err(faults) => self.emit(env, Event::Quarantined { from: inbound.from.id, faults }),
                    Ok(k) => {
                        self.emit(env, Event::KeyReceived { from: inbound.from.id, key: k.clone() });
                        if matches!(self.state, PlatformState::Inactive | PlatformState::MissionComplete) {
                            continue;
                        }
                        self.process_key(env, k, true);
                    }
                },
                Message::CeasefireNotice(at) => {
                    let t = self.ctx.cfg.ceasefire_timetable.map_or(at, |old| old.min(at));
                    self.ctx.cfg.ceasefire_timetable = Some(t);
                    self.emit(env, Event::CeasefireSet { at: t });
                }
                Message::SwapProposal { swap, .. } => {
                    send_message(env.channel, env.log, now, &self.entity, &inbound.from, Message::SwapAccept { swap });
                }
                Message::SwapAccept { .. } | Message::SwapComplete { .. } => {}
            }
        }
    }

    /// Evaluate this tick's self-status key, with a fresh sweep of nearby
    /// targets as its vicinity.
    fn self_check(&mut self, env: &mut PlatformEnv) {
        let Some(beacon) = env.beacons.get(&self.entity.id).cloned() else { return };
        let sweep: Vec<CodifiedKey> = self
            .targets_in_range(env)
            .into_iter()
            .filter_map(|t| self.sense_key(env, t))
            .collect();
        let friendlies = self.friendlies_in_range(env);
        let key = embed_vicinity(&beacon, &sweep, &friendlies).expect("sweep keys are depth 0");
        self.process_key(env, key, false);
    }

    fn pick_candidate(&self, env: &PlatformEnv) -> Option<u64> {
        let preplanned = &self.ctx.cfg.preplanned_targets;
        self.targets_in_range(env)
            .into_iter()
            .filter(|t| self.dispositions.get(t).is_none_or(|d| !d.excludes_from_search()))
            .min_by(|a, b| {
                let rank = |t: &u64| {
                    (
                        self.last_examined.get(t).map_or(-1, |x| x.0 as i128),
                        !preplanned.contains(t),
                    )
                };
                let dist = |t: &u64| env.world.entity(*t).map_or(f64::INFINITY, |e| e.position.distance(self.ctx.position));
                rank(a).cmp(&rank(b)).then(dist(a).total_cmp(&dist(b))).then(a.cmp(b))
            })
    }

    fn launch(&mut self, env: &mut PlatformEnv) {
        let Some(mut a) = self.ctx.pending.clone() else { return };
        let (Some(target), Some(munition)) = (a.target, a.munition.clone()) else { return };
        if self.ctx.resources.fire(&munition).is_err() {
            self.end_pending(env, ActionState::Cancelled, false);
            self.set_state(env, PlatformState::Learning);
            return;
        }
        a.transition(ActionState::Executing).expect("invoked actions can execute");
        self.emit(
            env,
            Event::ActionTransition {
                action: a.id(),
                kind: a.kind,
                target: a.target,
                from: ActionState::Invoked,
                to: ActionState::Executing,
            },
        );
        let strike = env.world.launch(a.id(), self.entity.id, target, munition.clone());
        self.emit(env, Event::StrikeLaunched(strike));
        self.ctx.engagement_in_flight = Some((target, munition));
        self.ctx.pending = Some(a);
    }

    fn step(&mut self, env: &mut PlatformEnv) {
        let now = env.world.clock;
        match self.state {
            PlatformState::Inactive => {
                if now >= self.activation {
                    self.set_state(env, PlatformState::Searching);
                }
            }
            PlatformState::Searching => {
                if !self.maintenance_queue.is_empty() {
                    self.set_state(env, PlatformState::Maintenance);
                } else if let Some(t) = self.pick_candidate(env) {
                    self.focus = Some(t);
                    self.last_examined.insert(t, now);
                    self.set_state(env, PlatformState::Acquiring);
                }
            }
            PlatformState::Acquiring => {
                let acquired = self.focus.filter(|t| self.in_range(env, *t)).is_some_and(|t| {
                    let cv = env.world.sense(&self.sensor, self.ctx.position, t);
                    let gated = gate_characteristics(&cv, &self.ctx.cfg.thresholds);
                    Channel::ALL.iter().any(|c| gated.observed(*c))
                });
                if acquired {
                    self.set_state(env, PlatformState::Classifying);
                } else {
                    self.focus = None;
                    self.set_state(env, PlatformState::Searching);
                }
            }
            PlatformState::Classifying => {
                let Some(key) = self.focus_key(env) else {
                    self.set_state(env, PlatformState::Searching);
                    return;
                };
                let outcome = self.process_key(env, key.clone(), true);
                if self.state != PlatformState::Classifying {
                    return;
                }
                let stuck = matches!(outcome, DispatchOutcome::NoMatch)
                    && key.nature == TargetNature::Hostile
                    && self.ctx.cfg.preplanned_targets.contains(&key.target_id)
                    && matches!(complete_or_handoff(self), HandoffDecision::Handoff(_));
                self.set_state(env, if stuck { PlatformState::Handoff } else { PlatformState::Learning });
            }
            PlatformState::Engaging => {
                if let Some(key) = self.focus_key(env) {
                    self.process_key(env, key, true);
                }
                if self.state != PlatformState::Engaging {
                    return;
                }
                match self.ctx.active_pending().map(|a| a.state) {
                    Some(ActionState::Invoked) => self.launch(env),
                    Some(_) => {}
                    None => self.set_state(env, PlatformState::Learning),
                }
            }
            PlatformState::Assessing => {
                let (Some(target), Some(progress)) = (self.focus, self.bda.clone()) else {
                    self.set_state(env, PlatformState::Learning);
                    return;
                };
                let Some(post) = self.sense_key(env, target) else {
                    self.set_state(env, PlatformState::Handoff);
                    return;
                };
                let verdict = battle_damage_assessment(&progress.pre, &post);
                self.emit(env, Event::BdaVerdict { target, verdict });
                match verdict {
                    BdaVerdict::Neutralized => {
                        self.bda = None;
                        self.settle(env, target, Disposition::Neutralized);
                        self.set_state(env, PlatformState::Learning);
                    }
                    BdaVerdict::StillHostile => {
                        self.bda = None;
                        self.set_state(env, PlatformState::Classifying);
                    }
                    BdaVerdict::Undetermined if !progress.retried => {
                        self.bda = Some(BdaProgress { retried: true, ..progress });
                    }
                    BdaVerdict::Undetermined => {
                        self.bda = None;
                        self.set_state(env, PlatformState::Handoff);
                    }
                }
            }
            PlatformState::Handoff => match complete_or_handoff(self) {
                HandoffDecision::MissionComplete => {
                    self.handoff = None;
                    self.emit(env, Event::MissionComplete);
                    self.set_state(env, PlatformState::MissionComplete);
                }
                HandoffDecision::Handoff(req) => {
                    if self.handoff.as_ref().map(HandoffRequest::targets) != Some(req.targets()) {
                        self.emit(
                            env,
                            Event::HandoffRequested { munition: req.munition.clone(), targets: req.targets() },
                        );
                    }
                    self.handoff = Some(req);
                }
                HandoffDecision::Continue => {
                    self.handoff = None;
                    self.set_state(env, PlatformState::Learning);
                }
            },
            PlatformState::Learning => {
                self.focus = None;
                let preplanned = &self.ctx.cfg.preplanned_targets;
                if !preplanned.is_empty() && self.assigned_unresolved().is_empty() {
                    self.emit(env, Event::MissionComplete);
                    self.set_state(env, PlatformState::MissionComplete);
                } else {
                    self.set_state(env, PlatformState::Searching);
                }
            }
            PlatformState::Maintenance => {
                if let Some(d) = self.maintenance_queue.pop_front() {
                    let added = d.forbid.clone();
                    match maintenance_update(self, d.version, d.forbid) {
                        Ok(()) => {
                            self.emit(env, Event::MaintenanceApplied { version: d.version, added });
                            self.emit(
                                env,
                                Event::StateChanged { from: PlatformState::Maintenance, to: self.state },
                            );
                            return;
                        }
                        Err(e) => self.emit(env, Event::MaintenanceRejected { reason: e.to_string() }),
                    }
                }
                self.set_state(env, PlatformState::Searching);
            }
            PlatformState::MissionComplete => {
                if !self.maintenance_queue.is_empty() {
                    self.set_state(env, PlatformState::Maintenance);
                }
            }
            PlatformState::Disarmed | PlatformState::Destroyed | PlatformState::Deactivated => {}
        }
    }
}

/// Advance one platform by one step.
pub fn tick_platform(p: &mut WeaponPlatform, env: &mut PlatformEnv) {
    if p.state.is_absorbing() {
        p.inbox.clear();
        p.strike_results.clear();
        return;
    }
    p.ctx.clock = env.world.clock;
    if let Some(e) = env.world.entity(p.entity.id) {
        p.ctx.position = e.position;
    }
    p.key_cache.clear();
    p.handle_strikes(env);
    p.handle_inbox(env);
    if p.state.is_absorbing() {
        return;
    }
    if !p.free() || ceasefire_in_effect(env.world.clock, &p.ctx.cfg) {
        p.self_check(env);
        if p.state.is_absorbing() {
            return;
        }
    }
    p.step(env);
}
