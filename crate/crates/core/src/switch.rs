//! The fourteen switching rules, key replication and single-rule dispatch.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{verify_key, DEFAULT_STALENESS_LIMIT};
use crate::domain::{
    classify_target, hostility_score, select_response, Activity, Acoustics, CharacteristicVector,
    Classification, CombatRole, MissionConfig, MunitionKind, ResourceState, TargetNature, Tick,
    Vec2,
};
use crate::key::{CodifiedKey, KeyTriple};

/// Default radius, in distance units, inside which a non-combatant forbids
/// self-destruction.
pub const DEFAULT_SAFETY_RADIUS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SwitchRuleId(u8);

impl SwitchRuleId {
    pub const PREPROGRAMMED_ATTACK: SwitchRuleId = SwitchRuleId(1);
    pub const OPERATOR_REFERRAL: SwitchRuleId = SwitchRuleId(2);
    pub const FORBIDDEN: SwitchRuleId = SwitchRuleId(3);
    pub const ATTACK_AGGRESSOR: SwitchRuleId = SwitchRuleId(4);
    pub const DISARM: SwitchRuleId = SwitchRuleId(5);
    pub const SELF_DESTRUCT_IMMOBILE: SwitchRuleId = SwitchRuleId(6);
    pub const SELF_DESTRUCT_CAPTURED: SwitchRuleId = SwitchRuleId(7);
    pub const SURRENDERED: SwitchRuleId = SwitchRuleId(8);
    pub const GOTCHA: SwitchRuleId = SwitchRuleId(9);
    pub const MISTAKEN_ABORT: SwitchRuleId = SwitchRuleId(10);
    pub const CEASEFIRE: SwitchRuleId = SwitchRuleId(11);
    pub const FAULT_LOCKOUT: SwitchRuleId = SwitchRuleId(12);
    pub const BYPASS: SwitchRuleId = SwitchRuleId(13);
    pub const OVERRIDE: SwitchRuleId = SwitchRuleId(14);

    pub fn new(n: u8) -> Option<Self> {
        (1..=14).contains(&n).then_some(SwitchRuleId(n))
    }

    pub fn number(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = SwitchRuleId> {
        (1..=14).map(SwitchRuleId)
    }
}

impl fmt::Display for SwitchRuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mobility {
    Operational,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CapturedBy {
    None,
    Hostile,
    NonHostile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionKind {
    PreProgrammedAttack,
    OperatorReferral,
    Block,
    CounterAttack,
    Disarm,
    SelfDestruct,
    TrackOnly,
    GotchaAttack,
    AbortEngagement,
    Deactivate,
    MalfunctionLockout,
    Noted,
    CancelPending,
}

impl ActionKind {
    pub const ALL: [ActionKind; 13] = [
        ActionKind::PreProgrammedAttack,
        ActionKind::OperatorReferral,
        ActionKind::Block,
        ActionKind::CounterAttack,
        ActionKind::Disarm,
        ActionKind::SelfDestruct,
        ActionKind::TrackOnly,
        ActionKind::GotchaAttack,
        ActionKind::AbortEngagement,
        ActionKind::Deactivate,
        ActionKind::MalfunctionLockout,
        ActionKind::Noted,
        ActionKind::CancelPending,
    ];

    pub fn is_lethal(self) -> bool {
        matches!(
            self,
            ActionKind::PreProgrammedAttack | ActionKind::CounterAttack | ActionKind::GotchaAttack
        )
    }

    /// Kinds that stay pending across ticks: attacks and referrals awaiting
    /// a decision. Everything else takes effect the tick it is dispatched.
    pub fn is_deferred(self) -> bool {
        self.is_lethal() || self == ActionKind::OperatorReferral
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionKind::PreProgrammedAttack => "PreProgrammedAttack",
            ActionKind::OperatorReferral => "OperatorReferral",
            ActionKind::Block => "Block",
            ActionKind::CounterAttack => "CounterAttack",
            ActionKind::Disarm => "Disarm",
            ActionKind::SelfDestruct => "SelfDestruct",
            ActionKind::TrackOnly => "TrackOnly",
            ActionKind::GotchaAttack => "GotchaAttack",
            ActionKind::AbortEngagement => "AbortEngagement",
            ActionKind::Deactivate => "Deactivate",
            ActionKind::MalfunctionLockout => "MalfunctionLockout",
            ActionKind::Noted => "Noted",
            ActionKind::CancelPending => "CancelPending",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionState {
    Invoked,
    Executing,
    Executed,
    Nullified,
    Cancelled,
}

impl ActionState {
    pub fn is_active(self) -> bool {
        matches!(self, ActionState::Invoked | ActionState::Executing)
    }

    pub fn can_become(self, to: ActionState) -> bool {
        use ActionState::*;
        matches!(
            (self, to),
            (Invoked, Executing)
                | (Executing, Executed)
                | (Invoked, Nullified)
                | (Executing, Nullified)
                | (Invoked, Cancelled)
                | (Executing, Cancelled)
        )
    }
}

/// An action is identified by the rule and key that caused it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionId {
    pub rule: SwitchRuleId,
    pub key: KeyTriple,
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.rule, self.key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("action {id} cannot go from {from:?} to {to:?}")]
pub struct LifecycleError {
    pub id: ActionId,
    pub from: ActionState,
    pub to: ActionState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    pub target: Option<u64>,
    pub munition: Option<MunitionKind>,
    pub state: ActionState,
    pub caused_by: ActionId,
    /// Nature reported by the causing key.
    pub cause_nature: TargetNature,
}

impl Action {
    pub fn id(&self) -> ActionId {
        self.caused_by
    }

    pub fn transition(&mut self, to: ActionState) -> Result<(), LifecycleError> {
        if self.state.can_become(to) {
            self.state = to;
            Ok(())
        } else {
            Err(LifecycleError { id: self.caused_by, from: self.state, to })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invocation {
    pub rule: SwitchRuleId,
    pub key: KeyTriple,
    pub proposed: Action,
}

/// Everything about a platform the rule predicates read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformContext {
    pub mobility: Mobility,
    pub captured_by: CapturedBy,
    pub pending: Option<Action>,
    pub surrender_latch: BTreeSet<u64>,
    pub engagement_in_flight: Option<(u64, MunitionKind)>,
    pub clock: Tick,
    pub cfg: MissionConfig,
    pub resources: ResourceState,
    pub evidence_windows: BTreeMap<u64, VecDeque<CharacteristicVector>>,
    pub position: Vec2,
    pub safety_radius: f64,
    pub staleness_limit: u64,
}

impl PlatformContext {
    pub fn new(cfg: MissionConfig, resources: ResourceState, position: Vec2) -> Self {
        Self {
            mobility: Mobility::Operational,
            captured_by: CapturedBy::None,
            pending: None,
            surrender_latch: BTreeSet::new(),
            engagement_in_flight: None,
            clock: Tick::ZERO,
            cfg,
            resources,
            evidence_windows: BTreeMap::new(),
            position,
            safety_radius: DEFAULT_SAFETY_RADIUS,
            staleness_limit: DEFAULT_STALENESS_LIMIT,
        }
    }

    /// Append to a target's evidence window, keeping only the most recent
    /// `gotcha_window` vectors.
    pub fn observe(&mut self, target: u64, gated: CharacteristicVector) {
        let cap = self.cfg.thresholds.gotcha_window.max(1) as usize;
        let window = self.evidence_windows.entry(target).or_default();
        window.push_back(gated);
        while window.len() > cap {
            window.pop_front();
        }
    }

    pub fn active_pending(&self) -> Option<&Action> {
        self.pending.as_ref().filter(|a| a.state.is_active())
    }
}

/// The fifteen recipients of every key: rule modules 1 to 14, then the
/// command module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Recipient {
    Rule(SwitchRuleId),
    CommandModule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationReceipt {
    pub key: KeyTriple,
    pub deliveries: Vec<(Recipient, Arc<CodifiedKey>)>,
}

pub fn replicate_key(k: &CodifiedKey) -> ReplicationReceipt {
    let shared = Arc::new(k.clone());
    let deliveries = SwitchRuleId::all()
        .map(Recipient::Rule)
        .chain([Recipient::CommandModule])
        .map(|r| (r, Arc::clone(&shared)))
        .collect();
    ReplicationReceipt { key: k.triple(), deliveries }
}

/// The key's own classification, as carried in segments 5 and 8 to 10.
pub fn key_classification(k: &CodifiedKey) -> Classification {
    Classification {
        nature: k.nature,
        status: k.status,
        role: k.role,
        value: k.value,
        confidence: 1.0,
    }
}

pub fn forbidden(k: &CodifiedKey, cfg: &MissionConfig) -> bool {
    cfg.forbidden
        .matches(&k.characteristics, &key_classification(k), cfg.band(&k.value))
}

/// Munition a hostile target of this key's value would draw, if any remains.
fn hostile_response(k: &CodifiedKey, ctx: &PlatformContext) -> Option<MunitionKind> {
    let class = Classification { nature: TargetNature::Hostile, ..key_classification(k) };
    select_response(&class, &ctx.cfg, &ctx.resources).ok()
}

/// True when a non-combatant among the key's target and its vicinity
/// targets is within the safety radius. An unobserved position counts as
/// near.
pub fn noncombatant_near(k: &CodifiedKey, ctx: &PlatformContext) -> bool {
    std::iter::once(k).chain(&k.vicinity_targets).any(|t| {
        t.role == CombatRole::NonCombatant
            && (t.characteristics.position.confidence == 0.0
                || t.characteristics.position.value.distance(ctx.position) <= ctx.safety_radius)
    })
}

struct Facts {
    free: bool,
    live: bool,
    cease: bool,
    valid: bool,
    forbidden: bool,
    in_flight: bool,
    active: bool,
    pending_same: bool,
    pending_other: bool,
    pending_nature_differs: bool,
    surrendering: bool,
    latched: bool,
    response: Option<MunitionKind>,
    hostile: bool,
    preplanned: bool,
    nc_near: bool,
}

impl Facts {
    fn of(k: &CodifiedKey, ctx: &PlatformContext) -> Facts {
        let free = ctx.mobility == Mobility::Operational && ctx.captured_by == CapturedBy::None;
        let cease = ctx.cfg.ceasefire_timetable.is_some_and(|t| k.timestamp >= t);
        let pending = ctx.active_pending();
        let cv = &k.characteristics;
        Facts {
            free,
            live: free && !cease,
            cease,
            valid: verify_key(k, ctx.clock, ctx.staleness_limit).is_empty(),
            forbidden: forbidden(k, &ctx.cfg),
            in_flight: ctx.engagement_in_flight.as_ref().is_some_and(|(t, _)| *t == k.target_id),
            active: pending.is_some(),
            pending_same: pending.is_some_and(|a| a.target == Some(k.target_id)),
            pending_other: pending.is_some_and(|a| a.target != Some(k.target_id)),
            pending_nature_differs: pending.is_some_and(|a| a.cause_nature != k.nature),
            surrendering: cv.acoustics.value.contains(Acoustics::SURRENDER_PROCLAMATION)
                && cv.activity.value.contains(Activity::COMPLYING),
            latched: ctx.surrender_latch.contains(&k.target_id),
            response: hostile_response(k, ctx),
            hostile: k.nature == TargetNature::Hostile,
            preplanned: ctx.cfg.preplanned_targets.contains(&k.target_id),
            nc_near: noncombatant_near(k, ctx),
        }
    }

    /// Preconditions shared by every lethal rule.
    fn armed(&self) -> bool {
        self.live
            && self.valid
            && !self.forbidden
            && !self.active
            && !self.surrendering
            && !self.latched
            && self.response.is_some()
    }
}

fn gotcha_triggered(k: &CodifiedKey, ctx: &PlatformContext) -> bool {
    let t = &ctx.cfg.thresholds;
    let need = t.gotcha_window as usize;
    match ctx.evidence_windows.get(&k.target_id) {
        Some(w) if w.len() >= need && need > 0 => {
            let recent: Vec<CharacteristicVector> = w.iter().skip(w.len() - need).cloned().collect();
            hostility_score(&recent) >= t.hostility_threshold
        }
        _ => false,
    }
}

fn propose(rule: SwitchRuleId, k: &CodifiedKey, f: &Facts, ctx: &PlatformContext) -> Option<ActionKind> {
    use ActionKind::*;
    let cv = &k.characteristics;
    match rule.0 {
        1 => (f.armed() && f.hostile && f.preplanned).then_some(PreProgrammedAttack),
        2 => (f.armed()
            && f.hostile
            && !f.preplanned
            && classify_target(cv, &ctx.cfg).confidence < ctx.cfg.thresholds.autonomy_confidence)
            .then_some(OperatorReferral),
        3 => (f.live && f.valid && f.forbidden && !f.in_flight).then_some(Block),
        4 => (f.armed() && cv.activity.value.contains(Activity::DIRECTED_FIRE)).then_some(CounterAttack),
        5 => (ctx.captured_by == CapturedBy::NonHostile
            || (ctx.mobility == Mobility::Failed && ctx.captured_by == CapturedBy::None && f.nc_near))
            .then_some(Disarm),
        6 => (ctx.mobility == Mobility::Failed && ctx.captured_by == CapturedBy::None && !f.nc_near)
            .then_some(SelfDestruct),
        7 => (ctx.captured_by == CapturedBy::Hostile).then_some(SelfDestruct),
        8 => (f.live && f.valid && f.surrendering).then_some(TrackOnly),
        9 => (f.armed()
            && matches!(k.nature, TargetNature::Undetermined | TargetNature::Hostile)
            && !f.preplanned
            && gotcha_triggered(k, ctx))
            .then_some(GotchaAttack),
        10 => (f.live && f.valid && f.in_flight && (!f.hostile || f.forbidden)).then_some(AbortEngagement),
        11 => (f.free && f.cease).then_some(Deactivate),
        12 => (f.live && !f.valid).then_some(MalfunctionLockout),
        13 => (f.live && f.valid && f.pending_other && !f.forbidden && !f.surrendering).then_some(Noted),
        14 => (f.live && f.valid && f.pending_same && f.pending_nature_differs && !f.in_flight)
            .then_some(CancelPending),
        _ => None,
    }
}

fn invocation(rule: SwitchRuleId, kind: ActionKind, k: &CodifiedKey, f: &Facts) -> Invocation {
    let targeted = !matches!(
        kind,
        ActionKind::Disarm | ActionKind::SelfDestruct | ActionKind::Deactivate | ActionKind::MalfunctionLockout
    );
    Invocation {
        rule,
        key: k.triple(),
        proposed: Action {
            kind,
            target: targeted.then_some(k.target_id),
            munition: if kind.is_deferred() { f.response.clone() } else { None },
            state: ActionState::Invoked,
            caused_by: ActionId { rule, key: k.triple() },
            cause_nature: k.nature,
        },
    }
}

/// Evaluate one rule against a key and context.
pub fn evaluate_rule(rule: SwitchRuleId, k: &CodifiedKey, ctx: &PlatformContext) -> Option<Invocation> {
    let facts = Facts::of(k, ctx);
    propose(rule, k, &facts, ctx).map(|kind| invocation(rule, kind, k, &facts))
}

/// Every rule the key invokes, in ascending rule order.
pub fn collect_invocations(k: &CodifiedKey, ctx: &PlatformContext) -> Vec<Invocation> {
    let facts = Facts::of(k, ctx);
    SwitchRuleId::all()
        .filter_map(|r| propose(r, k, &facts, ctx).map(|kind| invocation(r, kind, k, &facts)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum DispatchOutcome {
    ActionDispatched(Action),
    KeyClash(Vec<Invocation>),
    NoMatch,
}

/// Turn one key's invocations into at most one action. Attacks and
/// referrals are installed as the platform's pending action.
pub fn dispatch(invs: Vec<Invocation>, ctx: &mut PlatformContext) -> DispatchOutcome {
    match invs.len() {
        0 => DispatchOutcome::NoMatch,
        1 => {
            let action = invs.into_iter().next().expect("one invocation").proposed;
            if action.kind.is_deferred() {
                ctx.pending = Some(action.clone());
            }
            DispatchOutcome::ActionDispatched(action)
        }
        _ => DispatchOutcome::KeyClash(invs),
    }
}
