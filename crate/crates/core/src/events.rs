//! Everything a run records. Keys are stored in their CKSS encoding.

use serde::{Deserialize, Serialize};

use crate::codec::SegmentFault;
use crate::collab::SwapPhase;
use crate::command::{ClashRecord, Decision};
use crate::domain::{Clause, EntityRef, MunitionKind, Tick, Vec2};
use crate::key::{CodifiedKey, KeyTriple};
use crate::ooda::{BdaVerdict, Disposition, PlatformState};
use crate::sim::{BehaviorChange, Strike};
use crate::switch::{Action, ActionId, ActionKind, ActionState, CapturedBy, PlatformContext, SwitchRuleId};

/// Serde adapter storing a key as its CKSS bytes.
pub mod ckss {
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    use crate::codec::{decode_key, encode_key};
    use crate::key::CodifiedKey;

    pub fn serialize<S: Serializer>(k: &CodifiedKey, s: S) -> Result<S::Ok, S::Error> {
        encode_key(k).0.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CodifiedKey, D::Error> {
        let bytes = Vec::<u8>::deserialize(d)?;
        decode_key(&bytes).map_err(|faults| D::Error::custom(format!("embedded key faults: {faults:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntitySnapshot {
    pub entity: EntityRef,
    pub position: Vec2,
    pub velocity: Vec2,
    pub alive: bool,
    pub neutralized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Event {
    ScenarioLoaded { name: String, seed: u64, entities: Vec<EntitySnapshot> },
    EntityUpdate(EntitySnapshot),
    ScriptApplied { entity: u64, change: BehaviorChange },
    StateChanged { from: PlatformState, to: PlatformState },
    KeyGenerated {
        #[serde(with = "ckss")]
        key: CodifiedKey,
    },
    KeyRefused { target: u64, reason: String },
    KeyReceived {
        from: u64,
        #[serde(with = "ckss")]
        key: CodifiedKey,
    },
    Replicated { key: KeyTriple, copies: u32 },
    /// The key as evaluated, the context it was evaluated against, and the
    /// rules it invoked.
    Evaluated {
        #[serde(with = "ckss")]
        key: CodifiedKey,
        context: Box<PlatformContext>,
        rules: Vec<SwitchRuleId>,
    },
    Dispatched { action: Action },
    NoMatch { key: KeyTriple },
    Clash(ClashRecord),
    ClashResolved { clash: KeyTriple, by: KeyTriple },
    ActionTransition { action: ActionId, kind: ActionKind, target: Option<u64>, from: ActionState, to: ActionState },
    ReferralDecision { action: ActionId, decision: Decision },
    MessageSent { seq: u64, to: u64, kind: String, deliver_at: Tick },
    MessageLost { seq: u64, to: u64, kind: String },
    MessageDelivered { seq: u64, from: u64, kind: String },
    Injected { target: u64, tamper: String, bytes: u32 },
    Quarantined { from: u64, faults: Vec<SegmentFault> },
    StrikeLaunched(Strike),
    StrikeResolved { strike: Strike, neutralized: bool },
    StrikeAborted(Strike),
    BdaVerdict { target: u64, verdict: BdaVerdict },
    Disposition { target: u64, disposition: Disposition },
    HandoffRequested { munition: MunitionKind, targets: Vec<u64> },
    MissionComplete,
    SwapPhase { swap: u64, initiator: u64, acceptor: u64, extra_tracker: Option<u64>, phase: SwapPhase },
    Custody { swap: u64, target: u64, holders: Vec<u64> },
    MaintenanceApplied { version: u32, added: Vec<Clause> },
    MaintenanceRejected { reason: String },
    MobilityFailed,
    Captured { by: CapturedBy },
    CeasefireSet { at: Tick },
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::ScenarioLoaded { .. } => "ScenarioLoaded",
            Event::EntityUpdate(_) => "EntityUpdate",
            Event::ScriptApplied { .. } => "ScriptApplied",
            Event::StateChanged { .. } => "StateChanged",
            Event::KeyGenerated { .. } => "KeyGenerated",
            Event::KeyRefused { .. } => "KeyRefused",
            Event::KeyReceived { .. } => "KeyReceived",
            Event::Replicated { .. } => "Replicated",
            Event::Evaluated { .. } => "Evaluated",
            Event::Dispatched { .. } => "Dispatched",
            Event::NoMatch { .. } => "NoMatch",
            Event::Clash(_) => "Clash",
            Event::ClashResolved { .. } => "ClashResolved",
            Event::ActionTransition { .. } => "ActionTransition",
            Event::ReferralDecision { .. } => "ReferralDecision",
            Event::MessageSent { .. } => "MessageSent",
            Event::MessageLost { .. } => "MessageLost",
            Event::MessageDelivered { .. } => "MessageDelivered",
            Event::Injected { .. } => "Injected",
            Event::Quarantined { .. } => "Quarantined",
            Event::StrikeLaunched(_) => "StrikeLaunched",
            Event::StrikeResolved { .. } => "StrikeResolved",
            Event::StrikeAborted(_) => "StrikeAborted",
            Event::BdaVerdict { .. } => "BdaVerdict",
            Event::Disposition { .. } => "Disposition",
            Event::HandoffRequested { .. } => "HandoffRequested",
            Event::MissionComplete => "MissionComplete",
            Event::SwapPhase { .. } => "SwapPhase",
            Event::Custody { .. } => "Custody",
            Event::MaintenanceApplied { .. } => "MaintenanceApplied",
            Event::MaintenanceRejected { .. } => "MaintenanceRejected",
            Event::MobilityFailed => "MobilityFailed",
            Event::Captured { .. } => "Captured",
            Event::CeasefireSet { .. } => "CeasefireSet",
        }
    }
}
