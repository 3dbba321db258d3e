//! Task swaps between platforms and continuous-custody tracking.
//!
//! A swap moves tracking of a set of targets from an initiator to an
//! acceptor (and, for more than one mobile target, an extra tracker).
//! Custody is tracking assignment only; engagement rights move at Complete.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{encode_key, EncodedKey};
use crate::domain::Tick;
use crate::ooda::{HandoffRequest, WeaponPlatform};
use crate::sim::BattleSpace;

/// Ticks a proposal may wait for its acknowledgement.
pub const SWAP_TIMEOUT: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AbortReason {
    InsufficientTrackers,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwapPhase {
    Proposed,
    Accepted,
    TrackingHandover,
    Complete,
    Aborted(AbortReason),
}

impl SwapPhase {
    pub fn name(self) -> String {
        match self {
            SwapPhase::Proposed => "Proposed".into(),
            SwapPhase::Accepted => "Accepted".into(),
            SwapPhase::TrackingHandover => "TrackingHandover".into(),
            SwapPhase::Complete => "Complete".into(),
            SwapPhase::Aborted(r) => format!("Aborted({r:?})"),
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, SwapPhase::Complete | SwapPhase::Aborted(_))
    }

    fn rank(self) -> u8 {
        match self {
            SwapPhase::Proposed => 0,
            SwapPhase::Accepted => 1,
            SwapPhase::TrackingHandover => 2,
            SwapPhase::Complete | SwapPhase::Aborted(_) => 3,
        }
    }
}

/// When the initiator lets go of a target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwapSchedule {
    /// One tick after the new holder has it.
    Normative,
    /// As soon as the new holder starts acquiring it, with no extra tracker.
    Naive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustodyEntry {
    pub tick: Tick,
    pub target: u64,
    pub holders: BTreeSet<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Handover {
    holder: u64,
    start: Tick,
    acquired: Tick,
    release: Tick,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapTransaction {
    pub id: u64,
    pub initiator: u64,
    pub acceptor: u64,
    pub extra_tracker: Option<u64>,
    pub targets: Vec<u64>,
    pub keys: Vec<(u64, EncodedKey)>,
    pub mobile: BTreeSet<u64>,
    pub schedule: SwapSchedule,
    pub phase: SwapPhase,
    pub created: Tick,
    pub acknowledged: bool,
    pub custody: Vec<CustodyEntry>,
    handovers: BTreeMap<u64, Handover>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SwapError {
    #[error("unknown platform {0}")]
    UnknownPlatform(u64),
    #[error("unknown target {0}")]
    UnknownTarget(u64),
}

/// Platforms other than the requester that carry the needed munition, can
/// take tasking and have nothing pending, nearest the first target first.
pub fn request_collaboration(
    req: &HandoffRequest,
    platforms: &BTreeMap<u64, WeaponPlatform>,
    world: &BattleSpace,
) -> Vec<u64> {
    let Some(first) = req.keys.first().and_then(|k| world.entity(k.target_id)) else {
        return Vec::new();
    };
    let mut found: Vec<(f64, u64)> = platforms
        .values()
        .filter(|p| p.id() != req.from)
        .filter(|p| p.ctx.resources.count(&req.munition) > 0)
        .filter(|p| p.state.accepts_tasking() && p.ctx.active_pending().is_none())
        .map(|p| (p.ctx.position.distance(first.position), p.id()))
        .collect();
    found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    found.into_iter().map(|(_, id)| id).collect()
}

/// Build a swap. Routing the keys and the proposal is the caller's job;
/// they are carried in `keys`.
pub fn initiate_swap(
    id: u64,
    initiator: &WeaponPlatform,
    acceptor: u64,
    targets: &[u64],
    schedule: SwapSchedule,
    platforms: &BTreeMap<u64, WeaponPlatform>,
    world: &BattleSpace,
) -> Result<SwapTransaction, SwapError> {
    if !platforms.contains_key(&acceptor) {
        return Err(SwapError::UnknownPlatform(acceptor));
    }
    let mut mobile = BTreeSet::new();
    for t in targets {
        let e = world.entity(*t).ok_or(SwapError::UnknownTarget(*t))?;
        if e.is_mobile() {
            mobile.insert(*t);
        }
    }
    let keys = targets
        .iter()
        .filter_map(|t| initiator.latest_keys.get(t).map(|k| (*t, encode_key(&k.stripped()))))
        .collect();
    let mut txn = SwapTransaction {
        id,
        initiator: initiator.id(),
        acceptor,
        extra_tracker: None,
        targets: targets.to_vec(),
        keys,
        mobile,
        schedule,
        phase: SwapPhase::Proposed,
        created: world.clock,
        acknowledged: false,
        custody: Vec::new(),
        handovers: BTreeMap::new(),
    };
    if schedule == SwapSchedule::Normative && txn.mobile.len() > 1 {
        let first = targets.first().and_then(|t| world.entity(*t)).map(|e| e.position);
        let extra = platforms
            .values()
            .filter(|p| p.id() != txn.initiator && p.id() != acceptor && p.state.accepts_tasking())
            .min_by(|a, b| {
                let d = |p: &WeaponPlatform| first.map_or(0.0, |f| p.ctx.position.distance(f));
                d(a).total_cmp(&d(b)).then(a.id().cmp(&b.id()))
            })
            .map(WeaponPlatform::id);
        match extra {
            Some(x) => txn.extra_tracker = Some(x),
            None => txn.phase = SwapPhase::Aborted(AbortReason::InsufficientTrackers),
        }
    }
    Ok(txn)
}

impl SwapTransaction {
    pub fn acknowledge(&mut self) {
        self.acknowledged = true;
    }

    /// Current holders of one target at `now`.
    pub fn holders(&self, target: u64, now: Tick) -> BTreeSet<u64> {
        let mut h = BTreeSet::new();
        match (&self.phase, self.handovers.get(&target)) {
            (SwapPhase::Complete, Some(ho)) => {
                h.insert(ho.holder);
            }
            (_, Some(ho)) => {
                if now < ho.release {
                    h.insert(self.initiator);
                }
                if now >= ho.acquired {
                    h.insert(ho.holder);
                }
            }
            (_, None) => {
                h.insert(self.initiator);
            }
        }
        h
    }

    fn plan_handover(&mut self, start: Tick) {
        let mut mobile_seen = 0;
        for (i, t) in self.targets.iter().enumerate() {
            let is_mobile = self.mobile.contains(t);
            let holder = match self.extra_tracker {
                Some(x) if is_mobile && mobile_seen % 2 == 1 => x,
                _ => self.acceptor,
            };
            if is_mobile {
                mobile_seen += 1;
            }
            let s = Tick(start.0 + i as u64);
            let acquired = Tick(s.0 + u64::from(is_mobile));
            let release = match self.schedule {
                SwapSchedule::Normative => acquired.next(),
                SwapSchedule::Naive => s,
            };
            self.handovers.insert(*t, Handover { holder, start: s, acquired, release });
        }
    }

    fn record_custody(&mut self, now: Tick) {
        for t in self.targets.clone() {
            let holders = self.holders(t, now);
            self.custody.push(CustodyEntry { tick: now, target: t, holders });
        }
    }

    /// The custody entries written by the last call to [`advance_swap`].
    pub fn latest_custody(&self) -> impl Iterator<Item = &CustodyEntry> {
        let last = self.custody.last().map(|c| c.tick);
        self.custody.iter().filter(move |c| Some(c.tick) == last)
    }
}

/// One tick of a swap. Returns the new phase if it changed.
pub fn advance_swap(txn: &mut SwapTransaction, now: Tick) -> Option<SwapPhase> {
    if txn.phase.is_terminal() {
        return None;
    }
    let before = txn.phase;
    match txn.phase {
        SwapPhase::Proposed if txn.acknowledged => txn.phase = SwapPhase::Accepted,
        SwapPhase::Proposed if now.saturating_sub(txn.created) >= SWAP_TIMEOUT => {
            txn.phase = SwapPhase::Aborted(AbortReason::Timeout);
        }
        SwapPhase::Accepted => {
            txn.plan_handover(now);
            txn.phase = SwapPhase::TrackingHandover;
        }
        SwapPhase::TrackingHandover => {
            let done = txn.handovers.values().all(|h| now >= h.release && now >= h.acquired);
            if done {
                txn.phase = SwapPhase::Complete;
            }
        }
        _ => {}
    }
    debug_assert!(txn.phase.rank() >= before.rank());
    txn.record_custody(now);
    (txn.phase != before).then_some(txn.phase)
}

/// Every (tick, target) whose custody set was empty.
pub fn custody_violations(txn: &SwapTransaction) -> Vec<(Tick, u64)> {
    txn.custody.iter().filter(|c| c.holders.is_empty()).map(|c| (c.tick, c.target)).collect()
}
