//! Append-only run recorder, its file format, replay and snapshot export.
//! Both formats are specified in `docs/blackbox.md`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use bincode::Options;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{crc32c, verify_key};
use crate::domain::{EntityKind, EntityRef, Tick};
use crate::events::{EntitySnapshot, Event};
use crate::key::KeyTriple;
use crate::switch::{ActionId, ActionKind, ActionState};

pub const LOG_MAGIC: [u8; 4] = *b"CKBB";
pub const LOG_VERSION: u8 = 1;
/// Length value that marks the trailer instead of a record.
pub const TRAILER_MARK: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlackBoxRecord {
    pub seq: u64,
    pub tick: Tick,
    pub actor: EntityRef,
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("record seq {got} does not follow a log of length {expected}")]
pub struct SequenceGap {
    pub expected: u64,
    pub got: u64,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("corrupt log: {0}")]
    CorruptLog(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("tick {requested} is outside the log (last tick {last:?})")]
pub struct TickOutOfRange {
    pub requested: Tick,
    pub last: Option<Tick>,
}

fn codec() -> impl Options {
    bincode::DefaultOptions::new().with_big_endian().with_fixint_encoding()
}

/// The run's log. Records are never modified once appended.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlackBox {
    records: Vec<BlackBoxRecord>,
}

impl BlackBox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, r: BlackBoxRecord) -> Result<(), SequenceGap> {
        let expected = self.records.len() as u64;
        if r.seq != expected {
            return Err(SequenceGap { expected, got: r.seq });
        }
        self.records.push(r);
        Ok(())
    }

    /// Append with the next sequence number.
    pub fn append(&mut self, tick: Tick, actor: &EntityRef, event: Event) {
        let seq = self.records.len() as u64;
        self.records.push(BlackBoxRecord { seq, tick, actor: actor.clone(), event });
    }

    pub fn records(&self) -> &[BlackBoxRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&LOG_MAGIC);
        out.push(LOG_VERSION);
        for r in &self.records {
            let body = codec().serialize(r).expect("records always serialize");
            out.extend_from_slice(&(body.len() as u32).to_be_bytes());
            out.extend_from_slice(&body);
        }
        out.extend_from_slice(&TRAILER_MARK.to_be_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_be_bytes());
        let crc = crc32c(&out);
        out.extend_from_slice(&crc.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LogError> {
        let corrupt = |m: String| LogError::CorruptLog(m);
        if bytes.len() < 5 + 4 + 8 + 4 {
            return Err(corrupt("file too short".into()));
        }
        let (body, crc) = bytes.split_at(bytes.len() - 4);
        let want = u32::from_be_bytes(crc.try_into().expect("4 bytes"));
        if crc32c(body) != want {
            return Err(corrupt("trailer checksum mismatch".into()));
        }
        if body[..4] != LOG_MAGIC || body[4] != LOG_VERSION {
            return Err(corrupt("bad magic or version".into()));
        }
        let mut at = 5;
        let mut log = BlackBox::new();
        loop {
            let len_bytes = body.get(at..at + 4).ok_or_else(|| corrupt("missing trailer".into()))?;
            let len = u32::from_be_bytes(len_bytes.try_into().expect("4 bytes"));
            at += 4;
            if len == TRAILER_MARK {
                break;
            }
            let rec = body
                .get(at..at + len as usize)
                .ok_or_else(|| corrupt(format!("record {} truncated", log.len())))?;
            let r: BlackBoxRecord = codec()
                .deserialize(rec)
                .map_err(|e| corrupt(format!("record {} does not decode: {e}", log.len())))?;
            log.record(r).map_err(|e| corrupt(e.to_string()))?;
            at += len as usize;
        }
        let count = body
            .get(at..at + 8)
            .filter(|_| at + 8 == body.len())
            .ok_or_else(|| corrupt("malformed trailer".into()))?;
        if u64::from_be_bytes(count.try_into().expect("8 bytes")) != log.len() as u64 {
            return Err(corrupt("trailer record count mismatch".into()));
        }
        Ok(log)
    }

    pub fn write_to(&self, path: &Path) -> Result<(), LogError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self, LogError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

/// End-of-run figures, derivable from a log alone.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    pub final_tick: u64,
    pub platforms: BTreeMap<u64, String>,
    pub neutralized: BTreeSet<u64>,
    pub keys_generated: u64,
    pub keys_received: u64,
    pub dispatched: BTreeMap<String, u64>,
    pub executed_attacks: BTreeMap<u64, u64>,
    pub clashes: u64,
    pub referrals: u64,
    pub referrals_approved: u64,
    pub referrals_denied: u64,
    pub quarantines: u64,
    pub messages_sent: u64,
    pub messages_lost: u64,
    pub swaps: BTreeMap<u64, String>,
    pub custody_violations: u64,
    pub attacks_from_faulted_keys: u64,
}

impl Summary {
    pub fn dispatched(&self, kind: ActionKind) -> u64 {
        self.dispatched.get(kind.name()).copied().unwrap_or(0)
    }

    pub fn executed_attacks_on(&self, target: u64) -> u64 {
        self.executed_attacks.get(&target).copied().unwrap_or(0)
    }
}

fn is_attack(kind: ActionKind) -> bool {
    kind.is_lethal() || kind == ActionKind::OperatorReferral
}

/// Compute the summary from records alone; `None` for an empty log.
pub fn summarize(records: &[BlackBoxRecord]) -> Option<Summary> {
    let mut s = Summary::default();
    let first = records.first()?;
    let mut evaluated: BTreeMap<(u64, KeyTriple), bool> = BTreeMap::new();
    let mut entities: BTreeMap<u64, EntitySnapshot> = BTreeMap::new();
    if let Event::ScenarioLoaded { name, seed, .. } = &first.event {
        s.scenario = name.clone();
        s.seed = *seed;
    }
    for r in records {
        s.final_tick = r.tick.0;
        match &r.event {
            Event::ScenarioLoaded { entities: es, .. } => {
                for e in es {
                    entities.insert(e.entity.id, e.clone());
                    if e.entity.kind == EntityKind::Platform {
                        s.platforms.insert(e.entity.id, "Inactive".into());
                    }
                }
            }
            Event::EntityUpdate(e) => {
                entities.insert(e.entity.id, e.clone());
            }
            Event::StateChanged { to, .. } => {
                s.platforms.insert(r.actor.id, to.name().into());
            }
            Event::KeyGenerated { .. } => s.keys_generated += 1,
            Event::KeyReceived { .. } => s.keys_received += 1,
            Event::Evaluated { key, context, .. } => {
                let faulted = !verify_key(key, context.clock, context.staleness_limit).is_empty();
                evaluated.insert((r.actor.id, key.triple()), faulted);
            }
            Event::Dispatched { action } => {
                *s.dispatched.entry(action.kind.name().into()).or_default() += 1;
                if action.kind == ActionKind::OperatorReferral {
                    s.referrals += 1;
                }
                if action.kind.is_lethal() && evaluated.get(&(r.actor.id, action.caused_by.key)) == Some(&true) {
                    s.attacks_from_faulted_keys += 1;
                }
            }
            Event::Clash(_) => s.clashes += 1,
            Event::ActionTransition { kind, target: Some(t), to: ActionState::Executed, .. } if is_attack(*kind) => {
                *s.executed_attacks.entry(*t).or_default() += 1;
            }
            Event::ReferralDecision { decision, .. } => match decision {
                crate::command::Decision::Approve => s.referrals_approved += 1,
                crate::command::Decision::Deny => s.referrals_denied += 1,
            },
            Event::Quarantined { .. } => s.quarantines += 1,
            Event::MessageSent { .. } => s.messages_sent += 1,
            Event::MessageLost { .. } => s.messages_lost += 1,
            Event::SwapPhase { swap, phase, .. } => {
                s.swaps.insert(*swap, phase.name());
            }
            Event::Custody { holders, .. } if holders.is_empty() => s.custody_violations += 1,
            _ => {}
        }
    }
    s.neutralized = entities.values().filter(|e| e.neutralized).map(|e| e.entity.id).collect();
    Some(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub records: Vec<BlackBoxRecord>,
    pub summary: Option<Summary>,
}

/// Re-derive a run from its log.
pub fn replay(log: &BlackBox) -> Result<Replay, LogError> {
    for (i, r) in log.records().iter().enumerate() {
        if r.seq != i as u64 {
            return Err(LogError::CorruptLog(format!("seq {} at position {i}", r.seq)));
        }
    }
    Ok(Replay { records: log.records().to_vec(), summary: summarize(log.records()) })
}

/// Render the digitized battle space as it stood at the end of `tick`.
pub fn export_snapshot(log: &BlackBox, tick: Tick) -> Result<String, TickOutOfRange> {
    let records = log.records();
    let last = records.last().map(|r| r.tick);
    if last.is_none_or(|l| tick > l) {
        return Err(TickOutOfRange { requested: tick, last });
    }
    let mut name = String::new();
    let mut entities: BTreeMap<u64, EntitySnapshot> = BTreeMap::new();
    let mut states: BTreeMap<u64, String> = BTreeMap::new();
    let mut classified: BTreeMap<u64, String> = BTreeMap::new();
    let mut pending: BTreeMap<(u64, ActionId), (ActionKind, Option<u64>, ActionState)> = BTreeMap::new();
    let mut custody: BTreeMap<(u64, u64), Vec<u64>> = BTreeMap::new();
    let mut clashes: BTreeMap<(u64, KeyTriple), Vec<String>> = BTreeMap::new();
    for r in records.iter().take_while(|r| r.tick <= tick) {
        match &r.event {
            Event::ScenarioLoaded { name: n, entities: es, .. } => {
                name = n.clone();
                for e in es {
                    entities.insert(e.entity.id, e.clone());
                    if e.entity.kind == EntityKind::Platform {
                        states.insert(e.entity.id, "Inactive".into());
                    }
                }
            }
            Event::EntityUpdate(e) => {
                entities.insert(e.entity.id, e.clone());
            }
            Event::StateChanged { to, .. } => {
                states.insert(r.actor.id, to.name().into());
            }
            Event::KeyGenerated { key } if key.weapon_id != key.target_id => {
                classified.insert(key.target_id, format!("{} {} {}", key.nature, key.status, key.role));
            }
            Event::Dispatched { action } if action.kind.is_deferred() => {
                pending.insert((r.actor.id, action.id()), (action.kind, action.target, action.state));
            }
            Event::ActionTransition { action, to, .. } => {
                if let Some(p) = pending.get_mut(&(r.actor.id, *action)) {
                    p.2 = *to;
                }
                if !to.is_active() {
                    pending.remove(&(r.actor.id, *action));
                }
            }
            Event::Custody { swap, target, holders } => {
                custody.insert((*swap, *target), holders.clone());
            }
            Event::SwapPhase { swap, phase, .. } if phase.is_terminal() => {
                custody.retain(|(s, _), _| s != swap);
            }
            Event::Clash(c) => {
                clashes.insert((r.actor.id, c.key), c.rules.iter().map(|r| r.to_string()).collect());
            }
            Event::ClashResolved { clash, .. } => {
                clashes.remove(&(r.actor.id, *clash));
            }
            _ => {}
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "snapshot {name:?} tick {}", tick.0);
    for e in entities.values() {
        let life = if e.neutralized {
            "neutralized"
        } else if e.alive {
            "alive"
        } else {
            "destroyed"
        };
        let _ = write!(
            out,
            "entity {} {} {:?} pos {} {} vel {} {} {life}",
            e.entity.id,
            e.entity.kind.name(),
            e.entity.name,
            e.position.x,
            e.position.y,
            e.velocity.x,
            e.velocity.y
        );
        if let Some(s) = states.get(&e.entity.id) {
            let _ = write!(out, " state {s}");
        }
        if let Some(c) = classified.get(&e.entity.id) {
            let _ = write!(out, " classified {c}");
        }
        out.push('\n');
    }
    for ((actor, id), (kind, target, state)) in &pending {
        let target = target.map_or("-".to_string(), |t| t.to_string());
        let _ = writeln!(out, "pending {actor} {id} {kind} target {target} state {state:?}");
    }
    for ((swap, target), holders) in &custody {
        let holders = if holders.is_empty() {
            "-".to_string()
        } else {
            holders.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
        };
        let _ = writeln!(out, "custody {swap} {target} holders {holders}");
    }
    for ((actor, key), rules) in &clashes {
        let _ = writeln!(out, "clash {actor} {key} rules {}", rules.join(","));
    }
    out.push_str("end\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Vec2;

    fn rec(seq: u64, tick: u64) -> BlackBoxRecord {
        BlackBoxRecord {
            seq,
            tick: Tick(tick),
            actor: EntityRef::platform(1, "uav"),
            event: Event::MobilityFailed,
        }
    }

    fn loaded() -> BlackBoxRecord {
        BlackBoxRecord {
            seq: 0,
            tick: Tick(0),
            actor: EntityRef::command(0, "world"),
            event: Event::ScenarioLoaded {
                name: "t".into(),
                seed: 1,
                entities: vec![EntitySnapshot {
                    entity: EntityRef::platform(1, "uav"),
                    position: Vec2::new(1.0, 2.0),
                    velocity: Vec2::ZERO,
                    alive: true,
                    neutralized: false,
                }],
            },
        }
    }

    #[test]
    fn record_enforces_density() {
        let mut log = BlackBox::new();
        log.record(rec(0, 0)).unwrap();
        assert_eq!(log.len(), 1);
        for i in 1..5 {
            log.record(rec(i, i)).unwrap();
        }
        assert_eq!(log.record(rec(7, 7)), Err(SequenceGap { expected: 5, got: 7 }));
        assert_eq!(log.records()[3], rec(3, 3));
    }

    #[test]
    fn file_round_trip_and_corruption() {
        let mut log = BlackBox::new();
        log.record(loaded()).unwrap();
        log.record(rec(1, 3)).unwrap();
        let bytes = log.to_bytes();
        assert_eq!(BlackBox::from_bytes(&bytes).unwrap(), log);
        for i in 0..bytes.len() {
            let mut bad = bytes.clone();
            bad[i] ^= 0x40;
            assert!(BlackBox::from_bytes(&bad).is_err(), "flip at {i} undetected");
        }
        assert!(BlackBox::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn missing_record_is_corrupt() {
        let mut log = BlackBox::new();
        log.record(loaded()).unwrap();
        log.record(rec(1, 1)).unwrap();
        log.record(rec(2, 2)).unwrap();
        let mut holed = log.clone();
        holed.records.remove(1);
        assert!(matches!(replay(&holed), Err(LogError::CorruptLog(_))));
        assert!(matches!(BlackBox::from_bytes(&holed.to_bytes()), Err(LogError::CorruptLog(_))));
    }

    #[test]
    fn empty_log_replays_to_nothing() {
        let r = replay(&BlackBox::new()).unwrap();
        assert!(r.records.is_empty() && r.summary.is_none());
        assert!(export_snapshot(&BlackBox::new(), Tick(0)).is_err());
    }

    #[test]
    fn snapshot_at_tick_zero_lists_initial_positions() {
        let mut log = BlackBox::new();
        log.record(loaded()).unwrap();
        let snap = export_snapshot(&log, Tick(0)).unwrap();
        assert_eq!(
            snap,
            "snapshot \"t\" tick 0\nentity 1 platform \"uav\" pos 1 2 vel 0 0 alive state Inactive\nend\n"
        );
        assert_eq!(export_snapshot(&log, Tick(1)), Err(TickOutOfRange { requested: Tick(1), last: Some(Tick(0)) }));
    }
}
