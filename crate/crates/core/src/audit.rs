//! Post-run audit: re-checks a finished log against the protocol's safety
//! invariants using nothing but the records.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::blackbox::BlackBoxRecord;
use crate::domain::{CombatRole, ForbiddenCriteria};
use crate::events::Event;
use crate::key::{CodifiedKey, KeyTriple};
use crate::ooda::PlatformState;
use crate::switch::{collect_invocations, ActionId, ActionState, PlatformContext};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub seq: u64,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "record {}: {}", self.seq, self.message)
    }
}

#[derive(Default)]
struct ActorTrack {
    state: Option<PlatformState>,
    last_eval: Option<(CodifiedKey, Box<PlatformContext>)>,
    rules: Option<(u32, ForbiddenCriteria)>,
    maintenance_since_eval: bool,
    actions: BTreeMap<ActionId, ActionState>,
    clashes: BTreeSet<KeyTriple>,
}

/// Every invariant breach in the log, in record order. Empty means clean.
pub fn verify_log(records: &[BlackBoxRecord]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut actors: BTreeMap<u64, ActorTrack> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let mut bad = |m: String| out.push(Violation { seq: r.seq, message: m });
        if r.seq != i as u64 {
            bad(format!("sequence number {} at position {i}", r.seq));
        }
        let a = actors.entry(r.actor.id).or_default();
        match &r.event {
            Event::StateChanged { from, to } => {
                let prev = a.state.unwrap_or(PlatformState::Inactive);
                if *from != prev {
                    bad(format!("transition claims {from:?} but platform was {prev:?}"));
                }
                if prev.is_absorbing() {
                    bad(format!("left absorbing state {prev:?} for {to:?}"));
                }
                let exit_ok = match prev {
                    PlatformState::Inactive => *to == PlatformState::Searching || to.is_absorbing(),
                    PlatformState::MissionComplete => *to == PlatformState::Maintenance || to.is_absorbing(),
                    _ => true,
                };
                if !exit_ok {
                    bad(format!("illegal transition {prev:?} -> {to:?}"));
                }
                a.state = Some(*to);
            }
            Event::MaintenanceApplied { .. } => a.maintenance_since_eval = true,
            Event::Evaluated { key, context, rules } => {
                let recomputed: Vec<_> = collect_invocations(key, context).iter().map(|i| i.rule).collect();
                if &recomputed != rules {
                    bad(format!("key {} recorded rules {rules:?} but re-evaluates to {recomputed:?}", key.triple()));
                }
                let now = (context.cfg.ruleset_version, context.cfg.forbidden.clone());
                if let Some((v, f)) = &a.rules {
                    let changed = *v != now.0 || *f != now.1;
                    if changed && !a.maintenance_since_eval {
                        bad("ruleset changed without maintenance".into());
                    }
                    if changed && (now.0 < *v || !now.1.contains_all(f)) {
                        bad("maintenance removed constraints".into());
                    }
                }
                a.rules = Some(now);
                a.maintenance_since_eval = false;
                a.last_eval = Some((key.clone(), context.clone()));
            }
            Event::Clash(c) => {
                a.clashes.insert(c.key);
            }
            Event::Dispatched { action } => {
                if a.clashes.contains(&action.caused_by.key) {
                    bad(format!("action {} dispatched on a clashed key", action.id()));
                }
                let Some((key, ctx)) = a.last_eval.as_ref().filter(|(k, _)| k.triple() == action.caused_by.key)
                else {
                    bad(format!("action {} dispatched without its evaluation", action.id()));
                    continue;
                };
                if action.kind.is_lethal() {
                    if key.role == CombatRole::NonCombatant {
                        bad(format!("lethal {} on a non-combatant key", action.kind));
                    }
                    if ctx.cfg.ceasefire_timetable.is_some_and(|t| key.timestamp >= t) {
                        bad(format!("lethal {} after ceasefire", action.kind));
                    }
                    if action.target.is_some_and(|t| ctx.surrender_latch.contains(&t)) {
                        bad(format!("lethal {} on a surrender-latched target", action.kind));
                    }
                }
                if action.kind.is_deferred()
                    && a.actions.insert(action.id(), action.state).is_some() {
                        bad(format!("action {} dispatched twice", action.id()));
                    }
            }
            Event::ActionTransition { action, from, to, .. } => match a.actions.get(action).copied() {
                None => bad(format!("transition of unknown action {action}")),
                Some(cur) => {
                    if cur != *from {
                        bad(format!("action {action} claims {from:?} but was {cur:?}"));
                    }
                    if !cur.can_become(*to) {
                        bad(format!("action {action} cannot go {cur:?} -> {to:?}"));
                    }
                    a.actions.insert(*action, *to);
                }
            },
            _ => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{EntityRef, Tick};

    fn rec(seq: u64, event: Event) -> BlackBoxRecord {
        BlackBoxRecord { seq, tick: Tick(seq), actor: EntityRef::platform(1, "uav"), event }
    }

    #[test]
    fn state_chain_must_be_continuous_and_absorbing() {
        use PlatformState::*;
        let log = vec![
            rec(0, Event::StateChanged { from: Inactive, to: Searching }),
            rec(1, Event::StateChanged { from: Acquiring, to: Classifying }),
            rec(2, Event::StateChanged { from: Classifying, to: Disarmed }),
            rec(3, Event::StateChanged { from: Disarmed, to: Searching }),
        ];
        let v = verify_log(&log);
        assert_eq!(v.iter().map(|v| v.seq).collect::<Vec<_>>(), vec![1, 3]);
        assert!(verify_log(&log[..1]).is_empty());
    }

    #[test]
    fn gaps_are_reported() {
        let log = vec![rec(0, Event::MobilityFailed), rec(2, Event::MobilityFailed)];
        assert_eq!(verify_log(&log).len(), 1);
    }
}
