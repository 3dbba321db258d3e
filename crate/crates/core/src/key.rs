//! Codified keys and the factory that issues them.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    CharacteristicVector, Classification, CombatRole, EntityRef, ResourceState, TargetNature,
    TargetStatus, TargetValue, Tick,
};

/// Longest permitted weapon or target name, in UTF-8 bytes.
pub const MAX_NAME_BYTES: usize = 64;

/// The segmented record generated each time a platform senses a target.
///
/// Segments 1 to 11 are the core; 12 and 13 carry depth-0 keys of other
/// targets and of friendly systems nearby.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodifiedKey {
    pub weapon_id: u64,
    pub weapon_name: String,
    pub target_id: u64,
    pub target_name: String,
    pub nature: TargetNature,
    pub timestamp: Tick,
    pub characteristics: CharacteristicVector,
    pub status: TargetStatus,
    pub role: CombatRole,
    pub value: TargetValue,
    pub resources: ResourceState,
    pub vicinity_targets: Vec<CodifiedKey>,
    pub vicinity_friendlies: Vec<CodifiedKey>,
}

/// Identity of a key: (weapon, target, timestamp).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KeyTriple {
    pub weapon: u64,
    pub target: u64,
    pub timestamp: Tick,
}

impl fmt::Display for KeyTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.weapon, self.target, self.timestamp)
    }
}

impl CodifiedKey {
    pub fn triple(&self) -> KeyTriple {
        KeyTriple { weapon: self.weapon_id, target: self.target_id, timestamp: self.timestamp }
    }

    pub fn has_vicinity(&self) -> bool {
        !self.vicinity_targets.is_empty() || !self.vicinity_friendlies.is_empty()
    }

    /// Copy with both vicinity lists emptied.
    pub fn stripped(&self) -> CodifiedKey {
        CodifiedKey {
            vicinity_targets: Vec::new(),
            vicinity_friendlies: Vec::new(),
            ..self.clone()
        }
    }

    /// Nesting depth: 0 for a key with no vicinity keys.
    pub fn depth(&self) -> usize {
        self.vicinity_targets
            .iter()
            .chain(&self.vicinity_friendlies)
            .map(|k| k.depth() + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn classification(&self) -> (TargetNature, TargetStatus, CombatRole) {
        (self.nature, self.status, self.role)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyError {
    #[error("key {0} already issued")]
    DuplicateTimestamp(KeyTriple),
    #[error("clock {clock} is behind the last key for weapon {weapon} target {target} at {last}")]
    ClockRegression { weapon: u64, target: u64, clock: Tick, last: Tick },
    #[error("name `{0}` exceeds {MAX_NAME_BYTES} bytes or is empty")]
    BadName(String),
    #[error("vicinity key {0} carries vicinity keys of its own")]
    NestingViolation(KeyTriple),
}

/// Issues keys and keeps the run's uniqueness ledger.
#[derive(Debug, Default)]
pub struct KeyFactory {
    last_issued: Mutex<BTreeMap<(u64, u64), Tick>>,
}

fn check_name(name: &str) -> Result<(), KeyError> {
    if name.is_empty() || name.len() > MAX_NAME_BYTES {
        Err(KeyError::BadName(name.to_string()))
    } else {
        Ok(())
    }
}

impl KeyFactory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build a key with empty vicinity lists and register its triple.
    pub fn generate_key(
        &self,
        weapon: &EntityRef,
        resources: &ResourceState,
        target: &EntityRef,
        gated: &CharacteristicVector,
        class: &Classification,
        clock: Tick,
    ) -> Result<CodifiedKey, KeyError> {
        check_name(&weapon.name)?;
        check_name(&target.name)?;
        self.register(weapon.id, target.id, clock)?;
        Ok(CodifiedKey {
            weapon_id: weapon.id,
            weapon_name: weapon.name.clone(),
            target_id: target.id,
            target_name: target.name.clone(),
            nature: class.nature,
            timestamp: clock,
            characteristics: gated.clone(),
            status: class.status,
            role: class.role,
            value: class.value,
            resources: resources.clone(),
            vicinity_targets: Vec::new(),
            vicinity_friendlies: Vec::new(),
        })
    }

    fn register(&self, weapon: u64, target: u64, clock: Tick) -> Result<(), KeyError> {
        let mut ledger = self.last_issued.lock().expect("key ledger poisoned");
        match ledger.get(&(weapon, target)) {
            Some(&last) if last == clock => {
                Err(KeyError::DuplicateTimestamp(KeyTriple { weapon, target, timestamp: clock }))
            }
            Some(&last) if last > clock => {
                Err(KeyError::ClockRegression { weapon, target, clock, last })
            }
            _ => {
                ledger.insert((weapon, target), clock);
                Ok(())
            }
        }
    }

    /// Number of (weapon, target) pairs that have been keyed.
    pub fn pairs_issued(&self) -> usize {
        self.last_issued.lock().expect("key ledger poisoned").len()
    }
}

/// Attach vicinity keys. Every supplied key must be depth 0.
pub fn embed_vicinity(
    key: &CodifiedKey,
    nearby_targets: &[CodifiedKey],
    nearby_friendlies: &[CodifiedKey],
) -> Result<CodifiedKey, KeyError> {
    if let Some(bad) = nearby_targets.iter().chain(nearby_friendlies).find(|k| k.has_vicinity()) {
        return Err(KeyError::NestingViolation(bad.triple()));
    }
    Ok(CodifiedKey {
        vicinity_targets: nearby_targets.iter().map(CodifiedKey::stripped).collect(),
        vicinity_friendlies: nearby_friendlies.iter().map(CodifiedKey::stripped).collect(),
        ..key.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn hostile() -> Classification {
        Classification {
            nature: TargetNature::Hostile,
            status: TargetStatus::Active,
            role: CombatRole::Combatant,
            value: TargetValue::new(1.0, 0.0, 2.0),
            confidence: 0.9,
        }
    }

    fn key_at(f: &KeyFactory, weapon: u64, target: u64, clock: u64) -> Result<CodifiedKey, KeyError> {
        f.generate_key(
            &EntityRef::platform(weapon, "uav"),
            &ResourceState::new(5.0, 100).with_weapon("missile", 2),
            &EntityRef::target(target, "truck"),
            &CharacteristicVector::empty(),
            &hostile(),
            Tick(clock),
        )
    }

    #[test]
    fn generated_key_transcribes_identity() {
        let f = KeyFactory::new();
        let k = key_at(&f, 7, 21, 100).unwrap();
        assert_eq!(k.triple(), KeyTriple { weapon: 7, target: 21, timestamp: Tick(100) });
        assert!(k.vicinity_targets.is_empty() && k.vicinity_friendlies.is_empty());
        let k2 = key_at(&f, 7, 21, 101).unwrap();
        assert_ne!(k, k2);
        assert_eq!(key_at(&f, 7, 21, 101), Err(KeyError::DuplicateTimestamp(k2.triple())));
        assert!(matches!(key_at(&f, 7, 21, 50), Err(KeyError::ClockRegression { .. })));
    }

    #[test]
    fn names_are_bounded() {
        let f = KeyFactory::new();
        let long = "x".repeat(MAX_NAME_BYTES + 1);
        let r = f.generate_key(
            &EntityRef::platform(1, long),
            &ResourceState::default(),
            &EntityRef::target(2, "t"),
            &CharacteristicVector::empty(),
            &hostile(),
            Tick(0),
        );
        assert!(matches!(r, Err(KeyError::BadName(_))));
    }

    #[test]
    fn embedding_attaches_lists_and_rejects_nesting() {
        let f = KeyFactory::new();
        let base = key_at(&f, 1, 10, 5).unwrap();
        let a = key_at(&f, 1, 11, 5).unwrap();
        let b = key_at(&f, 1, 12, 5).unwrap();
        let friend = key_at(&f, 2, 2, 5).unwrap();
        assert_eq!(embed_vicinity(&base, &[], &[]).unwrap(), base);
        let k = embed_vicinity(&base, &[a.clone(), b], &[friend]).unwrap();
        assert_eq!((k.vicinity_targets.len(), k.vicinity_friendlies.len()), (2, 1));
        assert_eq!(k.depth(), 1);
        assert_eq!(k.stripped(), base);
        assert_eq!(embed_vicinity(&base, std::slice::from_ref(&k), &[]), Err(KeyError::NestingViolation(k.triple())));
        assert_eq!(embed_vicinity(&base, &[], std::slice::from_ref(&k)), Err(KeyError::NestingViolation(k.triple())));
    }

    #[test]
    fn concurrent_generation_never_duplicates() {
        let f = KeyFactory::new();
        let results: Vec<Result<CodifiedKey, KeyError>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..8).map(|_| s.spawn(|| key_at(&f, 1, 1, 9))).collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 1);
    }

    proptest! {
        #[test]
        fn ledger_matches_triple_scan(calls in proptest::collection::vec((0u64..3, 0u64..3, 0u64..6), 1..60)) {
            let f = KeyFactory::new();
            let mut issued: Vec<KeyTriple> = Vec::new();
            for (w, t, c) in calls {
                let triple = KeyTriple { weapon: w, target: t, timestamp: Tick(c) };
                let seen = issued.contains(&triple);
                let last = issued.iter().filter(|x| x.weapon == w && x.target == t).map(|x| x.timestamp).max();
                match key_at(&f, w, t, c) {
                    Ok(k) => {
                        prop_assert!(!seen && last.is_none_or(|l| l < triple.timestamp));
                        issued.push(k.triple());
                    }
                    Err(KeyError::DuplicateTimestamp(d)) => prop_assert!(d == triple && last == Some(triple.timestamp)),
                    Err(KeyError::ClockRegression { .. }) => prop_assert!(last > Some(triple.timestamp)),
                    Err(e) => prop_assert!(false, "unexpected {e}"),
                }
            }
            let unique: BTreeSet<_> = issued.iter().collect();
            prop_assert_eq!(unique.len(), issued.len());
        }
    }
}
