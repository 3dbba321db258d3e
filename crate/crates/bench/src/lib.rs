//! Benchmark fixtures.

use std::path::PathBuf;

use keyswitch_core::sim::scenario::{load_scenario, Scenario};
use keyswitch_core::*;

pub fn hostile_key(target: u64, timestamp: u64) -> CodifiedKey {
    let mut cv = CharacteristicVector::empty();
    cv.position = Reading::new(Vec2::new(40.0, -12.5), 0.9);
    cv.activity = Reading::new(Activity::FIRING | Activity::EMPLACING, 0.8);
    cv.possession = Reading::new(Possession::WEAPON, 0.8);
    cv.markings = Reading::new(Markings::MILITARY_INSIGNIA, 0.7);
    cv.acoustics = Reading::new(Acoustics::GUNFIRE, 0.6);
    CodifiedKey {
        weapon_id: 1,
        weapon_name: "reaper".into(),
        target_id: target,
        target_name: "launcher".into(),
        nature: TargetNature::Hostile,
        timestamp: Tick(timestamp),
        characteristics: cv,
        status: TargetStatus::Active,
        role: CombatRole::Combatant,
        value: TargetValue::new(10.0, 0.0, 30.0),
        resources: ResourceState::new(80.0, 400).with_weapon("missile", 2),
        vicinity_targets: Vec::new(),
        vicinity_friendlies: Vec::new(),
    }
}

/// A key carrying `n` vicinity targets and one friendly.
pub fn nested_key(n: u64) -> CodifiedKey {
    let nearby: Vec<CodifiedKey> = (0..n).map(|i| hostile_key(100 + i, 99)).collect();
    embed_vicinity(&hostile_key(21, 100), &nearby, &[hostile_key(2, 100)]).expect("depth-0 vicinity")
}

pub fn context(preplanned: &[u64]) -> PlatformContext {
    let mut cfg = MissionConfig::default();
    cfg.preplanned_targets.extend(preplanned);
    let mut ctx = PlatformContext::new(cfg, ResourceState::new(80.0, 400).with_weapon("missile", 2), Vec2::ZERO);
    ctx.clock = Tick(100);
    ctx
}

pub fn corpus_scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../corpus/scenarios/{name}.scn"));
    load_scenario(&std::fs::read_to_string(path).expect("corpus scenario")).expect("valid scenario")
}
