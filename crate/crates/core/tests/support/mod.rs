//! Oracles and fixtures shared by the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use keyswitch_core::command::Operator;
use keyswitch_core::runner::{run_scenario, Run};
use keyswitch_core::sim::scenario::{load_scenario, Scenario};
use keyswitch_core::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn scenario_paths() -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(corpus_dir().join("scenarios"))
        .expect("scenario corpus")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "scn"))
        .collect();
    out.sort();
    out
}

pub fn scenario(name: &str) -> Scenario {
    let path = corpus_dir().join("scenarios").join(format!("{name}.scn"));
    load_scenario(&std::fs::read_to_string(&path).expect("scenario file")).expect("valid scenario")
}

pub fn run(s: Scenario) -> Run {
    let op = Operator::new(s.operator.clone());
    run_scenario(s, op)
}

/// Bit-at-a-time CRC-32C (reflected polynomial 0x82F63B78).
pub fn crc32c_bitwise(bytes: &[u8]) -> u32 {
    let mut crc = !0u32;
    for &b in bytes {
        crc ^= u32::from(b);
        for _ in 0..8 {
            crc = if crc & 1 == 1 { (crc >> 1) ^ 0x82F6_3B78 } else { crc >> 1 };
        }
    }
    !crc
}

fn name(out: &mut Vec<u8>, s: &str) {
    out.extend((s.len() as u16).to_be_bytes());
    out.extend(s.as_bytes());
}

fn reading_head(out: &mut Vec<u8>, confidence: f64, bits: u32) {
    out.extend(confidence.to_be_bytes());
    out.extend(bits.to_be_bytes());
}

/// Byte-level encoder written from the wire layout, independent of the
/// crate's codec.
pub fn oracle_encode(k: &CodifiedKey) -> Vec<u8> {
    let cv = &k.characteristics;
    let mut segments: Vec<Vec<u8>> = Vec::new();
    segments.push(k.weapon_id.to_be_bytes().to_vec());
    let mut p = Vec::new();
    name(&mut p, &k.weapon_name);
    segments.push(p);
    segments.push(k.target_id.to_be_bytes().to_vec());
    let mut p = Vec::new();
    name(&mut p, &k.target_name);
    segments.push(p);
    segments.push(vec![k.nature.code()]);
    segments.push(k.timestamp.0.to_be_bytes().to_vec());
    let mut p = Vec::new();
    reading_head(&mut p, cv.position.confidence, 0);
    p.extend(cv.position.value.x.to_be_bytes());
    p.extend(cv.position.value.y.to_be_bytes());
    reading_head(&mut p, cv.activity.confidence, cv.activity.value.bits());
    reading_head(&mut p, cv.possession.confidence, cv.possession.value.bits());
    reading_head(&mut p, cv.movement.confidence, 0);
    p.extend(cv.movement.value.x.to_be_bytes());
    p.extend(cv.movement.value.y.to_be_bytes());
    reading_head(&mut p, cv.grouping.confidence, u32::from(cv.grouping.value.formation));
    p.extend(cv.grouping.value.count.to_be_bytes());
    reading_head(&mut p, cv.markings.confidence, cv.markings.value.bits());
    reading_head(&mut p, cv.acoustics.confidence, cv.acoustics.value.bits());
    segments.push(p);
    segments.push(vec![k.status.code()]);
    segments.push(vec![k.role.code()]);
    let mut p = Vec::new();
    for v in [k.value.economic, k.value.human_life, k.value.strategic] {
        p.extend(v.to_be_bytes());
    }
    segments.push(p);
    let mut p = Vec::new();
    p.extend(k.resources.fuel.to_be_bytes());
    p.extend(k.resources.endurance.to_be_bytes());
    p.extend((k.resources.weapons.len() as u16).to_be_bytes());
    for (kind, count) in &k.resources.weapons {
        name(&mut p, kind.as_str());
        p.extend(count.to_be_bytes());
    }
    segments.push(p);
    for list in [&k.vicinity_targets, &k.vicinity_friendlies] {
        let mut p = Vec::new();
        p.extend((list.len() as u16).to_be_bytes());
        for nested in list {
            let bytes = oracle_encode(nested);
            p.extend((bytes.len() as u32).to_be_bytes());
            p.extend(bytes);
        }
        segments.push(p);
    }

    let mut out = b"CKSS".to_vec();
    out.push(1);
    out.extend(13u16.to_be_bytes());
    for (i, payload) in segments.iter().enumerate() {
        let start = out.len();
        out.extend((i as u16 + 1).to_be_bytes());
        out.extend((payload.len() as u32).to_be_bytes());
        out.extend(payload);
        let crc = crc32c_bitwise(&out[start..]);
        out.extend(crc.to_be_bytes());
    }
    let crc = crc32c_bitwise(&out);
    out.extend(crc.to_be_bytes());
    out
}

fn random_name(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[char] = &['a', 'z', 'Q', '0', '-', '_', ' ', 'é', 'ß', '字', '🛰'];
    let mut s = String::new();
    let want = rng.gen_range(1..=20);
    while s.chars().count() < want {
        let c = ALPHABET[rng.gen_range(0..ALPHABET.len())];
        if s.len() + c.len_utf8() > keyswitch_core::key::MAX_NAME_BYTES {
            break;
        }
        s.push(c);
    }
    s
}

fn confidence(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen_bool(0.2) {
        0.0
    } else {
        rng.gen_range(0.0..=1.0f64).max(f64::MIN_POSITIVE)
    }
}

fn reading<T: Default>(rng: &mut ChaCha8Rng, value: impl FnOnce(&mut ChaCha8Rng) -> T) -> Reading<T> {
    let c = confidence(rng);
    if c == 0.0 {
        Reading::blank()
    } else {
        Reading::new(value(rng), c)
    }
}

fn coord(rng: &mut ChaCha8Rng) -> Vec2 {
    Vec2::new(rng.gen_range(-1e6..1e6), rng.gen_range(-1e6..1e6))
}

/// A random key that passes structural checks, with up to `nest` levels of
/// vicinity keys (0 or 1).
pub fn random_key(rng: &mut ChaCha8Rng, nest: bool) -> CodifiedKey {
    let characteristics = CharacteristicVector {
        position: reading(rng, coord),
        activity: reading(rng, |r| Activity::from_bits_truncate(r.gen())),
        possession: reading(rng, |r| Possession::from_bits_truncate(r.gen())),
        movement: reading(rng, coord),
        grouping: reading(rng, |r| Grouping { count: r.gen_range(0..50), formation: r.gen() }),
        markings: reading(rng, |r| Markings::from_bits_truncate(r.gen())),
        acoustics: reading(rng, |r| Acoustics::from_bits_truncate(r.gen())),
    };
    let mut resources = ResourceState::new(rng.gen_range(0.0..1000.0), rng.gen());
    for _ in 0..rng.gen_range(0..4) {
        resources = resources.with_weapon(&random_name(rng), rng.gen());
    }
    let vicinity = |rng: &mut ChaCha8Rng| -> Vec<CodifiedKey> {
        if !nest {
            return Vec::new();
        }
        (0..rng.gen_range(0..4)).map(|_| random_key(rng, false)).collect()
    };
    let vicinity_targets = vicinity(rng);
    let vicinity_friendlies = vicinity(rng);
    CodifiedKey {
        weapon_id: rng.gen(),
        weapon_name: random_name(rng),
        target_id: rng.gen(),
        target_name: random_name(rng),
        nature: TargetNature::ALL[rng.gen_range(0..TargetNature::ALL.len())],
        timestamp: Tick(rng.gen_range(0..1_000_000)),
        characteristics,
        status: TargetStatus::ALL[rng.gen_range(0..TargetStatus::ALL.len())],
        role: CombatRole::ALL[rng.gen_range(0..CombatRole::ALL.len())],
        value: TargetValue::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0)),
        resources,
        vicinity_targets,
        vicinity_friendlies,
    }
}
