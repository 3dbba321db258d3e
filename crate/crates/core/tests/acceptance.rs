//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod support;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use keyswitch_core::blackbox::replay;
use keyswitch_core::collab::custody_violations;
use keyswitch_core::command::handle_clash;
use keyswitch_core::conformance::{load_golden, run_conformance};
use keyswitch_core::events::Event;
use keyswitch_core::ooda::PlatformState;
use keyswitch_core::runner::intruder;
use keyswitch_core::sim::scenario::ScenarioEvent;
use keyswitch_core::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::*;

// ---- reference space ------------------------------------------------------

const TARGET: u64 = 21;
const OTHER: u64 = 22;
const KEY_TICK: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Integrity {
    Valid,
    Stale,
    Future,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Pending {
    None,
    SameInvoked,
    SameInFlight,
    OtherInFlight,
}

#[derive(Debug, Clone, Copy)]
struct Point {
    nature: TargetNature,
    status: TargetStatus,
    role: CombatRole,
    integrity: Integrity,
    mobility: Mobility,
    captured: CapturedBy,
    pending: Pending,
    ceasefire: bool,
    latched: bool,
    preplanned: bool,
    surrendering: bool,
    directed: bool,
    low_confidence: bool,
    hostile_history: bool,
    munitions: bool,
    near: bool,
}

fn reference_space() -> Vec<Point> {
    use CapturedBy as C;
    use Mobility as M;
    let bools = [false, true];
    let mut out = Vec::new();
    for &nature in TargetNature::ALL {
        for status in [TargetStatus::Active, TargetStatus::Undetermined] {
            for &role in CombatRole::ALL {
                for integrity in [Integrity::Valid, Integrity::Stale, Integrity::Future] {
                    for (mobility, captured) in
                        [(M::Operational, C::None), (M::Failed, C::None), (M::Operational, C::Hostile), (M::Operational, C::NonHostile)]
                    {
                        for pending in [Pending::None, Pending::SameInvoked, Pending::SameInFlight, Pending::OtherInFlight] {
                            for ceasefire in bools {
                                for latched in bools {
                                    for preplanned in bools {
                                        for evidence in 0u32..64 {
                                            let bit = |i: u32| evidence & (1 << i) != 0;
                                            out.push(Point {
                                                nature,
                                                status,
                                                role,
                                                integrity,
                                                mobility,
                                                captured,
                                                pending,
                                                ceasefire,
                                                latched,
                                                preplanned,
                                                surrendering: bit(0),
                                                directed: bit(1),
                                                low_confidence: bit(2),
                                                hostile_history: bit(3),
                                                munitions: bit(4),
                                                near: bit(5),
                                            });
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn uniform_cv(p: &Point) -> CharacteristicVector {
    let c = if p.low_confidence { 0.3 } else { 0.9 };
    let mut activity = Activity::FIRING;
    if p.directed {
        activity |= Activity::DIRECTED_FIRE;
    }
    let mut acoustics = Acoustics::GUNFIRE;
    if p.surrendering {
        activity |= Activity::COMPLYING;
        acoustics |= Acoustics::SURRENDER_PROCLAMATION;
    }
    CharacteristicVector {
        position: Reading::new(Vec2::new(if p.near { 5.0 } else { 50.0 }, 0.0), c),
        activity: Reading::new(activity, c),
        possession: Reading::new(Possession::WEAPON, c),
        movement: Reading::new(Vec2::ZERO, c),
        grouping: Reading::new(Grouping { count: 1, formation: false }, c),
        markings: Reading::new(Markings::empty(), c),
        acoustics: Reading::new(acoustics, c),
    }
}

fn pending_action(target: u64, state: ActionState) -> Action {
    let caused_by = ActionId {
        rule: SwitchRuleId::PREPROGRAMMED_ATTACK,
        key: KeyTriple { weapon: 1, target, timestamp: Tick(KEY_TICK - 5) },
    };
    Action {
        kind: ActionKind::PreProgrammedAttack,
        target: Some(target),
        munition: Some(MunitionKind::new("missile")),
        state,
        caused_by,
        cause_nature: TargetNature::Hostile,
    }
}

fn build(base: &MissionConfig, p: &Point) -> (CodifiedKey, PlatformContext) {
    let key = CodifiedKey {
        weapon_id: 1,
        weapon_name: "uav".into(),
        target_id: TARGET,
        target_name: "subject".into(),
        nature: p.nature,
        timestamp: Tick(KEY_TICK),
        characteristics: uniform_cv(p),
        status: p.status,
        role: p.role,
        value: TargetValue::new(10.0, 0.0, 30.0),
        resources: ResourceState::default(),
        vicinity_targets: vec![],
        vicinity_friendlies: vec![],
    };
    let mut cfg = base.clone();
    if p.preplanned {
        cfg.preplanned_targets.insert(TARGET);
    }
    if p.ceasefire {
        cfg.ceasefire_timetable = Some(Tick(KEY_TICK));
    }
    let munitions = if p.munitions { 2 } else { 0 };
    let mut ctx = PlatformContext::new(cfg, ResourceState::new(50.0, 500).with_weapon("missile", munitions), Vec2::ZERO);
    ctx.clock = Tick(match p.integrity {
        Integrity::Valid => KEY_TICK,
        Integrity::Stale => KEY_TICK + 200,
        Integrity::Future => KEY_TICK - 10,
    });
    ctx.mobility = p.mobility;
    ctx.captured_by = p.captured;
    match p.pending {
        Pending::None => {}
        Pending::SameInvoked => ctx.pending = Some(pending_action(TARGET, ActionState::Invoked)),
        Pending::SameInFlight => {
            ctx.pending = Some(pending_action(TARGET, ActionState::Executing));
            ctx.engagement_in_flight = Some((TARGET, MunitionKind::new("missile")));
        }
        Pending::OtherInFlight => {
            ctx.pending = Some(pending_action(OTHER, ActionState::Executing));
            ctx.engagement_in_flight = Some((OTHER, MunitionKind::new("missile")));
        }
    }
    if p.latched {
        ctx.surrender_latch.insert(TARGET);
    }
    if p.hostile_history {
        let mut cv = CharacteristicVector::empty();
        cv.activity = Reading::new(Activity::FIRING, 0.9);
        cv.possession = Reading::new(Possession::WEAPON, 0.9);
        cv.acoustics = Reading::new(Acoustics::GUNFIRE, 0.9);
        for _ in 0..3 {
            ctx.observe(TARGET, cv.clone());
        }
    }
    (key, ctx)
}

/// The rule table restated directly over the reference-space coordinates.
fn oracle(p: &Point) -> Vec<u8> {
    let valid = p.integrity == Integrity::Valid;
    let free = p.mobility == Mobility::Operational && p.captured == CapturedBy::None;
    let live = free && !p.ceasefire;
    let forbidden = p.role == CombatRole::NonCombatant;
    let hostile = p.nature == TargetNature::Hostile;
    let pending = p.pending != Pending::None;
    let in_flight = p.pending == Pending::SameInFlight;
    let pending_same = matches!(p.pending, Pending::SameInvoked | Pending::SameInFlight);
    let pending_other = p.pending == Pending::OtherInFlight;
    let nature_differs = !hostile;
    let nc_near = p.role == CombatRole::NonCombatant && p.near;
    let immobile = p.mobility == Mobility::Failed && p.captured == CapturedBy::None;
    let armed = live && valid && !forbidden && !pending && !p.surrendering && !p.latched && p.munitions;
    let gotcha_nature = matches!(p.nature, TargetNature::Undetermined | TargetNature::Hostile);

    let table = [
        armed && hostile && p.preplanned,
        armed && hostile && !p.preplanned && p.low_confidence,
        live && valid && forbidden && !in_flight,
        armed && p.directed,
        p.captured == CapturedBy::NonHostile || (immobile && nc_near),
        immobile && !nc_near,
        p.captured == CapturedBy::Hostile,
        live && valid && p.surrendering,
        armed && gotcha_nature && !p.preplanned && p.hostile_history,
        live && valid && in_flight && (!hostile || forbidden),
        free && p.ceasefire,
        live && !valid,
        live && valid && pending_other && !forbidden && !p.surrendering,
        live && valid && pending_same && nature_differs && !in_flight,
    ];
    (1..=14u8).zip(table).filter(|(_, hit)| *hit).map(|(n, _)| n).collect()
}

// ---- criteria -------------------------------------------------------------

struct Gate {
    failures: usize,
}

impl Gate {
    fn check(&mut self, n: u32, title: &str, criterion: impl FnOnce() -> Result<String, String>) {
        let start = Instant::now();
        let result = criterion();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {n:>2} {title} ({secs:.2}s): {detail}"),
            Err(detail) => {
                self.failures += 1;
                println!("FAIL {n:>2} {title} ({secs:.2}s): {detail}");
            }
        }
    }
}

fn rules(invs: &[Invocation]) -> Vec<u8> {
    invs.iter().map(|i| i.rule.number()).collect()
}

fn rule_oracle(space: &[Point]) -> Result<String, String> {
    let base = MissionConfig::default();
    let mut disagreements = Vec::new();
    let mut seen = BTreeSet::new();
    for p in space {
        let (k, ctx) = build(&base, p);
        let got = rules(&collect_invocations(&k, &ctx));
        let want = oracle(p);
        seen.extend(want.iter().copied());
        if got != want {
            disagreements.push(format!("{p:?}: engine {got:?}, oracle {want:?}"));
        }
    }
    if seen.len() != 14 {
        return Err(format!("space exercises only rules {seen:?}"));
    }
    if disagreements.is_empty() {
        Ok(format!("{} pairs, 0 disagreements, all 14 rules exercised", space.len()))
    } else {
        Err(format!("{} disagreements, first {}", disagreements.len(), disagreements[0]))
    }
}

fn clash_semantics(space: &[Point]) -> Result<String, String> {
    let base = MissionConfig::default();
    let mut clashes = 0;
    for p in space {
        let (k, mut ctx) = build(&base, p);
        let invs = collect_invocations(&k, &ctx);
        if invs.len() < 2 {
            continue;
        }
        clashes += 1;
        let before = ctx.pending.clone();
        let outcome = dispatch(invs.clone(), &mut ctx);
        if !matches!(&outcome, DispatchOutcome::KeyClash(v) if *v == invs) {
            return Err(format!("{p:?}: dispatch gave {outcome:?}"));
        }
        if ctx.pending != before {
            return Err(format!("{p:?}: clash installed a pending action"));
        }
        let was_active = ctx.pending.as_ref().is_some_and(|a| a.state.is_active());
        let record = handle_clash(&invs, ctx.pending.as_mut());
        let proposals: BTreeSet<_> = invs.iter().map(|i| i.proposed.id()).collect();
        if !proposals.iter().all(|id| record.nullified.contains(id)) {
            return Err(format!("{p:?}: proposals not all nullified"));
        }
        if was_active && ctx.pending.as_ref().map(|a| a.state) != Some(ActionState::Nullified) {
            return Err(format!("{p:?}: active pending action survived the clash"));
        }
    }
    Ok(format!("{clashes} clashing pairs, 0 dispatched actions, every non-executed action nullified"))
}

fn noncombatant_safety(space: &[Point]) -> Result<String, String> {
    let base = MissionConfig::default();
    let mut checked = 0;
    for p in space.iter().filter(|p| p.role == CombatRole::NonCombatant) {
        checked += 1;
        let (k, mut ctx) = build(&base, p);
        if let DispatchOutcome::ActionDispatched(a) = dispatch(collect_invocations(&k, &ctx), &mut ctx) {
            if a.kind.is_lethal() {
                return Err(format!("{p:?}: dispatched {}", a.kind));
            }
        }
    }
    Ok(format!("{checked} non-combatant pairs, 0 lethal dispatches"))
}

fn dispatched(records: &[keyswitch_core::blackbox::BlackBoxRecord]) -> impl Iterator<Item = (u64, &Action)> {
    records.iter().filter_map(|r| match &r.event {
        Event::Dispatched { action } => Some((r.tick.0, action)),
        _ => None,
    })
}

fn toddler() -> Result<String, String> {
    let r = run(scenario("toddler-abort"));
    let s = r.summary();
    let aborts: Vec<u64> = dispatched(r.log.records())
        .filter(|(_, a)| a.kind == ActionKind::AbortEngagement)
        .map(|(t, _)| t)
        .collect();
    let executed = s.executed_attacks_on(21);
    if aborts == [40] && executed == 0 {
        Ok("1 AbortEngagement at tick 40, 0 attacks executed on the target".into())
    } else {
        Err(format!("aborts at {aborts:?}, {executed} attacks executed"))
    }
}

fn tamper() -> Result<String, String> {
    let golden = load_golden(&corpus_dir().join("ckss"))?;
    let hostile = golden.iter().find(|g| g.name == "hostile").ok_or("no hostile vector")?;
    let mut undetected = 0;
    let mut cases = 0;
    for pos in 0..hostile.bytes.len() {
        for xor in 1..=255u8 {
            let mut b = hostile.bytes.clone();
            b[pos] ^= xor;
            cases += 1;
            if codec::verify_encoded(&b, hostile.key.timestamp, codec::DEFAULT_STALENESS_LIMIT).is_empty() {
                undetected += 1;
            }
        }
    }
    if undetected != 0 {
        return Err(format!("{undetected} of {cases} corruptions undetected"));
    }
    let r = run(scenario("tamper-induced"));
    let s = r.summary();
    let forged: Vec<&Action> = dispatched(r.log.records())
        .map(|(_, a)| a)
        .filter(|a| a.caused_by.key.weapon == intruder().id)
        .collect();
    let only_lockouts = forged.iter().all(|a| a.kind == ActionKind::MalfunctionLockout);
    let lethal = dispatched(r.log.records()).filter(|(_, a)| a.kind.is_lethal()).count();
    if only_lockouts
        && !forged.is_empty()
        && s.quarantines > 0
        && lethal == 0
        && s.attacks_from_faulted_keys == 0
        && s.executed_attacks.is_empty()
    {
        Ok(format!(
            "{cases}/{cases} corruptions detected; scenario: {} lockout(s), {} quarantine(s), 0 attacks",
            forged.len(),
            s.quarantines
        ))
    } else {
        Err(format!("forged-key actions {forged:?}, {} quarantines, {lethal} lethal dispatches", s.quarantines))
    }
}

fn codec_conformance() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c0de);
    let mut nested = 0;
    for i in 0..2000 {
        let k = random_key(&mut rng, i % 2 == 0);
        if k.has_vicinity() {
            nested += 1;
        }
        let bytes = encode_key(&k);
        if bytes.0 != oracle_encode(&k) {
            return Err(format!("key {i}: encoding differs from the byte oracle"));
        }
        match decode_key(bytes.as_bytes()) {
            Ok(back) if back == k => {}
            other => return Err(format!("key {i}: round trip gave {other:?}")),
        }
    }
    let dir = corpus_dir().join("ckss");
    let golden = load_golden(&dir)?;
    for g in &golden {
        if oracle_encode(&g.key) != g.bytes {
            return Err(format!("golden {} disagrees with the byte oracle", g.name));
        }
    }
    let report = run_conformance(&dir)?;
    if report.failures > 0 {
        return Err(report.lines.iter().filter(|l| l.starts_with("FAIL")).cloned().collect::<Vec<_>>().join("; "));
    }
    Ok(format!(
        "2000 random keys ({nested} nested) round-trip; {} golden vectors, {} conformance checks",
        golden.len(),
        report.lines.len()
    ))
}

fn ceasefire() -> Result<String, String> {
    let sc = scenario("ceasefire");
    let t = sc
        .events
        .iter()
        .find_map(|e| match e.event {
            ScenarioEvent::Ceasefire { at, .. } => Some(at.0),
            _ => None,
        })
        .ok_or("scenario sets no ceasefire")?;
    let r = run(sc);
    let late: Vec<_> = dispatched(r.log.records())
        .filter(|(_, a)| a.kind.is_lethal() && a.caused_by.key.timestamp.0 >= t)
        .collect();
    if !late.is_empty() {
        return Err(format!("{} lethal dispatches at or after {t}", late.len()));
    }
    let mut latest = 0;
    for &id in r.platforms.keys() {
        let at = r.log.records().iter().find_map(|rec| match rec.event {
            Event::StateChanged { to: PlatformState::Deactivated, .. } if rec.actor.id == id => Some(rec.tick.0),
            _ => None,
        });
        match at {
            Some(at) if at <= t + 5 => latest = latest.max(at),
            other => return Err(format!("platform {id} deactivated at {other:?}")),
        }
    }
    let lethal = dispatched(r.log.records()).filter(|(_, a)| a.kind.is_lethal()).count();
    Ok(format!(
        "T = {t}: {lethal} lethal dispatches all before T, {} platforms deactivated by tick {latest}",
        r.platforms.len()
    ))
}

fn custody() -> Result<String, String> {
    let mut counts = Vec::new();
    for name in ["swap-two-mobile-naive", "swap-two-mobile-custody", "swap-stationary"] {
        let r = run(scenario(name));
        if r.swaps.is_empty() {
            return Err(format!("{name}: no swap took place"));
        }
        let direct: usize = r.swaps.values().map(|t| custody_violations(t).len()).sum();
        let logged = r.summary().custody_violations;
        if direct as u64 != logged {
            return Err(format!("{name}: {direct} violations in the swap, {logged} in the log"));
        }
        counts.push(direct);
    }
    let detail = format!("naive {}, normative three-platform {}, stationary {}", counts[0], counts[1], counts[2]);
    if counts[0] >= 1 && counts[1] == 0 && counts[2] == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn determinism() -> Result<String, String> {
    let paths = scenario_paths();
    for path in &paths {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        let load = || keyswitch_core::sim::scenario::load_scenario(&text).expect("corpus scenario");
        let a = run(load());
        let b = run(load());
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("?");
        if a.log.to_bytes() != b.log.to_bytes() {
            return Err(format!("{name}: logs differ between runs"));
        }
        let restored = keyswitch_core::blackbox::BlackBox::from_bytes(&a.log.to_bytes()).map_err(|e| e.to_string())?;
        let replayed = replay(&restored).map_err(|e| e.to_string())?;
        if replayed.summary.as_ref() != Some(&a.summary()) {
            return Err(format!("{name}: replayed summary differs from the live one"));
        }
    }
    Ok(format!("{} scenarios: identical logs, replay summary equals live summary", paths.len()))
}

fn surrender() -> Result<String, String> {
    let r = run(scenario("surrender-latch"));
    let records = r.log.records();
    let complying = records
        .iter()
        .find_map(|rec| match &rec.event {
            Event::ScriptApplied { entity: 21, .. } => Some(rec.tick.0),
            _ => None,
        })
        .ok_or("target never complied")?;
    let lethal_after: Vec<_> = dispatched(records)
        .filter(|(t, a)| *t >= complying && a.kind.is_lethal() && a.target == Some(21))
        .collect();
    let tracked = dispatched(records).any(|(_, a)| a.kind == ActionKind::TrackOnly && a.target == Some(21));
    let executed = r.summary().executed_attacks_on(21);
    if lethal_after.is_empty() && tracked && executed == 0 {
        Ok(format!("compliance from tick {complying}: TrackOnly dispatched, 0 lethal dispatches at the target"))
    } else {
        Err(format!("{} lethal dispatches after compliance, tracked {tracked}, {executed} executed", lethal_after.len()))
    }
}

fn main() -> ExitCode {
    let space = reference_space();
    let mut gate = Gate { failures: 0 };
    gate.check(1, "rule-oracle equivalence", || rule_oracle(&space));
    gate.check(2, "clash semantics", || clash_semantics(&space));
    gate.check(3, "non-combatant safety", || noncombatant_safety(&space));
    gate.check(4, "toddler abort", toddler);
    gate.check(5, "tamper defense", tamper);
    gate.check(6, "codec conformance", codec_conformance);
    gate.check(7, "ceasefire", ceasefire);
    gate.check(8, "custody", custody);
    gate.check(9, "determinism and replay", determinism);
    gate.check(10, "surrender latch", surrender);
    if gate.failures == 0 {
        println!("acceptance: 10/10 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} of 10 criteria fail", gate.failures);
        ExitCode::FAILURE
    }
}
