use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use keyswitch_core::blackbox::{BlackBox, BlackBoxRecord};
use keyswitch_core::events::Event;
use keyswitch_core::ooda::PlatformState;
use keyswitch_core::{EntityRef, Tick};
use serde_json::Value;

fn keyswitch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_keyswitch")).args(args).output().expect("binary runs")
}

fn scenario(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../corpus/scenarios/{name}.scn"));
    p.to_string_lossy().into_owned()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("report is JSON")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn toddler_run_writes_log_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("toddler.ckbb");
    let rep = dir.path().join("toddler.json");
    let out = keyswitch(&["run", &scenario("toddler-abort"), "--log", path(&log), "--report", path(&rep)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["aborts"], 1);
    assert_eq!(r["attacks_executed"], serde_json::json!({}));
    let written: Value = serde_json::from_str(&std::fs::read_to_string(&rep).unwrap()).unwrap();
    assert_eq!(written, r);

    let verify = keyswitch(&["verify", path(&log)]);
    assert_eq!(verify.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&verify.stdout).starts_with("ok: "));

    let replay = keyswitch(&["replay", path(&log)]);
    assert_eq!(replay.status.code(), Some(0));
    let summary = report(&replay);
    assert_eq!(summary["final_tick"], r["final_tick"]);
    assert_eq!(summary["dispatched"], r["dispatched"]);

    let events = keyswitch(&["replay", path(&log), "--events"]);
    assert!(String::from_utf8_lossy(&events.stdout).contains("Dispatched AbortEngagement target Some(21)"));

    let snap = keyswitch(&["replay", path(&log), "--snapshot", "40"]);
    assert_eq!(snap.status.code(), Some(0));
    assert!(!snap.stdout.is_empty());
    let beyond = keyswitch(&["replay", path(&log), "--snapshot", "100000"]);
    assert_eq!(beyond.status.code(), Some(1));
}

#[test]
fn tamper_run_locks_out_without_attacking() {
    let out = keyswitch(&["run", &scenario("tamper-induced")]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert!(r["malfunction_lockouts"].as_u64().unwrap() >= 1);
    assert_eq!(r["attacks_from_faulted_keys"], 0);
    assert_eq!(r["attacks_executed"], serde_json::json!({}));
}

#[test]
fn missing_and_malformed_scenarios_exit_2() {
    let out = keyswitch(&["run", "/nonexistent/none.scn"]);
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scn");
    std::fs::write(&bad, "[scenario]\nname = bad\nseed = banana\n").unwrap();
    let out = keyswitch(&["run", path(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario.seed"));
}

#[test]
fn corrupt_or_unsafe_logs_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("run.ckbb");
    let out = keyswitch(&["run", &scenario("preplanned-strike"), "--log", path(&log)]);
    assert_eq!(out.status.code(), Some(0));
    let mut bytes = std::fs::read(&log).unwrap();
    bytes.truncate(bytes.len() / 2);
    let truncated = dir.path().join("truncated.ckbb");
    std::fs::write(&truncated, &bytes).unwrap();
    assert_eq!(keyswitch(&["verify", path(&truncated)]).status.code(), Some(3));
    assert_eq!(keyswitch(&["replay", path(&truncated)]).status.code(), Some(3));

    let uav = EntityRef::platform(1, "uav");
    let mut forged = BlackBox::new();
    for (seq, (from, to)) in [
        (PlatformState::Inactive, PlatformState::Searching),
        (PlatformState::Searching, PlatformState::Destroyed),
        (PlatformState::Destroyed, PlatformState::Searching),
    ]
    .into_iter()
    .enumerate()
    {
        let r = BlackBoxRecord { seq: seq as u64, tick: Tick(seq as u64), actor: uav.clone(), event: Event::StateChanged { from, to } };
        forged.record(r).unwrap();
    }
    let unsafe_log = dir.path().join("resurrected.ckbb");
    forged.write_to(&unsafe_log).unwrap();
    let out = keyswitch(&["verify", path(&unsafe_log)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("record 2"));
}

#[test]
fn same_seed_same_log() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.ckbb");
    let b = dir.path().join("b.ckbb");
    for p in [&a, &b] {
        let out = keyswitch(&["run", &scenario("ceasefire"), "--seed", "99", "--log", path(p)]);
        assert_eq!(out.status.code(), Some(0));
        assert_eq!(report(&out)["seed"], 99);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn operator_override_and_tick_limit() {
    let out = keyswitch(&["run", &scenario("operator-referral"), "--operator", "deny"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["referrals_denied"], 2);
    assert_eq!(r["referrals_approved"], 0);
    let out = keyswitch(&["run", &scenario("toddler-abort"), "--max-ticks", "35"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(report(&out)["final_tick"].as_u64().unwrap() <= 35);
}

#[test]
fn conformance_suite_passes() {
    let out = keyswitch(&["conformance"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
    assert!(keyswitch(&["conformance", "--corpus", "/nonexistent"]).status.code() == Some(2));
}
