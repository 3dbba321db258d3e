use thiserror::Error;

use super::{
    Channel, CharacteristicVector, Classification, MissionConfig, MunitionKind,
    PerceptualThresholds, ResourceState, TargetNature, HOSTILE_INDICATOR_COUNT,
};

/// Zero every channel whose confidence falls below its pre-mission minimum.
pub fn gate_characteristics(cv: &CharacteristicVector, t: &PerceptualThresholds) -> CharacteristicVector {
    let mut out = cv.clone();
    for ch in Channel::ALL {
        if cv.confidence(ch) < t.per_channel_min[ch.index()] {
            out.clear(ch);
        }
    }
    out
}

/// Apply the mission's classification table to gated evidence.
///
/// The reported confidence is the weakest confidence among the channels the
/// matching row tested.
pub fn classify_target(gated: &CharacteristicVector, cfg: &MissionConfig) -> Classification {
    for row in &cfg.classification_table.rows {
        if row.when.matches_evidence(gated) {
            let confidence = row
                .when
                .channels()
                .into_iter()
                .map(|c| gated.confidence(c))
                .fold(1.0_f64, f64::min);
            return Classification {
                nature: row.nature,
                status: row.status,
                role: row.role,
                value: row.value,
                confidence,
            };
        }
    }
    Classification::undetermined()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResponseError {
    #[error("responses are only selected for hostile targets (got {0})")]
    NotHostile(TargetNature),
    #[error("no feasible response: {0} exhausted")]
    NoFeasibleResponse(MunitionKind),
}

/// Look up the pre-authorized munition for a hostile target's value band.
pub fn select_response(
    c: &Classification,
    cfg: &MissionConfig,
    r: &ResourceState,
) -> Result<MunitionKind, ResponseError> {
    if c.nature != TargetNature::Hostile {
        return Err(ResponseError::NotHostile(c.nature));
    }
    let band = cfg.band(&c.value);
    let kind = cfg
        .response_table
        .get(band)
        .expect("response table is total over value bands");
    if r.count(kind) > 0 {
        Ok(kind.clone())
    } else {
        Err(ResponseError::NoFeasibleResponse(kind.clone()))
    }
}

/// Mean fraction of hostile-indicative flags over an evidence window.
///
/// # Panics
///
/// On an empty window.
pub fn hostility_score(window: &[CharacteristicVector]) -> f64 {
    assert!(!window.is_empty(), "hostility_score needs at least one vector");
    let total: f64 = window
        .iter()
        .map(|cv| cv.hostile_indicators() as f64 / HOSTILE_INDICATOR_COUNT as f64)
        .sum();
    total / window.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::*;
    use proptest::prelude::*;

    fn full_vector(conf: f64) -> CharacteristicVector {
        CharacteristicVector {
            position: Reading::new(Vec2::new(3.0, 4.0), conf),
            activity: Reading::new(Activity::FIRING, conf),
            possession: Reading::new(Possession::WEAPON, conf),
            movement: Reading::new(Vec2::new(1.0, 0.0), conf),
            grouping: Reading::new(Grouping { count: 3, formation: true }, conf),
            markings: Reading::new(Markings::MILITARY_INSIGNIA, conf),
            acoustics: Reading::new(Acoustics::GUNFIRE, conf),
        }
    }

    fn thresholds(mins: [f64; 7]) -> PerceptualThresholds {
        PerceptualThresholds { per_channel_min: mins, ..Default::default() }
    }

    #[test]
    fn gate_passes_full_confidence() {
        let cv = full_vector(1.0);
        assert_eq!(gate_characteristics(&cv, &thresholds([0.9; 7])), cv);
    }

    #[test]
    fn gate_with_zero_thresholds_is_identity() {
        let cv = full_vector(0.05);
        assert_eq!(gate_characteristics(&cv, &thresholds([0.0; 7])), cv);
    }

    #[test]
    fn gate_zeroes_only_the_weak_channel() {
        let mut cv = full_vector(0.9);
        cv.activity.confidence = 0.3;
        let mut mins = [0.0; 7];
        mins[Channel::Activity.index()] = 0.5;
        let gated = gate_characteristics(&cv, &thresholds(mins));
        assert_eq!(gated.activity, Reading::blank());
        let mut expected = cv.clone();
        expected.activity = Reading::blank();
        assert_eq!(gated, expected);
    }

    /// Brute force over all 2^7 pass/fail patterns: channel i is forced to
    /// fail by giving it confidence below its threshold.
    #[test]
    fn gate_matches_brute_force_over_all_patterns() {
        let t = thresholds([0.5; 7]);
        for pattern in 0u32..128 {
            let mut cv = full_vector(0.8);
            for ch in Channel::ALL {
                if pattern & (1 << ch.index()) != 0 {
                    set_conf(&mut cv, ch, 0.4);
                }
            }
            let gated = gate_characteristics(&cv, &t);
            for ch in Channel::ALL {
                let failed = pattern & (1 << ch.index()) != 0;
                if failed {
                    assert_eq!(gated.confidence(ch), 0.0, "pattern {pattern:07b} {ch}");
                    assert!(gated.reading_is_blank(ch));
                } else {
                    assert_eq!(gated.confidence(ch), 0.8);
                    assert!(!gated.reading_is_blank(ch));
                }
            }
        }
    }

    fn set_conf(cv: &mut CharacteristicVector, ch: Channel, c: f64) {
        match ch {
            Channel::Position => cv.position.confidence = c,
            Channel::Activity => cv.activity.confidence = c,
            Channel::Possession => cv.possession.confidence = c,
            Channel::Movement => cv.movement.confidence = c,
            Channel::Grouping => cv.grouping.confidence = c,
            Channel::Markings => cv.markings.confidence = c,
            Channel::Acoustics => cv.acoustics.confidence = c,
        }
    }

    fn flags_vector(a: Activity, p: Possession, m: Markings, s: Acoustics, formation: bool) -> CharacteristicVector {
        CharacteristicVector {
            position: Reading::new(Vec2::ZERO, 1.0),
            activity: Reading::new(a, 1.0),
            possession: Reading::new(p, 1.0),
            movement: Reading::new(Vec2::ZERO, 1.0),
            grouping: Reading::new(Grouping { count: 1, formation }, 1.0),
            markings: Reading::new(m, 1.0),
            acoustics: Reading::new(s, 1.0),
        }
    }

    #[test]
    fn toddler_is_neutral_noncombatant() {
        let cv = flags_vector(Activity::PLAYING, Possession::NONE, Markings::CIVILIAN_DRESS, Acoustics::empty(), false);
        let c = classify_target(&cv, &MissionConfig::default());
        assert_eq!(c.nature, TargetNature::Neutral);
        assert_eq!(c.role, CombatRole::NonCombatant);
    }

    #[test]
    fn no_evidence_is_undetermined_noncombatant() {
        let c = classify_target(&CharacteristicVector::empty(), &MissionConfig::default());
        assert_eq!(c, Classification::undetermined());
    }

    #[test]
    fn firing_armed_soldier_is_hostile_combatant() {
        let cv = flags_vector(Activity::FIRING, Possession::WEAPON, Markings::MILITARY_INSIGNIA, Acoustics::empty(), false);
        let c = classify_target(&cv, &MissionConfig::default());
        assert_eq!((c.nature, c.role), (TargetNature::Hostile, CombatRole::Combatant));
        assert_eq!(c.confidence, 1.0);
    }

    /// Independent restatement of the reference table as an if-chain.
    fn reference_oracle(a: Activity, p: Possession, m: Markings, s: Acoustics) -> (TargetNature, CombatRole) {
        use CombatRole::*;
        use TargetNature::*;
        if m.contains(Markings::WRECKAGE) {
            (Undetermined, NonCombatant)
        } else if m.contains(Markings::FRIENDLY_INSIGNIA) {
            (Friendly, Combatant)
        } else if s.contains(Acoustics::SURRENDER_PROCLAMATION) && a.contains(Activity::COMPLYING) {
            (Hostile, Combatant)
        } else if m.contains(Markings::MEDICAL_EMBLEM) || a.contains(Activity::PLAYING) {
            (Neutral, NonCombatant)
        } else if (a.contains(Activity::FIRING) && p.contains(Possession::WEAPON))
            || a.contains(Activity::EMPLACING)
            || (p.contains(Possession::WEAPON) && m.contains(Markings::MILITARY_INSIGNIA))
        {
            (Hostile, Combatant)
        } else if m.contains(Markings::CIVILIAN_DRESS) && !p.contains(Possession::WEAPON) {
            (Neutral, NonCombatant)
        } else {
            (Undetermined, NonCombatant)
        }
    }

    #[test]
    fn reference_table_agrees_with_oracle_over_flag_domain() {
        let cfg = MissionConfig::default();
        let mut checked = 0;
        for a in 0..=Activity::all().bits() {
            for p in 0..=Possession::all().bits() {
                for m in 0..=Markings::all().bits() {
                    for s in 0..=Acoustics::all().bits() {
                        let (a, p, m, s) = (
                            Activity::from_bits_truncate(a),
                            Possession::from_bits_truncate(p),
                            Markings::from_bits_truncate(m),
                            Acoustics::from_bits_truncate(s),
                        );
                        let c = classify_target(&flags_vector(a, p, m, s, false), &cfg);
                        assert_eq!((c.nature, c.role), reference_oracle(a, p, m, s), "{a:?} {p:?} {m:?} {s:?}");
                        checked += 1;
                    }
                }
            }
        }
        assert_eq!(checked, 64 * 8 * 32 * 8);
    }

    fn hostile(value: TargetValue) -> Classification {
        Classification {
            nature: TargetNature::Hostile,
            status: TargetStatus::Active,
            role: CombatRole::Combatant,
            value,
            confidence: 1.0,
        }
    }

    fn banded_config() -> MissionConfig {
        let mut cfg = MissionConfig::default();
        cfg.response_table.0.insert(ValueBand::High, MunitionKind::new("bomb"));
        cfg
    }

    #[test]
    fn response_is_table_lookup() {
        let cfg = banded_config();
        let r = ResourceState::new(10.0, 10).with_weapon("missile", 3);
        assert_eq!(select_response(&hostile(TargetValue::new(1.0, 0.0, 0.0)), &cfg, &r).unwrap().as_str(), "missile");
    }

    #[test]
    fn exhausted_inventory_is_infeasible() {
        let cfg = banded_config();
        let r = ResourceState::new(10.0, 10).with_weapon("missile", 0).with_weapon("bomb", 0);
        for v in [1.0, 30.0, 90.0] {
            assert!(matches!(
                select_response(&hostile(TargetValue::new(v, 0.0, 0.0)), &cfg, &r),
                Err(ResponseError::NoFeasibleResponse(_))
            ));
        }
    }

    #[test]
    fn high_band_selects_bomb_and_conserves_inventory() {
        let cfg = banded_config();
        let mut r = ResourceState::new(10.0, 10).with_weapon("missile", 2).with_weapon("bomb", 1);
        let before = r.total_munitions();
        let kind = select_response(&hostile(TargetValue::new(0.0, 0.0, 75.0)), &cfg, &r).unwrap();
        assert_eq!(kind.as_str(), "bomb");
        r.fire(&kind).unwrap();
        assert_eq!(r.count(&kind), 0);
        assert_eq!(r.total_munitions(), before - 1);
        assert!(select_response(&hostile(TargetValue::new(0.0, 0.0, 75.0)), &cfg, &r).is_err());
    }

    #[test]
    fn non_hostile_request_is_refused() {
        let mut c = hostile(TargetValue::ZERO);
        c.nature = TargetNature::Neutral;
        let r = ResourceState::new(1.0, 1).with_weapon("missile", 1);
        assert_eq!(
            select_response(&c, &MissionConfig::default(), &r),
            Err(ResponseError::NotHostile(TargetNature::Neutral))
        );
    }

    fn with_indicators(n: usize) -> CharacteristicVector {
        let mut cv = CharacteristicVector::empty();
        let setters: [fn(&mut CharacteristicVector); 5] = [
            |cv| cv.activity.value |= Activity::FIRING,
            |cv| cv.activity.value |= Activity::EMPLACING,
            |cv| cv.possession.value |= Possession::WEAPON,
            |cv| cv.grouping.value.formation = true,
            |cv| cv.acoustics.value |= Acoustics::GUNFIRE,
        ];
        for set in setters.iter().take(n) {
            set(&mut cv);
        }
        cv
    }

    #[test]
    fn hostility_score_extremes_and_mean() {
        assert_eq!(hostility_score(&vec![CharacteristicVector::empty(); 3]), 0.0);
        assert_eq!(hostility_score(&vec![with_indicators(5); 4]), 1.0);
        // A per-key score of exactly 0.5 is unreachable with five
        // indicators; {0.4, 0.6, 1.0, 1.0} has the same 0.75 mean.
        let window = [with_indicators(2), with_indicators(3), with_indicators(5), with_indicators(5)];
        let brute: f64 = [2.0 / 5.0, 3.0 / 5.0, 1.0, 1.0].iter().sum::<f64>() / 4.0;
        assert!((hostility_score(&window) - brute).abs() < 1e-12);
        assert!((brute - 0.75).abs() < 1e-12);
    }

    #[test]
    #[should_panic]
    fn hostility_score_rejects_empty_window() {
        hostility_score(&[]);
    }

    fn arb_vector() -> impl Strategy<Value = CharacteristicVector> {
        (
            prop::array::uniform7(0.0f64..=1.0),
            0u32..64,
            0u32..8,
            0u32..32,
            0u32..8,
            any::<bool>(),
        )
            .prop_map(|(conf, a, p, m, s, formation)| CharacteristicVector {
                position: Reading::new(Vec2::new(1.0, 2.0), conf[0]),
                activity: Reading::new(Activity::from_bits_truncate(a), conf[1]),
                possession: Reading::new(Possession::from_bits_truncate(p), conf[2]),
                movement: Reading::new(Vec2::new(0.5, 0.0), conf[3]),
                grouping: Reading::new(Grouping { count: 2, formation }, conf[4]),
                markings: Reading::new(Markings::from_bits_truncate(m), conf[5]),
                acoustics: Reading::new(Acoustics::from_bits_truncate(s), conf[6]),
            })
    }

    proptest! {
        #[test]
        fn gate_is_idempotent(cv in arb_vector(), mins in prop::array::uniform7(0.0f64..=1.0)) {
            let t = thresholds(mins);
            let once = gate_characteristics(&cv, &t);
            prop_assert_eq!(gate_characteristics(&once, &t), once);
        }

        #[test]
        fn fully_gated_vectors_are_undetermined(cv in arb_vector()) {
            let gated = gate_characteristics(&cv, &thresholds([1.1; 7]));
            let c = classify_target(&gated, &MissionConfig::default());
            prop_assert_eq!(c.nature, TargetNature::Undetermined);
        }

        #[test]
        fn classification_is_pure(cv in arb_vector()) {
            let cfg = MissionConfig::default();
            prop_assert_eq!(classify_target(&cv, &cfg), classify_target(&cv.clone(), &cfg));
        }

        #[test]
        fn hostility_is_monotone(window in prop::collection::vec(arb_vector(), 1..6), idx in 0usize..6, flag in 0usize..5) {
            let idx = idx % window.len();
            let before = hostility_score(&window);
            let mut more = window.clone();
            let cv = &mut more[idx];
            match flag {
                0 => cv.activity.value |= Activity::FIRING,
                1 => cv.activity.value |= Activity::EMPLACING,
                2 => cv.possession.value |= Possession::WEAPON,
                3 => cv.grouping.value.formation = true,
                _ => cv.acoustics.value |= Acoustics::GUNFIRE,
            }
            prop_assert!(hostility_score(&more) >= before);
        }

        #[test]
        fn select_response_never_returns_an_empty_munition(
            missile in 0u32..3, bomb in 0u32..3, v in 0.0f64..100.0
        ) {
            let cfg = banded_config();
            let r = ResourceState::new(1.0, 1).with_weapon("missile", missile).with_weapon("bomb", bomb);
            if let Ok(kind) = select_response(&hostile(TargetValue::new(v, 0.0, 0.0)), &cfg, &r) {
                prop_assert!(r.count(&kind) > 0);
            }
        }
    }
}
