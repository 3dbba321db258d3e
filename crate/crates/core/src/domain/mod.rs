//! Shared domain types, pre-mission thresholds, target classification and
//! response selection.

mod criteria;
mod evidence;
mod ops;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use criteria::{
    reference_classification_table, Atom, ClassificationRow, ClassificationTable, Clause,
    ForbiddenCriteria, Literal, MissionConfig, ResponseTable, ValueBands,
};
pub use evidence::*;
pub use ops::{classify_target, gate_characteristics, hostility_score, select_response, ResponseError};

/// Simulation time. Starts at 0 and increases by one per world step.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
pub struct Tick(pub u64);

impl Tick {
    pub const ZERO: Tick = Tick(0);

    pub fn next(self) -> Tick {
        Tick(self.0 + 1)
    }

    pub fn saturating_sub(self, other: Tick) -> u64 {
        self.0.saturating_sub(other.0)
    }
}

impl fmt::Display for Tick {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityKind {
    Platform,
    Target,
    CommandCentre,
}

impl EntityKind {
    pub fn name(self) -> &'static str {
        match self {
            EntityKind::Platform => "platform",
            EntityKind::Target => "target",
            EntityKind::CommandCentre => "command",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityRef {
    pub kind: EntityKind,
    pub id: u64,
    pub name: String,
}

impl EntityRef {
    pub fn new(kind: EntityKind, id: u64, name: impl Into<String>) -> Self {
        Self { kind, id, name: name.into() }
    }

    pub fn platform(id: u64, name: impl Into<String>) -> Self {
        Self::new(EntityKind::Platform, id, name)
    }

    pub fn target(id: u64, name: impl Into<String>) -> Self {
        Self::new(EntityKind::Target, id, name)
    }

    pub fn command(id: u64, name: impl Into<String>) -> Self {
        Self::new(EntityKind::CommandCentre, id, name)
    }
}

impl fmt::Display for EntityRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ({})", self.kind.name(), self.id, self.name)
    }
}

macro_rules! coded_enum {
    (
        $(#[$meta:meta])*
        pub enum $name:ident { $($variant:ident = $code:literal => $text:literal),* $(,)? }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $($variant),*
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),*];

            /// Wire code.
            pub fn code(self) -> u8 {
                match self {
                    $($name::$variant => $code),*
                }
            }

            pub fn from_code(code: u8) -> Option<Self> {
                match code {
                    $($code => Some($name::$variant),)*
                    _ => None,
                }
            }

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $text),*
                }
            }

            pub fn parse(text: &str) -> Option<Self> {
                match text {
                    $($text => Some($name::$variant),)*
                    _ => None,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

coded_enum! {
    pub enum TargetNature {
        Undetermined = 0 => "undetermined",
        Hostile = 1 => "hostile",
        Friendly = 2 => "friendly",
        Neutral = 3 => "neutral",
    }
}

coded_enum! {
    pub enum TargetStatus {
        Undetermined = 0 => "undetermined",
        Active = 1 => "active",
        Dormant = 2 => "dormant",
        Neutralized = 3 => "neutralized",
    }
}

coded_enum! {
    pub enum CombatRole {
        NonCombatant = 0 => "noncombatant",
        Combatant = 1 => "combatant",
    }
}

/// Assumed value of a target in abstract units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TargetValue {
    pub economic: f64,
    pub human_life: f64,
    pub strategic: f64,
}

impl TargetValue {
    pub const ZERO: TargetValue = TargetValue { economic: 0.0, human_life: 0.0, strategic: 0.0 };

    pub fn new(economic: f64, human_life: f64, strategic: f64) -> Self {
        Self { economic, human_life, strategic }
    }

    pub fn peak(&self) -> f64 {
        self.economic.max(self.human_life).max(self.strategic)
    }

    pub fn is_valid(&self) -> bool {
        [self.economic, self.human_life, self.strategic]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ValueBand {
    Low,
    Medium,
    High,
}

impl ValueBand {
    pub const ALL: [ValueBand; 3] = [ValueBand::Low, ValueBand::Medium, ValueBand::High];

    pub fn name(self) -> &'static str {
        match self {
            ValueBand::Low => "low",
            ValueBand::Medium => "medium",
            ValueBand::High => "high",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        ValueBand::ALL.into_iter().find(|b| b.name() == text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MunitionKind(pub String);

impl MunitionKind {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for MunitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResourceError {
    #[error("no {0} munitions remaining")]
    Exhausted(MunitionKind),
}

/// Fuel, endurance and munitions carried by a platform.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResourceState {
    pub fuel: f64,
    pub endurance: u64,
    pub weapons: BTreeMap<MunitionKind, u32>,
}

impl ResourceState {
    pub fn new(fuel: f64, endurance: u64) -> Self {
        Self { fuel, endurance, weapons: BTreeMap::new() }
    }

    pub fn with_weapon(mut self, kind: &str, count: u32) -> Self {
        self.weapons.insert(MunitionKind::new(kind), count);
        self
    }

    pub fn count(&self, kind: &MunitionKind) -> u32 {
        self.weapons.get(kind).copied().unwrap_or(0)
    }

    pub fn total_munitions(&self) -> u64 {
        self.weapons.values().map(|c| u64::from(*c)).sum()
    }

    /// Expend one round of `kind`.
    pub fn fire(&mut self, kind: &MunitionKind) -> Result<(), ResourceError> {
        match self.weapons.get_mut(kind) {
            Some(count) if *count > 0 => {
                *count -= 1;
                Ok(())
            }
            _ => Err(ResourceError::Exhausted(kind.clone())),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.fuel.is_finite() && self.fuel >= 0.0
    }
}

/// Pre-mission perceptual thresholds. Fixed for the duration of a mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptualThresholds {
    pub per_channel_min: [f64; 7],
    pub hostility_threshold: f64,
    pub gotcha_window: u32,
    pub autonomy_confidence: f64,
}

impl Default for PerceptualThresholds {
    fn default() -> Self {
        Self {
            per_channel_min: [0.2; 7],
            hostility_threshold: 0.6,
            gotcha_window: 3,
            autonomy_confidence: 0.5,
        }
    }
}

impl PerceptualThresholds {
    pub fn validate(&self) -> Result<(), String> {
        for (c, v) in Channel::ALL.iter().zip(self.per_channel_min) {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("channel_min for {c} must be in [0,1]"));
            }
        }
        if !(self.hostility_threshold > 0.0 && self.hostility_threshold <= 1.0) {
            return Err("hostility_threshold must be in (0,1]".into());
        }
        if self.gotcha_window < 1 {
            return Err("gotcha_window must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.autonomy_confidence) {
            return Err("autonomy_confidence must be in [0,1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub nature: TargetNature,
    pub status: TargetStatus,
    pub role: CombatRole,
    pub value: TargetValue,
    pub confidence: f64,
}

impl Classification {
    /// The no-evidence default: undetermined, non-combatant, zero value.
    pub fn undetermined() -> Self {
        Self {
            nature: TargetNature::Undetermined,
            status: TargetStatus::Undetermined,
            role: CombatRole::NonCombatant,
            value: TargetValue::ZERO,
            confidence: 0.0,
        }
    }
}
