//! Seven-channel sensor evidence.
//!
//! Channel order is fixed: position, activity, possession, movement,
//! grouping, markings, acoustics. Every encoding and threshold array in the
//! crate indexes channels in this order.

use std::fmt;

use bitflags::bitflags;
use serde::{Deserialize, Serialize};

bitflags! {
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
    pub struct Activity: u32 {
        const FIRING = 1 << 0;
        const EMPLACING = 1 << 1;
        const PLAYING = 1 << 2;
        const EMITTING = 1 << 3;
        /// Fire aimed at the observing platform or its friendlies.
        const DIRECTED_FIRE = 1 << 4;
        /// Compliance with a surrender demand.
        const COMPLYING = 1 << 5;
    }
}

bitflags! {
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
    pub struct Possession: u32 {
        const WEAPON = 1 << 0;
        const TOOL = 1 << 1;
        /// Positively observed as empty-handed.
        const NONE = 1 << 2;
    }
}

bitflags! {
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
    pub struct Markings: u32 {
        const MILITARY_INSIGNIA = 1 << 0;
        const MEDICAL_EMBLEM = 1 << 1;
        const CIVILIAN_DRESS = 1 << 2;
        const FRIENDLY_INSIGNIA = 1 << 3;
        const WRECKAGE = 1 << 4;
    }
}

bitflags! {
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
    pub struct Acoustics: u32 {
        const GUNFIRE = 1 << 0;
        const SPEECH = 1 << 1;
        const SURRENDER_PROCLAMATION = 1 << 2;
    }
}

/// Bit used for the formation flag in the grouping channel's wire bitmap.
pub const FORMATION_BIT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    Position,
    Activity,
    Possession,
    Movement,
    Grouping,
    Markings,
    Acoustics,
}

impl Channel {
    pub const ALL: [Channel; 7] = [
        Channel::Position,
        Channel::Activity,
        Channel::Possession,
        Channel::Movement,
        Channel::Grouping,
        Channel::Markings,
        Channel::Acoustics,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Position => "position",
            Channel::Activity => "activity",
            Channel::Possession => "possession",
            Channel::Movement => "movement",
            Channel::Grouping => "grouping",
            Channel::Markings => "markings",
            Channel::Acoustics => "acoustics",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Vec2) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn is_zero(self) -> bool {
        self.x == 0.0 && self.y == 0.0
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Grouping {
    pub count: u32,
    pub formation: bool,
}

/// A reading together with the confidence the sensor assigns to it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Reading<T> {
    pub value: T,
    pub confidence: f64,
}

impl<T: Default> Reading<T> {
    pub fn new(value: T, confidence: f64) -> Self {
        Self { value, confidence }
    }

    pub fn blank() -> Self {
        Self { value: T::default(), confidence: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CharacteristicVector {
    pub position: Reading<Vec2>,
    pub activity: Reading<Activity>,
    pub possession: Reading<Possession>,
    pub movement: Reading<Vec2>,
    pub grouping: Reading<Grouping>,
    pub markings: Reading<Markings>,
    pub acoustics: Reading<Acoustics>,
}

impl CharacteristicVector {
    /// A vector with every channel blank and zero confidence.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn confidence(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Position => self.position.confidence,
            Channel::Activity => self.activity.confidence,
            Channel::Possession => self.possession.confidence,
            Channel::Movement => self.movement.confidence,
            Channel::Grouping => self.grouping.confidence,
            Channel::Markings => self.markings.confidence,
            Channel::Acoustics => self.acoustics.confidence,
        }
    }

    pub fn confidences(&self) -> [f64; 7] {
        Channel::ALL.map(|c| self.confidence(c))
    }

    /// Replace a channel with its blank reading at confidence 0.
    pub fn clear(&mut self, channel: Channel) {
        match channel {
            Channel::Position => self.position = Reading::blank(),
            Channel::Activity => self.activity = Reading::blank(),
            Channel::Possession => self.possession = Reading::blank(),
            Channel::Movement => self.movement = Reading::blank(),
            Channel::Grouping => self.grouping = Reading::blank(),
            Channel::Markings => self.markings = Reading::blank(),
            Channel::Acoustics => self.acoustics = Reading::blank(),
        }
    }

    /// True when the channel's reading is the blank value.
    pub fn reading_is_blank(&self, channel: Channel) -> bool {
        match channel {
            Channel::Position => self.position.value.is_zero(),
            Channel::Activity => self.activity.value.is_empty(),
            Channel::Possession => self.possession.value.is_empty(),
            Channel::Movement => self.movement.value.is_zero(),
            Channel::Grouping => self.grouping.value == Grouping::default(),
            Channel::Markings => self.markings.value.is_empty(),
            Channel::Acoustics => self.acoustics.value.is_empty(),
        }
    }

    pub fn observed(&self, channel: Channel) -> bool {
        self.confidence(channel) > 0.0
    }

    /// Number of hostile-indicative flags present: firing, emplacing,
    /// weapon, formation, gunfire.
    pub fn hostile_indicators(&self) -> usize {
        [
            self.activity.value.contains(Activity::FIRING),
            self.activity.value.contains(Activity::EMPLACING),
            self.possession.value.contains(Possession::WEAPON),
            self.grouping.value.formation,
            self.acoustics.value.contains(Acoustics::GUNFIRE),
        ]
        .iter()
        .filter(|b| **b)
        .count()
    }
}

/// Size of the published hostile-indicative flag list.
pub const HOSTILE_INDICATOR_COUNT: usize = 5;

macro_rules! flag_names {
    ($ty:ty, $fn_parse:ident, $fn_names:ident, [$(($flag:expr, $name:literal)),* $(,)?]) => {
        pub fn $fn_parse(name: &str) -> Option<$ty> {
            match name {
                $($name => Some($flag),)*
                _ => None,
            }
        }

        pub fn $fn_names(flags: $ty) -> Vec<&'static str> {
            let mut out = Vec::new();
            $(if flags.contains($flag) { out.push($name); })*
            out
        }
    };
}

flag_names!(Activity, parse_activity, activity_names, [
    (Activity::FIRING, "firing"),
    (Activity::EMPLACING, "emplacing"),
    (Activity::PLAYING, "playing"),
    (Activity::EMITTING, "emitting"),
    (Activity::DIRECTED_FIRE, "directed-fire"),
    (Activity::COMPLYING, "complying"),
]);

flag_names!(Possession, parse_possession, possession_names, [
    (Possession::WEAPON, "weapon"),
    (Possession::TOOL, "tool"),
    (Possession::NONE, "none"),
]);

flag_names!(Markings, parse_markings, markings_names, [
    (Markings::MILITARY_INSIGNIA, "military-insignia"),
    (Markings::MEDICAL_EMBLEM, "medical-emblem"),
    (Markings::CIVILIAN_DRESS, "civilian-dress"),
    (Markings::FRIENDLY_INSIGNIA, "friendly-insignia"),
    (Markings::WRECKAGE, "wreckage"),
]);

flag_names!(Acoustics, parse_acoustics, acoustics_names, [
    (Acoustics::GUNFIRE, "gunfire"),
    (Acoustics::SPEECH, "speech"),
    (Acoustics::SURRENDER_PROCLAMATION, "surrender-proclamation"),
]);
