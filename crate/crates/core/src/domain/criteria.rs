//! Predicate tables: classification rows, forbidden criteria, response table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{
    activity_names, acoustics_names, markings_names, parse_acoustics, parse_activity,
    parse_markings, parse_possession, possession_names, Acoustics, Activity, Channel,
    CharacteristicVector, Classification, CombatRole, Markings, MunitionKind,
    PerceptualThresholds, Possession, TargetNature, TargetStatus, TargetValue, Tick, ValueBand,
};

/// One testable fact about a target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Atom {
    Nature(TargetNature),
    Status(TargetStatus),
    Role(CombatRole),
    Band(ValueBand),
    Activity(Activity),
    Possession(Possession),
    Markings(Markings),
    Acoustics(Acoustics),
    Formation,
}

impl Atom {
    /// Sensor channel the atom reads, if any.
    pub fn channel(&self) -> Option<Channel> {
        match self {
            Atom::Activity(_) => Some(Channel::Activity),
            Atom::Possession(_) => Some(Channel::Possession),
            Atom::Markings(_) => Some(Channel::Markings),
            Atom::Acoustics(_) => Some(Channel::Acoustics),
            Atom::Formation => Some(Channel::Grouping),
            _ => None,
        }
    }

    fn holds(&self, cv: &CharacteristicVector, class: Option<(&Classification, ValueBand)>) -> Option<bool> {
        Some(match *self {
            Atom::Nature(n) => class?.0.nature == n,
            Atom::Status(s) => class?.0.status == s,
            Atom::Role(r) => class?.0.role == r,
            Atom::Band(b) => class?.1 == b,
            Atom::Activity(f) => cv.activity.value.contains(f),
            Atom::Possession(f) => cv.possession.value.contains(f),
            Atom::Markings(f) => cv.markings.value.contains(f),
            Atom::Acoustics(f) => cv.acoustics.value.contains(f),
            Atom::Formation => cv.grouping.value.formation,
        })
    }

    pub fn parse(text: &str) -> Result<Atom, String> {
        if text == "formation" {
            return Ok(Atom::Formation);
        }
        let (field, value) = text
            .split_once(':')
            .ok_or_else(|| format!("condition `{text}` is not of the form field:value"))?;
        let bad = || format!("unknown {field} value `{value}`");
        Ok(match field {
            "nature" => Atom::Nature(TargetNature::parse(value).ok_or_else(bad)?),
            "status" => Atom::Status(TargetStatus::parse(value).ok_or_else(bad)?),
            "role" => Atom::Role(CombatRole::parse(value).ok_or_else(bad)?),
            "band" => Atom::Band(ValueBand::parse(value).ok_or_else(bad)?),
            "activity" => Atom::Activity(parse_activity(value).ok_or_else(bad)?),
            "possession" => Atom::Possession(parse_possession(value).ok_or_else(bad)?),
            "markings" => Atom::Markings(parse_markings(value).ok_or_else(bad)?),
            "acoustics" => Atom::Acoustics(parse_acoustics(value).ok_or_else(bad)?),
            _ => return Err(format!("unknown condition field `{field}`")),
        })
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Nature(n) => write!(f, "nature:{n}"),
            Atom::Status(s) => write!(f, "status:{s}"),
            Atom::Role(r) => write!(f, "role:{r}"),
            Atom::Band(b) => write!(f, "band:{}", b.name()),
            Atom::Activity(a) => write!(f, "activity:{}", activity_names(*a).join("+")),
            Atom::Possession(p) => write!(f, "possession:{}", possession_names(*p).join("+")),
            Atom::Markings(m) => write!(f, "markings:{}", markings_names(*m).join("+")),
            Atom::Acoustics(a) => write!(f, "acoustics:{}", acoustics_names(*a).join("+")),
            Atom::Formation => f.write_str("formation"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Literal {
    pub atom: Atom,
    pub negated: bool,
}

impl Literal {
    pub fn pos(atom: Atom) -> Self {
        Self { atom, negated: false }
    }

    pub fn neg(atom: Atom) -> Self {
        Self { atom, negated: true }
    }

    /// Channel literals never hold, in either polarity, on an unobserved
    /// channel: absence of evidence is not evidence of absence.
    fn holds(&self, cv: &CharacteristicVector, class: Option<(&Classification, ValueBand)>) -> bool {
        if let Some(ch) = self.atom.channel() {
            if !cv.observed(ch) {
                return false;
            }
        }
        match self.atom.holds(cv, class) {
            Some(v) => v != self.negated,
            None => false,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("!")?;
        }
        self.atom.fmt(f)
    }
}

/// A conjunction of literals. The empty clause always holds.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Clause(pub Vec<Literal>);

impl Clause {
    pub fn of(literals: impl IntoIterator<Item = Literal>) -> Self {
        Self(literals.into_iter().collect())
    }

    pub fn parse(text: &str) -> Result<Clause, String> {
        let mut lits = Vec::new();
        for word in text.split_whitespace() {
            let (negated, body) = match word.strip_prefix('!') {
                Some(rest) => (true, rest),
                None => (false, word),
            };
            lits.push(Literal { atom: Atom::parse(body)?, negated });
        }
        if lits.is_empty() {
            return Err("empty condition".into());
        }
        Ok(Clause(lits))
    }

    /// Evaluate over sensor evidence alone (classification atoms fail).
    pub fn matches_evidence(&self, cv: &CharacteristicVector) -> bool {
        self.0.iter().all(|l| l.holds(cv, None))
    }

    pub fn matches(&self, cv: &CharacteristicVector, class: &Classification, band: ValueBand) -> bool {
        self.0.iter().all(|l| l.holds(cv, Some((class, band))))
    }

    pub fn reads_classification(&self) -> bool {
        self.0.iter().any(|l| l.atom.channel().is_none())
    }

    pub fn channels(&self) -> BTreeSet<Channel> {
        self.0.iter().filter_map(|l| l.atom.channel()).collect()
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let words: Vec<String> = self.0.iter().map(|l| l.to_string()).collect();
        f.write_str(&words.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRow {
    pub when: Clause,
    pub nature: TargetNature,
    pub status: TargetStatus,
    pub role: CombatRole,
    pub value: TargetValue,
}

impl ClassificationRow {
    pub fn new(when: &str, nature: TargetNature, status: TargetStatus, role: CombatRole) -> Self {
        Self {
            when: Clause::parse(when).expect("static clause"),
            nature,
            status,
            role,
            value: TargetValue::ZERO,
        }
    }

    pub fn with_value(mut self, value: TargetValue) -> Self {
        self.value = value;
        self
    }

    /// `<clause> => <nature> <status> <role> [<economic> <human> <strategic>]`
    pub fn parse(text: &str) -> Result<Self, String> {
        let (cond, out) = text
            .split_once("=>")
            .ok_or_else(|| "classification row needs `=>`".to_string())?;
        let when = Clause::parse(cond)?;
        if when.reads_classification() {
            return Err("classification conditions may only test sensor flags".into());
        }
        let words: Vec<&str> = out.split_whitespace().collect();
        if words.len() != 3 && words.len() != 6 {
            return Err("classification outcome is `nature status role [econ human strategic]`".into());
        }
        let nature = TargetNature::parse(words[0]).ok_or(format!("unknown nature `{}`", words[0]))?;
        let status = TargetStatus::parse(words[1]).ok_or(format!("unknown status `{}`", words[1]))?;
        let role = CombatRole::parse(words[2]).ok_or(format!("unknown role `{}`", words[2]))?;
        let mut value = TargetValue::ZERO;
        if words.len() == 6 {
            let nums: Result<Vec<f64>, _> = words[3..].iter().map(|w| w.parse::<f64>()).collect();
            let nums = nums.map_err(|_| "value components must be numbers".to_string())?;
            value = TargetValue::new(nums[0], nums[1], nums[2]);
            if !value.is_valid() {
                return Err("value components must be finite and non-negative".into());
            }
        }
        Ok(Self { when, nature, status, role, value })
    }
}

impl fmt::Display for ClassificationRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} => {} {} {}", self.when, self.nature, self.status, self.role)?;
        if self.value != TargetValue::ZERO {
            write!(f, " {} {} {}", self.value.economic, self.value.human_life, self.value.strategic)?;
        }
        Ok(())
    }
}

/// Ordered rows; the first matching row wins. A target matching no row is
/// undetermined and non-combatant.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassificationTable {
    pub rows: Vec<ClassificationRow>,
}

/// The table used when a mission supplies none.
pub fn reference_classification_table() -> ClassificationTable {
    use CombatRole::{Combatant, NonCombatant};
    use TargetNature::{Friendly, Hostile, Neutral};
    use TargetStatus::{Active, Dormant, Neutralized};
    ClassificationTable {
        rows: vec![
            ClassificationRow::new("markings:wreckage", TargetNature::Undetermined, Neutralized, NonCombatant),
            ClassificationRow::new("markings:friendly-insignia", Friendly, Active, Combatant),
            ClassificationRow::new(
                "acoustics:surrender-proclamation activity:complying",
                Hostile,
                Dormant,
                Combatant,
            )
            .with_value(TargetValue::new(10.0, 0.0, 10.0)),
            ClassificationRow::new("markings:medical-emblem", Neutral, Active, NonCombatant),
            ClassificationRow::new("activity:playing", Neutral, Active, NonCombatant),
            ClassificationRow::new("activity:firing possession:weapon", Hostile, Active, Combatant)
                .with_value(TargetValue::new(10.0, 0.0, 30.0)),
            ClassificationRow::new("activity:emplacing", Hostile, Active, Combatant)
                .with_value(TargetValue::new(5.0, 0.0, 40.0)),
            ClassificationRow::new(
                "possession:weapon markings:military-insignia",
                Hostile,
                Active,
                Combatant,
            )
            .with_value(TargetValue::new(10.0, 0.0, 20.0)),
            ClassificationRow::new(
                "markings:civilian-dress !possession:weapon",
                Neutral,
                Active,
                NonCombatant,
            ),
        ],
    }
}

/// Clauses describing targets that may never be engaged. Always contains
/// `role:noncombatant`; clauses are only ever added.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForbiddenCriteria {
    clauses: Vec<Clause>,
}

impl Default for ForbiddenCriteria {
    fn default() -> Self {
        Self::new(Vec::new())
    }
}

impl ForbiddenCriteria {
    pub fn noncombatant_clause() -> Clause {
        Clause::of([Literal::pos(Atom::Role(CombatRole::NonCombatant))])
    }

    pub fn new(clauses: Vec<Clause>) -> Self {
        let mut out = Self { clauses: vec![Self::noncombatant_clause()] };
        out.extend(clauses);
        out
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    /// Append clauses not already present.
    pub fn extend(&mut self, clauses: impl IntoIterator<Item = Clause>) {
        for c in clauses {
            if !self.clauses.contains(&c) {
                self.clauses.push(c);
            }
        }
    }

    pub fn contains_all(&self, other: &ForbiddenCriteria) -> bool {
        other.clauses.iter().all(|c| self.clauses.contains(c))
    }

    pub fn matches(&self, cv: &CharacteristicVector, class: &Classification, band: ValueBand) -> bool {
        self.clauses.iter().any(|c| c.matches(cv, class, band))
    }
}

/// Munition per value band for hostile targets. Total over the three bands.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseTable(pub BTreeMap<ValueBand, MunitionKind>);

impl ResponseTable {
    pub fn uniform(kind: &str) -> Self {
        Self(ValueBand::ALL.into_iter().map(|b| (b, MunitionKind::new(kind))).collect())
    }

    pub fn get(&self, band: ValueBand) -> Option<&MunitionKind> {
        self.0.get(&band)
    }

    pub fn is_total(&self) -> bool {
        ValueBand::ALL.iter().all(|b| self.0.contains_key(b))
    }
}

/// Band boundaries on the peak value component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueBands {
    pub medium_from: f64,
    pub high_from: f64,
}

impl Default for ValueBands {
    fn default() -> Self {
        Self { medium_from: 20.0, high_from: 60.0 }
    }
}

impl ValueBands {
    pub fn band(&self, value: &TargetValue) -> ValueBand {
        let peak = value.peak();
        if peak >= self.high_from {
            ValueBand::High
        } else if peak >= self.medium_from {
            ValueBand::Medium
        } else {
            ValueBand::Low
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionConfig {
    pub preplanned_targets: BTreeSet<u64>,
    pub forbidden: ForbiddenCriteria,
    pub ceasefire_timetable: Option<Tick>,
    pub thresholds: PerceptualThresholds,
    pub response_table: ResponseTable,
    pub value_bands: ValueBands,
    pub classification_table: ClassificationTable,
    pub ruleset_version: u32,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            preplanned_targets: BTreeSet::new(),
            forbidden: ForbiddenCriteria::default(),
            ceasefire_timetable: None,
            thresholds: PerceptualThresholds::default(),
            response_table: ResponseTable::uniform("missile"),
            value_bands: ValueBands::default(),
            classification_table: reference_classification_table(),
            ruleset_version: 1,
        }
    }
}

impl MissionConfig {
    pub fn band(&self, value: &TargetValue) -> ValueBand {
        self.value_bands.band(value)
    }
}
