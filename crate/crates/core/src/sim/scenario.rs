//! Scenario documents: a flat, section-oriented text format. The grammar is
//! in `docs/scenario.md`. Validation collects every problem rather than
//! stopping at the first.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use super::{BattleSpace, BehaviorChange, Effect, Entity, ScriptStep, SensorSpec, Truth};
use crate::codec::DEFAULT_STALENESS_LIMIT;
use crate::collab::SwapSchedule;
use crate::command::{Decision, LinkParams, LinkTable, OperatorPolicy, PolicyMode};
use crate::domain::{
    parse_acoustics, parse_activity, parse_markings, parse_possession, Acoustics, Activity, Channel,
    ClassificationRow, ClassificationTable, Clause, EntityKind, EntityRef, Grouping, Markings,
    MissionConfig, MunitionKind, Possession, ResourceState, ResponseTable, TargetNature, Tick,
    ValueBand, ValueBands, Vec2,
};
use crate::switch::{CapturedBy, DEFAULT_SAFETY_RADIUS};

#[derive(Debug, Clone, PartialEq)]
pub struct PlatformSpec {
    pub entity: EntityRef,
    pub mission: String,
    pub position: Vec2,
    pub velocity: Vec2,
    pub activation: Tick,
    pub sensor: SensorSpec,
    pub resources: ResourceState,
    pub safety_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandSpec {
    pub entity: EntityRef,
    pub position: Vec2,
}

/// How an injected key is forged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tamper {
    /// Invert one byte of an otherwise valid encoding.
    Flip { offset: usize },
    /// Well-formed key timestamped `age` ticks in the past.
    Stale { age: u64 },
    /// Well-formed framing around an out-of-range confidence.
    Range,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioEvent {
    FailMobility { platform: u64 },
    Capture { platform: u64, by: CapturedBy },
    Ceasefire { from: u64, at: Tick },
    Inject { platform: u64, target: u64, tamper: Tamper },
    Maintenance { platform: u64, version: u32, forbid: Vec<Clause> },
    Swap { initiator: u64, acceptor: u64, targets: Vec<u64>, schedule: SwapSchedule },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledEvent {
    pub at: Tick,
    pub event: ScenarioEvent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub max_ticks: u64,
    pub noise_scale: f64,
    pub staleness_limit: u64,
    pub operator: OperatorPolicy,
    pub effects: BTreeMap<MunitionKind, Effect>,
    pub links: LinkTable,
    pub missions: BTreeMap<String, MissionConfig>,
    pub platforms: Vec<PlatformSpec>,
    pub targets: Vec<Entity>,
    pub commands: Vec<CommandSpec>,
    pub events: Vec<ScheduledEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaIssue {
    pub line: usize,
    pub path: String,
    pub message: String,
}

impl fmt::Display for SchemaIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}: {}", self.line, self.path, self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{} schema error(s):\n{}", issues.len(), issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
pub struct SchemaError {
    pub issues: Vec<SchemaIssue>,
}

impl Scenario {
    /// The world at tick 0.
    pub fn world(&self) -> BattleSpace {
        let mut w = BattleSpace::new(self.seed);
        w.noise_scale = self.noise_scale;
        w.effects = self.effects.clone();
        for p in &self.platforms {
            let mut e = Entity::new(p.entity.clone(), p.position);
            e.velocity = p.velocity;
            e.truth.markings = Markings::FRIENDLY_INSIGNIA;
            e.ground_truth_nature = TargetNature::Friendly;
            w.add(e);
        }
        for c in &self.commands {
            let mut e = Entity::new(c.entity.clone(), c.position);
            e.truth.markings = Markings::FRIENDLY_INSIGNIA;
            e.ground_truth_nature = TargetNature::Friendly;
            w.add(e);
        }
        for t in &self.targets {
            w.add(t.clone());
        }
        w
    }

    pub fn mission_of(&self, platform: &PlatformSpec) -> &MissionConfig {
        &self.missions[&platform.mission]
    }
}

struct Line<'a> {
    no: usize,
    text: &'a str,
}

struct Section<'a> {
    kind: &'a str,
    arg: Option<&'a str>,
    line: usize,
    lines: Vec<Line<'a>>,
}

#[derive(Default)]
struct Issues(Vec<SchemaIssue>);

impl Issues {
    fn push(&mut self, line: usize, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(SchemaIssue { line, path: path.into(), message: message.into() });
    }
}

fn split_kv(text: &str) -> Option<(&str, &str)> {
    let (k, v) = text.split_once('=')?;
    Some((k.trim(), v.trim()))
}

fn num<T: std::str::FromStr>(s: &str) -> Result<T, String> {
    s.trim().parse::<T>().map_err(|_| format!("`{s}` is not a valid number"))
}

fn vec2(s: &str) -> Result<Vec2, String> {
    let parts: Vec<&str> = s.split_whitespace().collect();
    if parts.len() != 2 {
        return Err(format!("expected `x y`, got `{s}`"));
    }
    let v = Vec2::new(num(parts[0])?, num(parts[1])?);
    if v.is_finite() {
        Ok(v)
    } else {
        Err("coordinates must be finite".into())
    }
}

fn ids(s: &str) -> Result<Vec<u64>, String> {
    s.split(|c: char| c == ',' || c.is_whitespace()).filter(|w| !w.is_empty()).map(num).collect()
}

fn flags<T: Default + std::ops::BitOr<Output = T>>(
    s: &str,
    parse: fn(&str) -> Option<T>,
    field: &str,
) -> Result<T, String> {
    let mut out = T::default();
    for w in s.split_whitespace() {
        if w == "-" {
            continue;
        }
        out = out | parse(w).ok_or_else(|| format!("unknown {field} flag `{w}`"))?;
    }
    Ok(out)
}

fn grouping(s: &str) -> Result<Grouping, String> {
    let parts: Vec<&str> = s.split_whitespace().collect();
    match parts.as_slice() {
        [n] => Ok(Grouping { count: num(n)?, formation: false }),
        [n, "formation"] => Ok(Grouping { count: num(n)?, formation: true }),
        _ => Err(format!("expected `<count> [formation]`, got `{s}`")),
    }
}

fn sections<'a>(doc: &'a str, issues: &mut Issues) -> Vec<Section<'a>> {
    let mut out: Vec<Section> = Vec::new();
    for (i, raw) in doc.lines().enumerate() {
        let no = i + 1;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        if let Some(inner) = text.strip_prefix('[') {
            let Some(inner) = inner.strip_suffix(']') else {
                issues.push(no, "document", "unterminated section header");
                continue;
            };
            let mut words = inner.split_whitespace();
            let kind = words.next().unwrap_or("");
            let arg = words.next();
            if words.next().is_some() {
                issues.push(no, "document", format!("section header `[{inner}]` has too many words"));
            }
            out.push(Section { kind, arg, line: no, lines: Vec::new() });
        } else if let Some(s) = out.last_mut() {
            s.lines.push(Line { no, text });
        } else {
            issues.push(no, "document", "content before the first section header");
        }
    }
    out
}

struct Builder {
    issues: Issues,
    scenario: Scenario,
    ids_seen: BTreeMap<u64, (EntityKind, usize)>,
    scripts: Vec<(u64, usize, Vec<ScriptStep>)>,
    mission_refs: Vec<(String, String, usize)>,
}

/// Parse and validate a scenario document.
pub fn load_scenario(doc: &str) -> Result<Scenario, SchemaError> {
    let mut b = Builder {
        issues: Issues::default(),
        scenario: Scenario {
            name: String::new(),
            seed: 0,
            max_ticks: 200,
            noise_scale: 1.0,
            staleness_limit: DEFAULT_STALENESS_LIMIT,
            operator: OperatorPolicy::always_deny(),
            effects: BTreeMap::new(),
            links: LinkTable::default(),
            missions: BTreeMap::new(),
            platforms: Vec::new(),
            targets: Vec::new(),
            commands: Vec::new(),
            events: Vec::new(),
        },
        ids_seen: BTreeMap::new(),
        scripts: Vec::new(),
        mission_refs: Vec::new(),
    };
    let secs = sections(doc, &mut b.issues);
    let mut seen_singletons = BTreeSet::new();
    let mut event_sections = Vec::new();
    for s in &secs {
        let singleton = matches!(s.kind, "scenario" | "effects" | "link" | "operator" | "events");
        if singleton {
            if s.arg.is_some() {
                b.issues.push(s.line, s.kind, "this section takes no argument");
            }
            if !seen_singletons.insert(s.kind) {
                b.issues.push(s.line, s.kind, "section appears more than once");
            }
        }
        match s.kind {
            "scenario" => b.scenario_section(s),
            "effects" => b.effects_section(s),
            "link" => b.link_section(s),
            "operator" => b.operator_section(s),
            "mission" => b.mission_section(s),
            "platform" | "target" | "command" => b.entity_section(s),
            "script" => b.script_section(s),
            "events" => event_sections.push(s),
            other => b.issues.push(s.line, other, format!("unknown section `[{other}]`")),
        }
    }
    for s in event_sections {
        b.events_section(s);
    }
    b.finish()
}

impl Builder {
    fn id_arg(&mut self, s: &Section) -> Option<u64> {
        match s.arg.map(num::<u64>) {
            Some(Ok(id)) => Some(id),
            Some(Err(e)) => {
                self.issues.push(s.line, s.kind, e);
                None
            }
            None => {
                self.issues.push(s.line, s.kind, "section needs an id");
                None
            }
        }
    }

    fn kv<'a>(&mut self, path: &str, l: &Line<'a>) -> Option<(&'a str, &'a str)> {
        let r = split_kv(l.text);
        if r.is_none() {
            self.issues.push(l.no, path, format!("expected `key = value`, got `{}`", l.text));
        }
        r
    }

    fn check<T>(&mut self, line: usize, path: &str, r: Result<T, String>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.issues.push(line, path, e);
                None
            }
        }
    }

    fn scenario_section(&mut self, s: &Section) {
        for l in &s.lines {
            let Some((k, v)) = self.kv("scenario", l) else { continue };
            let path = format!("scenario.{k}");
            let sc = &mut self.scenario;
            let r: Result<(), String> = match k {
                "name" if !v.is_empty() => {
                    sc.name = v.to_string();
                    Ok(())
                }
                "name" => Err("name must not be empty".into()),
                "seed" => num(v).map(|x| sc.seed = x),
                "max_ticks" => num(v).map(|x| sc.max_ticks = x),
                "noise_scale" => num::<f64>(v).and_then(|x| {
                    if x.is_finite() && x >= 0.0 {
                        sc.noise_scale = x;
                        Ok(())
                    } else {
                        Err("noise_scale must be finite and non-negative".into())
                    }
                }),
                "staleness_limit" => num(v).map(|x| sc.staleness_limit = x),
                _ => Err(format!("unknown key `{k}`")),
            };
            self.check(l.no, &path, r);
        }
    }

    fn effects_section(&mut self, s: &Section) {
        for l in &s.lines {
            let Some((k, v)) = self.kv("effects", l) else { continue };
            let path = format!("effects.{k}");
            let parts: Vec<&str> = v.split_whitespace().collect();
            let r = match parts.as_slice() {
                [p, t] => num::<f64>(p).and_then(|p| {
                    let flight = num::<u64>(t)?;
                    if !(0.0..=1.0).contains(&p) {
                        Err("neutralization probability must be in [0,1]".into())
                    } else if flight == 0 {
                        Err("flight time must be at least 1 tick".into())
                    } else {
                        Ok(Effect { p_neutralize: p, flight_time: flight })
                    }
                }),
                _ => Err("expected `<probability> <flight ticks>`".into()),
            };
            if let Some(e) = self.check(l.no, &path, r) {
                if self.scenario.effects.insert(MunitionKind::new(k), e).is_some() {
                    self.issues.push(l.no, path, "munition listed twice");
                }
            }
        }
    }

    fn link_params(v: &str) -> Result<LinkParams, String> {
        let parts: Vec<&str> = v.split_whitespace().collect();
        match parts.as_slice() {
            [d, p] => {
                let loss = num::<f64>(p)?;
                if !(0.0..=1.0).contains(&loss) {
                    return Err("loss probability must be in [0,1]".into());
                }
                Ok(LinkParams { delay: num(d)?, loss })
            }
            _ => Err("expected `<delay ticks> <loss probability>`".into()),
        }
    }

    fn link_section(&mut self, s: &Section) {
        for l in &s.lines {
            let Some((k, v)) = self.kv("link", l) else { continue };
            let path = format!("link.{k}");
            let Some(params) = self.check(l.no, &path, Self::link_params(v)) else { continue };
            if k == "default" {
                self.scenario.links.default = params;
                continue;
            }
            let pair = k.split_once("->").map(|(a, b)| (num::<u64>(a), num::<u64>(b)));
            match pair {
                Some((Ok(a), Ok(b))) => {
                    self.scenario.links.links.insert((a, b), params);
                }
                _ => self.issues.push(l.no, path, "expected `default` or `<from> -> <to>`"),
            }
        }
    }

    fn operator_section(&mut self, s: &Section) {
        for l in &s.lines {
            let Some((k, v)) = self.kv("operator", l) else { continue };
            let path = format!("operator.{k}");
            let op = &mut self.scenario.operator;
            let r: Result<(), String> = match k {
                "mode" => match v {
                    "deny" => {
                        let _: () = op.mode = PolicyMode::AlwaysDeny;
                        Ok(())
                    },
                    "scripted" => {
                        let _: () = op.mode = PolicyMode::ScriptedTable;
                        Ok(())
                    },
                    "prompt" => {
                        let _: () = op.mode = PolicyMode::InteractivePrompt;
                        Ok(())
                    },
                    _ => Err(format!("unknown mode `{v}` (deny, scripted, prompt)")),
                },
                _ => num::<u64>(k)
                    .map_err(|_| format!("unknown key `{k}`"))
                    .and_then(|id| {
                        let d = match v {
                            "approve" => Decision::Approve,
                            "deny" => Decision::Deny,
                            _ => return Err(format!("decision must be approve or deny, got `{v}`")),
                        };
                        op.table.insert(id, d);
                        Ok(())
                    }),
            };
            self.check(l.no, &path, r);
        }
    }

    fn mission_section(&mut self, s: &Section) {
        let Some(name) = s.arg else {
            self.issues.push(s.line, "mission", "section needs a name");
            return;
        };
        let base = format!("mission {name}");
        let mut cfg = MissionConfig::default();
        let mut rows = Vec::new();
        let mut forbid = Vec::new();
        for l in &s.lines {
            let Some((k, v)) = self.kv(&base, l) else { continue };
            let path = format!("{base}.{k}");
            let t = &mut cfg.thresholds;
            let r: Result<(), String> = match k {
                "preplanned" => ids(v).map(|x| cfg.preplanned_targets.extend(x)),
                "ceasefire" => num(v).map(|x| cfg.ceasefire_timetable = Some(Tick(x))),
                "forbid" => Clause::parse(v).map(|c| forbid.push(c)),
                "classify" => ClassificationRow::parse(v).map(|r| rows.push(r)),
                "response" => parse_response(v).map(|r| cfg.response_table = r),
                "bands" => {
                    let p: Result<Vec<f64>, _> = v.split_whitespace().map(num::<f64>).collect();
                    match p.as_deref() {
                        Ok([m, h]) if m < h && *m >= 0.0 => {
                            cfg.value_bands = ValueBands { medium_from: *m, high_from: *h };
                            Ok(())
                        }
                        Ok(_) => Err("expected `<medium from> <high from>` with 0 <= medium < high".into()),
                        Err(e) => Err(e.clone()),
                    }
                }
                "channel_min" => {
                    let p: Result<Vec<f64>, _> = v.split_whitespace().map(num::<f64>).collect();
                    match p {
                        Ok(vals) if vals.len() == 1 => {
                            let _: () = t.per_channel_min = [vals[0]; 7];
                            Ok(())
                        },
                        Ok(vals) if vals.len() == Channel::ALL.len() => {
                            t.per_channel_min.copy_from_slice(&vals);
                            Ok(())
                        }
                        Ok(_) => Err("expected one value or seven".into()),
                        Err(e) => Err(e),
                    }
                }
                "hostility_threshold" => num(v).map(|x| t.hostility_threshold = x),
                "gotcha_window" => num(v).map(|x| t.gotcha_window = x),
                "autonomy_confidence" => num(v).map(|x| t.autonomy_confidence = x),
                "ruleset_version" => num(v).map(|x| cfg.ruleset_version = x),
                _ => Err(format!("unknown key `{k}`")),
            };
            self.check(l.no, &path, r);
        }
        if let Err(e) = cfg.thresholds.validate() {
            self.issues.push(s.line, format!("{base}.thresholds"), e);
        }
        if !rows.is_empty() {
            cfg.classification_table = ClassificationTable { rows };
        }
        cfg.forbidden.extend(forbid);
        if self.scenario.missions.insert(name.to_string(), cfg).is_some() {
            self.issues.push(s.line, base, "mission defined twice");
        }
    }

    fn entity_section(&mut self, s: &Section) {
        let Some(id) = self.id_arg(s) else { return };
        let kind = match s.kind {
            "platform" => EntityKind::Platform,
            "target" => EntityKind::Target,
            _ => EntityKind::CommandCentre,
        };
        let base = format!("{} {id}", s.kind);
        if let Some((_, line)) = self.ids_seen.insert(id, (kind, s.line)) {
            self.issues.push(s.line, &base, format!("entity id {id} already used at line {line}"));
        }
        let mut name = None;
        let mut position = Vec2::ZERO;
        let mut velocity = Vec2::ZERO;
        let mut truth = Truth::default();
        let mut nature = TargetNature::Undetermined;
        let mut mission = None;
        let mut activation = Tick::ZERO;
        let mut sensor = SensorSpec::default();
        let mut resources = ResourceState::new(100.0, 1000);
        let mut safety_radius = DEFAULT_SAFETY_RADIUS;
        for l in &s.lines {
            let Some((k, v)) = self.kv(&base, l) else { continue };
            let path = format!("{base}.{k}");
            let any = matches!(k, "name" | "position");
            let ok_here = any
                || match kind {
                    EntityKind::Platform => matches!(
                        k,
                        "mission" | "velocity" | "activation" | "fidelity" | "range" | "fuel" | "endurance"
                            | "weapon" | "safety_radius"
                    ),
                    EntityKind::Target => matches!(
                        k,
                        "velocity" | "nature" | "activity" | "possession" | "markings" | "acoustics" | "group"
                    ),
                    EntityKind::CommandCentre => false,
                };
            if !ok_here {
                self.issues.push(l.no, path, format!("unknown key `{k}` for a {}", s.kind));
                continue;
            }
            let r: Result<(), String> = match k {
                "name" => {
                    if v.is_empty() || v.len() > crate::key::MAX_NAME_BYTES {
                        Err("name must be 1 to 64 bytes".into())
                    } else {
                        name = Some(v.to_string());
                        Ok(())
                    }
                }
                "position" => vec2(v).map(|x| position = x),
                "velocity" => vec2(v).map(|x| velocity = x),
                "mission" => {
                    let _: () = mission = Some(v.to_string());
                    Ok(())
                },
                "activation" => num(v).map(|x| activation = Tick(x)),
                "fidelity" => num::<f64>(v).and_then(|x| {
                    if x > 0.0 && x <= 1.0 {
                        let _: () = sensor.fidelity = x;
                        Ok(())
                    } else {
                        Err("fidelity must be in (0,1]".into())
                    }
                }),
                "range" => num::<f64>(v).and_then(|x| {
                    if x > 0.0 && x.is_finite() {
                        let _: () = sensor.range = x;
                        Ok(())
                    } else {
                        Err("range must be positive".into())
                    }
                }),
                "fuel" => num::<f64>(v).and_then(|x| {
                    if x.is_finite() && x >= 0.0 {
                        let _: () = resources.fuel = x;
                        Ok(())
                    } else {
                        Err("fuel must be finite and non-negative".into())
                    }
                }),
                "endurance" => num(v).map(|x| resources.endurance = x),
                "weapon" => match v.split_whitespace().collect::<Vec<_>>().as_slice() {
                    [kind, n] => num::<u32>(n).map(|n| {
                        resources.weapons.insert(MunitionKind::new(*kind), n);
                    }),
                    _ => Err("expected `<munition> <count>`".into()),
                },
                "safety_radius" => num::<f64>(v).and_then(|x| {
                    if x >= 0.0 && x.is_finite() {
                        let _: () = safety_radius = x;
                        Ok(())
                    } else {
                        Err("safety_radius must be non-negative".into())
                    }
                }),
                "nature" => TargetNature::parse(v).map(|n| nature = n).ok_or(format!("unknown nature `{v}`")),
                "activity" => flags::<Activity>(v, parse_activity, "activity").map(|f| truth.activity = f),
                "possession" => {
                    flags::<Possession>(v, parse_possession, "possession").map(|f| truth.possession = f)
                }
                "markings" => flags::<Markings>(v, parse_markings, "markings").map(|f| truth.markings = f),
                "acoustics" => flags::<Acoustics>(v, parse_acoustics, "acoustics").map(|f| truth.acoustics = f),
                "group" => grouping(v).map(|g| truth.grouping = g),
                _ => unreachable!("keys filtered above"),
            };
            self.check(l.no, &path, r);
        }
        let Some(name) = name else {
            self.issues.push(s.line, format!("{base}.name"), "missing required key");
            return;
        };
        let entity = EntityRef::new(kind, id, name);
        match kind {
            EntityKind::Platform => {
                let Some(mission) = mission else {
                    self.issues.push(s.line, format!("{base}.mission"), "missing required key");
                    return;
                };
                self.mission_refs.push((base, mission.clone(), s.line));
                self.scenario.platforms.push(PlatformSpec {
                    entity,
                    mission,
                    position,
                    velocity,
                    activation,
                    sensor,
                    resources,
                    safety_radius,
                });
            }
            EntityKind::Target => {
                let mut e = Entity::new(entity, position);
                e.velocity = velocity;
                e.truth = truth;
                e.ground_truth_nature = nature;
                self.scenario.targets.push(e);
            }
            EntityKind::CommandCentre => self.scenario.commands.push(CommandSpec { entity, position }),
        }
    }

    fn script_section(&mut self, s: &Section) {
        let Some(id) = self.id_arg(s) else { return };
        let base = format!("script {id}");
        let mut steps: Vec<ScriptStep> = Vec::new();
        for l in &s.lines {
            let Some(rest) = l.text.strip_prefix("at ") else {
                self.issues.push(l.no, &base, "script lines are `at <tick> <field> = <value>`");
                continue;
            };
            let (tick_text, assignment) = rest.trim().split_once(char::is_whitespace).unwrap_or((rest, ""));
            let Some(tick) = self.check(l.no, &base, num::<u64>(tick_text)) else { continue };
            let Some((k, v)) = split_kv(assignment) else {
                self.issues.push(l.no, &base, "script lines are `at <tick> <field> = <value>`");
                continue;
            };
            let path = format!("{base}.at {tick}.{k}");
            if let Some(last) = steps.last() {
                if last.tick.0 > tick {
                    self.issues.push(l.no, &path, format!("script ticks must not decrease ({} after {})", tick, last.tick));
                    continue;
                }
            }
            if steps.last().is_none_or(|s| s.tick.0 != tick) {
                steps.push(ScriptStep { tick: Tick(tick), change: BehaviorChange::default() });
            }
            let c = &mut steps.last_mut().expect("step pushed").change;
            let r: Result<(), String> = match k {
                "activity" => flags::<Activity>(v, parse_activity, "activity").map(|f| c.activity = Some(f)),
                "possession" => {
                    flags::<Possession>(v, parse_possession, "possession").map(|f| c.possession = Some(f))
                }
                "markings" => flags::<Markings>(v, parse_markings, "markings").map(|f| c.markings = Some(f)),
                "acoustics" => flags::<Acoustics>(v, parse_acoustics, "acoustics").map(|f| c.acoustics = Some(f)),
                "group" => grouping(v).map(|g| {
                    c.group_count = Some(g.count);
                    c.formation = Some(g.formation);
                }),
                "velocity" => vec2(v).map(|x| c.velocity = Some(x)),
                _ => Err(format!("unknown script field `{k}`")),
            };
            self.check(l.no, &path, r);
        }
        self.scripts.push((id, s.line, steps));
    }

    fn events_section(&mut self, s: &Section) {
        for l in &s.lines {
            let words: Vec<&str> = l.text.split_whitespace().collect();
            let path = format!("events.line {}", l.no);
            let r = self.parse_event(&words, l.text);
            if let Some(ev) = self.check(l.no, &path, r) {
                self.scenario.events.push(ev);
            }
        }
    }

    fn platform_id(&self, s: &str) -> Result<u64, String> {
        let id = num::<u64>(s)?;
        match self.ids_seen.get(&id) {
            Some((EntityKind::Platform, _)) => Ok(id),
            _ => Err(format!("{id} is not a platform")),
        }
    }

    fn target_id(&self, s: &str) -> Result<u64, String> {
        let id = num::<u64>(s)?;
        match self.ids_seen.get(&id) {
            Some((EntityKind::Target, _)) => Ok(id),
            _ => Err(format!("{id} is not a target")),
        }
    }

    fn parse_event(&self, w: &[&str], text: &str) -> Result<ScheduledEvent, String> {
        let ["at", tick, verb, args @ ..] = w else {
            return Err("event lines are `at <tick> <verb> ...`".into());
        };
        let at = Tick(num(tick)?);
        let event = match (*verb, args) {
            ("fail-mobility", [p]) => ScenarioEvent::FailMobility { platform: self.platform_id(p)? },
            ("capture", [p, by]) => ScenarioEvent::Capture {
                platform: self.platform_id(p)?,
                by: match *by {
                    "hostile" => CapturedBy::Hostile,
                    "nonhostile" => CapturedBy::NonHostile,
                    _ => return Err(format!("captor must be hostile or nonhostile, got `{by}`")),
                },
            },
            ("ceasefire", [t, "from", c]) => {
                let from = num::<u64>(c)?;
                if !matches!(self.ids_seen.get(&from), Some((EntityKind::CommandCentre, _))) {
                    return Err(format!("{from} is not a command centre"));
                }
                ScenarioEvent::Ceasefire { from, at: Tick(num(t)?) }
            }
            ("inject", [p, "target", t, mode, rest @ ..]) => ScenarioEvent::Inject {
                platform: self.platform_id(p)?,
                target: self.target_id(t)?,
                tamper: match (*mode, rest) {
                    ("flip", [o]) => Tamper::Flip { offset: num(o)? },
                    ("stale", [a]) => Tamper::Stale { age: num(a)? },
                    ("range", []) => Tamper::Range,
                    _ => return Err("tamper is `flip <offset>`, `stale <age>` or `range`".into()),
                },
            },
            ("maintenance", [p, "version", v, rest @ ..]) => {
                let forbid = match rest {
                    [] => Vec::new(),
                    ["forbid", ..] => {
                        let clause = text.split_once("forbid").map(|(_, c)| c.trim()).unwrap_or("");
                        vec![Clause::parse(clause)?]
                    }
                    _ => return Err("expected `forbid <clause>` after the version".into()),
                };
                ScenarioEvent::Maintenance { platform: self.platform_id(p)?, version: num(v)?, forbid }
            }
            ("swap", [a, "->", b, "targets", rest @ ..]) => {
                let (list, schedule) = match rest {
                    [list @ .., "schedule", sch] => (
                        list,
                        match *sch {
                            "normative" => SwapSchedule::Normative,
                            "naive" => SwapSchedule::Naive,
                            _ => return Err(format!("unknown schedule `{sch}`")),
                        },
                    ),
                    list => (list, SwapSchedule::Normative),
                };
                let targets: Result<Vec<u64>, String> = list.iter().map(|t| self.target_id(t)).collect();
                let targets = targets?;
                if targets.is_empty() {
                    return Err("a swap needs at least one target".into());
                }
                let (initiator, acceptor) = (self.platform_id(a)?, self.platform_id(b)?);
                if initiator == acceptor {
                    return Err("a platform cannot swap with itself".into());
                }
                ScenarioEvent::Swap { initiator, acceptor, targets, schedule }
            }
            _ => return Err(format!("unrecognised event `{}`", w[2..].join(" "))),
        };
        Ok(ScheduledEvent { at, event })
    }

    fn finish(mut self) -> Result<Scenario, SchemaError> {
        if self.scenario.name.is_empty() {
            self.issues.push(0, "scenario.name", "missing required key");
        }
        if self.scenario.platforms.is_empty() {
            self.issues.push(0, "platform", "a scenario needs at least one platform");
        }
        for (path, mission, line) in std::mem::take(&mut self.mission_refs) {
            if !self.scenario.missions.contains_key(&mission) {
                self.issues.push(line, format!("{path}.mission"), format!("no mission named `{mission}`"));
            }
        }
        let mut missions = std::mem::take(&mut self.scenario.missions);
        for (name, cfg) in &mut missions {
            for t in &cfg.preplanned_targets {
                if !matches!(self.ids_seen.get(t), Some((EntityKind::Target, _))) {
                    self.issues.push(0, format!("mission {name}.preplanned"), format!("{t} is not a target"));
                }
            }
            for m in cfg.response_table.0.values() {
                if !self.scenario.effects.contains_key(m) {
                    self.scenario.effects.insert(m.clone(), Effect { p_neutralize: 1.0, flight_time: 1 });
                }
            }
        }
        self.scenario.missions = missions;
        for (id, line, steps) in std::mem::take(&mut self.scripts) {
            match self.scenario.targets.iter_mut().find(|t| t.entity.id == id) {
                Some(t) if t.script.is_empty() => t.script = steps,
                Some(_) => self.issues.push(line, format!("script {id}"), "target already has a script"),
                None => self.issues.push(line, format!("script {id}"), format!("{id} is not a target")),
            }
        }
        for (from, to) in self.scenario.links.links.keys() {
            for id in [from, to] {
                if !self.ids_seen.contains_key(id) {
                    self.issues.push(0, format!("link.{from} -> {to}"), format!("unknown entity {id}"));
                }
            }
        }
        self.scenario.platforms.sort_by_key(|p| p.entity.id);
        self.scenario.targets.sort_by_key(|t| t.entity.id);
        self.scenario.commands.sort_by_key(|c| c.entity.id);
        self.scenario.events.sort_by_key(|e| e.at);
        if self.issues.0.is_empty() {
            Ok(self.scenario)
        } else {
            Err(SchemaError { issues: self.issues.0 })
        }
    }
}

fn parse_response(v: &str) -> Result<ResponseTable, String> {
    let words: Vec<&str> = v.split_whitespace().collect();
    if let [single] = words.as_slice() {
        if !single.contains(':') {
            return Ok(ResponseTable::uniform(single));
        }
    }
    let mut table = BTreeMap::new();
    for w in words {
        let (band, kind) = w.split_once(':').ok_or(format!("expected `<band>:<munition>`, got `{w}`"))?;
        let band = ValueBand::parse(band).ok_or(format!("unknown band `{band}`"))?;
        table.insert(band, MunitionKind::new(kind));
    }
    let table = ResponseTable(table);
    if table.is_total() {
        Ok(table)
    } else {
        Err("response table must cover low, medium and high".into())
    }
}
