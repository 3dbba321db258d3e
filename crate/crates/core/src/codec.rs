//! CKSS v1: the byte format keys travel in between platforms and command
//! centres.
//!
//! ```text
//! file    = header segment{13} trailer
//! header  = "CKSS" version:u8=1 count:u16
//! segment = id:u16 len:u32 payload[len] crc:u32     crc over id|len|payload
//! trailer = crc:u32                                  crc over header and segments
//! ```
//!
//! All integers and floats are big-endian; checksums are CRC-32C.
//! `docs/ckss.md` lists every payload layout.

use std::fmt;

use crc::{Crc, CRC_32_ISCSI};
use serde::{Deserialize, Serialize};

use crate::domain::{
    Acoustics, Activity, CharacteristicVector, Channel, CombatRole, Grouping, Markings, MunitionKind,
    Possession, Reading, ResourceState, TargetNature, TargetStatus, TargetValue, Tick, Vec2,
    FORMATION_BIT,
};
use crate::key::{CodifiedKey, MAX_NAME_BYTES};

pub const MAGIC: [u8; 4] = *b"CKSS";
pub const VERSION: u8 = 1;
pub const SEGMENT_COUNT: u16 = 13;
pub const HEADER_LEN: usize = 7;
pub const TRAILER_LEN: usize = 4;

/// Default age, in ticks, beyond which a key is stale.
pub const DEFAULT_STALENESS_LIMIT: u64 = 50;

pub const CASTAGNOLI: Crc<u32> = Crc::<u32>::new(&CRC_32_ISCSI);

pub fn crc32c(bytes: &[u8]) -> u32 {
    CASTAGNOLI.checksum(bytes)
}

/// Segment ids. 0 and 0xFFFF address the header and trailer in fault lists.
pub mod segment {
    pub const HEADER: u16 = 0;
    pub const WEAPON_ID: u16 = 1;
    pub const WEAPON_NAME: u16 = 2;
    pub const TARGET_ID: u16 = 3;
    pub const TARGET_NAME: u16 = 4;
    pub const NATURE: u16 = 5;
    pub const TIMESTAMP: u16 = 6;
    pub const CHARACTERISTICS: u16 = 7;
    pub const STATUS: u16 = 8;
    pub const ROLE: u16 = 9;
    pub const VALUE: u16 = 10;
    pub const RESOURCES: u16 = 11;
    pub const VICINITY_TARGETS: u16 = 12;
    pub const VICINITY_FRIENDLIES: u16 = 13;
    pub const TRAILER: u16 = 0xFFFF;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaultKind {
    ChecksumMismatch,
    OutOfRangeValue,
    Truncated,
    UnknownSegment,
    StaleTimestamp,
    NestingViolation,
}

impl FaultKind {
    pub const ALL: [FaultKind; 6] = [
        FaultKind::ChecksumMismatch,
        FaultKind::OutOfRangeValue,
        FaultKind::Truncated,
        FaultKind::UnknownSegment,
        FaultKind::StaleTimestamp,
        FaultKind::NestingViolation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FaultKind::ChecksumMismatch => "ChecksumMismatch",
            FaultKind::OutOfRangeValue => "OutOfRangeValue",
            FaultKind::Truncated => "Truncated",
            FaultKind::UnknownSegment => "UnknownSegment",
            FaultKind::StaleTimestamp => "StaleTimestamp",
            FaultKind::NestingViolation => "NestingViolation",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SegmentFault {
    pub segment_id: u16,
    pub fault: FaultKind,
}

impl SegmentFault {
    pub fn new(segment_id: u16, fault: FaultKind) -> Self {
        Self { segment_id, fault }
    }
}

impl fmt::Display for SegmentFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.fault.name(), self.segment_id)
    }
}

/// Sort ascending by segment id and drop repeats.
fn normalize(mut faults: Vec<SegmentFault>) -> Vec<SegmentFault> {
    faults.sort();
    faults.dedup();
    faults
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncodedKey(pub Vec<u8>);

impl EncodedKey {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn decode(&self) -> Result<CodifiedKey, Vec<SegmentFault>> {
        decode_key(&self.0)
    }
}

// ---- encoding -------------------------------------------------------------

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn name(&mut self, s: &str) {
        self.u16(u16::try_from(s.len()).expect("name longer than 65535 bytes"));
        self.0.extend_from_slice(s.as_bytes());
    }
    fn vec2(&mut self, v: Vec2) {
        self.f64(v.x);
        self.f64(v.y);
    }
}

fn characteristics_payload(w: &mut Writer, cv: &CharacteristicVector) {
    w.f64(cv.position.confidence);
    w.u32(0);
    w.vec2(cv.position.value);
    w.f64(cv.activity.confidence);
    w.u32(cv.activity.value.bits());
    w.f64(cv.possession.confidence);
    w.u32(cv.possession.value.bits());
    w.f64(cv.movement.confidence);
    w.u32(0);
    w.vec2(cv.movement.value);
    w.f64(cv.grouping.confidence);
    w.u32(if cv.grouping.value.formation { FORMATION_BIT } else { 0 });
    w.u32(cv.grouping.value.count);
    w.f64(cv.markings.confidence);
    w.u32(cv.markings.value.bits());
    w.f64(cv.acoustics.confidence);
    w.u32(cv.acoustics.value.bits());
}

fn segment_payload(k: &CodifiedKey, id: u16) -> Vec<u8> {
    let mut w = Writer::default();
    match id {
        segment::WEAPON_ID => w.u64(k.weapon_id),
        segment::WEAPON_NAME => w.name(&k.weapon_name),
        segment::TARGET_ID => w.u64(k.target_id),
        segment::TARGET_NAME => w.name(&k.target_name),
        segment::NATURE => w.u8(k.nature.code()),
        segment::TIMESTAMP => w.u64(k.timestamp.0),
        segment::CHARACTERISTICS => characteristics_payload(&mut w, &k.characteristics),
        segment::STATUS => w.u8(k.status.code()),
        segment::ROLE => w.u8(k.role.code()),
        segment::VALUE => {
            w.f64(k.value.economic);
            w.f64(k.value.human_life);
            w.f64(k.value.strategic);
        }
        segment::RESOURCES => {
            w.f64(k.resources.fuel);
            w.u64(k.resources.endurance);
            w.u16(u16::try_from(k.resources.weapons.len()).expect("too many munition kinds"));
            for (kind, count) in &k.resources.weapons {
                w.name(kind.as_str());
                w.u32(*count);
            }
        }
        segment::VICINITY_TARGETS | segment::VICINITY_FRIENDLIES => {
            let list = if id == segment::VICINITY_TARGETS {
                &k.vicinity_targets
            } else {
                &k.vicinity_friendlies
            };
            w.u16(u16::try_from(list.len()).expect("too many vicinity keys"));
            for nested in list {
                let bytes = encode_key(nested).0;
                w.u32(u32::try_from(bytes.len()).expect("nested key too large"));
                w.0.extend_from_slice(&bytes);
            }
        }
        _ => unreachable!("segment id {id}"),
    }
    w.0
}

/// Encode a key. Equal keys always produce identical bytes.
pub fn encode_key(k: &CodifiedKey) -> EncodedKey {
    let mut w = Writer::default();
    w.0.extend_from_slice(&MAGIC);
    w.u8(VERSION);
    w.u16(SEGMENT_COUNT);
    for id in 1..=SEGMENT_COUNT {
        let payload = segment_payload(k, id);
        let start = w.0.len();
        w.u16(id);
        w.u32(u32::try_from(payload.len()).expect("segment too large"));
        w.0.extend_from_slice(&payload);
        let crc = crc32c(&w.0[start..]);
        w.u32(crc);
    }
    let crc = crc32c(&w.0);
    w.u32(crc);
    EncodedKey(w.0)
}

// ---- decoding -------------------------------------------------------------

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FaultKind> {
        if self.remaining() < n {
            return Err(FaultKind::Truncated);
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], FaultKind> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, FaultKind> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, FaultKind> {
        Ok(u16::from_be_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32, FaultKind> {
        Ok(u32::from_be_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64, FaultKind> {
        Ok(u64::from_be_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64, FaultKind> {
        Ok(f64::from_be_bytes(self.array()?))
    }
    fn vec2(&mut self) -> Result<Vec2, FaultKind> {
        Ok(Vec2::new(self.f64()?, self.f64()?))
    }

    fn name(&mut self) -> Result<String, FaultKind> {
        let len = usize::from(self.u16()?);
        let raw = self.take(len)?;
        if len > MAX_NAME_BYTES {
            return Err(FaultKind::OutOfRangeValue);
        }
        String::from_utf8(raw.to_vec()).map_err(|_| FaultKind::OutOfRangeValue)
    }

    fn finish(&self) -> Result<(), FaultKind> {
        if self.remaining() == 0 {
            Ok(())
        } else {
            Err(FaultKind::OutOfRangeValue)
        }
    }
}

fn flags<T>(bits: u32, from: fn(u32) -> Option<T>) -> Result<T, FaultKind> {
    from(bits).ok_or(FaultKind::OutOfRangeValue)
}

fn read_characteristics(r: &mut Reader) -> Result<CharacteristicVector, FaultKind> {
    let mut cv = CharacteristicVector::empty();

    let conf = r.f64()?;
    if r.u32()? != 0 {
        return Err(FaultKind::OutOfRangeValue);
    }
    cv.position = Reading { value: r.vec2()?, confidence: conf };

    let conf = r.f64()?;
    cv.activity = Reading { value: flags(r.u32()?, Activity::from_bits)?, confidence: conf };
    let conf = r.f64()?;
    cv.possession = Reading { value: flags(r.u32()?, Possession::from_bits)?, confidence: conf };

    let conf = r.f64()?;
    if r.u32()? != 0 {
        return Err(FaultKind::OutOfRangeValue);
    }
    cv.movement = Reading { value: r.vec2()?, confidence: conf };

    let conf = r.f64()?;
    let bits = r.u32()?;
    if bits & !FORMATION_BIT != 0 {
        return Err(FaultKind::OutOfRangeValue);
    }
    let count = r.u32()?;
    cv.grouping = Reading { value: Grouping { count, formation: bits == FORMATION_BIT }, confidence: conf };

    let conf = r.f64()?;
    cv.markings = Reading { value: flags(r.u32()?, Markings::from_bits)?, confidence: conf };
    let conf = r.f64()?;
    cv.acoustics = Reading { value: flags(r.u32()?, Acoustics::from_bits)?, confidence: conf };
    Ok(cv)
}

fn read_resources(r: &mut Reader) -> Result<ResourceState, FaultKind> {
    let mut res = ResourceState::new(r.f64()?, r.u64()?);
    let n = r.u16()?;
    for _ in 0..n {
        let kind = MunitionKind::new(r.name()?);
        let count = r.u32()?;
        if res.weapons.insert(kind, count).is_some() {
            return Err(FaultKind::OutOfRangeValue);
        }
    }
    Ok(res)
}

fn read_vicinity(r: &mut Reader, depth: usize) -> Result<Vec<CodifiedKey>, FaultKind> {
    let n = r.u16()?;
    let mut out = Vec::with_capacity(usize::from(n).min(64));
    for _ in 0..n {
        let len = r.u32()? as usize;
        let raw = r.take(len)?;
        if depth >= 1 {
            return Err(FaultKind::NestingViolation);
        }
        match decode_at(raw, depth + 1) {
            Ok(k) if k.has_vicinity() => return Err(FaultKind::NestingViolation),
            Ok(k) => out.push(k),
            Err(faults) => {
                let nested = faults.iter().any(|f| f.fault == FaultKind::NestingViolation);
                return Err(if nested { FaultKind::NestingViolation } else { faults[0].fault });
            }
        }
    }
    Ok(out)
}

#[derive(Default)]
struct Partial {
    weapon_id: Option<u64>,
    weapon_name: Option<String>,
    target_id: Option<u64>,
    target_name: Option<String>,
    nature: Option<TargetNature>,
    timestamp: Option<Tick>,
    characteristics: Option<CharacteristicVector>,
    status: Option<TargetStatus>,
    role: Option<CombatRole>,
    value: Option<TargetValue>,
    resources: Option<ResourceState>,
    vicinity_targets: Option<Vec<CodifiedKey>>,
    vicinity_friendlies: Option<Vec<CodifiedKey>>,
}

impl Partial {
    fn read(&mut self, id: u16, payload: &[u8], depth: usize) -> Result<(), FaultKind> {
        let mut r = Reader::new(payload);
        match id {
            segment::WEAPON_ID => self.weapon_id = Some(r.u64()?),
            segment::WEAPON_NAME => self.weapon_name = Some(r.name()?),
            segment::TARGET_ID => self.target_id = Some(r.u64()?),
            segment::TARGET_NAME => self.target_name = Some(r.name()?),
            segment::NATURE => {
                self.nature = Some(TargetNature::from_code(r.u8()?).ok_or(FaultKind::OutOfRangeValue)?)
            }
            segment::TIMESTAMP => self.timestamp = Some(Tick(r.u64()?)),
            segment::CHARACTERISTICS => self.characteristics = Some(read_characteristics(&mut r)?),
            segment::STATUS => {
                self.status = Some(TargetStatus::from_code(r.u8()?).ok_or(FaultKind::OutOfRangeValue)?)
            }
            segment::ROLE => self.role = Some(CombatRole::from_code(r.u8()?).ok_or(FaultKind::OutOfRangeValue)?),
            segment::VALUE => self.value = Some(TargetValue::new(r.f64()?, r.f64()?, r.f64()?)),
            segment::RESOURCES => self.resources = Some(read_resources(&mut r)?),
            segment::VICINITY_TARGETS => self.vicinity_targets = Some(read_vicinity(&mut r, depth)?),
            segment::VICINITY_FRIENDLIES => self.vicinity_friendlies = Some(read_vicinity(&mut r, depth)?),
            _ => return Err(FaultKind::UnknownSegment),
        }
        r.finish()
    }

    fn missing(&self) -> Vec<u16> {
        let present = [
            self.weapon_id.is_some(),
            self.weapon_name.is_some(),
            self.target_id.is_some(),
            self.target_name.is_some(),
            self.nature.is_some(),
            self.timestamp.is_some(),
            self.characteristics.is_some(),
            self.status.is_some(),
            self.role.is_some(),
            self.value.is_some(),
            self.resources.is_some(),
            self.vicinity_targets.is_some(),
            self.vicinity_friendlies.is_some(),
        ];
        (1..=SEGMENT_COUNT).zip(present).filter(|(_, p)| !p).map(|(id, _)| id).collect()
    }

    fn build(self) -> Option<CodifiedKey> {
        Some(CodifiedKey {
            weapon_id: self.weapon_id?,
            weapon_name: self.weapon_name?,
            target_id: self.target_id?,
            target_name: self.target_name?,
            nature: self.nature?,
            timestamp: self.timestamp?,
            characteristics: self.characteristics?,
            status: self.status?,
            role: self.role?,
            value: self.value?,
            resources: self.resources?,
            vicinity_targets: self.vicinity_targets?,
            vicinity_friendlies: self.vicinity_friendlies?,
        })
    }
}

/// Decode a CKSS v1 key. Either every frame and checksum verifies and the
/// key is returned, or the complete fault list is.
pub fn decode_key(bytes: &[u8]) -> Result<CodifiedKey, Vec<SegmentFault>> {
    decode_at(bytes, 0)
}

fn decode_at(bytes: &[u8], depth: usize) -> Result<CodifiedKey, Vec<SegmentFault>> {
    let mut faults = Vec::new();
    if bytes.len() < HEADER_LEN + TRAILER_LEN {
        faults.push(SegmentFault::new(segment::HEADER, FaultKind::Truncated));
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            faults.push(SegmentFault::new(segment::HEADER, FaultKind::OutOfRangeValue));
        }
        return Err(normalize(faults));
    }

    let body_end = bytes.len() - TRAILER_LEN;
    let trailer = u32::from_be_bytes(bytes[body_end..].try_into().expect("four bytes"));
    if crc32c(&bytes[..body_end]) != trailer {
        faults.push(SegmentFault::new(segment::TRAILER, FaultKind::ChecksumMismatch));
    }

    let mut r = Reader::new(&bytes[..body_end]);
    let magic = r.take(4).expect("length checked");
    let version = r.u8().expect("length checked");
    let count = r.u16().expect("length checked");
    if magic != MAGIC || version != VERSION || count != SEGMENT_COUNT {
        faults.push(SegmentFault::new(segment::HEADER, FaultKind::OutOfRangeValue));
    }

    let mut partial = Partial::default();
    for expected in 1..=SEGMENT_COUNT {
        let start = r.pos;
        let frame = (|| {
            let id = r.u16()?;
            let len = r.u32()? as usize;
            let payload = r.take(len)?;
            let crc = r.u32()?;
            Ok::<_, FaultKind>((id, payload, crc))
        })();
        let (id, payload, crc) = match frame {
            Ok(f) => f,
            Err(kind) => {
                faults.push(SegmentFault::new(expected, kind));
                break;
            }
        };
        if crc32c(&bytes[start..start + 6 + payload.len()]) != crc {
            faults.push(SegmentFault::new(id, FaultKind::ChecksumMismatch));
            continue;
        }
        if !(1..=SEGMENT_COUNT).contains(&id) {
            faults.push(SegmentFault::new(id, FaultKind::UnknownSegment));
            continue;
        }
        if id != expected {
            faults.push(SegmentFault::new(id, FaultKind::OutOfRangeValue));
            continue;
        }
        if let Err(kind) = partial.read(id, payload, depth) {
            faults.push(SegmentFault::new(id, kind));
        }
    }
    if faults.is_empty() && r.remaining() != 0 {
        faults.push(SegmentFault::new(segment::TRAILER, FaultKind::OutOfRangeValue));
    }
    if faults.is_empty() {
        for id in partial.missing() {
            faults.push(SegmentFault::new(id, FaultKind::Truncated));
        }
    }
    if faults.is_empty() {
        Ok(partial.build().expect("all segments present"))
    } else {
        Err(normalize(faults))
    }
}

// ---- verification ---------------------------------------------------------

fn confidence_ok(c: f64) -> bool {
    c.is_finite() && (0.0..=1.0).contains(&c)
}

fn characteristics_ok(cv: &CharacteristicVector) -> bool {
    let known_bits = cv.activity.value.bits() & !Activity::all().bits() == 0
        && cv.possession.value.bits() & !Possession::all().bits() == 0
        && cv.markings.value.bits() & !Markings::all().bits() == 0
        && cv.acoustics.value.bits() & !Acoustics::all().bits() == 0;
    let blank_when_unobserved = Channel::ALL
        .iter()
        .all(|&ch| cv.confidence(ch) != 0.0 || cv.reading_is_blank(ch));
    known_bits
        && blank_when_unobserved
        && cv.confidences().iter().all(|&c| confidence_ok(c))
        && cv.position.value.is_finite()
        && cv.movement.value.is_finite()
}

fn name_ok(s: &str) -> bool {
    !s.is_empty() && s.len() <= MAX_NAME_BYTES
}

fn resources_ok(r: &ResourceState) -> bool {
    r.is_valid() && r.weapons.keys().all(|k| name_ok(k.as_str()))
}

fn structural_faults(k: &CodifiedKey, now: Tick) -> Vec<SegmentFault> {
    let mut faults = Vec::new();
    let mut check = |ok: bool, id: u16| {
        if !ok {
            faults.push(SegmentFault::new(id, FaultKind::OutOfRangeValue));
        }
    };
    check(name_ok(&k.weapon_name), segment::WEAPON_NAME);
    check(name_ok(&k.target_name), segment::TARGET_NAME);
    check(k.timestamp <= now, segment::TIMESTAMP);
    check(characteristics_ok(&k.characteristics), segment::CHARACTERISTICS);
    check(k.value.is_valid(), segment::VALUE);
    check(resources_ok(&k.resources), segment::RESOURCES);
    for (id, list) in [
        (segment::VICINITY_TARGETS, &k.vicinity_targets),
        (segment::VICINITY_FRIENDLIES, &k.vicinity_friendlies),
    ] {
        for nested in list {
            if nested.has_vicinity() {
                faults.push(SegmentFault::new(id, FaultKind::NestingViolation));
            } else if !structural_faults(nested, now).is_empty() {
                faults.push(SegmentFault::new(id, FaultKind::OutOfRangeValue));
            }
        }
    }
    faults
}

/// Structural and temporal checks on an in-memory key. An empty result
/// means the key is actionable.
pub fn verify_key(k: &CodifiedKey, now: Tick, staleness_limit: u64) -> Vec<SegmentFault> {
    let mut faults = structural_faults(k, now);
    if now.saturating_sub(k.timestamp) > staleness_limit {
        faults.push(SegmentFault::new(segment::TIMESTAMP, FaultKind::StaleTimestamp));
    }
    normalize(faults)
}

/// Decode then verify; the faults of whichever stage failed.
pub fn verify_encoded(bytes: &[u8], now: Tick, staleness_limit: u64) -> Vec<SegmentFault> {
    match decode_key(bytes) {
        Ok(k) => verify_key(&k, now, staleness_limit),
        Err(faults) => faults,
    }
}
