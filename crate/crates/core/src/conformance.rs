//! Codec golden-vector suite.
//!
//! A corpus directory holds `NAME.json` (a key) and `NAME.ckss` (its
//! encoding) pairs, plus `corruptions.txt`: one `NAME OFFSET XOR FAULTS`
//! line per case, where FAULTS is a comma list of `Kind@segment` exactly as
//! decode reports them.

use std::fs;
use std::path::Path;

use crate::codec::{decode_key, encode_key, FaultKind, SegmentFault};
use crate::key::CodifiedKey;

#[derive(Debug, Clone, PartialEq)]
pub struct GoldenVector {
    pub name: String,
    pub key: CodifiedKey,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corruption {
    pub vector: String,
    pub offset: usize,
    pub xor: u8,
    pub expected: Vec<SegmentFault>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConformanceReport {
    pub lines: Vec<String>,
    pub failures: usize,
}

impl ConformanceReport {
    fn check(&mut self, ok: bool, what: String) {
        self.lines.push(format!("{} {what}", if ok { "PASS" } else { "FAIL" }));
        if !ok {
            self.failures += 1;
        }
    }
}

pub fn load_golden(dir: &Path) -> Result<Vec<GoldenVector>, String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix(".json")).map(String::from))
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|name| {
            let json = dir.join(format!("{name}.json"));
            let bin = dir.join(format!("{name}.ckss"));
            let text = fs::read_to_string(&json).map_err(|e| format!("{}: {e}", json.display()))?;
            let key = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", json.display()))?;
            let bytes = fs::read(&bin).map_err(|e| format!("{}: {e}", bin.display()))?;
            Ok(GoldenVector { name, key, bytes })
        })
        .collect()
}

fn parse_fault(text: &str) -> Option<SegmentFault> {
    let (kind, seg) = text.split_once('@')?;
    Some(SegmentFault::new(seg.parse().ok()?, FaultKind::parse(kind)?))
}

pub fn parse_corruptions(text: &str) -> Result<Vec<Corruption>, String> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(no, l)| {
            let bad = || format!("corruptions.txt line {no}: expected `NAME OFFSET XOR FAULTS`");
            let parts: Vec<&str> = l.split_whitespace().collect();
            let [vector, offset, xor, faults] = parts.as_slice() else { return Err(bad()) };
            let expected = faults.split(',').map(parse_fault).collect::<Option<Vec<_>>>().ok_or_else(bad)?;
            Ok(Corruption {
                vector: vector.to_string(),
                offset: offset.parse().map_err(|_| bad())?,
                xor: u8::from_str_radix(xor, 16).map_err(|_| bad())?,
                expected,
            })
        })
        .collect()
}

/// Positions whose single-byte corruption decode fails to notice.
pub fn undetected_flips(bytes: &[u8]) -> Vec<usize> {
    (0..bytes.len())
        .filter(|&i| {
            let mut b = bytes.to_vec();
            b[i] ^= 0xFF;
            decode_key(&b).is_ok()
        })
        .collect()
}

pub fn run_conformance(dir: &Path) -> Result<ConformanceReport, String> {
    let vectors = load_golden(dir)?;
    if vectors.is_empty() {
        return Err(format!("{}: no golden vectors", dir.display()));
    }
    let path = dir.join("corruptions.txt");
    let corruptions = parse_corruptions(&fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?)?;
    let mut r = ConformanceReport::default();
    for v in &vectors {
        r.check(encode_key(&v.key).0 == v.bytes, format!("{} encode matches golden bytes", v.name));
        r.check(decode_key(&v.bytes).as_ref() == Ok(&v.key), format!("{} decode matches golden key", v.name));
        let missed = undetected_flips(&v.bytes);
        r.check(missed.is_empty(), format!("{} all {} single-byte corruptions detected {missed:?}", v.name, v.bytes.len()));
    }
    for c in &corruptions {
        let Some(v) = vectors.iter().find(|v| v.name == c.vector) else {
            r.check(false, format!("{} unknown vector", c.vector));
            continue;
        };
        let mut b = v.bytes.clone();
        let ok = match b.get_mut(c.offset) {
            Some(byte) => {
                *byte ^= c.xor;
                decode_key(&b).err().as_ref() == Some(&c.expected)
            }
            None => false,
        };
        let want: Vec<String> = c.expected.iter().map(ToString::to_string).collect();
        r.check(ok, format!("{} byte {} ^ {:02x} -> {}", c.vector, c.offset, c.xor, want.join(",")));
    }
    Ok(r)
}
