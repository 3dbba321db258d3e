mod support;

use keyswitch_core::codec::{verify_encoded, DEFAULT_STALENESS_LIMIT};
use keyswitch_core::conformance::{load_golden, parse_corruptions, run_conformance};
use keyswitch_core::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::*;

#[test]
fn bitwise_crc_matches_published_check_value() {
    assert_eq!(crc32c_bitwise(b"123456789"), 0xE306_9283);
    assert_eq!(codec::crc32c(b"123456789"), 0xE306_9283);
}

#[test]
fn golden_vectors_match_the_byte_oracle() {
    let golden = load_golden(&corpus_dir().join("ckss")).unwrap();
    assert!(golden.len() >= 4);
    assert!(golden.iter().any(|g| g.key.depth() == 1));
    for g in &golden {
        assert_eq!(oracle_encode(&g.key), g.bytes, "{}", g.name);
        assert_eq!(encode_key(&g.key).0, g.bytes, "{}", g.name);
        assert_eq!(decode_key(&g.bytes).as_ref(), Ok(&g.key), "{}", g.name);
    }
}

#[test]
fn conformance_corpus_passes() {
    let dir = corpus_dir().join("ckss");
    let report = run_conformance(&dir).unwrap();
    assert_eq!(report.failures, 0, "{:#?}", report.lines);
    let listed = parse_corruptions(&std::fs::read_to_string(dir.join("corruptions.txt")).unwrap()).unwrap();
    assert!(listed.len() >= 8);
}

fn key_from(seed: u64, nest: bool) -> CodifiedKey {
    random_key(&mut ChaCha8Rng::seed_from_u64(seed), nest)
}

proptest! {
    #[test]
    fn round_trip_and_oracle_agreement(seed in any::<u64>(), nest in any::<bool>()) {
        let k = key_from(seed, nest);
        let bytes = encode_key(&k);
        prop_assert_eq!(&bytes.0, &oracle_encode(&k));
        prop_assert_eq!(decode_key(bytes.as_bytes()), Ok(k.clone()));
        prop_assert!(k.depth() <= 1);
    }

    #[test]
    fn encoding_is_a_function(seed in any::<u64>()) {
        let k = key_from(seed, true);
        prop_assert_eq!(encode_key(&k), encode_key(&k.clone()));
    }

    #[test]
    fn single_byte_corruption_never_yields_an_actionable_key(
        seed in any::<u64>(),
        pos_frac in 0.0f64..1.0,
        xor in 1u8..=255,
    ) {
        let k = key_from(seed, true);
        let mut bytes = encode_key(&k).0;
        let pos = (bytes.len() as f64 * pos_frac) as usize;
        bytes[pos] ^= xor;
        prop_assert!(!verify_encoded(&bytes, k.timestamp, DEFAULT_STALENESS_LIMIT).is_empty());
    }
}
