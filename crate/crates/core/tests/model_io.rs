mod common;

use std::fs;

use swift_core::error::ErrorKind;
use swift_core::model::{from_bytes, load_bundle, make_synthetic_model, save_bundle, to_bytes, ArchConfig, MAGIC};
use swift_core::transformer::{forward, AttentionMaskSpec, KvCache, LayerMask};
use swift_core::Error;

#[test]
fn save_load_round_trip_is_exact() {
    let bundle = make_synthetic_model(5, ArchConfig::new(3, 32, 4, 64, 260, 64), &[2]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.swft");
    save_bundle(&bundle, &path).unwrap();
    assert_eq!(load_bundle(&path).unwrap(), bundle);
}

#[test]
fn repeated_saves_are_byte_identical() {
    let bundle = common::tiny_model(9, 32, &[1]);
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    save_bundle(&bundle, &a).unwrap();
    save_bundle(&load_bundle(&a).unwrap(), &b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert!(fs::read(&a).unwrap().starts_with(MAGIC));
}

#[test]
fn corrupt_inputs_are_data_errors() {
    let bytes = to_bytes(&common::tiny_model(1, 16, &[]));

    let mut wrong_magic = bytes.clone();
    wrong_magic[0] ^= 0xff;
    assert!(matches!(from_bytes(&wrong_magic), Err(Error::BadMagic)));

    let truncated = &bytes[..bytes.len() - 4];
    let err = from_bytes(truncated).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Data, "{err}");

    let mut huge_header = bytes.clone();
    huge_header[MAGIC.len()..MAGIC.len() + 8].copy_from_slice(&u64::MAX.to_le_bytes());
    assert_eq!(from_bytes(&huge_header).unwrap_err().kind(), ErrorKind::Data);

    let missing = tempfile::tempdir().unwrap().path().join("absent");
    assert!(matches!(load_bundle(&missing), Err(Error::Io { .. })));
}

#[test]
fn planted_sublayer_is_a_bitwise_no_op() {
    for planted in [1usize, 2] {
        let bundle = common::tiny_model(21, 48, &[planted]);
        let tokens = [3u32, 9, 17, 4, 40];
        let run = |mask: &LayerMask| {
            let mut cache = KvCache::with_capacity(&bundle.config, 8);
            forward(&bundle, &mut cache, &tokens, mask, &AttentionMaskSpec::Causal, true).unwrap()
        };
        let full = run(&LayerMask::full(4));
        let skipped = run(&LayerMask::from_skipped(4, [planted]));
        for i in 0..tokens.len() {
            assert!(full.row_bits_eq(i, skipped.row(i)), "sublayer {planted}, row {i}");
        }
    }
}

#[test]
fn bad_plant_index_rejected() {
    let err = make_synthetic_model(0, common::tiny_config(16), &[4]).unwrap_err();
    assert!(matches!(err, Error::BadPlantIndex { index: 4, sublayers: 4 }));
}
