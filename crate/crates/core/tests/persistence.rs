use std::fs;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use clip_transfer::align::{load_model, save_model, AlignmentModel};
use clip_transfer::embed::{import_embeddings, encode};
use clip_transfer::policy::{load_policy, new_policy, save_policy, Architecture, PolicyNetwork};
use clip_transfer::Error;

#[test]
fn policy_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.policy");
    for seed in 0..5 {
        let p = new_policy(&Architecture::default(), seed);
        save_policy(&p, &path).unwrap();
        assert_eq!(load_policy(&path).unwrap(), p);
    }
}

#[test]
fn alignment_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.model");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = AlignmentModel::random(64, 1284, 32, 0.07, &mut rng).unwrap();
    save_model(&model, &path).unwrap();
    assert_eq!(load_model(&path).unwrap(), model);
}

#[test]
fn corrupt_policy_file_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.policy");
    save_policy(&new_policy(&Architecture::default(), 0), &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[5] = "not-a-number";
    fs::write(&path, lines.join("\n")).unwrap();
    match load_policy(&path) {
        Err(Error::Format { line, .. }) => assert_eq!(line, 6),
        other => panic!("{other:?}"),
    }
}

#[test]
fn imported_embeddings_replace_encoder() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.tsv");
    fs::write(&path, "# two dims\ntop left first\t3 4\nTop  Right First\t0 2\n").unwrap();
    let table = import_embeddings(&path).unwrap();
    assert_eq!(table.dim(), 2);
    assert_eq!(table.embedding("top left first").unwrap().values(), &[0.6, 0.8]);
    assert_eq!(table.embedding("top right first").unwrap().values(), &[0.0, 1.0]);
    assert!(matches!(table.embedding("top left second"), Err(Error::MissingEmbedding(_))));
    assert!(encode("top left second").is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn arbitrary_weights_survive_the_file_format(
        weights in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 12..=12)
    ) {
        let arch = Architecture::new(vec![]).unwrap();
        let p = PolicyNetwork::from_weights(arch, weights).unwrap();
        let mut buf = Vec::new();
        clip_transfer::policy::write_policy(&p, &mut buf).unwrap();
        let back = clip_transfer::policy::read_policy(&buf[..], std::path::Path::new("p")).unwrap();
        for (a, b) in p.weights().iter().zip(back.weights()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
