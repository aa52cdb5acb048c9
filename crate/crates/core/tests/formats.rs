use modelgif::checkpoint;
use modelgif::distance::{distance_matrix, DistanceMatrix, Metric};
use modelgif::gif::{fingerprint, Baseline, GiFCurveSet, HEADER_BYTES};
use modelgif::sampler::{ReferenceSet, SamplerKind};
use modelgif::zoo::{Lineage, ZooEntry, ZooManifest};
use modelgif::{Activation, ArchSpec, Error, Rng, Tensor};

fn image_model(seed: u64) -> modelgif::DiffModel {
    ArchSpec::mlp(vec![16, 16, 1], vec![8], 4, Activation::Relu)
        .init(&mut Rng::new(seed))
        .unwrap()
}

fn refs(k: usize, seed: u64) -> ReferenceSet {
    let mut rng = Rng::new(seed);
    let data = (0..k * 256).map(|_| rng.uniform(0.0, 1.0)).collect();
    ReferenceSet::from_points(
        Tensor::new(vec![k, 16, 16, 1], data).unwrap(),
        SamplerKind::Random,
        seed,
    )
    .unwrap()
}

#[test]
fn fingerprint_file_size_is_header_plus_payload_plus_crc() {
    let set = fingerprint(&image_model(1), "m", &refs(16, 2), Baseline::Zero, 64).unwrap();
    let bytes = set.encode();
    assert_eq!(bytes.len(), HEADER_BYTES + 16 * 64 * 256 * 4 + 4);
    assert_eq!(&bytes[..4], b"MGIF");
}

#[test]
fn fingerprints_round_trip_and_rerun_identically() {
    let model = image_model(3);
    let r = refs(4, 4);
    let a = fingerprint(&model, "m", &r, Baseline::Random(9), 8).unwrap();
    let b = fingerprint(&model, "m", &r, Baseline::Random(9), 8).unwrap();
    assert_eq!(a.encode(), b.encode());
    let back = GiFCurveSet::decode(&a.encode(), "m").unwrap();
    assert_eq!(back.data, a.data);
    assert_eq!(back.anchor_hash, a.anchor_hash);
    assert!(GiFCurveSet::decode(&a.encode(), "other").is_err());
}

#[test]
fn corrupted_bytes_fail_the_checksum() {
    let set = fingerprint(&image_model(5), "m", &refs(2, 6), Baseline::Zero, 4).unwrap();
    let mut bytes = set.encode();
    bytes[HEADER_BYTES + 3] ^= 0x40;
    assert!(matches!(
        GiFCurveSet::decode(&bytes, "m"),
        Err(Error::Checksum { .. })
    ));
    let model = checkpoint::encode(&image_model(5));
    assert!(checkpoint::decode(&model[..model.len() - 1]).is_err());
    let mut r = refs(2, 7).encode();
    r[0] = b'X';
    assert!(matches!(
        ReferenceSet::decode(&r),
        Err(Error::Format { .. })
    ));
}

#[test]
fn checkpoints_and_reference_sets_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let model = image_model(8);
    checkpoint::save(&model, &dir.path().join("m.mgmd")).unwrap();
    assert_eq!(checkpoint::load(&dir.path().join("m.mgmd")).unwrap(), model);
    let r = refs(3, 9);
    r.save(&dir.path().join("r.mgrs")).unwrap();
    assert_eq!(ReferenceSet::load(&dir.path().join("r.mgrs")).unwrap(), r);
}

#[test]
fn distance_csv_round_trips_with_nine_significant_digits() {
    let r = refs(4, 10);
    let sets: Vec<_> = (0..3)
        .map(|i| {
            fingerprint(
                &image_model(20 + i),
                &format!("m{i}"),
                &r,
                Baseline::Zero,
                8,
            )
            .unwrap()
        })
        .collect();
    let dm = distance_matrix(&sets).unwrap();
    let csv = dm.to_csv("config=00000000000000ff");
    let (corner, back) =
        DistanceMatrix::from_csv(&csv, Metric::IntegratedCosine, dm.anchor_hash, dm.curves)
            .unwrap();
    assert_eq!(corner, "config=00000000000000ff");
    assert_eq!(back.ids, dm.ids);
    for (a, b) in back.values.iter().zip(&dm.values) {
        assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-30));
    }
}

#[test]
fn manifest_text_round_trips_and_rejects_cycles() {
    let mut m = ZooManifest::default();
    for (id, kind, parent) in [
        ("v", Lineage::Victim, None),
        ("f", Lineage::FinetuneAll, Some("v")),
    ] {
        m.push(ZooEntry {
            id: id.into(),
            kind,
            parent: parent.map(str::to_string),
            seed: 1,
            config_hash: 0xabc,
        });
    }
    assert_eq!(ZooManifest::parse(&m.to_text()).unwrap(), m);
    let cyclic =
        "id=a kind=pruned parent=b seed=1 config=0\nid=b kind=pruned parent=a seed=1 config=0\n";
    assert!(ZooManifest::parse(cyclic).is_err());
}
