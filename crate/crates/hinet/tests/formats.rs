use std::fs;
use std::path::Path;

use hinet::checkpoint;
use hinet::hvol::{self, Header};
use hinet::HinetError;
use hinet_core::blocks::BlockVariant;
use hinet_core::data::{make_phantom, LabelVolume};
use hinet_core::network::{Network, NetworkConfig};
use hinet_core::{Shape5, Tensor5};

fn small_config(variant: BlockVariant) -> NetworkConfig {
    NetworkConfig {
        levels: 2,
        base_filters: 4,
        repetitions: vec![1, 2],
        block_variant: variant,
        seed: 11,
        ..NetworkConfig::default()
    }
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let x = make_phantom(4, 16).unwrap().image;
    for variant in [BlockVariant::Hyperdense, BlockVariant::Baseline] {
        let net = Network::<f32>::build(&small_config(variant)).unwrap();
        let path = dir.path().join("net.hint");
        checkpoint::save(&path, &net).unwrap();
        let back: Network<f32> = checkpoint::load(&path).unwrap();
        assert_eq!(back.config().block_variant, variant);
        assert_eq!(back.count_params(), net.count_params());
        let a = net.predict(&x).unwrap();
        let b = back.predict(&x).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
        assert_eq!(checkpoint::encode(&back), fs::read(&path).unwrap());
    }
}

#[test]
fn checkpoint_f64_round_trip() {
    let net = Network::<f64>::build(&small_config(BlockVariant::Hyperdense)).unwrap();
    let bytes = checkpoint::encode(&net);
    let entries = checkpoint::decode(&bytes, Path::new("mem")).unwrap();
    assert!(entries.iter().all(|e| matches!(e.values, checkpoint::Values::F64(_))));
    let back: Network<f64> = checkpoint::to_network(entries).unwrap();
    assert_eq!(checkpoint::encode(&back), bytes);
}

#[test]
fn checkpoint_layout() {
    let net = Network::<f32>::build(&small_config(BlockVariant::Hyperdense)).unwrap();
    let bytes = checkpoint::encode(&net);
    assert_eq!(&bytes[..4], b"HINT");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    assert_eq!(count, net.params().len());
    let len = u16::from_le_bytes(bytes[12..14].try_into().unwrap()) as usize;
    assert_eq!(&bytes[14..14 + len], b"stem.w");
    assert_eq!(bytes[14 + len], 0);
    assert_eq!(bytes[15 + len], 5);
}

#[test]
fn checkpoint_rejections() {
    let net = Network::<f32>::build(&small_config(BlockVariant::Baseline)).unwrap();
    let bytes = checkpoint::encode(&net);
    let p = Path::new("ckpt");

    let mut bad = bytes.clone();
    bad[..4].copy_from_slice(b"NOPE");
    assert!(matches!(checkpoint::decode(&bad, p), Err(HinetError::BadMagic { .. })));

    let cut = &bytes[..bytes.len() - 3];
    match checkpoint::decode(cut, p) {
        Err(HinetError::Truncated { expected, actual, .. }) => {
            assert_eq!(expected, bytes.len() as u64);
            assert_eq!(actual, cut.len() as u64);
        }
        other => panic!("expected truncation, got {other:?}"),
    }

    let mut bad = bytes.clone();
    let len = u16::from_le_bytes(bad[12..14].try_into().unwrap()) as usize;
    bad[14 + len] = 7;
    assert!(matches!(
        checkpoint::decode(&bad, p),
        Err(HinetError::MalformedHeader { .. })
    ));

    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(
        checkpoint::decode(&extra, p),
        Err(HinetError::MalformedHeader { .. })
    ));

    let mut entries = checkpoint::decode(&bytes, p).unwrap();
    entries.pop();
    assert!(checkpoint::to_network::<f32>(entries).is_err());
}

#[test]
fn hvol_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("case.hvol");
    let sample = make_phantom(9, 16).unwrap();
    hvol::write_volume(&path, &sample).unwrap();
    let back = hvol::read_volume(&path).unwrap();
    assert_eq!(back.labels, sample.labels);
    assert_eq!(back.image.shape(), sample.image.shape());
    assert!(back
        .image
        .data()
        .iter()
        .zip(sample.image.data())
        .all(|(a, b)| a.to_bits() == b.to_bits()));

    let header: Header = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(header.magic, "HVOL1");
    assert_eq!(header.extents, [16, 16, 16]);
    assert_eq!(header.modalities, 4);
    assert_eq!(
        fs::metadata(dir.path().join(&header.data_file)).unwrap().len(),
        4 * 4 * 4096
    );
    assert_eq!(fs::metadata(dir.path().join(&header.label_file)).unwrap().len(), 4096);
}

#[test]
fn hvol_label_only_volume() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pred.hvol");
    let labels = LabelVolume::new([1, 2, 3], vec![0, 1, 2, 4, 0, 0]).unwrap();
    hvol::write_labels(&path, &labels).unwrap();
    let back = hvol::read_volume(&path).unwrap();
    assert_eq!(back.labels, labels);
    assert_eq!(back.image.shape(), Shape5::new(1, 0, 1, 2, 3));
}

fn write_case(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("v.hvol");
    let image = Tensor5::from_fn(Shape5::new(1, 2, 2, 2, 2), |[_, c, z, y, x]| {
        (c + z + y + x) as f32 * 0.5
    });
    let labels = LabelVolume::new([2, 2, 2], vec![0, 1, 2, 4, 4, 2, 1, 0]).unwrap();
    hvol::write_volume(&path, &hinet_core::data::VolumeSample::new(image, labels).unwrap()).unwrap();
    path
}

#[test]
fn hvol_wrong_magic() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_case(dir.path());
    let text = fs::read_to_string(&path).unwrap().replace("HVOL1", "HVOL9");
    fs::write(&path, text).unwrap();
    let err = hvol::read_volume(&path).unwrap_err();
    assert!(matches!(err, HinetError::BadMagic { .. }), "{err}");
    assert!(err.to_string().contains("HVOL9"));
}

#[test]
fn hvol_truncated_payload_names_byte_counts() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_case(dir.path());
    let data = dir.path().join("v.data");
    let bytes = fs::read(&data).unwrap();
    fs::write(&data, &bytes[..bytes.len() - 5]).unwrap();
    let err = hvol::read_volume(&path).unwrap_err();
    assert!(
        matches!(
            err,
            HinetError::Truncated {
                expected: 64,
                actual: 59,
                ..
            }
        ),
        "{err}"
    );
    let msg = err.to_string();
    assert!(msg.contains("64") && msg.contains("59"), "{msg}");
}

#[test]
fn hvol_checksum_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_case(dir.path());
    let labels = dir.path().join("v.labels");
    let mut bytes = fs::read(&labels).unwrap();
    bytes[0] = 1;
    fs::write(&labels, bytes).unwrap();
    assert!(matches!(hvol::read_volume(&path), Err(HinetError::Checksum { .. })));
}

#[test]
fn hvol_malformed_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_case(dir.path());
    let text = fs::read_to_string(&path).unwrap().replace("f32le", "f16le");
    fs::write(&path, text).unwrap();
    assert!(matches!(
        hvol::read_volume(&path),
        Err(HinetError::MalformedHeader { .. })
    ));
    fs::write(&path, "{ not json").unwrap();
    assert!(matches!(
        hvol::read_volume(&path),
        Err(HinetError::MalformedHeader { .. })
    ));
}

#[test]
fn hvol_distinct_error_kinds() {
    let kinds = [
        HinetError::BadMagic {
            path: "a".into(),
            found: "x".into(),
            expected: "HVOL1",
        },
        HinetError::Truncated {
            path: "a".into(),
            expected: 2,
            actual: 1,
        },
        HinetError::Checksum {
            path: "a".into(),
            expected: 1,
            actual: 2,
        },
        HinetError::MalformedHeader {
            path: "a".into(),
            reason: "r".into(),
        },
    ];
    let msgs: std::collections::HashSet<String> = kinds.iter().map(|e| e.to_string()).collect();
    assert_eq!(msgs.len(), kinds.len());
}
