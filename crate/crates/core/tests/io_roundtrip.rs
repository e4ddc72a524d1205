use std::fs;
use std::path::{Path, PathBuf};

use fewshot_ood::bench::{synth_bundle, SynthConfig};
use fewshot_ood::io::{load_features, load_label_values, load_logits, save_matrix};
use fewshot_ood::npy;
use fewshot_ood::{DatasetBundle, Error, Features, Logits};
use proptest::prelude::*;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn shape_and_len() -> impl Strategy<Value = (Vec<usize>, usize)> {
    prop_oneof![
        (0usize..40).prop_map(|n| (vec![n], n)),
        (0usize..12, 0usize..12).prop_map(|(r, c)| (vec![r, c], r * c)),
    ]
}

proptest! {
    #[test]
    fn f32_bits_survive((shape, len) in shape_and_len(), seed in any::<u32>()) {
        let values: Vec<f32> = (0..len as u32).map(|i| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add(i.wrapping_mul(40503)))).collect();
        let back = npy::decode::<f32>(&npy::encode(&shape, &values)).unwrap();
        prop_assert_eq!(&back.shape, &shape);
        prop_assert_eq!(back.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn f64_bits_survive((shape, len) in shape_and_len(), bits in prop::collection::vec(any::<u64>(), 144)) {
        let values: Vec<f64> = bits[..len].iter().map(|&b| f64::from_bits(b)).collect();
        let back = npy::decode::<f64>(&npy::encode(&shape, &values)).unwrap();
        prop_assert_eq!(&back.shape, &shape);
        prop_assert_eq!(back.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), bits[..len].to_vec());
    }

    #[test]
    fn i64_values_survive((shape, len) in shape_and_len(), values in prop::collection::vec(any::<i64>(), 144)) {
        let back = npy::decode::<i64>(&npy::encode(&shape, &values[..len])).unwrap();
        prop_assert_eq!(&back.shape, &shape);
        prop_assert_eq!(&back.data[..], &values[..len]);
    }

    #[test]
    fn header_is_aligned((shape, len) in shape_and_len()) {
        let bytes = npy::encode(&shape, &vec![0.0f32; len]);
        let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        prop_assert_eq!((10 + header_len) % 64, 0);
        prop_assert_eq!(bytes[9 + header_len], b'\n');
        prop_assert_eq!(bytes.len(), 10 + header_len + 4 * len);
    }
}

#[test]
fn reads_numpy_files() {
    let f4 = npy::read::<f32>(&data("numpy_f4.npy")).unwrap();
    assert_eq!(f4.shape, vec![2, 3]);
    assert_eq!(f4.data, vec![1.5, -0.0, 3.25, 1e-40, -7.0, 65504.0]);
    assert!(f4.data[1].is_sign_negative());

    let f8 = npy::read::<f64>(&data("numpy_f8.npy")).unwrap();
    assert_eq!(f8.shape, vec![3]);
    assert_eq!(f8.data, vec![0.1, -2.5, 1e-310]);

    let i8 = load_label_values(&data("numpy_i8.npy")).unwrap();
    assert_eq!(i8, vec![0, 3, -1, i64::MAX]);
}

#[test]
fn writes_the_same_bytes_as_numpy() {
    for (name, bytes) in [
        (
            "numpy_f4.npy",
            npy::encode(&[2, 3], &[1.5f32, -0.0, 3.25, 1e-40, -7.0, 65504.0]),
        ),
        ("numpy_f8.npy", npy::encode(&[3], &[0.1f64, -2.5, 1e-310])),
        ("numpy_i8.npy", npy::encode(&[4], &[0i64, 3, -1, i64::MAX])),
    ] {
        assert_eq!(fs::read(data(name)).unwrap(), bytes, "{name}");
    }
}

#[test]
fn wrong_dtype_is_a_typed_error() {
    match load_features::<f32>(&data("numpy_i8.npy")) {
        Err(Error::Dtype {
            expected, found, ..
        }) => {
            assert_eq!(expected, "<f4");
            assert_eq!(found, "<i8");
        }
        other => panic!("expected dtype error, got {other:?}"),
    }
}

#[test]
fn malformed_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let good = npy::encode(&[2, 2], &[1.0f32, 2.0, 3.0, 4.0]);
    let cases: Vec<(&str, Vec<u8>)> = vec![
        ("magic", [b"\x93NUMPX".as_slice(), &good[6..]].concat()),
        ("truncated", good[..good.len() - 3].to_vec()),
        ("empty", Vec::new()),
        (
            "fortran",
            String::from_utf8_lossy(&good)
                .replace("'fortran_order': False", "'fortran_order': True ")
                .into_bytes(),
        ),
    ];
    for (name, bytes) in cases {
        let path = dir.path().join(format!("{name}.npy"));
        fs::write(&path, bytes).unwrap();
        assert!(npy::read::<f32>(&path).is_err(), "{name} accepted");
    }
}

#[test]
fn features_reject_zero_rows_and_non_finite_values() {
    let dir = tempfile::tempdir().unwrap();
    let zero = dir.path().join("zero.npy");
    npy::write(&zero, &[2, 2], &[1.0f32, 0.0, 0.0, 0.0]).unwrap();
    assert!(matches!(
        load_features::<f32>(&zero).unwrap_err(),
        Error::Context { source, .. } if matches!(*source, Error::ZeroNormRow { row: 1, .. })
    ));

    let nan = dir.path().join("nan.npy");
    npy::write(&nan, &[1, 3], &[1.0f32, f32::NAN, 0.0]).unwrap();
    assert!(load_logits::<f32>(&nan).is_err());
}

#[test]
fn typed_save_load_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let f = Features::from_vec(2, 2, vec![1e-30f32, -2.0, 3.0, f32::MAX]).unwrap();
    save_matrix(&f, &dir.path().join("f.npy")).unwrap();
    assert_eq!(load_features::<f32>(&dir.path().join("f.npy")).unwrap(), f);

    let l = Logits::from_vec(1, 3, vec![0.1f64, -0.0, 5e-324]).unwrap();
    save_matrix(&l, &dir.path().join("l.npy")).unwrap();
    let back = load_logits::<f64>(&dir.path().join("l.npy")).unwrap();
    assert!(back
        .matrix()
        .as_slice()
        .iter()
        .zip(l.matrix().as_slice())
        .all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn bundle_manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = synth_bundle(&SynthConfig {
        num_classes: 3,
        train_per_class: 50,
        test_per_class: 50,
        dim_orig: 8,
        dim_ft: 8,
        seed: 7,
        ..SynthConfig::default()
    })
    .unwrap();
    let manifest = bundle.save(dir.path()).unwrap();
    let loaded = DatasetBundle::load(&manifest).unwrap();
    assert_eq!(loaded, bundle);
}

#[test]
fn manifest_paths_resolve_against_manifest_dir() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = synth_bundle(&SynthConfig::default()).unwrap();
    let sub = dir.path().join("nested");
    let manifest = bundle.save(&sub).unwrap();
    let text = fs::read_to_string(&manifest).unwrap();
    assert!(
        !text.contains(sub.to_str().unwrap()),
        "manifest stores absolute paths"
    );
    assert_eq!(DatasetBundle::load(&manifest).unwrap(), bundle);
}

#[test]
fn missing_manifest_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = synth_bundle(&SynthConfig::default()).unwrap();
    let manifest = bundle.save(dir.path()).unwrap();
    fs::remove_file(dir.path().join("train_ft.npy")).unwrap();
    let err = DatasetBundle::load(&manifest).unwrap_err().to_string();
    assert!(err.contains("train_ft.npy"), "{err}");
}
