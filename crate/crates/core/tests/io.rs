mod common;

use common::rng;
use nlsam::error::NlsamError;
use nlsam::io::{
    parse_gradients, read_gradients, read_mask, read_volume, write_gradients, write_mask, write_volume,
    write_volume_as, NiftiDataType,
};
use nlsam::volume::{Mask3D, Volume4D};
use proptest::prelude::*;
use rand::Rng;

fn random_volume(dims: [usize; 4], seed: u64) -> Volume4D {
    let mut r = rng(seed);
    let n = dims.iter().product();
    Volume4D::new(dims, [1.5, 2.0, 2.5], (0..n).map(|_| r.random_range(0.0..1000.0)).collect()).unwrap()
}

/// Same values rounded to single precision, the default on-disk type.
fn single_precision_volume(dims: [usize; 4], seed: u64) -> Volume4D {
    let v = random_volume(dims, seed);
    Volume4D::new(dims, v.spacing(), v.data().iter().map(|&x| x as f32 as f64).collect()).unwrap()
}

#[test]
fn float_roundtrip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.nii");
    let vol = single_precision_volume([4, 4, 4, 3], 1);
    write_volume(&vol, &path).unwrap();
    let back = read_volume(&path).unwrap();
    assert_eq!(back.dims(), vol.dims());
    assert_eq!(back.spacing(), vol.spacing());
    assert!(back.data().iter().zip(vol.data()).all(|(a, b)| a.to_bits() == b.to_bits()));

    // double-precision input comes back rounded to single precision
    let wide = random_volume([4, 4, 4, 3], 1);
    write_volume(&wide, &path).unwrap();
    let back = read_volume(&path).unwrap();
    assert_eq!(back.data(), vol.data());
}

#[test]
fn reduced_precision_types_roundtrip_within_quantization() {
    let dir = tempfile::tempdir().unwrap();
    let vol = random_volume([3, 5, 2, 2], 2);
    for (ty, tol) in [(NiftiDataType::Float32, 1e-4), (NiftiDataType::Int16, 0.5)] {
        let path = dir.path().join(format!("v{}.nii", ty.code()));
        write_volume_as(&vol, &path, ty).unwrap();
        let back = read_volume(&path).unwrap();
        assert_eq!(back.dims(), vol.dims());
        let worst = back.data().iter().zip(vol.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= tol, "{ty:?}: {worst}");
    }
}

#[test]
fn negative_intensities_are_clamped_on_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("neg.nii");
    let vol = Volume4D::new([2, 1, 1, 1], [1.0; 3], vec![-3.0, 4.0]).unwrap();
    write_volume(&vol, &path).unwrap();
    assert_eq!(read_volume(&path).unwrap().data(), &[0.0, 4.0]);
}

#[test]
fn unwritable_path_is_an_io_error() {
    let vol = random_volume([2, 2, 2, 1], 3);
    let err = write_volume(&vol, "/nonexistent-dir/for/sure/v.nii").unwrap_err();
    assert!(matches!(err, NlsamError::Io { .. }), "{err:?}");
}

#[test]
fn missing_file_is_an_io_error() {
    assert!(matches!(read_volume("/nonexistent-dir/v.nii"), Err(NlsamError::Io { .. })));
}

#[test]
fn mask_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mask.nii");
    let data: Vec<bool> = (0..60).map(|i| i % 3 == 0).collect();
    let mask = Mask3D::new([3, 4, 5], data).unwrap();
    write_mask(&mask, [1.0; 3], &path).unwrap();
    assert_eq!(read_mask(&path).unwrap(), mask);
}

#[test]
fn gradient_text_parsing() {
    let table = parse_gradients("0 1000 1000", "0 1 0\n0 0 1\n0 0 0", 50.0).unwrap();
    assert_eq!(table.len(), 3);
    assert_eq!(table.b0_indices(), vec![0]);
    assert_eq!(table.dwi_indices(), vec![1, 2]);

    let table = parse_gradients("0 1000", "0 2\n0 0\n0 0", 50.0).unwrap();
    assert_eq!(table.bvecs()[1], [1.0, 0.0, 0.0]);

    assert!(parse_gradients("0 1000 1000", "0 1 0 1\n0 0 1 0\n0 0 0 0", 50.0).is_err());
}

#[test]
fn gradient_files_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let table = parse_gradients("0 5 1000 2000", "0 0.6 0 1\n0 0.8 0 0\n0 0 1 0", 50.0).unwrap();
    let (bval, bvec) = (dir.path().join("g.bval"), dir.path().join("g.bvec"));
    write_gradients(&table, &bval, &bvec).unwrap();
    let back = read_gradients(&bval, &bvec).unwrap();
    assert_eq!(back.bvals(), table.bvals());
    assert_eq!(back.b0_indices(), vec![0, 1]);
    for (a, b) in back.bvecs().iter().zip(table.bvecs()) {
        assert!((0..3).all(|k| (a[k] - b[k]).abs() < 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn roundtrip_any_shape(x in 1usize..6, y in 1usize..6, z in 1usize..6, v in 1usize..4, seed in 0u64..1000) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.nii");
        let vol = single_precision_volume([x, y, z, v], seed);
        write_volume(&vol, &path).unwrap();
        let back = read_volume(&path).unwrap();
        prop_assert_eq!(back.dims(), vol.dims());
        prop_assert_eq!(back.spacing(), vol.spacing());
        prop_assert_eq!(back.data(), vol.data());
    }
}
