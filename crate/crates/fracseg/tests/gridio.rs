use std::fs;

use fracseg::core::{Field2D, LabelMask};
use fracseg::eval::EstimatorConfig;
use fracseg::gridio::{
    export_grayscale, import_grayscale, read_field, read_mask, read_pgm, read_stack, write_field, write_mask,
    write_stack,
};
use fracseg::synthesis::synth_homogeneous;
use fracseg::Error;
use proptest::prelude::*;

#[test]
fn one_by_one_field_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.f2d");
    let f = Field2D::new(1, 1, vec![0.5]).unwrap();
    write_field(&f, &path).unwrap();
    assert_eq!(fs::metadata(&path).unwrap().len(), 20);
    assert_eq!(read_field(&path).unwrap(), f);

    let zeros = Field2D::zeros(2, 3);
    write_field(&zeros, &path).unwrap();
    assert_eq!(read_field(&path).unwrap(), zeros);
}

#[test]
fn synthesized_field_roundtrip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.f2d"), dir.path().join("b.f2d"));
    let f = synth_homogeneous(256, 0.6, 9).unwrap();
    write_field(&f, &a).unwrap();
    let back = read_field(&a).unwrap();
    assert!(f.as_slice().iter().zip(back.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits()));
    write_field(&back, &b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn field_errors_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.f2d");
    fs::write(&path, b"XXXX\x01\0\0\0\x01\0\0\0\0\0\0\0\0\0\xe0?").unwrap();
    assert!(matches!(read_field(&path), Err(Error::BadMagic { .. })));

    let mut bytes = b"F2D1".to_vec();
    bytes.extend_from_slice(&2u32.to_le_bytes());
    bytes.extend_from_slice(&2u32.to_le_bytes());
    for v in [1.0f64, 2.0, 3.0] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&path, &bytes).unwrap();
    assert!(matches!(read_field(&path), Err(Error::Truncated { .. })));

    bytes.extend_from_slice(&f64::INFINITY.to_le_bytes());
    fs::write(&path, &bytes).unwrap();
    assert!(matches!(read_field(&path), Err(Error::NonFinite { index: 3, .. })));

    assert!(matches!(read_field(dir.path().join("missing.f2d")), Err(Error::Io { .. })));
}

#[test]
fn mask_gray_levels_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.pgm");
    let m = LabelMask::new(1, 3, vec![0, 1, 2], 3).unwrap();
    write_mask(&m, &path).unwrap();
    assert_eq!(read_pgm(&path).unwrap().pixels, vec![0, 128, 255]);
    let m2 = LabelMask::new(1, 2, vec![1, 0], 2).unwrap();
    write_mask(&m2, &path).unwrap();
    assert_eq!(read_pgm(&path).unwrap().pixels, vec![255, 0]);
    assert_eq!(read_mask(&path).unwrap(), m2);
}

#[test]
fn too_many_classes_are_unsupported() {
    let dir = tempfile::tempdir().unwrap();
    let m = LabelMask::new(1, 1, vec![0], 257).unwrap();
    assert!(matches!(write_mask(&m, dir.path().join("m.pgm")), Err(Error::Unsupported(_))));
}

#[test]
fn malformed_pgm_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.pgm");
    fs::write(&path, b"P2\n2 2\n255\n0 0 0 0\n").unwrap();
    assert!(matches!(import_grayscale(&path), Err(Error::BadMagic { .. })));
    fs::write(&path, b"P5\n2 2\n65535\n").unwrap();
    assert!(matches!(import_grayscale(&path), Err(Error::Unsupported(_))));
    fs::write(&path, b"P5\n2 x\n255\n").unwrap();
    assert!(matches!(import_grayscale(&path), Err(Error::Format { .. })));
    fs::write(&path, b"P5\n2 2\n255\n\x01\x02").unwrap();
    assert!(matches!(import_grayscale(&path), Err(Error::Truncated { .. })));
}

#[test]
fn grayscale_import_scales_to_unit_interval() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.pgm");
    fs::write(&path, b"P5\n# comment\n3 1\n255\n\x00\x80\xff").unwrap();
    let f = import_grayscale(&path).unwrap();
    assert_eq!(f.shape(), (1, 3));
    assert_eq!(f.as_slice(), &[0.0, 128.0 / 255.0, 1.0]);

    let field = Field2D::from_fn(4, 5, |r, c| (r * 5 + c) as f64);
    export_grayscale(&field, &path).unwrap();
    let back = import_grayscale(&path).unwrap();
    assert_eq!(back.shape(), (4, 5));
    assert_eq!(back.min(), 0.0);
    assert_eq!(back.max(), 1.0);
}

#[test]
fn leader_stack_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.f2ds");
    let f = synth_homogeneous(64, 0.4, 1).unwrap();
    let stack = EstimatorConfig::default().stack(&f).unwrap();
    write_stack(&stack, &path).unwrap();
    let back = read_stack(&path).unwrap();
    assert_eq!(back.j1(), stack.j1());
    assert_eq!(back.gamma(), stack.gamma());
    assert_eq!(back.grids(), stack.grids());
    fs::write(&path, b"F2D1").unwrap();
    assert!(matches!(read_stack(&path), Err(Error::BadMagic { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mask_roundtrip(q in 1u32..=256, rows in 1usize..12, cols in 1usize..12, seed in any::<u64>()) {
        let mut s = seed;
        let labels = (0..rows * cols)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 33) % q as u64) as u32
            })
            .collect();
        let m = LabelMask::new(rows, cols, labels, q).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        write_mask(&m, &path).unwrap();
        prop_assert_eq!(read_mask(&path).unwrap(), m);
    }

    #[test]
    fn field_roundtrip(data in prop::collection::vec(-1e300f64..1e300, 1..40)) {
        let n = data.len();
        let f = Field2D::new(1, n, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.f2d");
        write_field(&f, &path).unwrap();
        let back = read_field(&path).unwrap();
        prop_assert!(f.as_slice().iter().zip(back.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
