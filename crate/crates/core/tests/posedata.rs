use std::fs;
use std::path::Path;

use handcraft::posedata::*;
use handcraft::rng::seeded;
use handcraft::Error;
use proptest::prelude::*;
use rand::Rng as _;

fn write_sample(dir: &Path, name: &str, frames: usize, features: usize, f: impl Fn(usize) -> f32) {
    fs::create_dir_all(dir.join("samples")).unwrap();
    let bytes: Vec<u8> = (0..frames * features).flat_map(|i| f(i).to_le_bytes()).collect();
    fs::write(dir.join("samples").join(name), bytes).unwrap();
}

fn write_manifest(dir: &Path, json: &str) {
    fs::write(dir.join("manifest.json"), json).unwrap();
}

const THREE_SAMPLES: &str = r#"{
  "name": "tiny", "num_landmarks": 60, "coords": 3, "classes": ["hello", "thanks"],
  "samples": [
    {"id": "a", "class_index": 0, "frames": 2, "file": "samples/a.f32"},
    {"id": "b", "class_index": 1, "frames": 3, "file": "samples/b.f32"},
    {"id": "c", "class_index": 1, "frames": 1, "file": "samples/c.f32"}
  ],
  "splits": {"train": ["a", "b"], "test": ["c"]}
}"#;

fn tiny_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_sample(dir.path(), "a.f32", 2, FEATURES, |i| i as f32 * 0.5);
    write_sample(dir.path(), "b.f32", 3, FEATURES, |_| 1.0);
    write_sample(dir.path(), "c.f32", 1, FEATURES, |i| if i == 7 { f32::NAN } else { 0.25 });
    write_manifest(dir.path(), THREE_SAMPLES);
    dir
}

fn random_seq(frames: usize, seed: u64) -> PoseSequence {
    let mut rng = seeded(seed);
    PoseSequence::new(frames, (0..frames * FEATURES).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

// ---- on-disk format ----

#[test]
fn loads_manifest_example() {
    let dir = tiny_dir();
    let ds = Dataset::load(dir.path()).unwrap();
    assert_eq!(ds.num_classes(), 2);
    assert_eq!(ds.split(Split::Train).len(), 2);
    assert_eq!(ds.split(Split::Test)[0].id, "c");
    assert_eq!(ds.samples[0].sequence.get(1, 0), FEATURES as f64 * 0.5);
    assert!(ds.samples[2].sequence.get(0, 7).is_nan());
    assert!(!ds.synthetic);
}

#[test]
fn save_load_roundtrip_is_exact_for_f32_values() {
    let dir = tiny_dir();
    let ds = Dataset::load(dir.path()).unwrap();
    let out = tempfile::tempdir().unwrap();
    let clean = ds.map_sequences(|s| Ok(interpolate_missing(s))).unwrap();
    clean.save(out.path()).unwrap();
    assert_eq!(Dataset::load(out.path()).unwrap(), clean);
}

#[test]
fn byte_length_mismatch_is_frame_count_error() {
    let dir = tiny_dir();
    write_sample(dir.path(), "b.f32", 2, FEATURES, |_| 1.0);
    assert!(matches!(Dataset::load(dir.path()), Err(Error::FrameCountMismatch { .. })));
}

#[test]
fn empty_class_list_is_malformed() {
    let dir = tiny_dir();
    write_manifest(dir.path(), &THREE_SAMPLES.replace(r#"["hello", "thanks"]"#, "[]"));
    assert!(matches!(Dataset::load(dir.path()), Err(Error::MalformedManifest(_))));
}

#[test]
fn missing_sample_file_is_reported() {
    let dir = tiny_dir();
    fs::remove_file(dir.path().join("samples/c.f32")).unwrap();
    assert!(matches!(Dataset::load(dir.path()), Err(Error::MissingFile(_))));
    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(Dataset::load(empty.path()), Err(Error::MissingFile(_))));
}

#[test]
fn overlapping_splits_are_rejected() {
    let dir = tiny_dir();
    write_manifest(dir.path(), &THREE_SAMPLES.replace(r#""test": ["c"]"#, r#""test": ["a"]"#));
    assert!(matches!(Dataset::load(dir.path()), Err(Error::OverlappingSplits(_))));
}

#[test]
fn out_of_range_class_is_rejected() {
    let dir = tiny_dir();
    write_manifest(dir.path(), &THREE_SAMPLES.replace(r#""class_index": 1, "frames": 1"#, r#""class_index": 2, "frames": 1"#));
    assert!(matches!(Dataset::load(dir.path()), Err(Error::InvalidClassIndex { .. })));
}

#[test]
fn landmark_subset_selects_listed_points() {
    let dir = tempfile::tempdir().unwrap();
    let stored = 70;
    write_sample(dir.path(), "a.f32", 2, stored * 3, |i| i as f32);
    write_manifest(
        dir.path(),
        r#"{"name": "wide", "num_landmarks": 70, "coords": 3, "classes": ["x"],
            "samples": [{"id": "a", "class_index": 0, "frames": 2, "file": "samples/a.f32"}],
            "splits": {"train": ["a"]}}"#,
    );
    assert!(matches!(Dataset::load(dir.path()), Err(Error::MalformedManifest(_))));
    let indices: Vec<usize> = (10..70).rev().collect();
    let ds = Dataset::load_with_subset(dir.path(), &indices).unwrap();
    let s = &ds.samples[0].sequence;
    assert_eq!(s.point(0, 0), [207.0, 208.0, 209.0]);
    assert_eq!(s.point(1, 59), [240.0, 241.0, 242.0]);
}

// ---- filters ----

#[test]
fn interpolation_closed_forms() {
    let cases: [(&[f64], &[f64]); 3] = [
        (&[1.0, f64::NAN, 3.0], &[1.0, 2.0, 3.0]),
        (&[f64::NAN, f64::NAN, 5.0, 7.0], &[5.0, 5.0, 5.0, 7.0]),
        (&[f64::NAN, f64::NAN, f64::NAN], &[0.0, 0.0, 0.0]),
    ];
    for (input, expected) in cases {
        let mut s = PoseSequence::zeros(input.len());
        s.set_channel(3, input);
        let out = interpolate_missing(&s);
        assert_eq!(out.channel(3), expected);
        assert!(out.is_clean());
    }
}

#[test]
fn savgol_reproduces_cubics_everywhere() {
    let n = 40;
    let mut s = PoseSequence::zeros(n);
    for f in 0..FEATURES {
        let (a, b, c, d) = (f as f64 * 0.01, 1.0 - f as f64 * 0.003, -0.2, 0.5);
        let ch: Vec<f64> = (0..n)
            .map(|t| {
                let u = t as f64 / 10.0 - 2.0;
                a + b * u + c * u * u + d * u * u * u
            })
            .collect();
        s.set_channel(f, &ch);
    }
    let mut special = Vec::new();
    for t in 0..n {
        let u = t as f64 / 10.0;
        special.push(u * u * u - 2.0 * u);
    }
    s.set_channel(0, &special);
    let out = savgol_smooth(&s, 15, 3).unwrap();
    let err = out.values().iter().zip(s.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-9, "max error {err}");
}

#[test]
fn savgol_leaves_constants_alone() {
    let s = PoseSequence::new(20, vec![0.37; 20 * FEATURES]).unwrap();
    let out = savgol_smooth(&s, 15, 3).unwrap();
    assert!(out.values().iter().all(|v| (v - 0.37).abs() < 1e-12));
}

/// Solves `A x = b` for a small dense system by Gaussian elimination with
/// partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let acc: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - acc) / a[row][row];
    }
    x
}

#[test]
fn savgol_central_weights_match_normal_equations() {
    let w = savgol_coefficients(15, 3).unwrap();
    // (VᵀV) c = Vᵀ e_k gives the fit for a unit impulse at offset k; its
    // value at 0 is c[0].
    let xs: Vec<f64> = (-7..=7).map(|x| x as f64).collect();
    let v: Vec<Vec<f64>> = xs.iter().map(|&x| (0..4).map(|p| x.powi(p)).collect()).collect();
    let vtv: Vec<Vec<f64>> =
        (0..4).map(|i| (0..4).map(|j| v.iter().map(|row| row[i] * row[j]).sum()).collect()).collect();
    for k in 0..15 {
        let rhs: Vec<f64> = (0..4).map(|i| v[k][i]).collect();
        let c = solve(vtv.clone(), rhs);
        assert!((w[k] - c[0]).abs() < 1e-12, "k={k}: {} vs {}", w[k], c[0]);
    }
    // published integer form of the same filter
    let table = [-78.0, -13.0, 42.0, 87.0, 122.0, 147.0, 162.0, 167.0];
    for (k, &num) in table.iter().enumerate() {
        assert!((w[k] - num / 1105.0).abs() < 1e-12);
        assert!((w[14 - k] - num / 1105.0).abs() < 1e-12);
    }
}

// ---- windowing, balance, augmentation ----

#[test]
fn balance_examples() {
    let make = |labels: &[usize]| -> Vec<Sample> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &c)| Sample { id: format!("s{i}"), class_index: c, sequence: PoseSequence::zeros(1) })
            .collect()
    };
    let count = |s: &[Sample], c: usize| (0..c).map(|k| s.iter().filter(|x| x.class_index == k).count()).collect::<Vec<_>>();
    assert_eq!(count(&oversample_balance(&make(&[0, 0, 0, 1]), 2, 0).unwrap(), 2), vec![3, 3]);
    let balanced = make(&[0, 1, 1, 0]);
    assert_eq!(oversample_balance(&balanced, 2, 0).unwrap(), balanced);
    let out = oversample_balance(&make(&[0, 0, 0, 0, 0, 1, 1, 2]), 3, 4).unwrap();
    assert_eq!(out.len(), 15);
    assert_eq!(count(&out, 3), vec![5, 5, 5]);
    assert!(matches!(oversample_balance(&make(&[0, 0]), 2, 0), Err(Error::Config(_))));
}

#[test]
fn augment_identity_and_quarter_turn() {
    let s = random_seq(32, 3);
    let same = augment_with(&s, 32, AugmentParams::identity(), &LandmarkLayout::default());
    assert!(same.values().iter().zip(s.values()).all(|(a, b)| (a - b).abs() < 1e-12));

    // symmetric cloud centered at (0.5, 0.5) plus one probe at center + (1, 0)
    let layout = LandmarkLayout::default();
    let mut pts = PoseSequence::zeros(1);
    for l in 0..60 {
        let f = pts.frame_mut(0);
        f[l * 3] = 0.5;
        f[l * 3 + 1] = 0.5;
    }
    pts.frame_mut(0)[0] = 1.5;
    pts.frame_mut(0)[3] = -0.5;
    let p = AugmentParams { rotation_rad: std::f64::consts::FRAC_PI_2, scale: 1.0 };
    let out = augment_with(&pts, 1, p, &layout);
    let [x, y, _] = out.point(0, 0);
    assert!((x - 0.5).abs() < 1e-9 && (y - 1.5).abs() < 1e-9, "{x} {y}");
}

#[test]
fn augment_draws_stay_in_range() {
    for seed in 0..1000 {
        let p = AugmentParams::draw(seed);
        assert!(p.rotation_rad.abs() <= MAX_ROTATION_DEG.to_radians());
        assert!((p.scale - 1.0).abs() <= MAX_SCALE_DEVIATION + 1e-15);
    }
}

#[test]
fn augment_keeps_padding_and_hand_depth() {
    let layout = LandmarkLayout::default();
    let w = window_frames(&zero_hand_depth(&random_seq(20, 1), &layout), WINDOW, WindowMode::Center);
    let out = augment(&w.sequence, w.valid_frames, 9);
    for t in 20..32 {
        assert!(out.frame(t).iter().all(|&v| v == 0.0));
    }
    for t in 0..20 {
        for l in layout.hand_landmarks() {
            assert_eq!(out.point(t, l)[2], 0.0);
        }
    }
    assert_eq!(out, augment(&w.sequence, w.valid_frames, 9));
    assert_ne!(out, augment(&w.sequence, w.valid_frames, 10));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn interpolation_is_idempotent(seed in any::<u64>(), frames in 1usize..12) {
        let mut rng = seeded(seed);
        let mut s = random_seq(frames, seed);
        for v in s.values_mut() {
            if rng.random::<f64>() < 0.3 {
                *v = f64::NAN;
            }
        }
        let once = interpolate_missing(&s);
        prop_assert!(once.is_clean());
        prop_assert_eq!(interpolate_missing(&once), once.clone());
        let clean = random_seq(frames, seed ^ 5);
        prop_assert_eq!(interpolate_missing(&clean), clean);
    }

    #[test]
    fn savgol_commutes_with_affine_maps(seed in any::<u64>(), a in -3.0f64..3.0, b in -2.0f64..2.0, frames in 1usize..30) {
        let s = random_seq(frames, seed);
        let mapped = PoseSequence::new(frames, s.values().iter().map(|v| a * v + b).collect()).unwrap();
        let lhs = savgol_smooth(&mapped, 15, 3).unwrap();
        let rhs = savgol_smooth(&s, 15, 3).unwrap();
        for (l, r) in lhs.values().iter().zip(rhs.values()) {
            prop_assert!((l - (a * r + b)).abs() < 1e-9);
        }
    }

    #[test]
    fn windows_are_always_full_size(frames in 1usize..80, seed in any::<u64>()) {
        let s = random_seq(frames, seed);
        for mode in [WindowMode::Random(seed), WindowMode::Center] {
            let w = window_frames(&s, WINDOW, mode);
            prop_assert_eq!(w.sequence.frames(), WINDOW);
            prop_assert_eq!(w.sequence.values().len(), WINDOW * FEATURES);
            prop_assert_eq!(w.valid_frames, frames.min(WINDOW));
            prop_assert!(w.start + WINDOW.min(frames) <= frames);
        }
    }

    #[test]
    fn oversampling_equalizes_and_keeps_originals(labels in prop::collection::vec(0usize..4, 4..40), seed in any::<u64>()) {
        let mut labels = labels;
        labels.extend([0, 1, 2, 3]);
        let idx = oversample_indices(&labels, 4, seed).unwrap();
        let max = (0..4).map(|c| labels.iter().filter(|&&l| l == c).count()).max().unwrap();
        for c in 0..4 {
            prop_assert_eq!(idx.iter().filter(|&&i| labels[i] == c).count(), max);
        }
        prop_assert_eq!(&idx[..labels.len()], &(0..labels.len()).collect::<Vec<_>>()[..]);
        prop_assert_eq!(oversample_indices(&labels, 4, seed).unwrap(), idx);
    }

    #[test]
    fn augment_scales_planar_distances(seed in any::<u64>(), valid in 1usize..=32) {
        let s = window_frames(&random_seq(valid, seed), WINDOW, WindowMode::Center);
        let p = AugmentParams::draw(seed);
        let out = augment_with(&s.sequence, s.valid_frames, p, &LandmarkLayout::default());
        let mut rng = seeded(seed ^ 3);
        for _ in 0..20 {
            let (t1, t2) = (rng.random_range(0..valid), rng.random_range(0..valid));
            let (l1, l2) = (rng.random_range(0..60), rng.random_range(0..60));
            let d = |q: &PoseSequence| {
                let (a, b) = (q.point(t1, l1), q.point(t2, l2));
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
            };
            prop_assert!((d(&out) - p.scale * d(&s.sequence)).abs() < 1e-9);
        }
    }
}
