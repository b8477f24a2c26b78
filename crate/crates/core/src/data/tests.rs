use super::*;
use proptest::prelude::*;

#[test]
fn moons_reject_odd_or_zero_n() {
    assert!(two_moons(5, 0.0, &mut Rng::new(0)).is_err());
    assert!(two_moons(0, 0.0, &mut Rng::new(0)).is_err());
}

#[test]
fn noiseless_moons_lie_on_their_arcs() {
    let set = two_moons(200, 0.0, &mut Rng::new(1)).unwrap();
    for (row, &label) in set.points().rows().into_iter().zip(set.labels()) {
        let (x, y) = (row[0], row[1]);
        if label == 0 {
            assert!((x * x + y * y - 1.0).abs() < 1e-12);
            assert!(y >= 0.0);
        } else {
            let (u, v) = (x - 1.0, y - 0.5);
            assert!((u * u + v * v - 1.0).abs() < 1e-12);
            assert!(y <= 0.5);
        }
        assert!(moons_manifold_distance(x, y) < 1e-12);
    }
}

#[test]
fn moons_are_class_balanced() {
    let set = two_moons(4, 0.7, &mut Rng::new(2)).unwrap();
    assert_eq!(set.labels().iter().filter(|&&l| l == 0).count(), 2);
    assert_eq!(set.labels().iter().filter(|&&l| l == 1).count(), 2);
}

#[test]
fn noisy_moons_sit_near_the_manifold() {
    // E||displacement to the curve|| for isotropic N(0, 0.1^2 I) noise is
    // close to 0.1 * sqrt(2/pi) ~ 0.0798; bound checked by direct sampling.
    let set = two_moons(10_000, 0.1, &mut Rng::new(3)).unwrap();
    let mean: f64 = set
        .points()
        .rows()
        .into_iter()
        .map(|r| moons_manifold_distance(r[0], r[1]))
        .sum::<f64>()
        / set.len() as f64;
    assert!(mean > 0.06 && mean < 0.10, "mean distance {mean}");
}

#[test]
fn moons_are_seed_deterministic() {
    let a = two_moons(64, 0.2, &mut Rng::new(9)).unwrap();
    let b = two_moons(64, 0.2, &mut Rng::new(9)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn noiseless_circles_have_exact_radii() {
    let set = two_circles(100, 0.0, 0.5, &mut Rng::new(0)).unwrap();
    for (row, &label) in set.points().rows().into_iter().zip(set.labels()) {
        let r2 = row[0] * row[0] + row[1] * row[1];
        if label == 0 {
            assert!((r2 - 1.0).abs() < 1e-12);
        } else {
            assert!((r2 - 0.25).abs() < 1e-12);
        }
    }
}

#[test]
fn two_point_circles_put_one_point_per_circle() {
    let set = two_circles(2, 0.0, 0.3, &mut Rng::new(0)).unwrap();
    assert_eq!(set.labels(), &[0, 1]);
}

#[test]
fn circles_reject_bad_radius_ratio() {
    assert!(two_circles(10, 0.0, 0.0, &mut Rng::new(0)).is_err());
    assert!(two_circles(10, 0.0, 1.0, &mut Rng::new(0)).is_err());
}

#[test]
fn circle_angles_cover_uniformly() {
    let set = two_circles(400, 0.0, 0.5, &mut Rng::new(0)).unwrap();
    for class in 0..2i64 {
        let mut angles: Vec<f64> = set
            .points()
            .rows()
            .into_iter()
            .zip(set.labels())
            .filter(|(_, &l)| l == class)
            .map(|(r, _)| r[1].atan2(r[0]))
            .collect();
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut max_gap: f64 = std::f64::consts::TAU + angles[0] - angles[angles.len() - 1];
        for w in angles.windows(2) {
            max_gap = max_gap.max(w[1] - w[0]);
        }
        assert!(max_gap < 2.0 * (std::f64::consts::TAU / 200.0), "gap {max_gap}");
    }
}

#[test]
fn split_takes_exactly_labels_per_class() {
    let data = two_moons(100, 0.05, &mut Rng::new(4)).unwrap();
    let spec = SplitSpec {
        labels_per_class: 3,
        validation_fraction: 0.1,
        seed: 0,
    };
    let (labeled, unlabeled, validation) =
        split_semi_supervised(&data, &spec, &mut Rng::new(spec.seed)).unwrap();
    assert_eq!(labeled.len(), 6);
    for class in 0..2i64 {
        assert_eq!(labeled.labels().iter().filter(|&&l| l == class).count(), 3);
    }
    // 94 remaining, 10% -> 9 validation, 85 unlabeled.
    assert_eq!(validation.len(), 9);
    assert_eq!(unlabeled.len(), 85);
    assert!(unlabeled.labels().iter().all(|&l| l == UNLABELED));
    assert!(unlabeled.eval_labels().iter().all(|&l| l >= 0));
}

#[test]
fn split_zero_validation_fraction_gives_empty_validation() {
    let data = two_moons(20, 0.0, &mut Rng::new(5)).unwrap();
    let spec = SplitSpec {
        labels_per_class: 2,
        validation_fraction: 0.0,
        seed: 1,
    };
    let (_, _, validation) = split_semi_supervised(&data, &spec, &mut Rng::new(1)).unwrap();
    assert!(validation.is_empty());
}

#[test]
fn split_errors_when_class_is_too_small() {
    let data = two_moons(4, 0.0, &mut Rng::new(6)).unwrap();
    let spec = SplitSpec {
        labels_per_class: 3,
        validation_fraction: 0.0,
        seed: 0,
    };
    assert!(matches!(
        split_semi_supervised(&data, &spec, &mut Rng::new(0)),
        Err(Error::InsufficientClassMembers { .. })
    ));
}

fn row_key(set: &LabeledSet, i: usize) -> (u64, u64, i64) {
    (
        set.points()[[i, 0]].to_bits(),
        set.points()[[i, 1]].to_bits(),
        set.eval_labels()[i],
    )
}

#[test]
fn split_partitions_the_input() {
    let data = two_moons(60, 0.3, &mut Rng::new(7)).unwrap();
    let spec = SplitSpec {
        labels_per_class: 5,
        validation_fraction: 0.25,
        seed: 3,
    };
    let (labeled, unlabeled, validation) =
        split_semi_supervised(&data, &spec, &mut Rng::new(3)).unwrap();

    let mut original: Vec<_> = (0..data.len()).map(|i| row_key(&data, i)).collect();
    let mut recombined = Vec::new();
    for part in [&labeled, &unlabeled, &validation] {
        recombined.extend((0..part.len()).map(|i| row_key(part, i)));
    }
    original.sort_unstable();
    recombined.sort_unstable();
    assert_eq!(original, recombined);
}

#[test]
fn csv_round_trip_preserves_everything() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("set.csv");
    let data = two_moons(32, 0.15, &mut Rng::new(8)).unwrap();
    save_csv(&data, &path).unwrap();
    let loaded = load_csv(&path).unwrap();
    assert_eq!(loaded.labels(), data.labels());
    for (a, b) in loaded.points().iter().zip(data.points().iter()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn csv_minus_one_label_is_the_unlabeled_sentinel() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("set.csv");
    std::fs::write(&path, "x0,x1,label\n0.5,1.5,-1\n1.0,2.0,1\n").unwrap();
    let loaded = load_csv(&path).unwrap();
    assert_eq!(loaded.labels(), &[UNLABELED, 1]);
}

#[test]
fn csv_header_mismatch_names_the_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "x0,y1,label\n0.0,0.0,0\n").unwrap();
    let message = load_csv(&path).unwrap_err().to_string();
    assert!(message.contains("x1") && message.contains("y1"), "{message}");
}

#[test]
fn csv_rejects_non_numeric_fields() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "x0,x1,label\n0.0,abc,0\n").unwrap();
    let message = load_csv(&path).unwrap_err().to_string();
    assert!(message.contains("abc"), "{message}");
}

#[test]
fn csv_rejects_malformed_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "x0,x1,label\n0.0,0\n").unwrap();
    assert!(matches!(load_csv(&path), Err(Error::Csv { line: 2, .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn csv_round_trips_arbitrary_finite_sets(
        rows in proptest::collection::vec((any::<f64>(), any::<f64>(), -1i64..5), 1..40)
    ) {
        prop_assume!(rows.iter().all(|(x, y, _)| x.is_finite() && y.is_finite()));
        let n = rows.len();
        let mut points = Array2::zeros((n, 2));
        let mut labels = Vec::new();
        for (i, (x, y, l)) in rows.into_iter().enumerate() {
            points[[i, 0]] = x;
            points[[i, 1]] = y;
            labels.push(l);
        }
        let set = LabeledSet::new(points, labels).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prop.csv");
        save_csv(&set, &path).unwrap();
        let loaded = load_csv(&path).unwrap();
        prop_assert_eq!(loaded.labels(), set.labels());
        for (a, b) in loaded.points().iter().zip(set.points().iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn split_sizes_always_add_up(
        n in 1usize..40,
        labels_per_class in 1usize..4,
        frac in 0.0f64..0.9,
        seed in 0u64..1000
    ) {
        let data = two_moons(2 * n, 0.1, &mut Rng::new(seed)).unwrap();
        let spec = SplitSpec { labels_per_class, validation_fraction: frac, seed };
        match split_semi_supervised(&data, &spec, &mut Rng::new(seed)) {
            Ok((labeled, unlabeled, validation)) => {
                prop_assert_eq!(labeled.len() + unlabeled.len() + validation.len(), data.len());
                prop_assert_eq!(labeled.len(), 2 * labels_per_class);
            }
            Err(_) => prop_assert!(labels_per_class > n),
        }
    }
}
