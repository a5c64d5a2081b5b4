mod common;

use common::{brute_gap, random_fixture, Fixture};
use fairmtl::metrics::{dp_difference, eo_difference, mean_disparity, Disparity};
use proptest::prelude::*;

fn assert_matches_brute_force(f: &Fixture) {
    for c in 0..f.num_classes {
        let expected = brute_gap(&f.y, &f.pred, &f.groups, f.num_groups, c);
        let dp = dp_difference(&f.pred, &f.groups, f.num_groups, c).unwrap();
        let eo = eo_difference(&f.y, &f.pred, &f.groups, f.num_groups, c).unwrap();
        assert_eq!(dp.value, expected.dp, "dp class {c}");
        assert_eq!(eo.value, expected.eo, "eo class {c}");
        assert_eq!(eo.tpr_gap, expected.tpr_gap);
        assert_eq!(eo.fpr_gap, expected.fpr_gap);
    }
}

#[test]
fn fifty_seeded_fixtures() {
    for seed in 0..50 {
        assert_matches_brute_force(&random_fixture(seed));
    }
}

#[test]
fn empty_groups_are_listed_not_nan() {
    let y = [0, 1, 0, 1];
    let pred = [0, 0, 1, 1];
    let groups = [0, 0, 2, 2];
    let dp = dp_difference(&pred, &groups, 3, 0).unwrap();
    assert_eq!(dp.excluded, vec![1]);
    assert_eq!(dp.positive_rate[1], None);
    assert!(dp.value.is_finite());
    let eo = eo_difference(&y, &pred, &groups, 3, 0).unwrap();
    assert_eq!(eo.excluded, vec![1]);
    assert_eq!(eo.tpr_gap, 1.0);
}

#[test]
fn single_usable_group_has_no_gap() {
    let y = [0, 0, 1];
    let pred = [0, 1, 1];
    let eo = eo_difference(&y, &pred, &[0, 0, 1], 2, 0).unwrap();
    assert_eq!(eo.value, 0.0);
    assert_eq!(eo.excluded, vec![0, 1]);
}

#[test]
fn out_of_range_group_code_is_rejected() {
    assert!(dp_difference(&[0, 1], &[0, 3], 2, 0).is_err());
    assert!(eo_difference(&[0], &[0, 1], &[0, 1], 2, 0).is_err());
}

proptest! {
    #[test]
    fn counting_oracle_agrees(seed in any::<u64>()) {
        assert_matches_brute_force(&random_fixture(seed));
    }

    #[test]
    fn class_mean_is_the_mean_of_per_class_gaps(seed in any::<u64>()) {
        let f = random_fixture(seed);
        let n = f.num_classes as f64;
        let dp: f64 = (0..f.num_classes).map(|c| brute_gap(&f.y, &f.pred, &f.groups, f.num_groups, c).dp).sum::<f64>() / n;
        let eo: f64 = (0..f.num_classes).map(|c| brute_gap(&f.y, &f.pred, &f.groups, f.num_groups, c).eo).sum::<f64>() / n;
        let got_dp = mean_disparity(Disparity::DemographicParity, &f.y, &f.pred, &f.groups, f.num_groups, f.num_classes).unwrap();
        let got_eo = mean_disparity(Disparity::EqualizedOdds, &f.y, &f.pred, &f.groups, f.num_groups, f.num_classes).unwrap();
        prop_assert!((got_dp - dp).abs() < 1e-12);
        prop_assert!((got_eo - eo).abs() < 1e-12);
    }

    #[test]
    fn gaps_lie_in_the_unit_interval(seed in any::<u64>()) {
        let f = random_fixture(seed);
        for c in 0..f.num_classes {
            let dp = dp_difference(&f.pred, &f.groups, f.num_groups, c).unwrap().value;
            let eo = eo_difference(&f.y, &f.pred, &f.groups, f.num_groups, c).unwrap().value;
            prop_assert!((0.0..=1.0).contains(&dp));
            prop_assert!((0.0..=1.0).contains(&eo));
        }
    }

    #[test]
    fn relabelling_groups_leaves_gaps_unchanged(seed in any::<u64>()) {
        let f = random_fixture(seed);
        let flipped: Vec<usize> = f.groups.iter().map(|&g| f.num_groups - 1 - g).collect();
        for c in 0..f.num_classes {
            let a = eo_difference(&f.y, &f.pred, &f.groups, f.num_groups, c).unwrap().value;
            let b = eo_difference(&f.y, &f.pred, &flipped, f.num_groups, c).unwrap().value;
            prop_assert_eq!(a, b);
        }
    }
}
