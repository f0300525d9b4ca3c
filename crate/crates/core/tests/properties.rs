//! Property tests for the path algebra and estimator invariants.

use proptest::prelude::*;

use girsanov::calculus::{quadratic_covariation, stochastic_integral, IntegrandPath};
use girsanov::mc::{estimate, EstimatorMode};
use girsanov::models::linear_combination;
use girsanov::path::{align, CadlagPath, StoppingTimeObs};

/// Strategy: a pure-jump cadlag path with up to 6 jumps on (0, 1].
fn jump_path() -> impl Strategy<Value = CadlagPath> {
    (
        proptest::collection::btree_set(1u32..1000, 1..6),
        proptest::collection::vec(-100i32..100, 6),
        -50i32..50,
    )
        .prop_map(|(raw_times, raw_jumps, start)| {
            let mut times = vec![0.0f64];
            times.extend(raw_times.iter().map(|&t| t as f64 / 1000.0));
            let mut values = vec![start as f64 / 10.0];
            let mut left = vec![start as f64 / 10.0];
            let mut flags = vec![false];
            for (i, _) in raw_times.iter().enumerate() {
                let prev = *values.last().unwrap();
                let jump = raw_jumps[i % raw_jumps.len()] as f64 / 20.0;
                left.push(prev);
                values.push(prev + jump);
                flags.push(jump != 0.0);
            }
            // Entries with zero jump sizes keep value == left and must be
            // unflagged to satisfy the constructor.
            CadlagPath::new(times, values, left, flags)
                .unwrap()
                .with_diffusive(false)
        })
}

proptest! {
    #[test]
    fn stop_is_idempotent(p in jump_path(), sigma_ms in 0u32..1500) {
        let sigma = StoppingTimeObs::hit(sigma_ms as f64 / 1000.0);
        let once = p.stop(sigma);
        prop_assert_eq!(once.stop(sigma), once);
    }

    #[test]
    fn align_is_idempotent_and_order_free(a in jump_path(), b in jump_path()) {
        let panel = align(&[("a", &a), ("b", &b)]);
        let again = align(&[("a", panel.expect("a")), ("b", panel.expect("b"))]);
        prop_assert_eq!(&again.times, &panel.times);
        prop_assert_eq!(&again.expect("a").values, &panel.expect("a").values);
        let swapped = align(&[("b", &b), ("a", &a)]);
        prop_assert_eq!(&swapped.times, &panel.times);
        prop_assert_eq!(&swapped.expect("b").values, &panel.expect("b").values);
        prop_assert_eq!(&swapped.jump_flags, &panel.jump_flags);
    }

    #[test]
    fn unit_integrand_gives_increments(p in jump_path()) {
        let h = IntegrandPath::constant(&p.times, 1.0);
        let i = stochastic_integral(&h, &p);
        for k in 0..p.len() {
            prop_assert!((i.values[k] - (p.values[k] - p.values[0])).abs() < 1e-12);
        }
    }

    #[test]
    fn covariation_is_bilinear(a in jump_path(), b in jump_path(), s in -5i32..5) {
        let panel = align(&[("a", &a), ("b", &b)]);
        let (a, b) = (panel.expect("a"), panel.expect("b"));
        let combo = linear_combination(s as f64, a, 1.0, b);
        let lhs = quadratic_covariation(&combo, b);
        let qab = quadratic_covariation(a, b);
        let qbb = quadratic_covariation(b, b);
        for k in 0..combo.len() {
            let rhs = s as f64 * qab.values[k] + qbb.values[k];
            prop_assert!((lhs.values[k] - rhs).abs() < 1e-9,
                "k={} lhs={} rhs={}", k, lhs.values[k], rhs);
        }
    }

    #[test]
    fn integration_by_parts_exact_on_jump_panels(a in jump_path(), b in jump_path()) {
        let panel = align(&[("a", &a), ("b", &b)]);
        let (x, y) = (panel.expect("a"), panel.expect("b"));
        let xy_minus = stochastic_integral(&IntegrandPath::from_cadlag(x), y);
        let yx_minus = stochastic_integral(&IntegrandPath::from_cadlag(y), x);
        let bracket = quadratic_covariation(x, y);
        for k in 0..x.len() {
            let lhs = x.values[k] * y.values[k] - x.values[0] * y.values[0];
            let rhs = xy_minus.values[k] + yx_minus.values[k] + bracket.values[k];
            prop_assert!((lhs - rhs).abs() < 1e-9, "k={} {} vs {}", k, lhs, rhs);
        }
    }

    #[test]
    fn covariation_symmetric(a in jump_path(), b in jump_path()) {
        let panel = align(&[("a", &a), ("b", &b)]);
        let (x, y) = (panel.expect("a"), panel.expect("b"));
        let xy = quadratic_covariation(x, y);
        let yx = quadratic_covariation(y, x);
        prop_assert!(xy.sup_distance(&yx) < 1e-12);
    }

    #[test]
    fn csv_round_trip(p in jump_path()) {
        let q = CadlagPath::from_csv(&p.to_csv()).unwrap();
        prop_assert_eq!(&q.times, &p.times);
        prop_assert_eq!(&q.values, &p.values);
        prop_assert_eq!(&q.left_limits, &p.left_limits);
        prop_assert_eq!(&q.jump_flags, &p.jump_flags);
    }

    #[test]
    fn median_of_means_single_block_is_mean(
        samples in proptest::collection::vec(-1000.0f64..1000.0, 1..200)
    ) {
        let mom = estimate(EstimatorMode::MedianOfMeans { blocks: 1 }, &samples);
        let mean = estimate(EstimatorMode::Mean, &samples);
        prop_assert!((mom.value - mean.value).abs() <= 1e-9 * (1.0 + mean.value.abs()));
    }
}

#[test]
fn shipped_space_fixture_parses_and_checks() {
    let text = include_str!("data/two_coin.space");
    let file = girsanov::finite::parse_space_file(text).unwrap();
    let tc = girsanov::finite::two_coin_space(girsanov::finite::q(3, 10));
    assert_eq!(file.space.atom_count(), 4);
    assert_eq!(file.space.weights(), tc.space.weights());
    assert_eq!(file.processes["X"], tc.x);
    assert_eq!(file.processes["Y"], tc.y);
    let (ok, violation) = girsanov::finite::martingale_check_exact(
        &file.processes["X"],
        &file.space,
        &file.space.weights(),
    );
    assert!(ok);
    assert_eq!(violation, 0.0);
}
