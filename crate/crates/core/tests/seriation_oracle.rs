use proptest::prelude::*;
use stpm_core::analytics::seriation_order;
use stpm_testkit::{adjacent_cost, brute_force_seriation, summer_winter_rows};

fn keyed(rows: &[Vec<f64>]) -> Vec<(usize, Vec<f64>)> {
    rows.iter().cloned().enumerate().collect()
}

#[test]
fn summer_winter_rows_pair_up() {
    let rows = summer_winter_rows();
    let order = seriation_order(&keyed(&rows));
    let summer = |i: usize| i == 0 || i == 2;
    assert_eq!(summer(order[0]), summer(order[1]));
    assert_eq!(summer(order[2]), summer(order[3]));
    assert_ne!(summer(order[1]), summer(order[2]));
    let (best, winners) = brute_force_seriation(&rows);
    assert!((adjacent_cost(&rows, &order) - best).abs() < 1e-12);
    assert!(winners.contains(&order));
}

#[test]
fn small_inputs() {
    assert!(seriation_order::<usize>(&[]).is_empty());
    assert_eq!(seriation_order(&[("only", vec![1.0, 2.0])]), vec!["only"]);
    assert_eq!(
        seriation_order(&[(3, vec![0.0]), (1, vec![0.0])]),
        vec![1, 3]
    );
}

fn rows_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=7, 2usize..=6)
        .prop_flat_map(|(n, len)| prop::collection::vec(prop::collection::vec(0u32..50, len), n))
        .prop_map(|rows| {
            rows.into_iter()
                .map(|r| r.into_iter().map(f64::from).collect())
                .collect()
        })
}

proptest! {
    #[test]
    fn output_is_a_permutation(rows in rows_strategy()) {
        let mut order = seriation_order(&keyed(&rows));
        order.sort_unstable();
        prop_assert_eq!(order, (0..rows.len()).collect::<Vec<_>>());
    }

    #[test]
    fn invariant_to_power_of_two_scaling(rows in rows_strategy(), shifts in prop::collection::vec(-4i32..=4, 7)) {
        let scaled: Vec<Vec<f64>> =
            rows.iter().zip(&shifts).map(|(r, &s)| r.iter().map(|x| x * 2f64.powi(s)).collect()).collect();
        prop_assert_eq!(seriation_order(&keyed(&rows)), seriation_order(&keyed(&scaled)));
    }

    #[test]
    fn invariant_to_input_order(rows in rows_strategy()) {
        let forward = keyed(&rows);
        let mut backward = forward.clone();
        backward.reverse();
        prop_assert_eq!(seriation_order(&forward), seriation_order(&backward));
    }
}
