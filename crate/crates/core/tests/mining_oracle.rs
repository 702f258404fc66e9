use std::collections::{BTreeMap, HashMap};

use proptest::prelude::*;
use stpm_core::mining::{fp_growth, generate_rules, FrequentItemset, MiningConfig};
use stpm_core::{Item, ItemSet};
use stpm_testkit::{brute_force_frequent, count_containing, random_transactions, rng};

fn item(i: u32) -> Item {
    Item::new(format!("I{i:02}"), "1").unwrap()
}

fn item_id(item: &Item) -> u32 {
    item.attribute()[1..].parse().unwrap()
}

fn to_itemsets(txs: &[Vec<u32>]) -> Vec<ItemSet> {
    txs.iter()
        .map(|t| ItemSet::new(t.iter().map(|&i| item(i))).unwrap())
        .collect()
}

fn as_map(found: &[FrequentItemset]) -> BTreeMap<Vec<u32>, u64> {
    found
        .iter()
        .map(|f| {
            let mut ids: Vec<u32> = f.items.iter().map(item_id).collect();
            ids.sort_unstable();
            (ids, f.count)
        })
        .collect()
}

#[test]
fn matches_brute_force_on_200_by_12() {
    let mut r = rng(42);
    let txs = random_transactions(&mut r, 12, 200, 0.35);
    let got = fp_growth(&to_itemsets(&txs), 0.1).unwrap();
    assert_eq!(as_map(&got), brute_force_frequent(&txs, 0.1));
}

#[test]
fn output_is_canonically_ordered() {
    let mut r = rng(7);
    let txs = random_transactions(&mut r, 8, 100, 0.5);
    let got = fp_growth(&to_itemsets(&txs), 0.05).unwrap();
    for w in got.windows(2) {
        assert!((w[0].items.len(), &w[0].items) < (w[1].items.len(), &w[1].items));
    }
    for f in &got {
        assert_eq!(f.support, f.count as f64 / txs.len() as f64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fp_growth_equals_enumeration(
        seed in any::<u64>(),
        n_items in 1u32..=12,
        n_tx in 1usize..=300,
        density in 0.05f64..0.8,
        min_support in prop::sample::select(vec![0.05, 0.1, 0.2, 0.3, 0.5, 1.0]),
    ) {
        let txs = random_transactions(&mut rng(seed), n_items, n_tx, density);
        let got = fp_growth(&to_itemsets(&txs), min_support).unwrap();
        prop_assert_eq!(as_map(&got), brute_force_frequent(&txs, min_support));
    }

    #[test]
    fn downward_closure(seed in any::<u64>(), n_tx in 10usize..200) {
        let txs = random_transactions(&mut rng(seed), 8, n_tx, 0.4);
        let found = as_map(&fp_growth(&to_itemsets(&txs), 0.1).unwrap());
        for (set, &count) in &found {
            for skip in 0..set.len() {
                let mut sub = set.clone();
                sub.remove(skip);
                if !sub.is_empty() {
                    let sub_count = found.get(&sub).copied();
                    prop_assert!(sub_count.is_some_and(|c| c >= count));
                }
            }
        }
    }

    #[test]
    fn rule_metrics_are_exact_and_bounded(seed in any::<u64>(), n_tx in 20usize..300, min_lift in 0.0f64..1.5) {
        let txs = random_transactions(&mut rng(seed), 7, n_tx, 0.45);
        let sets = to_itemsets(&txs);
        let config = MiningConfig { min_support: 0.1, min_lift, max_rule_len: 5 };
        let frequents = fp_growth(&sets, config.min_support).unwrap();
        let rules = generate_rules(&frequents, txs.len(), &config, 0);
        let by_key: HashMap<String, f64> = rules.iter().map(|r| (r.key(), r.slice_metrics[&0].lift)).collect();
        let n = txs.len() as f64;
        for r in &rules {
            let m = r.slice_metrics[&0];
            let ids = |s: &ItemSet| s.iter().map(item_id).collect::<Vec<_>>();
            let union = count_containing(&txs, &ids(&r.union_itemset())) as f64;
            let ante = count_containing(&txs, &ids(r.antecedent())) as f64;
            let cons = count_containing(&txs, &ids(r.consequent())) as f64;
            prop_assert!((m.support - union / n).abs() <= 1e-12);
            prop_assert!((m.confidence - union / ante).abs() <= 1e-12);
            prop_assert!((m.lift - (union / n) / ((ante / n) * (cons / n))).abs() <= 1e-12);
            prop_assert!(m.support >= config.min_support && m.lift >= min_lift);
            prop_assert!((0.0..=1.0).contains(&m.confidence) && m.support <= m.confidence);
            let reverse = format!("{}=>{}", r.key().split("=>").nth(1).unwrap(), r.key().split("=>").next().unwrap());
            if let Some(&l) = by_key.get(&reverse) {
                prop_assert_eq!(l, m.lift);
            }
        }
    }
}
