//! Test oracles and fixtures. Everything here works on plain integers, vectors
//! and strings, so it shares no code with the implementation it checks.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random transactions over items `0..n_items`, each item present with probability `density`.
pub fn random_transactions(
    rng: &mut impl Rng,
    n_items: u32,
    n_tx: usize,
    density: f64,
) -> Vec<Vec<u32>> {
    (0..n_tx)
        .map(|_| (0..n_items).filter(|_| rng.random_bool(density)).collect())
        .collect()
}

/// Every non-empty itemset over the items that occur, with its count, when
/// `count / n >= min_support`. Exhaustive over all subsets of the universe.
pub fn brute_force_frequent(
    transactions: &[Vec<u32>],
    min_support: f64,
) -> BTreeMap<Vec<u32>, u64> {
    let mut universe: Vec<u32> = transactions.iter().flatten().copied().collect();
    universe.sort_unstable();
    universe.dedup();
    assert!(universe.len() <= 20, "brute force limited to 20 items");
    let n = transactions.len() as f64;
    let masks: Vec<u32> = transactions
        .iter()
        .map(|t| {
            t.iter()
                .map(|i| 1u32 << universe.binary_search(i).unwrap())
                .fold(0, |a, b| a | b)
        })
        .collect();
    let mut out = BTreeMap::new();
    for subset in 1u32..(1 << universe.len()) {
        let count = masks.iter().filter(|&&m| m & subset == subset).count() as u64;
        if count as f64 / n >= min_support {
            let items = (0..universe.len())
                .filter(|b| subset & (1 << b) != 0)
                .map(|b| universe[b])
                .collect();
            out.insert(items, count);
        }
    }
    out
}

/// Count of transactions containing every item of `set`.
pub fn count_containing(transactions: &[Vec<u32>], set: &[u32]) -> u64 {
    transactions
        .iter()
        .filter(|t| set.iter().all(|i| t.contains(i)))
        .count() as u64
}

/// Weighted modularity from a dense symmetric matrix, written directly from
/// the double-sum definition.
pub fn modularity_dense(w: &[Vec<f64>], assignment: &[usize], gamma: f64) -> f64 {
    let n = w.len();
    let k: Vec<f64> = w.iter().map(|row| row.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if assignment[i] == assignment[j] {
                q += w[i][j] - gamma * k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

/// All set partitions of `0..n` as restricted growth strings.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for c in 0..=max + 1 {
            if prefix.is_empty() && c > 0 {
                break;
            }
            prefix.push(c);
            let next_max = if prefix.len() == 1 { 0 } else { max.max(c) };
            go(prefix, next_max, n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    go(&mut Vec::new(), 0, n, &mut out);
    out
}

/// Maximum modularity over every partition, with one maximizer.
pub fn brute_force_max_modularity(w: &[Vec<f64>], gamma: f64) -> (f64, Vec<usize>) {
    set_partitions(w.len())
        .into_iter()
        .map(|p| (modularity_dense(w, &p, gamma), p))
        .fold((f64::NEG_INFINITY, Vec::new()), |best, cur| {
            if cur.0 > best.0 {
                cur
            } else {
                best
            }
        })
}

/// Random symmetric weights with the given edge density, zero diagonal.
#[allow(clippy::needless_range_loop)]
pub fn random_weights(rng: &mut impl Rng, n: usize, density: f64) -> Vec<Vec<f64>> {
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(density) {
                let v = (rng.random_range(1..=20) as f64) / 20.0;
                w[i][j] = v;
                w[j][i] = v;
            }
        }
    }
    w
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / norm).collect()
    }
}

/// Sum of Euclidean distances between consecutive L2-normalized rows.
pub fn adjacent_cost(rows: &[Vec<f64>], order: &[usize]) -> f64 {
    let normed: Vec<Vec<f64>> = rows.iter().map(|r| normalized(r)).collect();
    order
        .windows(2)
        .map(|p| {
            normed[p[0]]
                .iter()
                .zip(&normed[p[1]])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .sum()
}

/// Minimum adjacent cost over every permutation, and all permutations reaching it.
pub fn brute_force_seriation(rows: &[Vec<f64>]) -> (f64, Vec<Vec<usize>>) {
    fn perms(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if k == items.len() {
            out.push(items.clone());
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            perms(items, k + 1, out);
            items.swap(k, i);
        }
    }
    let mut all = Vec::new();
    perms(&mut (0..rows.len()).collect(), 0, &mut all);
    let costs: Vec<f64> = all.iter().map(|o| adjacent_cost(rows, o)).collect();
    let best = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let winners = all
        .into_iter()
        .zip(costs)
        .filter(|(_, c)| (c - best).abs() < 1e-12)
        .map(|(o, _)| o)
        .collect();
    (best, winners)
}

/// Two summer-peaked and two winter-peaked monthly series (rows 0 and 2 summer).
pub fn summer_winter_rows() -> Vec<Vec<f64>> {
    vec![
        vec![
            2.0, 1.0, 3.0, 5.0, 12.0, 30.0, 41.0, 38.0, 10.0, 4.0, 2.0, 1.0,
        ],
        vec![
            35.0, 30.0, 12.0, 4.0, 2.0, 1.0, 0.0, 1.0, 3.0, 8.0, 20.0, 40.0,
        ],
        vec![
            1.0, 0.0, 1.0, 2.0, 6.0, 18.0, 22.0, 20.0, 5.0, 1.0, 0.0, 0.0,
        ],
        vec![
            60.0, 44.0, 20.0, 6.0, 1.0, 0.0, 2.0, 0.0, 6.0, 15.0, 38.0, 70.0,
        ],
    ]
}

pub const PLANTED_REGIONS: [&str; 5] = ["R1", "R2", "R3", "R4", "R5"];
pub const PLANTED_PER_MONTH: u64 = 40;
/// Calendar months of each year carrying the planted pattern.
pub const PLANTED_MONTHS: [u32; 3] = [6, 7, 8];
pub const PLANTED_YEARS: [i32; 2] = [2016, 2017];
pub const NOISE_PER_MONTH: usize = 200;

fn days_in_month(y: i32, m: u32) -> u32 {
    match m {
        4 | 6 | 9 | 11 => 30,
        2 if (y % 4 == 0 && y % 100 != 0) || y % 400 == 0 => 29,
        2 => 28,
        _ => 31,
    }
}

/// 24 months of events over five regions. Every month has uniform background
/// noise (values never `x`, `y` or `z`); June to August of each year add
/// [`PLANTED_PER_MONTH`] events `A:x, B:y, C:z` in `R1`.
pub fn planted_csv(seed: u64) -> String {
    let mut rng = rng(seed);
    let noise = |rng: &mut ChaCha8Rng, attr: &str| -> String {
        let values = ["p", "q", "r", "s"];
        format!("{attr}{}", values.choose(rng).unwrap())
    };
    let mut out = String::from("DATE,PLACE,A,B,C,D\n");
    for &year in &PLANTED_YEARS {
        for month in 1..=12u32 {
            let days = days_in_month(year, month);
            for _ in 0..NOISE_PER_MONTH {
                let day = rng.random_range(1..=days);
                let place = PLANTED_REGIONS.choose(&mut rng).unwrap();
                let (a, b, c, d) = (
                    noise(&mut rng, "a"),
                    noise(&mut rng, "b"),
                    noise(&mut rng, "c"),
                    noise(&mut rng, "d"),
                );
                let _ = writeln!(out, "{year:04}-{month:02}-{day:02},{place},{a},{b},{c},{d}");
            }
            if PLANTED_MONTHS.contains(&month) {
                for _ in 0..PLANTED_PER_MONTH {
                    let day = rng.random_range(1..=days);
                    let d = noise(&mut rng, "d");
                    let _ = writeln!(out, "{year:04}-{month:02}-{day:02},R1,x,y,z,{d}");
                }
            }
        }
    }
    out
}

/// Square boundaries for [`PLANTED_REGIONS`], identified by `name`.
pub fn planted_geojson() -> String {
    let features: Vec<String> = PLANTED_REGIONS
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let x = i as f64;
            format!(
                r#"{{"type":"Feature","properties":{{"name":"{name}"}},"geometry":{{"type":"Polygon","coordinates":[[[{x},0.0],[{x1},0.0],[{x1},1.0],[{x},1.0],[{x},0.0]]]}}}}"#,
                x1 = x + 1.0
            )
        })
        .collect();
    format!(
        r#"{{"type":"FeatureCollection","features":[{}]}}"#,
        features.join(",")
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bell_numbers() {
        let counts: Vec<usize> = (1..=8).map(|n| set_partitions(n).len()).collect();
        assert_eq!(counts, vec![1, 2, 5, 15, 52, 203, 877, 4140]);
    }

    #[test]
    fn brute_force_on_five_transactions() {
        let txs = vec![
            vec![0, 1, 2],
            vec![0, 1],
            vec![0, 2],
            vec![1, 2],
            vec![0, 1, 2],
        ];
        let f = brute_force_frequent(&txs, 0.6);
        assert_eq!(f.len(), 6);
        assert_eq!(f[&vec![0, 1]], 3);
        assert!(!f.contains_key(&vec![0, 1, 2]));
    }

    #[test]
    fn planted_fixture_shape() {
        let csv = planted_csv(1);
        let rows = csv.lines().count() - 1;
        assert_eq!(
            rows,
            24 * NOISE_PER_MONTH
                + PLANTED_MONTHS.len() * PLANTED_YEARS.len() * PLANTED_PER_MONTH as usize
        );
        assert_eq!(csv.lines().filter(|l| l.contains(",x,y,z,")).count(), 240);
    }
}
