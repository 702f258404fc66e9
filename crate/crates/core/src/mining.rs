//! Time slicing, FP-Growth frequent itemset mining and rule generation.

use std::collections::{BTreeMap, HashMap};

use chrono::{Datelike, Duration, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::MiningError;
use crate::model::{Event, Item, ItemSet, Rule, SliceMetrics, TimeSlice};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[default]
    Month,
    Week,
    Year,
}

impl std::str::FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "month" => Ok(Granularity::Month),
            "week" => Ok(Granularity::Week),
            "year" => Ok(Granularity::Year),
            other => Err(format!(
                "unknown granularity {other:?} (expected month, week or year)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MiningConfig {
    pub min_support: f64,
    pub min_lift: f64,
    pub max_rule_len: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            min_support: 0.1,
            min_lift: 1.0,
            max_rule_len: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SlicedDataset {
    pub slices: Vec<TimeSlice>,
    pub transactions: Vec<Vec<ItemSet>>,
    pub slice_event_counts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequentItemset {
    pub items: ItemSet,
    pub support: f64,
    pub count: u64,
}

fn period_start(date: NaiveDate, granularity: Granularity) -> NaiveDate {
    match granularity {
        Granularity::Month => date.with_day(1).unwrap(),
        Granularity::Year => NaiveDate::from_ymd_opt(date.year(), 1, 1).unwrap(),
        Granularity::Week => date - Duration::days(date.weekday().num_days_from_monday() as i64),
    }
}

fn next_period(start: NaiveDate, granularity: Granularity) -> NaiveDate {
    match granularity {
        Granularity::Month => {
            let (y, m) = if start.month() == 12 {
                (start.year() + 1, 1)
            } else {
                (start.year(), start.month() + 1)
            };
            NaiveDate::from_ymd_opt(y, m, 1).unwrap()
        }
        Granularity::Year => NaiveDate::from_ymd_opt(start.year() + 1, 1, 1).unwrap(),
        Granularity::Week => start + Duration::days(7),
    }
}

fn period_label(start: NaiveDate, granularity: Granularity) -> String {
    match granularity {
        Granularity::Month => start.format("%Y-%m").to_string(),
        Granularity::Year => start.format("%Y").to_string(),
        Granularity::Week => start.format("%G-W%V").to_string(),
    }
}

/// Calendar periods covering `[start, end]`, clipped to the range at both ends.
pub fn build_slices(
    start: NaiveDate,
    end: NaiveDate,
    granularity: Granularity,
) -> Result<Vec<TimeSlice>, MiningError> {
    if start > end {
        return Err(MiningError::InvalidRange);
    }
    let mut slices = Vec::new();
    let mut p = period_start(start, granularity);
    while p <= end {
        let next = next_period(p, granularity);
        slices.push(TimeSlice {
            index: slices.len(),
            label: period_label(p, granularity),
            start: p.max(start),
            end: (next - Duration::days(1)).min(end),
        });
        p = next;
    }
    Ok(slices)
}

/// Index of the slice containing `date`, if any.
pub fn slice_of(slices: &[TimeSlice], date: NaiveDate) -> Option<usize> {
    let i = slices.partition_point(|s| s.start <= date);
    (i > 0 && date <= slices[i - 1].end).then(|| i - 1)
}

pub fn slice_partition(
    events: &[Event],
    start: NaiveDate,
    end: NaiveDate,
    granularity: Granularity,
) -> Result<SlicedDataset, MiningError> {
    let slices = build_slices(start, end, granularity)?;
    let mut transactions = vec![Vec::new(); slices.len()];
    for event in events {
        if let Some(i) = slice_of(&slices, event.date) {
            transactions[i].push(event.attribs.clone());
        }
    }
    let slice_event_counts = transactions.iter().map(Vec::len).collect();
    Ok(SlicedDataset {
        slices,
        transactions,
        slice_event_counts,
    })
}

/// Smallest count whose ratio to `n` reaches `min_support`, using the same
/// floating comparison as `count / n >= min_support`.
pub fn min_count(min_support: f64, n: usize) -> u64 {
    let n_f = n as f64;
    let mut c = (min_support * n_f).ceil().max(0.0) as u64;
    while c > 0 && ((c - 1) as f64) / n_f >= min_support {
        c -= 1;
    }
    while (c as f64) / n_f < min_support {
        c += 1;
    }
    c
}

struct FpNode {
    item: u32,
    count: u64,
    parent: usize,
    children: Vec<(u32, usize)>,
}

struct FpTree {
    nodes: Vec<FpNode>,
    /// Node ids per item rank.
    header: Vec<Vec<usize>>,
}

impl FpTree {
    fn new(n_items: usize) -> Self {
        FpTree {
            nodes: vec![FpNode {
                item: u32::MAX,
                count: 0,
                parent: 0,
                children: Vec::new(),
            }],
            header: vec![Vec::new(); n_items],
        }
    }

    /// `path` must be sorted by rank.
    fn insert(&mut self, path: &[u32], count: u64) {
        let mut cur = 0;
        for &item in path {
            let found = self.nodes[cur]
                .children
                .iter()
                .find(|&&(i, _)| i == item)
                .map(|&(_, n)| n);
            cur = match found {
                Some(n) => n,
                None => {
                    let id = self.nodes.len();
                    self.nodes.push(FpNode {
                        item,
                        count: 0,
                        parent: cur,
                        children: Vec::new(),
                    });
                    self.nodes[cur].children.push((item, id));
                    self.header[item as usize].push(id);
                    id
                }
            };
            self.nodes[cur].count += count;
        }
    }

    fn prefix_path(&self, mut node: usize) -> Vec<u32> {
        let mut path = Vec::new();
        node = self.nodes[node].parent;
        while node != 0 {
            path.push(self.nodes[node].item);
            node = self.nodes[node].parent;
        }
        path.reverse();
        path
    }
}

struct Miner {
    min_count: u64,
    max_len: usize,
    found: Vec<(Vec<u32>, u64)>,
}

impl Miner {
    fn mine(&mut self, tree: &FpTree, suffix: &mut Vec<u32>) {
        for item in (0..tree.header.len()).rev() {
            let nodes = &tree.header[item];
            if nodes.is_empty() {
                continue;
            }
            let support: u64 = nodes.iter().map(|&n| tree.nodes[n].count).sum();
            if support < self.min_count {
                continue;
            }
            suffix.push(item as u32);
            self.found.push((suffix.clone(), support));

            if suffix.len() < self.max_len {
                let base: Vec<(Vec<u32>, u64)> = nodes
                    .iter()
                    .map(|&n| (tree.prefix_path(n), tree.nodes[n].count))
                    .filter(|(p, _)| !p.is_empty())
                    .collect();
                let mut counts = vec![0u64; tree.header.len()];
                for (path, c) in &base {
                    for &i in path {
                        counts[i as usize] += c;
                    }
                }
                if counts.iter().any(|&c| c >= self.min_count) {
                    let mut cond = FpTree::new(tree.header.len());
                    for (path, c) in &base {
                        let kept: Vec<u32> = path
                            .iter()
                            .copied()
                            .filter(|&i| counts[i as usize] >= self.min_count)
                            .collect();
                        if !kept.is_empty() {
                            cond.insert(&kept, *c);
                        }
                    }
                    self.mine(&cond, suffix);
                }
            }
            suffix.pop();
        }
    }
}

/// All itemsets with support >= `min_support`, ordered by size then items.
pub fn fp_growth(
    transactions: &[ItemSet],
    min_support: f64,
) -> Result<Vec<FrequentItemset>, MiningError> {
    fp_growth_bounded(transactions, min_support, usize::MAX)
}

/// As [`fp_growth`], but stops growing itemsets beyond `max_len` items.
pub fn fp_growth_bounded(
    transactions: &[ItemSet],
    min_support: f64,
    max_len: usize,
) -> Result<Vec<FrequentItemset>, MiningError> {
    if transactions.is_empty() {
        return Err(MiningError::NoTransactions);
    }
    if !(min_support > 0.0 && min_support <= 1.0) {
        return Err(MiningError::InvalidSupport);
    }
    let n = transactions.len();
    let min_count = min_count(min_support, n);

    let mut item_counts: HashMap<&Item, u64> = HashMap::new();
    for t in transactions {
        for item in t {
            *item_counts.entry(item).or_default() += 1;
        }
    }
    // Rank 0 is the most frequent item; ties fall back to item order.
    let mut frequent: Vec<(&Item, u64)> = item_counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .collect();
    frequent.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let rank: HashMap<&Item, u32> = frequent
        .iter()
        .enumerate()
        .map(|(r, &(item, _))| (item, r as u32))
        .collect();

    let mut tree = FpTree::new(frequent.len());
    let mut path = Vec::new();
    for t in transactions {
        path.clear();
        path.extend(t.iter().filter_map(|i| rank.get(i).copied()));
        path.sort_unstable();
        if !path.is_empty() {
            tree.insert(&path, 1);
        }
    }

    let mut miner = Miner {
        min_count,
        max_len: max_len.max(1),
        found: Vec::new(),
    };
    miner.mine(&tree, &mut Vec::new());

    let mut out: Vec<FrequentItemset> = miner
        .found
        .into_iter()
        .map(|(ranks, count)| {
            let mut items: Vec<Item> = ranks
                .iter()
                .map(|&r| frequent[r as usize].0.clone())
                .collect();
            items.sort();
            FrequentItemset {
                items: ItemSet::from_sorted_unchecked(items),
                support: count as f64 / n as f64,
                count,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        a.items
            .len()
            .cmp(&b.items.len())
            .then_with(|| a.items.cmp(&b.items))
    });
    Ok(out)
}

fn metrics_from_counts(union: u64, ante: u64, cons: u64, n: u64) -> SliceMetrics {
    SliceMetrics {
        support: union as f64 / n as f64,
        confidence: union as f64 / ante as f64,
        lift: ((union as u128 * n as u128) as f64) / ((ante as u128 * cons as u128) as f64),
    }
}

/// Every split of every frequent itemset of size 2..=max_rule_len into
/// antecedent and consequent whose lift reaches `min_lift`. Metrics are keyed
/// under `slice` and computed from exact counts.
pub fn generate_rules(
    frequents: &[FrequentItemset],
    n: usize,
    config: &MiningConfig,
    slice: usize,
) -> Vec<Rule> {
    let counts: HashMap<&ItemSet, u64> = frequents.iter().map(|f| (&f.items, f.count)).collect();
    let mut rules = Vec::new();
    for z in frequents {
        let len = z.items.len();
        if len < 2 || len > config.max_rule_len || len >= 64 {
            continue;
        }
        let items = z.items.items();
        for mask in 1u64..((1u64 << len) - 1) {
            let (mut ante, mut cons) = (Vec::new(), Vec::new());
            for (bit, item) in items.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    ante.push(item.clone());
                } else {
                    cons.push(item.clone());
                }
            }
            let ante = ItemSet::from_sorted_unchecked(ante);
            let cons = ItemSet::from_sorted_unchecked(cons);
            let (Some(&ca), Some(&cc)) = (counts.get(&ante), counts.get(&cons)) else {
                // Only reachable if `frequents` is not downward closed.
                continue;
            };
            let metrics = metrics_from_counts(z.count, ca, cc, n as u64);
            if metrics.lift >= config.min_lift {
                rules.push(
                    Rule::new(ante, cons)
                        .expect("split of a valid itemset")
                        .with_metrics(slice, metrics),
                );
            }
        }
    }
    rules.sort_by_cached_key(Rule::key);
    rules
}

fn count_containing(itemset: &ItemSet, transactions: &[ItemSet]) -> u64 {
    transactions
        .iter()
        .filter(|t| t.is_superset_of(itemset))
        .count() as u64
}

pub fn support(itemset: &ItemSet, transactions: &[ItemSet]) -> Result<f64, MiningError> {
    if transactions.is_empty() {
        return Err(MiningError::NoTransactions);
    }
    Ok(count_containing(itemset, transactions) as f64 / transactions.len() as f64)
}

pub fn confidence(rule: &Rule, transactions: &[ItemSet]) -> Result<f64, MiningError> {
    if transactions.is_empty() {
        return Err(MiningError::NoTransactions);
    }
    let ante = count_containing(rule.antecedent(), transactions);
    if ante == 0 {
        return Err(MiningError::ZeroAntecedentSupport);
    }
    Ok(count_containing(&rule.union_itemset(), transactions) as f64 / ante as f64)
}

pub fn lift(rule: &Rule, transactions: &[ItemSet]) -> Result<f64, MiningError> {
    if transactions.is_empty() {
        return Err(MiningError::NoTransactions);
    }
    let ante = count_containing(rule.antecedent(), transactions);
    let cons = count_containing(rule.consequent(), transactions);
    if ante == 0 || cons == 0 {
        return Err(MiningError::ZeroSupport);
    }
    let union = count_containing(&rule.union_itemset(), transactions);
    Ok(metrics_from_counts(union, ante, cons, transactions.len() as u64).lift)
}

/// Rules per slice; empty slices map to empty lists.
pub fn mine_slices(
    sliced: &SlicedDataset,
    config: &MiningConfig,
) -> Result<BTreeMap<usize, Vec<Rule>>, MiningError> {
    sliced
        .transactions
        .par_iter()
        .enumerate()
        .map(|(i, txs)| {
            if txs.is_empty() {
                return Ok((i, Vec::new()));
            }
            let frequents = fp_growth_bounded(txs, config.min_support, config.max_rule_len)?;
            Ok((i, generate_rules(&frequents, txs.len(), config, i)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_util::{rule, set};

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    /// [{a,b,c},{a,b},{a,c},{b,c},{a,b,c}] with items as attribute-presence pairs.
    fn five() -> Vec<ItemSet> {
        vec![
            set(&["a:1", "b:1", "c:1"]),
            set(&["a:1", "b:1"]),
            set(&["a:1", "c:1"]),
            set(&["b:1", "c:1"]),
            set(&["a:1", "b:1", "c:1"]),
        ]
    }

    #[test]
    fn monthly_slices_cover_range() {
        let s = build_slices(d("2016-01-01"), d("2016-03-31"), Granularity::Month).unwrap();
        assert_eq!(
            s.iter().map(|x| x.label.as_str()).collect::<Vec<_>>(),
            ["2016-01", "2016-02", "2016-03"]
        );
        assert_eq!(s[1].end, d("2016-02-29"));
    }

    #[test]
    fn empty_slices_are_retained() {
        let ev = Event {
            date: d("2016-07-04"),
            place: "X".into(),
            attribs: set(&["a:1"]),
        };
        let sd =
            slice_partition(&[ev], d("2016-01-01"), d("2016-12-31"), Granularity::Month).unwrap();
        assert_eq!(sd.slices.len(), 12);
        assert_eq!(
            sd.slice_event_counts.iter().filter(|&&c| c == 0).count(),
            11
        );
        assert_eq!(sd.slice_event_counts[6], 1);
    }

    #[test]
    fn seven_years_monthly_is_84_slices() {
        let s = build_slices(d("2016-01-01"), d("2022-12-31"), Granularity::Month).unwrap();
        assert_eq!(s.len(), 84);
        assert_eq!(s.last().unwrap().label, "2022-12");
    }

    #[test]
    fn partial_months_are_clipped() {
        let s = build_slices(d("2016-01-15"), d("2016-02-10"), Granularity::Month).unwrap();
        assert_eq!((s[0].start, s[0].end), (d("2016-01-15"), d("2016-01-31")));
        assert_eq!((s[1].start, s[1].end), (d("2016-02-01"), d("2016-02-10")));
    }

    #[test]
    fn weekly_and_yearly_labels() {
        let w = build_slices(d("2016-01-01"), d("2016-01-11"), Granularity::Week).unwrap();
        assert_eq!(
            w.iter().map(|x| x.label.as_str()).collect::<Vec<_>>(),
            ["2015-W53", "2016-W01", "2016-W02"]
        );
        let y = build_slices(d("2015-06-01"), d("2016-01-11"), Granularity::Year).unwrap();
        assert_eq!(
            y.iter().map(|x| x.label.as_str()).collect::<Vec<_>>(),
            ["2015", "2016"]
        );
    }

    #[test]
    fn out_of_range_events_are_excluded() {
        let evs: Vec<Event> = ["2015-12-31", "2016-01-01", "2016-01-31", "2016-02-01"]
            .iter()
            .map(|s| Event {
                date: d(s),
                place: "X".into(),
                attribs: set(&["a:1"]),
            })
            .collect();
        let sd =
            slice_partition(&evs, d("2016-01-01"), d("2016-01-31"), Granularity::Month).unwrap();
        assert_eq!(sd.slice_event_counts, vec![2]);
    }

    #[test]
    fn inverted_range_fails() {
        assert_eq!(
            slice_partition(&[], d("2016-02-01"), d("2016-01-01"), Granularity::Month).unwrap_err(),
            MiningError::InvalidRange
        );
    }

    #[test]
    fn min_count_matches_ratio_test() {
        for n in 1..200usize {
            for ms in [0.01, 0.05, 0.1, 0.3, 0.6, 1.0 / 3.0, 0.7, 1.0] {
                let c = min_count(ms, n);
                assert!(c as f64 / n as f64 >= ms);
                assert!(c == 0 || ((c - 1) as f64 / n as f64) < ms);
            }
        }
    }

    #[test]
    fn five_transaction_fixture_frequents() {
        let f = fp_growth(&five(), 0.6).unwrap();
        let got: Vec<(String, u64)> = f.iter().map(|x| (x.items.to_string(), x.count)).collect();
        assert_eq!(
            got,
            vec![
                ("{a:1}".into(), 4),
                ("{b:1}".into(), 4),
                ("{c:1}".into(), 4),
                ("{a:1, b:1}".into(), 3),
                ("{a:1, c:1}".into(), 3),
                ("{b:1, c:1}".into(), 3),
            ]
        );
        assert_eq!(f[0].support, 0.8);
        assert_eq!(f[3].support, 0.6);
    }

    #[test]
    fn full_support_keeps_only_universal_items() {
        let txs = vec![
            set(&["a:1", "b:1"]),
            set(&["a:1", "c:1"]),
            set(&["a:1", "b:1", "c:1"]),
        ];
        let f = fp_growth(&txs, 1.0).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].items, set(&["a:1"]));
    }

    #[test]
    fn fp_growth_errors() {
        assert_eq!(
            fp_growth(&[], 0.5).unwrap_err(),
            MiningError::NoTransactions
        );
        assert_eq!(
            fp_growth(&five(), 0.0).unwrap_err(),
            MiningError::InvalidSupport
        );
        assert_eq!(
            fp_growth(&five(), 1.5).unwrap_err(),
            MiningError::InvalidSupport
        );
    }

    #[test]
    fn bounded_growth_caps_length() {
        let f = fp_growth_bounded(&five(), 0.2, 2).unwrap();
        assert!(f.iter().all(|x| x.items.len() <= 2));
        assert!(fp_growth(&five(), 0.2)
            .unwrap()
            .iter()
            .any(|x| x.items.len() == 3));
    }

    #[test]
    fn a_implies_b_metrics() {
        let r = rule(&["a:1"], &["b:1"]);
        assert_eq!(support(&r.union_itemset(), &five()).unwrap(), 0.6);
        assert_eq!(confidence(&r, &five()).unwrap(), 0.75);
        assert_eq!(lift(&r, &five()).unwrap(), 0.9375);
        let r2 = rule(&["a:1", "b:1"], &["c:1"]);
        assert_eq!(confidence(&r2, &five()).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn metric_edge_cases() {
        assert_eq!(support(&ItemSet::empty(), &five()).unwrap(), 1.0);
        assert_eq!(
            support(&set(&["a:1"]), &[set(&["a:1"]), set(&["b:1"])]).unwrap(),
            0.5
        );
        assert_eq!(
            support(&set(&["a:1"]), &[]).unwrap_err(),
            MiningError::NoTransactions
        );
        let r = rule(&["z:1"], &["a:1"]);
        assert_eq!(
            confidence(&r, &five()).unwrap_err(),
            MiningError::ZeroAntecedentSupport
        );
        assert_eq!(lift(&r, &five()).unwrap_err(), MiningError::ZeroSupport);
    }

    #[test]
    fn perfectly_correlated_items() {
        let txs = vec![
            set(&["a:1", "b:1"]),
            set(&["a:1", "b:1"]),
            set(&["c:1"]),
            set(&["c:1"]),
        ];
        let r = rule(&["a:1"], &["b:1"]);
        assert_eq!(confidence(&r, &txs).unwrap(), 1.0);
        assert_eq!(lift(&r, &txs).unwrap(), 2.0);
    }

    #[test]
    fn independent_items_have_unit_lift() {
        let txs = vec![
            set(&["a:1", "b:1"]),
            set(&["a:1"]),
            set(&["b:1"]),
            set(&["c:1"]),
        ];
        assert_eq!(lift(&rule(&["a:1"], &["b:1"]), &txs).unwrap(), 1.0);
    }

    #[test]
    fn generation_filters_on_lift() {
        let f = fp_growth(&five(), 0.6).unwrap();
        let cfg = MiningConfig {
            min_support: 0.6,
            min_lift: 1.05,
            max_rule_len: 5,
        };
        assert!(generate_rules(&f, 5, &cfg, 0).is_empty());
        let cfg = MiningConfig {
            min_lift: 0.0,
            ..cfg
        };
        let rules = generate_rules(&f, 5, &cfg, 3);
        assert_eq!(rules.len(), 6);
        let ab = rules.iter().find(|r| r.key() == "a:1=>b:1").unwrap();
        assert_eq!(
            ab.slice_metrics[&3],
            SliceMetrics {
                support: 0.6,
                confidence: 0.75,
                lift: 0.9375
            }
        );
    }

    #[test]
    fn empty_slices_yield_no_rules() {
        let sd = SlicedDataset {
            slices: build_slices(d("2016-01-01"), d("2016-02-28"), Granularity::Month).unwrap(),
            transactions: vec![vec![], five()],
            slice_event_counts: vec![0, 5],
        };
        let cfg = MiningConfig {
            min_support: 0.6,
            min_lift: 0.0,
            max_rule_len: 5,
        };
        let per = mine_slices(&sd, &cfg).unwrap();
        assert!(per[&0].is_empty());
        assert_eq!(per[&1].len(), 6);
    }
}
