//! Occurrence profiles, cluster summaries, seriation and attribute matrices.
//!
//! An event is an occurrence of a rule when its attributes contain the rule's
//! whole union itemset. Cluster profiles count each event at most once.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::dedup::CanonicalRule;
use crate::error::AnalyticsError;
use crate::mining::slice_of;
use crate::model::{Event, Item, ItemSet, TimeSlice};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RuleProfile {
    pub key: String,
    /// slice index -> place -> count; zero cells are omitted.
    pub counts: BTreeMap<usize, BTreeMap<String, u64>>,
    pub slice_totals: BTreeMap<usize, u64>,
    pub place_totals: BTreeMap<String, u64>,
    pub grand_total: u64,
}

impl RuleProfile {
    pub fn cell(&self, slice: usize, place: &str) -> u64 {
        self.counts
            .get(&slice)
            .and_then(|p| p.get(place))
            .copied()
            .unwrap_or(0)
    }

    /// Dense per-slice totals over `n_slices` slices.
    pub fn slice_series(&self, n_slices: usize) -> Vec<u64> {
        (0..n_slices)
            .map(|s| self.slice_totals.get(&s).copied().unwrap_or(0))
            .collect()
    }

    /// Per-place totals restricted to `slices`, or all slices when `None`.
    pub fn place_totals_in(&self, slices: Option<&BTreeSet<usize>>) -> BTreeMap<String, u64> {
        match slices {
            None => self.place_totals.clone(),
            Some(keep) => {
                let mut out: BTreeMap<String, u64> = BTreeMap::new();
                for (s, places) in &self.counts {
                    if keep.contains(s) {
                        for (p, &c) in places {
                            *out.entry(p.clone()).or_default() += c;
                        }
                    }
                }
                out
            }
        }
    }

    fn from_events(key: String, events: impl Iterator<Item = (usize, String)>) -> Self {
        let mut profile = RuleProfile {
            key,
            ..Default::default()
        };
        for (slice, place) in events {
            *profile
                .counts
                .entry(slice)
                .or_default()
                .entry(place.clone())
                .or_default() += 1;
            *profile.slice_totals.entry(slice).or_default() += 1;
            *profile.place_totals.entry(place).or_default() += 1;
            profile.grand_total += 1;
        }
        profile
    }
}

/// Inverted index from item to in-range events, for repeated profile queries.
pub struct OccurrenceIndex<'a> {
    events: &'a [Event],
    event_slice: Vec<Option<usize>>,
    in_range: Vec<u32>,
    postings: HashMap<&'a Item, Vec<u32>>,
}

impl<'a> OccurrenceIndex<'a> {
    pub fn new(events: &'a [Event], slices: &[TimeSlice]) -> Self {
        let event_slice: Vec<Option<usize>> =
            events.iter().map(|e| slice_of(slices, e.date)).collect();
        let mut postings: HashMap<&Item, Vec<u32>> = HashMap::new();
        let mut in_range = Vec::new();
        for (i, e) in events.iter().enumerate() {
            if event_slice[i].is_none() {
                continue;
            }
            in_range.push(i as u32);
            for item in &e.attribs {
                postings.entry(item).or_default().push(i as u32);
            }
        }
        OccurrenceIndex {
            events,
            event_slice,
            in_range,
            postings,
        }
    }

    /// Sorted ids of in-range events containing `itemset`.
    pub fn matching(&self, itemset: &ItemSet) -> Vec<u32> {
        let mut lists: Vec<&Vec<u32>> = Vec::with_capacity(itemset.len());
        for item in itemset {
            match self.postings.get(item) {
                Some(l) => lists.push(l),
                None => return Vec::new(),
            }
        }
        if lists.is_empty() {
            return self.in_range.clone();
        }
        lists.sort_by_key(|l| l.len());
        let mut acc = lists[0].clone();
        for other in &lists[1..] {
            let mut j = 0;
            acc.retain(|&id| {
                while j < other.len() && other[j] < id {
                    j += 1;
                }
                j < other.len() && other[j] == id
            });
            if acc.is_empty() {
                break;
            }
        }
        acc
    }

    fn profile_of(&self, key: String, ids: &[u32]) -> RuleProfile {
        RuleProfile::from_events(
            key,
            ids.iter().map(|&i| {
                let slice = self.event_slice[i as usize].expect("indexed events are in range");
                (slice, self.events[i as usize].place.clone())
            }),
        )
    }

    pub fn rule_profile(&self, rule: &CanonicalRule) -> RuleProfile {
        self.profile_of(rule.key.clone(), &self.matching(&rule.rule.union_itemset()))
    }

    /// Distinct events satisfying at least one member rule.
    pub fn union_profile<'r>(
        &self,
        key: String,
        rules: impl IntoIterator<Item = &'r CanonicalRule>,
    ) -> RuleProfile {
        let mut ids: Vec<u32> = rules
            .into_iter()
            .flat_map(|r| self.matching(&r.rule.union_itemset()))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        self.profile_of(key, &ids)
    }
}

pub fn rule_profile(rule: &CanonicalRule, events: &[Event], slices: &[TimeSlice]) -> RuleProfile {
    OccurrenceIndex::new(events, slices).rule_profile(rule)
}

pub fn cluster_profile(
    key: String,
    cluster: &[&CanonicalRule],
    events: &[Event],
    slices: &[TimeSlice],
) -> RuleProfile {
    OccurrenceIndex::new(events, slices).union_profile(key, cluster.iter().copied())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClusterSummary {
    pub cluster_id: usize,
    pub rule_count: usize,
    pub mean_lift: f64,
    pub mean_support: f64,
    pub mean_confidence: f64,
    pub mean_occurrences: f64,
}

/// Unweighted means over member rules; `profiles[i]` belongs to `members[i]`.
pub fn cluster_summary(
    cluster_id: usize,
    members: &[&CanonicalRule],
    profiles: &[&RuleProfile],
) -> ClusterSummary {
    assert_eq!(members.len(), profiles.len());
    assert!(!members.is_empty(), "cluster must be non-empty");
    let n = members.len() as f64;
    let mean = |f: &dyn Fn(&CanonicalRule) -> f64| members.iter().map(|r| f(r)).sum::<f64>() / n;
    ClusterSummary {
        cluster_id,
        rule_count: members.len(),
        mean_lift: mean(&|r| r.mean_lift),
        mean_support: mean(&|r| r.mean_support()),
        mean_confidence: mean(&|r| r.mean_confidence()),
        mean_occurrences: profiles.iter().map(|p| p.grand_total as f64).sum::<f64>() / n,
    }
}

fn l2_normalized(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / norm).collect()
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Row order placing rows with similar normalized series next to each other.
///
/// Average-linkage agglomeration on Euclidean distance between L2-normalized
/// series. Each merge joins the two ordered leaf lists in whichever of the four
/// orientations puts the closest pair of endpoints side by side. Ties go to
/// the smaller row id at every step.
pub fn seriation_order<K: Ord + Clone>(series: &[(K, Vec<f64>)]) -> Vec<K> {
    let mut rows: Vec<&(K, Vec<f64>)> = series.iter().collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let n = rows.len();
    if n <= 1 {
        return rows.into_iter().map(|r| r.0.clone()).collect();
    }
    let normed: Vec<Vec<f64>> = rows.iter().map(|r| l2_normalized(&r.1)).collect();
    let leaf_dist: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| euclidean(&normed[i], &normed[j])).collect())
        .collect();

    // Active clusters as ordered leaf lists, stored at their smallest leaf position.
    let mut clusters: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    let mut dist = leaf_dist.clone();
    for _ in 1..n {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..n {
            if clusters[a].is_none() {
                continue;
            }
            for b in a + 1..n {
                if clusters[b].is_none() {
                    continue;
                }
                if best.is_none_or(|(d, _, _)| dist[a][b] < d) {
                    best = Some((dist[a][b], a, b));
                }
            }
        }
        let (_, a, b) = best.expect("at least two active clusters");
        let left = clusters[a].take().unwrap();
        let right = clusters[b].take().unwrap();
        let (size_a, size_b) = (left.len() as f64, right.len() as f64);

        let joined = join_closest_ends(left, right, &leaf_dist);
        for k in 0..n {
            if k != a && clusters[k].is_some() {
                let d = (size_a * dist[a][k] + size_b * dist[b][k]) / (size_a + size_b);
                dist[a][k] = d;
                dist[k][a] = d;
            }
        }
        clusters[a] = Some(joined);
    }
    let order = clusters.into_iter().flatten().next().unwrap();
    order.into_iter().map(|i| rows[i].0.clone()).collect()
}

fn join_closest_ends(left: Vec<usize>, right: Vec<usize>, d: &[Vec<f64>]) -> Vec<usize> {
    let (lf, ll) = (left[0], *left.last().unwrap());
    let (rf, rl) = (right[0], *right.last().unwrap());
    // (reverse left, reverse right, adjacent distance)
    let options = [
        (false, false, d[ll][rf]),
        (false, true, d[ll][rl]),
        (true, false, d[lf][rf]),
        (true, true, d[lf][rl]),
    ];
    let mut pick = options[0];
    for o in &options[1..] {
        if o.2 < pick.2 {
            pick = *o;
        }
    }
    let mut out = left;
    if pick.0 {
        out.reverse();
    }
    let mut right = right;
    if pick.1 {
        right.reverse();
    }
    out.extend(right);
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    #[default]
    Cluster,
    Rule,
}

impl std::str::FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cluster" => Ok(Level::Cluster),
            "rule" => Ok(Level::Rule),
            other => Err(format!("unknown level {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Antecedent,
    Consequent,
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeCell {
    pub row: String,
    pub column: Item,
    pub frequency: f64,
    pub role: Role,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeMatrix {
    pub level: Level,
    pub rows: Vec<String>,
    pub columns: Vec<Item>,
    pub cells: Vec<AttributeCell>,
}

/// Every item used by at least one rule, in canonical order.
pub fn attribute_columns<'r>(rules: impl IntoIterator<Item = &'r CanonicalRule>) -> Vec<Item> {
    let mut items: BTreeSet<Item> = BTreeSet::new();
    for r in rules {
        items.extend(r.rule.antecedent().iter().cloned());
        items.extend(r.rule.consequent().iter().cloned());
    }
    items.into_iter().collect()
}

/// One row per cluster. `clusters[c]` are the member rules of cluster `c`;
/// `row_order` lists cluster ids in display order.
pub fn cluster_attribute_matrix(
    clusters: &[Vec<&CanonicalRule>],
    row_order: &[usize],
    columns: Vec<Item>,
) -> Result<AttributeMatrix, AnalyticsError> {
    let mut cells = Vec::new();
    for &c in row_order {
        let members = clusters.get(c).ok_or(AnalyticsError::UnknownCluster(c))?;
        let n = members.len() as f64;
        for item in &columns {
            let (mut ante, mut cons) = (0usize, 0usize);
            for r in members {
                if r.rule.antecedent().contains(item) {
                    ante += 1;
                } else if r.rule.consequent().contains(item) {
                    cons += 1;
                }
            }
            if ante + cons == 0 {
                continue;
            }
            let role = match (ante, cons) {
                (_, 0) => Role::Antecedent,
                (0, _) => Role::Consequent,
                _ => Role::Mixed,
            };
            cells.push(AttributeCell {
                row: c.to_string(),
                column: item.clone(),
                frequency: (ante + cons) as f64 / n,
                role,
            });
        }
    }
    Ok(AttributeMatrix {
        level: Level::Cluster,
        rows: row_order.iter().map(usize::to_string).collect(),
        columns,
        cells,
    })
}

/// One row per rule, in the given order; frequencies are 1.
pub fn rule_attribute_matrix(rules: &[&CanonicalRule], columns: Vec<Item>) -> AttributeMatrix {
    let mut cells = Vec::new();
    for r in rules {
        for item in &columns {
            let role = if r.rule.antecedent().contains(item) {
                Role::Antecedent
            } else if r.rule.consequent().contains(item) {
                Role::Consequent
            } else {
                continue;
            };
            cells.push(AttributeCell {
                row: r.key.clone(),
                column: item.clone(),
                frequency: 1.0,
                role,
            });
        }
    }
    AttributeMatrix {
        level: Level::Rule,
        rows: rules.iter().map(|r| r.key.clone()).collect(),
        columns,
        cells,
    }
}
