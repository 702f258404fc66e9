//! Cross-slice rule merging and collapse of same-union rule variants.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::DedupError;
use crate::model::{ItemSet, Rule, SliceMetrics};

/// A rule identified across slices, with its full metric series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CanonicalRule {
    pub key: String,
    pub rule: Rule,
    /// Unweighted mean of lift over the slices where the rule was generated.
    pub mean_lift: f64,
}

impl CanonicalRule {
    pub fn new(rule: Rule) -> Self {
        let mean_lift = mean_of(&rule, |m| m.lift);
        CanonicalRule {
            key: rule.key(),
            rule,
            mean_lift,
        }
    }

    pub fn present_slices(&self) -> impl Iterator<Item = usize> + '_ {
        self.rule.slice_metrics.keys().copied()
    }

    pub fn mean_support(&self) -> f64 {
        mean_of(&self.rule, |m| m.support)
    }

    pub fn mean_confidence(&self) -> f64 {
        mean_of(&self.rule, |m| m.confidence)
    }
}

fn mean_of(rule: &Rule, f: impl Fn(&SliceMetrics) -> f64) -> f64 {
    let n = rule.slice_metrics.len();
    if n == 0 {
        return 0.0;
    }
    rule.slice_metrics.values().map(f).sum::<f64>() / n as f64
}

/// Joins rules with equal canonical keys into one series. Output is sorted by key.
pub fn merge_across_slices(
    per_slice: &BTreeMap<usize, Vec<Rule>>,
) -> Result<Vec<CanonicalRule>, DedupError> {
    let mut merged: BTreeMap<String, Rule> = BTreeMap::new();
    for rules in per_slice.values() {
        for rule in rules {
            let key = rule.key();
            match merged.get_mut(&key) {
                None => {
                    merged.insert(key, rule.clone());
                }
                Some(existing) => {
                    for (&slice, metrics) in &rule.slice_metrics {
                        match existing.slice_metrics.get(&slice) {
                            Some(prev) if prev != metrics => {
                                return Err(DedupError::ConflictingMetrics { key, slice });
                            }
                            _ => {
                                existing.slice_metrics.insert(slice, *metrics);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(merged.into_values().map(CanonicalRule::new).collect())
}

/// Splits canonical rules back into per-slice single-metric rules.
pub fn split_by_slice(rules: &[CanonicalRule]) -> BTreeMap<usize, Vec<Rule>> {
    let mut out: BTreeMap<usize, Vec<Rule>> = BTreeMap::new();
    for c in rules {
        for (&slice, &metrics) in &c.rule.slice_metrics {
            let single = Rule::new(c.rule.antecedent().clone(), c.rule.consequent().clone())
                .expect("canonical rule is valid")
                .with_metrics(slice, metrics);
            out.entry(slice).or_default().push(single);
        }
    }
    out
}

/// True when `a` should be kept over `b`.
fn preferred(a: &CanonicalRule, b: &CanonicalRule) -> bool {
    a.mean_lift
        .total_cmp(&b.mean_lift)
        .then_with(|| a.rule.antecedent().len().cmp(&b.rule.antecedent().len()))
        .then_with(|| b.key.cmp(&a.key))
        .is_gt()
}

/// Keeps one rule per union itemset: highest mean lift, then larger antecedent,
/// then smallest key. Output is sorted by key.
pub fn collapse_superfluous(canon: Vec<CanonicalRule>) -> Vec<CanonicalRule> {
    let mut best: HashMap<ItemSet, CanonicalRule> = HashMap::new();
    for rule in canon {
        let union = rule.rule.union_itemset();
        match best.get(&union) {
            Some(current) if !preferred(&rule, current) => {}
            _ => {
                best.insert(union, rule);
            }
        }
    }
    let mut out: Vec<CanonicalRule> = best.into_values().collect();
    out.sort_by(|a, b| a.key.cmp(&b.key));
    out
}
