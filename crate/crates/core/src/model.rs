//! Shared domain vocabulary: items, itemsets, events, time slices, rules and regions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ModelError;

/// One categorical attribute-value pair, rendered as `attribute:value`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Item {
    attribute: String,
    value: String,
}

impl Item {
    pub fn new(attribute: impl Into<String>, value: impl Into<String>) -> Result<Self, ModelError> {
        let attribute = attribute.into();
        let value = value.into();
        if attribute.trim().is_empty() || value.trim().is_empty() {
            return Err(ModelError::EmptyItem);
        }
        if attribute.contains(':') {
            return Err(ModelError::AmbiguousItem(format!("{attribute}:{value}")));
        }
        Ok(Item { attribute, value })
    }

    pub fn attribute(&self) -> &str {
        &self.attribute
    }

    pub fn value(&self) -> &str {
        &self.value
    }
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.attribute, self.value)
    }
}

impl FromStr for Item {
    type Err = ModelError;

    /// Splits on the first `:`; attribute names never contain one.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (attribute, value) = s
            .split_once(':')
            .ok_or_else(|| ModelError::AmbiguousItem(s.to_string()))?;
        Item::new(attribute, value)
    }
}

impl Serialize for Item {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Item {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Sorted, duplicate-free set of items with at most one value per attribute.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct ItemSet(Vec<Item>);

impl ItemSet {
    pub fn new(items: impl IntoIterator<Item = Item>) -> Result<Self, ModelError> {
        let mut items: Vec<Item> = items.into_iter().collect();
        items.sort();
        items.dedup();
        for pair in items.windows(2) {
            if pair[0].attribute == pair[1].attribute {
                return Err(ModelError::DuplicateAttribute(pair[0].attribute.clone()));
            }
        }
        Ok(ItemSet(items))
    }

    pub fn empty() -> Self {
        ItemSet(Vec::new())
    }

    pub fn items(&self) -> &[Item] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Item> {
        self.0.iter()
    }

    pub fn contains(&self, item: &Item) -> bool {
        self.0.binary_search(item).is_ok()
    }

    /// True when every item of `other` is in `self`.
    pub fn is_superset_of(&self, other: &ItemSet) -> bool {
        let mut mine = self.0.iter();
        'outer: for wanted in &other.0 {
            for have in mine.by_ref() {
                match have.cmp(wanted) {
                    std::cmp::Ordering::Less => continue,
                    std::cmp::Ordering::Equal => continue 'outer,
                    std::cmp::Ordering::Greater => return false,
                }
            }
            return false;
        }
        true
    }

    pub fn intersection_len(&self, other: &ItemSet) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    pub fn union_len(&self, other: &ItemSet) -> usize {
        self.len() + other.len() - self.intersection_len(other)
    }

    /// True when the two sets share an attribute name (with any value).
    pub fn shares_attribute(&self, other: &ItemSet) -> bool {
        self.0
            .iter()
            .any(|a| other.0.iter().any(|b| a.attribute == b.attribute))
    }

    /// Plain union; fails if the result would hold two values for one attribute.
    pub fn union(&self, other: &ItemSet) -> Result<ItemSet, ModelError> {
        ItemSet::new(self.0.iter().chain(other.0.iter()).cloned())
    }

    pub(crate) fn from_sorted_unchecked(items: Vec<Item>) -> Self {
        debug_assert!(items.windows(2).all(|w| w[0].attribute < w[1].attribute));
        ItemSet(items)
    }
}

impl<'de> Deserialize<'de> for ItemSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let items = Vec::<Item>::deserialize(deserializer)?;
        ItemSet::new(items).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for ItemSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, item) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{item}")?;
        }
        f.write_str("}")
    }
}

impl<'a> IntoIterator for &'a ItemSet {
    type Item = &'a Item;
    type IntoIter = std::slice::Iter<'a, Item>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// One spatiotemporal record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub date: NaiveDate,
    pub place: String,
    pub attribs: ItemSet,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSlice {
    pub index: usize,
    pub label: String,
    /// Inclusive.
    pub start: NaiveDate,
    /// Inclusive.
    pub end: NaiveDate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceMetrics {
    pub support: f64,
    pub confidence: f64,
    pub lift: f64,
}

/// An association rule `antecedent => consequent` with its metrics per time slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Rule {
    antecedent: ItemSet,
    consequent: ItemSet,
    pub slice_metrics: BTreeMap<usize, SliceMetrics>,
}

impl Rule {
    pub fn new(antecedent: ItemSet, consequent: ItemSet) -> Result<Self, ModelError> {
        if antecedent.is_empty() || consequent.is_empty() {
            return Err(ModelError::EmptyRuleSide);
        }
        if antecedent.shares_attribute(&consequent) {
            return Err(ModelError::OverlappingSides);
        }
        Ok(Rule {
            antecedent,
            consequent,
            slice_metrics: BTreeMap::new(),
        })
    }

    pub fn with_metrics(mut self, slice: usize, metrics: SliceMetrics) -> Self {
        self.slice_metrics.insert(slice, metrics);
        self
    }

    pub fn antecedent(&self) -> &ItemSet {
        &self.antecedent
    }

    pub fn consequent(&self) -> &ItemSet {
        &self.consequent
    }

    pub fn key(&self) -> String {
        canonical_rule_key(self)
    }

    pub fn union_itemset(&self) -> ItemSet {
        rule_union_itemset(self)
    }
}

/// Region boundary from the uploaded GeoJSON; `id` matches `PLACE` values exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Region {
    pub id: String,
    pub display_name: String,
    pub geometry: serde_json::Value,
}

fn push_escaped(out: &mut String, s: &str) {
    for c in s.chars() {
        if matches!(c, '\\' | ',' | '=' | '>') {
            out.push('\\');
        }
        out.push(c);
    }
}

fn push_side(out: &mut String, side: &ItemSet) {
    for (i, item) in side.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        push_escaped(out, &item.attribute);
        out.push(':');
        push_escaped(out, &item.value);
    }
}

/// `A:1,B:2=>C:3`. Backslash escapes `\`, `,`, `=` and `>` inside items.
pub fn canonical_rule_key(rule: &Rule) -> String {
    let mut key = String::new();
    push_side(&mut key, &rule.antecedent);
    key.push_str("=>");
    push_side(&mut key, &rule.consequent);
    key
}

pub fn rule_union_itemset(rule: &Rule) -> ItemSet {
    let mut items: Vec<Item> = rule
        .antecedent
        .iter()
        .chain(rule.consequent.iter())
        .cloned()
        .collect();
    items.sort();
    ItemSet::from_sorted_unchecked(items)
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;

    pub fn item(s: &str) -> Item {
        s.parse().unwrap()
    }

    pub fn set(items: &[&str]) -> ItemSet {
        ItemSet::new(items.iter().map(|s| item(s))).unwrap()
    }

    pub fn rule(ante: &[&str], cons: &[&str]) -> Rule {
        Rule::new(set(ante), set(cons)).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn key_renders_sorted_sides() {
        assert_eq!(rule(&["A:1", "B:2"], &["C:3"]).key(), "A:1,B:2=>C:3");
        assert_eq!(rule(&["B:2", "A:1"], &["C:3"]).key(), "A:1,B:2=>C:3");
    }

    #[test]
    fn key_depends_on_direction() {
        assert_ne!(
            rule(&["A:1"], &["B:2"]).key(),
            rule(&["B:2"], &["A:1"]).key()
        );
    }

    #[test]
    fn key_escapes_separators() {
        let r = Rule::new(
            ItemSet::new([Item::new("a,b", "x=>y").unwrap()]).unwrap(),
            set(&["C:3"]),
        )
        .unwrap();
        assert_eq!(r.key(), "a\\,b:x\\=\\>y=>C:3");
        let plain = Rule::new(
            ItemSet::new([Item::new("a", "b,x=>y").unwrap()]).unwrap(),
            set(&["C:3"]),
        )
        .unwrap();
        assert_ne!(r.key(), plain.key());
    }

    #[test]
    fn union_ignores_placement() {
        let a = rule(&["A:1", "B:2"], &["C:3"]).union_itemset();
        let b = rule(&["A:1"], &["B:2", "C:3"]).union_itemset();
        assert_eq!(a, b);
        assert_eq!(a, set(&["A:1", "B:2", "C:3"]));
        assert_eq!(
            rule(&["A:1"], &["B:2"]).union_itemset(),
            set(&["A:1", "B:2"])
        );
    }

    #[test]
    fn itemset_rejects_two_values_for_one_attribute() {
        assert!(matches!(
            ItemSet::new([item("A:1"), item("A:2")]),
            Err(ModelError::DuplicateAttribute(_))
        ));
    }

    #[test]
    fn rule_sides_must_be_nonempty_and_disjoint() {
        assert!(matches!(
            Rule::new(ItemSet::empty(), set(&["A:1"])),
            Err(ModelError::EmptyRuleSide)
        ));
        assert!(matches!(
            Rule::new(set(&["A:1"]), set(&["A:2"])),
            Err(ModelError::OverlappingSides)
        ));
    }

    #[test]
    fn item_rejects_blank_parts() {
        assert!(Item::new(" ", "x").is_err());
        assert!(Item::new("A", "").is_err());
        assert!("novalue".parse::<Item>().is_err());
    }

    #[test]
    fn item_value_may_contain_colon() {
        let it: Item = "Time:12:30".parse().unwrap();
        assert_eq!(it.attribute(), "Time");
        assert_eq!(it.value(), "12:30");
        assert!(Item::new("ns:Attr", "v").is_err());
    }

    #[test]
    fn superset_check() {
        let big = set(&["A:1", "B:2", "C:3"]);
        assert!(big.is_superset_of(&set(&["A:1", "C:3"])));
        assert!(big.is_superset_of(&ItemSet::empty()));
        assert!(!big.is_superset_of(&set(&["A:2"])));
        assert!(!set(&["A:1"]).is_superset_of(&set(&["A:1", "B:2"])));
    }

    fn arb_item() -> impl Strategy<Value = Item> {
        ("[a-e]{1,2}", "[a-z0-9,=>:\\\\]{1,3}")
            .prop_filter_map("valid", |(a, v)| Item::new(a, v).ok())
    }

    fn arb_side() -> impl Strategy<Value = Vec<Item>> {
        prop::collection::vec(arb_item(), 1..4)
    }

    proptest! {
        #[test]
        fn key_is_injective_and_order_invariant(a1 in arb_side(), c1 in arb_side(), a2 in arb_side(), c2 in arb_side()) {
            let build = |a: &[Item], c: &[Item]| {
                let ante = ItemSet::new(a.iter().cloned()).ok()?;
                let cons = ItemSet::new(c.iter().cloned()).ok()?;
                Rule::new(ante, cons).ok()
            };
            if let (Some(r1), Some(r2)) = (build(&a1, &c1), build(&a2, &c2)) {
                let same = r1.antecedent() == r2.antecedent() && r1.consequent() == r2.consequent();
                prop_assert_eq!(same, r1.key() == r2.key());
                let mut rev = a1.clone();
                rev.reverse();
                let r1b = build(&rev, &c1).unwrap();
                prop_assert_eq!(r1.key(), r1b.key());
            }
        }

        #[test]
        fn sorting_is_idempotent(items in prop::collection::vec(arb_item(), 0..6)) {
            if let Ok(s) = ItemSet::new(items) {
                let again = ItemSet::new(s.items().to_vec()).unwrap();
                prop_assert_eq!(s, again);
            }
        }

        #[test]
        fn item_display_round_trips(it in arb_item()) {
            prop_assert_eq!(it.to_string().parse::<Item>().unwrap(), it);
        }
    }
}
