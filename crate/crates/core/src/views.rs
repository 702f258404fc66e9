//! Read-side payloads for the coordinated views, built from a finished run.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::analytics::{
    attribute_columns, cluster_attribute_matrix, rule_attribute_matrix, AttributeMatrix, Level,
    RuleProfile,
};
use crate::dedup::CanonicalRule;
use crate::error::AnalyticsError;
use crate::explain::{select_default_context, ContextSelection, ExplainRequest};
use crate::pipeline::Artifact;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AttributesPayload {
    pub cluster_id: Option<usize>,
    #[serde(flatten)]
    pub matrix: AttributeMatrix,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub id: String,
    pub counts: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HeatmapPayload {
    pub level: Level,
    pub cluster_id: Option<usize>,
    pub slice_labels: Vec<String>,
    pub rows: Vec<HeatmapRow>,
    pub max_count: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceCount {
    pub place: String,
    pub count: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MapSelection {
    pub cluster_id: Option<usize>,
    pub rule_key: Option<String>,
    /// Slice labels to keep; `None` keeps all.
    pub slices: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MapPayload {
    pub cluster_id: Option<usize>,
    pub rule_key: Option<String>,
    pub slice_labels: Vec<String>,
    /// Every region plus any event place without a region, sorted by id.
    pub places: Vec<PlaceCount>,
    pub total: u64,
    pub max_count: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ScatterMetric {
    RuleCount,
    MeanLift,
    MeanSupport,
    MeanConfidence,
    MeanOccurrences,
}

impl std::str::FromStr for ScatterMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| format!("unknown metric {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScatterPoint {
    pub cluster_id: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScatterPayload {
    pub x_metric: ScatterMetric,
    pub y_metric: ScatterMetric,
    pub points: Vec<ScatterPoint>,
}

fn check_cluster(art: &Artifact, cluster: usize) -> Result<(), AnalyticsError> {
    if cluster < art.clusters.len() {
        Ok(())
    } else {
        Err(AnalyticsError::UnknownCluster(cluster))
    }
}

fn rule_by_key<'a>(
    art: &'a Artifact,
    key: &str,
) -> Result<(&'a CanonicalRule, &'a RuleProfile), AnalyticsError> {
    let i = art
        .rule_index(key)
        .ok_or_else(|| AnalyticsError::UnknownRule(key.to_string()))?;
    Ok((&art.rules[i], &art.rule_profiles[i]))
}

/// Rows shown at `level`: cluster ids, or rule keys of the selected cluster.
pub fn row_order(
    art: &Artifact,
    level: Level,
    cluster: Option<usize>,
) -> Result<Vec<String>, AnalyticsError> {
    match level {
        Level::Cluster => Ok(art.orders.clusters.iter().map(usize::to_string).collect()),
        Level::Rule => {
            let c = cluster.ok_or(AnalyticsError::MissingCluster)?;
            check_cluster(art, c)?;
            Ok(art.orders.rules_by_cluster[c].clone())
        }
    }
}

pub fn attributes(
    art: &Artifact,
    level: Level,
    cluster: Option<usize>,
) -> Result<AttributesPayload, AnalyticsError> {
    let columns = attribute_columns(&art.rules);
    let matrix = match level {
        Level::Cluster => {
            let members: Vec<Vec<&CanonicalRule>> = art
                .clusters
                .iter()
                .map(|c| {
                    c.rule_keys
                        .iter()
                        .map(|k| rule_by_key(art, k).map(|(r, _)| r))
                        .collect()
                })
                .collect::<Result<_, _>>()?;
            cluster_attribute_matrix(&members, &art.orders.clusters, columns)?
        }
        Level::Rule => {
            let keys = row_order(art, level, cluster)?;
            let rules: Vec<&CanonicalRule> = keys
                .iter()
                .map(|k| rule_by_key(art, k).map(|(r, _)| r))
                .collect::<Result<_, _>>()?;
            rule_attribute_matrix(&rules, columns)
        }
    };
    Ok(AttributesPayload {
        cluster_id: if level == Level::Rule { cluster } else { None },
        matrix,
    })
}

pub fn heatmap(
    art: &Artifact,
    level: Level,
    cluster: Option<usize>,
) -> Result<HeatmapPayload, AnalyticsError> {
    let n = art.slices.len();
    let ids = row_order(art, level, cluster)?;
    let rows: Vec<HeatmapRow> = ids
        .into_iter()
        .map(|id| {
            let profile = match level {
                Level::Cluster => {
                    &art.cluster_profiles[id.parse::<usize>().expect("cluster row id")]
                }
                Level::Rule => rule_by_key(art, &id)?.1,
            };
            Ok(HeatmapRow {
                counts: profile.slice_series(n),
                id,
            })
        })
        .collect::<Result<_, AnalyticsError>>()?;
    let max_count = rows
        .iter()
        .flat_map(|r| r.counts.iter().copied())
        .max()
        .unwrap_or(0);
    Ok(HeatmapPayload {
        level,
        cluster_id: if level == Level::Rule { cluster } else { None },
        slice_labels: art.slices.iter().map(|s| s.label.clone()).collect(),
        rows,
        max_count,
    })
}

/// Per-place counts for a rule, a cluster, or (with no selection) all rules,
/// optionally restricted to some slices. A rule key takes precedence over a cluster.
pub fn map(art: &Artifact, selection: &MapSelection) -> Result<MapPayload, AnalyticsError> {
    let profile = match (&selection.rule_key, selection.cluster_id) {
        (Some(key), _) => rule_by_key(art, key)?.1,
        (None, Some(c)) => {
            check_cluster(art, c)?;
            &art.cluster_profiles[c]
        }
        (None, None) => &art.overall_profile,
    };
    let (filter, labels) = match &selection.slices {
        None => (None, art.slices.iter().map(|s| s.label.clone()).collect()),
        Some(wanted) => {
            let mut keep = BTreeSet::new();
            for label in wanted {
                let slice = art
                    .slices
                    .iter()
                    .find(|s| &s.label == label)
                    .ok_or_else(|| AnalyticsError::UnknownSlice(label.clone()))?;
                keep.insert(slice.index);
            }
            let labels = art
                .slices
                .iter()
                .filter(|s| keep.contains(&s.index))
                .map(|s| s.label.clone())
                .collect();
            (Some(keep), labels)
        }
    };
    let totals = profile.place_totals_in(filter.as_ref());
    let mut places: BTreeMap<&str, u64> = art.regions.iter().map(|r| (r.as_str(), 0)).collect();
    for (p, &c) in &totals {
        places.insert(p.as_str(), c);
    }
    let places: Vec<PlaceCount> = places
        .into_iter()
        .map(|(place, count)| PlaceCount {
            place: place.to_string(),
            count,
        })
        .collect();
    Ok(MapPayload {
        cluster_id: selection
            .cluster_id
            .filter(|_| selection.rule_key.is_none()),
        rule_key: selection.rule_key.clone(),
        slice_labels: labels,
        total: places.iter().map(|p| p.count).sum(),
        max_count: places.iter().map(|p| p.count).max().unwrap_or(0),
        places,
    })
}

pub fn scatter(art: &Artifact, x: ScatterMetric, y: ScatterMetric) -> ScatterPayload {
    let value = |s: &crate::analytics::ClusterSummary, m: ScatterMetric| match m {
        ScatterMetric::RuleCount => s.rule_count as f64,
        ScatterMetric::MeanLift => s.mean_lift,
        ScatterMetric::MeanSupport => s.mean_support,
        ScatterMetric::MeanConfidence => s.mean_confidence,
        ScatterMetric::MeanOccurrences => s.mean_occurrences,
    };
    ScatterPayload {
        x_metric: x,
        y_metric: y,
        points: art
            .summaries
            .iter()
            .map(|s| ScatterPoint {
                cluster_id: s.cluster_id,
                x: value(s, x),
                y: value(s, y),
            })
            .collect(),
    }
}

/// Selection for an explanation: places and an inclusive label range.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExplainSelection {
    pub places: Option<Vec<String>>,
    pub slice_range: Option<(String, String)>,
}

pub fn explain_request(
    art: &Artifact,
    rule_key: &str,
    selection: &ExplainSelection,
    dataset_noun: &str,
) -> Result<ExplainRequest, AnalyticsError> {
    let (rule, profile) = rule_by_key(art, rule_key)?;
    let index_of = |label: &str| {
        art.slices
            .iter()
            .find(|s| s.label == label)
            .map(|s| s.index)
            .ok_or_else(|| AnalyticsError::UnknownSlice(label.to_string()))
    };
    let slice_range = match &selection.slice_range {
        Some((from, to)) => Some((index_of(from)?, index_of(to)?)),
        None => None,
    };
    let ctx = ContextSelection {
        places: selection.places.clone(),
        slice_range,
    };
    Ok(select_default_context(
        &rule.rule,
        profile,
        &art.slices,
        &ctx,
        dataset_noun,
    ))
}
