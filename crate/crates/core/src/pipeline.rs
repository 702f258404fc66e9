//! End-to-end run: slice, mine, merge, collapse, cluster, profile, order.

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{
    cluster_summary, seriation_order, ClusterSummary, OccurrenceIndex, RuleProfile,
};
use crate::clustering::{build_similarity_graph, louvain, Partition};
use crate::dedup::{collapse_superfluous, merge_across_slices, CanonicalRule};
use crate::error::PipelineError;
use crate::ingest::{self, IngestReport};
use crate::mining::{mine_slices, slice_partition, Granularity, MiningConfig};
use crate::model::{Event, Region, TimeSlice};

pub const SCHEMA_VERSION: u32 = 1;

fn default_resolution() -> f64 {
    1.0
}

fn default_region_id_property() -> String {
    "name".into()
}

fn default_max_rule_len() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunConfig {
    pub attribute_columns: Vec<String>,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    #[serde(default)]
    pub granularity: Granularity,
    pub min_support: f64,
    pub min_lift: f64,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_region_id_property")]
    pub region_id_property: String,
    #[serde(default = "default_max_rule_len")]
    pub max_rule_len: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let invalid = |m: &str| Err(PipelineError::InvalidConfig(m.to_string()));
        if self.attribute_columns.is_empty() {
            return invalid("at least one attribute column is required");
        }
        if self.start_date > self.end_date {
            return invalid("startDate is after endDate");
        }
        if !(self.min_support > 0.0 && self.min_support <= 1.0) {
            return invalid("minSupport must be in (0, 1]");
        }
        if !(self.min_lift >= 0.0 && self.min_lift.is_finite()) {
            return invalid("minLift must be a non-negative number");
        }
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return invalid("resolution must be positive");
        }
        if self.max_rule_len < 2 {
            return invalid("maxRuleLen must be at least 2");
        }
        Ok(())
    }

    pub fn mining(&self) -> MiningConfig {
        MiningConfig {
            min_support: self.min_support,
            min_lift: self.min_lift,
            max_rule_len: self.max_rule_len,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Mining,
    Clustering,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClusterEntry {
    pub id: usize,
    pub rule_keys: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Orders {
    /// Cluster ids in shared display order.
    pub clusters: Vec<usize>,
    /// Rule keys per cluster id, in display order.
    pub rules_by_cluster: Vec<Vec<String>>,
}

/// Everything a run produces; the export format of the CLI and service.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Artifact {
    pub schema_version: u32,
    pub config: RunConfig,
    pub ingest: IngestReport,
    pub slices: Vec<TimeSlice>,
    pub slice_event_counts: Vec<usize>,
    /// Region ids from the uploaded boundaries, in file order.
    pub regions: Vec<String>,
    /// Deduplicated rules; rule `i` is node `i` of the partition.
    pub rules: Vec<CanonicalRule>,
    pub partition: Partition,
    pub clusters: Vec<ClusterEntry>,
    pub summaries: Vec<ClusterSummary>,
    /// Parallel to `rules`.
    pub rule_profiles: Vec<RuleProfile>,
    /// Parallel to `clusters`.
    pub cluster_profiles: Vec<RuleProfile>,
    /// Distinct events matching any rule.
    pub overall_profile: RuleProfile,
    pub orders: Orders,
}

impl Artifact {
    pub fn rule_index(&self, key: &str) -> Option<usize> {
        self.rules
            .binary_search_by(|r| r.key.as_str().cmp(key))
            .ok()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes")
    }
}

fn as_series(profile: &RuleProfile, n: usize) -> Vec<f64> {
    profile
        .slice_series(n)
        .into_iter()
        .map(|c| c as f64)
        .collect()
}

pub fn run_pipeline(
    events: &[Event],
    regions: &[Region],
    ingest: IngestReport,
    config: &RunConfig,
    progress: &mut dyn FnMut(Stage),
) -> Result<Artifact, PipelineError> {
    config.validate()?;
    progress(Stage::Mining);
    let sliced = slice_partition(
        events,
        config.start_date,
        config.end_date,
        config.granularity,
    )?;
    let per_slice = mine_slices(&sliced, &config.mining())?;
    let rules = collapse_superfluous(merge_across_slices(&per_slice)?);

    progress(Stage::Clustering);
    let partition = if rules.is_empty() {
        Partition {
            assignment: Vec::new(),
            resolution: config.resolution,
            seed: config.seed,
            modularity: 0.0,
        }
    } else {
        louvain(
            &build_similarity_graph(&rules),
            config.resolution,
            config.seed,
        )?
    };
    let members = partition.members();

    let index = OccurrenceIndex::new(events, &sliced.slices);
    let rule_profiles: Vec<RuleProfile> = rules.par_iter().map(|r| index.rule_profile(r)).collect();
    let cluster_profiles: Vec<RuleProfile> = members
        .par_iter()
        .enumerate()
        .map(|(c, m)| index.union_profile(format!("cluster:{c}"), m.iter().map(|&i| &rules[i])))
        .collect();
    let overall_profile = index.union_profile("all".into(), rules.iter());

    let summaries: Vec<ClusterSummary> = members
        .iter()
        .enumerate()
        .map(|(c, m)| {
            let rs: Vec<&CanonicalRule> = m.iter().map(|&i| &rules[i]).collect();
            let ps: Vec<&RuleProfile> = m.iter().map(|&i| &rule_profiles[i]).collect();
            cluster_summary(c, &rs, &ps)
        })
        .collect();

    let n_slices = sliced.slices.len();
    let cluster_series: Vec<(usize, Vec<f64>)> = cluster_profiles
        .iter()
        .enumerate()
        .map(|(c, p)| (c, as_series(p, n_slices)))
        .collect();
    let rules_by_cluster = members
        .iter()
        .map(|m| {
            let series: Vec<(String, Vec<f64>)> = m
                .iter()
                .map(|&i| (rules[i].key.clone(), as_series(&rule_profiles[i], n_slices)))
                .collect();
            seriation_order(&series)
        })
        .collect();
    let orders = Orders {
        clusters: seriation_order(&cluster_series),
        rules_by_cluster,
    };

    let clusters = members
        .iter()
        .enumerate()
        .map(|(id, m)| ClusterEntry {
            id,
            rule_keys: m.iter().map(|&i| rules[i].key.clone()).collect(),
        })
        .collect();

    Ok(Artifact {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        ingest,
        slices: sliced.slices,
        slice_event_counts: sliced.slice_event_counts,
        regions: regions.iter().map(|r| r.id.clone()).collect(),
        rules,
        partition,
        clusters,
        summaries,
        rule_profiles,
        cluster_profiles,
        overall_profile,
        orders,
    })
}

/// Parses the inputs and runs the whole pipeline.
pub fn run_from_bytes(
    events_csv: &[u8],
    regions_geojson: Option<&[u8]>,
    config: &RunConfig,
    progress: &mut dyn FnMut(Stage),
) -> Result<Artifact, PipelineError> {
    config.validate()?;
    let (events, _, mut report) = ingest::parse_events_csv(events_csv, &config.attribute_columns)?;
    let regions = match regions_geojson {
        Some(bytes) => {
            let regions = ingest::parse_regions_geojson(bytes, &config.region_id_property)?;
            report.unmatched_places = ingest::validate_region_coverage(&events, &regions);
            regions
        }
        None => Vec::new(),
    };
    run_pipeline(&events, &regions, report, config, progress)
}
