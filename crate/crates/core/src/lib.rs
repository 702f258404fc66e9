//! Association rule mining over spatiotemporal categorical events.
//!
//! Events are cut into calendar slices, mined per slice with FP-Growth,
//! merged across slices, reduced to one rule per union itemset and grouped
//! into communities of similar rules. Occurrence profiles per slice and place
//! back the coordinated views served by the service crate.

pub mod analytics;
pub mod clustering;
pub mod dedup;
pub mod error;
pub mod explain;
pub mod ingest;
pub mod mining;
pub mod model;
pub mod pipeline;
pub mod views;

pub use error::{
    AnalyticsError, ClusteringError, DedupError, ExplainError, IngestError, MiningError,
    ModelError, PipelineError,
};
pub use model::{
    canonical_rule_key, rule_union_itemset, Event, Item, ItemSet, Region, Rule, SliceMetrics,
    TimeSlice,
};
pub use pipeline::{run_from_bytes, run_pipeline, Artifact, RunConfig, Stage};
