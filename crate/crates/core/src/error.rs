use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("item attribute and value must be non-empty")]
    EmptyItem,
    #[error("cannot split {0:?} into attribute and value")]
    AmbiguousItem(String),
    #[error("itemset holds more than one value for attribute {0:?}")]
    DuplicateAttribute(String),
    #[error("rule antecedent and consequent must be non-empty")]
    EmptyRuleSide,
    #[error("rule antecedent and consequent share an attribute")]
    OverlappingSides,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("column {0:?} is reserved and cannot be mined as an attribute")]
    ReservedColumn(String),
    #[error("no rows left after cleaning")]
    EmptyDataset,
    #[error("malformed CSV: {0}")]
    MalformedCsv(String),
    #[error("malformed GeoJSON: {0}")]
    MalformedGeoJson(String),
    #[error("GeoJSON root is not a FeatureCollection")]
    NotFeatureCollection,
    #[error("feature {0} has no usable id property")]
    MissingIdProperty(usize),
    #[error("duplicate region id {0:?}")]
    DuplicateRegionId(String),
}

impl IngestError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            IngestError::MissingColumn(_) => "MissingColumn",
            IngestError::ReservedColumn(_) => "ReservedColumn",
            IngestError::EmptyDataset => "EmptyDataset",
            IngestError::MalformedCsv(_) => "MalformedCsv",
            IngestError::MalformedGeoJson(_) => "MalformedGeoJson",
            IngestError::NotFeatureCollection => "NotFeatureCollection",
            IngestError::MissingIdProperty(_) => "MissingIdProperty",
            IngestError::DuplicateRegionId(_) => "DuplicateRegionId",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MiningError {
    #[error("start date is after end date")]
    InvalidRange,
    #[error("no transactions")]
    NoTransactions,
    #[error("minimum support must be in (0, 1]")]
    InvalidSupport,
    #[error("antecedent has zero support")]
    ZeroAntecedentSupport,
    #[error("a rule side has zero support")]
    ZeroSupport,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DedupError {
    #[error("rule {key} has conflicting metrics in slice {slice}")]
    ConflictingMetrics { key: String, slice: usize },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClusteringError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("resolution must be positive and finite")]
    InvalidResolution,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalyticsError {
    #[error("unknown cluster {0}")]
    UnknownCluster(usize),
    #[error("unknown rule {0:?}")]
    UnknownRule(String),
    #[error("rule-level view requires a cluster selection")]
    MissingCluster,
    #[error("unknown time slice {0:?}")]
    UnknownSlice(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExplainError {
    #[error("explanation context has no locations")]
    EmptyContext,
    #[error("invalid explanation request: {0}")]
    InvalidRequest(String),
    #[error("provider response is not JSON: {0}")]
    NotJson(String),
    #[error("provider response has the wrong shape: {0}")]
    WrongShape(String),
    #[error("text provider unavailable: {0}")]
    ProviderUnavailable(String),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Mining(#[from] MiningError),
    #[error(transparent)]
    Dedup(#[from] DedupError),
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
}
