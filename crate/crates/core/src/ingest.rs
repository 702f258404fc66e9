//! CSV event and GeoJSON region ingestion with row cleaning.
//!
//! Rows are dropped when a selected attribute (or `PLACE`) holds a null marker,
//! or when `DATE` is not a strict `YYYY-mm-dd` calendar date. Place ids are
//! compared verbatim against region ids; mismatches are reported, not fatal.

use std::collections::{BTreeSet, HashSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::IngestError;
use crate::model::{Event, Item, ItemSet, Region};

pub const DATE_COLUMN: &str = "DATE";
pub const PLACE_COLUMN: &str = "PLACE";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DatasetDescriptor {
    pub columns: Vec<String>,
    pub attribute_columns: Vec<String>,
    /// Data rows in the file, before cleaning.
    pub row_count: usize,
    pub date_column: String,
    pub place_column: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IngestReport {
    pub total_rows: usize,
    pub kept_rows: usize,
    pub dropped_null_rows: usize,
    pub dropped_unparseable_date_rows: usize,
    pub unmatched_places: BTreeSet<String>,
}

/// Cell values treated as missing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NullMarkers {
    /// Matched exactly.
    pub case_sensitive: Vec<String>,
    /// Matched ignoring ASCII case.
    pub case_insensitive: Vec<String>,
}

impl Default for NullMarkers {
    fn default() -> Self {
        NullMarkers {
            case_sensitive: vec!["Unknown".into()],
            case_insensitive: vec!["NA".into(), "N/A".into(), "NULL".into()],
        }
    }
}

impl NullMarkers {
    pub fn is_null(&self, value: &str) -> bool {
        value.trim().is_empty()
            || self.case_sensitive.iter().any(|m| m == value)
            || self
                .case_insensitive
                .iter()
                .any(|m| m.eq_ignore_ascii_case(value))
    }
}

/// Strict `YYYY-mm-dd`: zero-padded, and a real calendar date.
pub fn parse_date_strict(s: &str) -> Option<NaiveDate> {
    let b = s.as_bytes();
    let shape_ok = b.len() == 10
        && b[4] == b'-'
        && b[7] == b'-'
        && b.iter()
            .enumerate()
            .all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit());
    if !shape_ok {
        return None;
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

/// Columns other than `DATE` and `PLACE`.
pub fn attribute_candidates(columns: &[String]) -> Vec<String> {
    columns
        .iter()
        .filter(|c| c.as_str() != DATE_COLUMN && c.as_str() != PLACE_COLUMN)
        .cloned()
        .collect()
}

pub fn parse_events_csv(
    bytes: &[u8],
    selected: &[String],
) -> Result<(Vec<Event>, DatasetDescriptor, IngestReport), IngestError> {
    parse_events_csv_with(bytes, selected, &NullMarkers::default())
}

pub fn parse_events_csv_with(
    bytes: &[u8],
    selected: &[String],
    nulls: &NullMarkers,
) -> Result<(Vec<Event>, DatasetDescriptor, IngestReport), IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(bytes);
    let columns: Vec<String> = reader
        .headers()
        .map_err(|e| IngestError::MalformedCsv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();

    let position = |name: &str| {
        columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let date_idx = position(DATE_COLUMN)?;
    let place_idx = position(PLACE_COLUMN)?;
    let mut attr_idx = Vec::with_capacity(selected.len());
    let mut seen = HashSet::new();
    for name in selected {
        if name == DATE_COLUMN || name == PLACE_COLUMN {
            return Err(IngestError::ReservedColumn(name.clone()));
        }
        if seen.insert(name.as_str()) {
            attr_idx.push((name.as_str(), position(name)?));
        }
    }

    let mut events = Vec::new();
    let mut report = IngestReport::default();
    for record in reader.records() {
        let record = record.map_err(|e| IngestError::MalformedCsv(e.to_string()))?;
        report.total_rows += 1;

        let place = &record[place_idx];
        if nulls.is_null(place) || attr_idx.iter().any(|&(_, i)| nulls.is_null(&record[i])) {
            report.dropped_null_rows += 1;
            continue;
        }
        let Some(date) = parse_date_strict(&record[date_idx]) else {
            report.dropped_unparseable_date_rows += 1;
            continue;
        };
        let items = attr_idx
            .iter()
            .map(|&(name, i)| Item::new(name, &record[i]))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| IngestError::MalformedCsv(format!("row {}: {e}", report.total_rows)))?;
        let attribs = ItemSet::new(items)
            .map_err(|e| IngestError::MalformedCsv(format!("row {}: {e}", report.total_rows)))?;
        events.push(Event {
            date,
            place: place.to_string(),
            attribs,
        });
        report.kept_rows += 1;
    }

    if events.is_empty() {
        return Err(IngestError::EmptyDataset);
    }
    let descriptor = DatasetDescriptor {
        attribute_columns: attr_idx.iter().map(|&(n, _)| n.to_string()).collect(),
        columns,
        row_count: report.total_rows,
        date_column: DATE_COLUMN.into(),
        place_column: PLACE_COLUMN.into(),
    };
    Ok((events, descriptor, report))
}

pub fn parse_regions_geojson(bytes: &[u8], id_property: &str) -> Result<Vec<Region>, IngestError> {
    let root: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| IngestError::MalformedGeoJson(e.to_string()))?;
    if root.get("type").and_then(|t| t.as_str()) != Some("FeatureCollection") {
        return Err(IngestError::NotFeatureCollection);
    }
    let features = root
        .get("features")
        .and_then(|f| f.as_array())
        .ok_or(IngestError::NotFeatureCollection)?;

    let mut seen = HashSet::new();
    let mut regions = Vec::with_capacity(features.len());
    for (i, feature) in features.iter().enumerate() {
        let props = feature.get("properties");
        let id = match props.and_then(|p| p.get(id_property)) {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => return Err(IngestError::MissingIdProperty(i)),
        };
        if !seen.insert(id.clone()) {
            return Err(IngestError::DuplicateRegionId(id));
        }
        let display_name = props
            .and_then(|p| p.get("name"))
            .and_then(|n| n.as_str())
            .map(str::to_string)
            .unwrap_or_else(|| id.clone());
        let geometry = feature
            .get("geometry")
            .cloned()
            .unwrap_or(serde_json::Value::Null);
        regions.push(Region {
            id,
            display_name,
            geometry,
        });
    }
    Ok(regions)
}

/// Distinct event places with no region of the same id (exact, case-sensitive).
pub fn validate_region_coverage(events: &[Event], regions: &[Region]) -> BTreeSet<String> {
    let ids: HashSet<&str> = regions.iter().map(|r| r.id.as_str()).collect();
    events
        .iter()
        .filter(|e| !ids.contains(e.place.as_str()))
        .map(|e| e.place.clone())
        .collect()
}
